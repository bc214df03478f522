// Build a graph from a corpus, draw hybrid paths and print their seed groups.
#include <iostream>

#include "linksyn/linksyn.hpp"

int main(int argc, char** argv) {
  using namespace linksyn;
  const std::string corpus_path = argc > 1 ? argv[1] : "samples/toy_corpus.jsonl";
  try {
    const auto consolidated = consolidate(load_corpus(corpus_path));
    const KpGraph graph = build_graph(consolidated.corpus);
    std::cout << graph.node_count() << " knowledge points, " << graph.edge_count() << " edges\n";

    const WalkSampler sampler(graph);
    WalkConfig cfg;
    cfg.length = 3;
    cfg.count = 6;
    cfg.rng_seed = 11;
    cfg.policy = Policy::kCoverage;
    const auto coverage = sample_paths(sampler, cfg).paths;
    cfg.policy = Policy::kPopularity;
    const auto popularity = sample_paths(sampler, cfg).paths;
    const auto paths = hybrid_blend(coverage, popularity, 0.5, 6, cfg.rng_seed);

    const CandidateIndex index(graph);
    AttributeDistribution dist;
    dist.discipline = empirical_discipline_law(graph);
    for (const auto& group : build_seed_groups(index, paths, dist, cfg.rng_seed).groups)
      std::cout << seed_group_to_json_line(group) << "\n";
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }
  return 0;
}
