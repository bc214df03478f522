#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <type_traits>
#include <vector>

#include "linksyn/errors.hpp"
#include "linksyn/rng.hpp"

namespace linksyn {

// Walker/Vose alias table: O(n) build, O(1) draw. Weights need not be
// normalized; zero weights are never drawn.
class AliasTable {
 public:
  AliasTable() = default;

  template <typename Weight>
  explicit AliasTable(std::span<const Weight> weights) {
    const std::size_t n = weights.size();
    if (n == 0) throw Error(Errc::kInvalidArgument, "alias table needs at least one weight");
    double total = 0.0;
    for (auto w : weights) {
      if (!(static_cast<double>(w) >= 0.0))
        throw Error(Errc::kInvalidArgument, "alias table weights must be non-negative");
      total += static_cast<double>(w);
    }
    if (total <= 0.0) throw Error(Errc::kInvalidArgument, "alias table weights sum to zero");

    prob_.assign(n, 1.0);
    alias_.resize(n);
    std::iota(alias_.begin(), alias_.end(), std::uint32_t{0});
    std::vector<double> scaled(n);
    std::vector<std::uint32_t> small, large;
    small.reserve(n);
    large.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      scaled[i] = static_cast<double>(weights[i]) * static_cast<double>(n) / total;
      (scaled[i] < 1.0 ? small : large).push_back(static_cast<std::uint32_t>(i));
    }
    while (!small.empty() && !large.empty()) {
      const std::uint32_t s = small.back();
      small.pop_back();
      const std::uint32_t l = large.back();
      prob_[s] = scaled[s];
      alias_[s] = l;
      scaled[l] = (scaled[l] + scaled[s]) - 1.0;
      if (scaled[l] < 1.0) {
        large.pop_back();
        small.push_back(l);
      }
    }
    // Leftovers are 1.0 up to rounding.
    for (auto i : large) prob_[i] = 1.0;
    for (auto i : small) prob_[i] = weights[i] > 0 ? 1.0 : 0.0;
  }

  std::size_t size() const { return prob_.size(); }

  std::size_t sample(RandomStream& rng) const {
    const std::size_t column = rng.below(prob_.size());
    return rng.uniform() < prob_[column] ? column : alias_[column];
  }

  std::size_t memory_bytes() const {
    return prob_.capacity() * sizeof(double) + alias_.capacity() * sizeof(std::uint32_t);
  }

 private:
  std::vector<double> prob_;
  std::vector<std::uint32_t> alias_;
};

// Draw an index from a prefix-sum table (cumulative[i] = w_0 + ... + w_i) by
// binary search. Zero-weight entries share their predecessor's cumulative value
// and are never returned.
template <typename Cum>
std::size_t sample_cumulative(std::span<const Cum> cumulative, RandomStream& rng) {
  const auto total = cumulative.back();
  if constexpr (std::is_integral_v<Cum>) {
    const auto target = static_cast<Cum>(rng.below(static_cast<std::uint64_t>(total)));
    return static_cast<std::size_t>(
        std::upper_bound(cumulative.begin(), cumulative.end(), target) - cumulative.begin());
  } else {
    const Cum target = static_cast<Cum>(rng.uniform()) * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), target);
    if (it == cumulative.end()) --it;
    return static_cast<std::size_t>(it - cumulative.begin());
  }
}

}  // namespace linksyn
