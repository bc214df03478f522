#pragma once

#include "linksyn/backend.hpp"
#include "linksyn/consolidation.hpp"
#include "linksyn/corpus.hpp"
#include "linksyn/digest.hpp"
#include "linksyn/discrete.hpp"
#include "linksyn/embedding.hpp"
#include "linksyn/errors.hpp"
#include "linksyn/filters.hpp"
#include "linksyn/graph.hpp"
#include "linksyn/parallel.hpp"
#include "linksyn/pipeline.hpp"
#include "linksyn/prompts.hpp"
#include "linksyn/rng.hpp"
#include "linksyn/sampling.hpp"
#include "linksyn/selection.hpp"
#include "linksyn/synthesis.hpp"
#include "linksyn/text.hpp"
