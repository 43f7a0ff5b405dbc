#pragma once

#include "sugkit/bench.hpp"
#include "sugkit/candidate_miner.hpp"
#include "sugkit/config.hpp"
#include "sugkit/context.hpp"
#include "sugkit/decoder.hpp"
#include "sugkit/error.hpp"
#include "sugkit/evaluator.hpp"
#include "sugkit/grpo.hpp"
#include "sugkit/io.hpp"
#include "sugkit/random.hpp"
#include "sugkit/scorer.hpp"
#include "sugkit/synthetic.hpp"
#include "sugkit/text.hpp"
#include "sugkit/utf8.hpp"
#include "sugkit/vocabulary.hpp"
