#pragma once

#include "grokking/analysis.hpp"
#include "grokking/config.hpp"
#include "grokking/constructions.hpp"
#include "grokking/experiment.hpp"
#include "grokking/metrics.hpp"
#include "grokking/mlp.hpp"
#include "grokking/parity_task.hpp"
#include "grokking/rng.hpp"
#include "grokking/subnet_analysis.hpp"
#include "grokking/trainer.hpp"
