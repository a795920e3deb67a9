#pragma once

#include "b2d/pipeline/ablation.hpp"
#include "b2d/pipeline/activations.hpp"
#include "b2d/pipeline/benchmark.hpp"
#include "b2d/pipeline/dataset.hpp"
#include "b2d/pipeline/folds.hpp"
#include "b2d/pipeline/metrics.hpp"
#include "b2d/pipeline/report.hpp"
#include "b2d/pipeline/training.hpp"
