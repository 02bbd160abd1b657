#pragma once

// Umbrella header: the whole library.

#include "clearway/baselines.hpp"
#include "clearway/booster.hpp"
#include "clearway/config.hpp"
#include "clearway/csv.hpp"
#include "clearway/data_model.hpp"
#include "clearway/errors.hpp"
#include "clearway/flow_features.hpp"
#include "clearway/matrix.hpp"
#include "clearway/metrics.hpp"
#include "clearway/model.hpp"
#include "clearway/parallel.hpp"
#include "clearway/pipeline.hpp"
#include "clearway/rng.hpp"
#include "clearway/shapley.hpp"
#include "clearway/synth.hpp"
#include "clearway/tuning.hpp"
