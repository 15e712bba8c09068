#pragma once

// Umbrella header.

#include "aoi/channel.hpp"
#include "aoi/config.hpp"
#include "aoi/csv.hpp"
#include "aoi/energy.hpp"
#include "aoi/error.hpp"
#include "aoi/model.hpp"
#include "aoi/presets.hpp"
#include "aoi/qlearning.hpp"
#include "aoi/random.hpp"
#include "aoi/simulator.hpp"
#include "aoi/solver_iid_multi.hpp"
#include "aoi/solver_iid_single.hpp"
#include "aoi/solver_markov.hpp"
#include "aoi/thresholds.hpp"
#include "aoi/value_iteration.hpp"
