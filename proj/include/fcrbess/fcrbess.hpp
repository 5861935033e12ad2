#pragma once

#include "fcrbess/errors.hpp"
#include "fcrbess/rng.hpp"
#include "fcrbess/csv.hpp"
#include "fcrbess/cell_model.hpp"
#include "fcrbess/degradation.hpp"
#include "fcrbess/bess.hpp"
#include "fcrbess/fcr_controller.hpp"
#include "fcrbess/frequency_data.hpp"
#include "fcrbess/simulation.hpp"
#include "fcrbess/market.hpp"
#include "fcrbess/parallel.hpp"
#include "fcrbess/optimizer.hpp"
#include "fcrbess/sizing.hpp"

namespace fcrbess {
inline constexpr const char* kVersion = "0.1.0";
}
