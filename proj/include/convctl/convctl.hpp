#pragma once

#include "convctl/errors.hpp"
#include "convctl/dq_network.hpp"
#include "convctl/feasible_region.hpp"
#include "convctl/symmetric_eigen.hpp"
#include "convctl/sdp_controller.hpp"
#include "convctl/droop_controller.hpp"
#include "convctl/network_sim.hpp"
#include "convctl/presets.hpp"
#include "convctl/scenario_io.hpp"
#include "convctl/reporting.hpp"
