#pragma once

#include "riskaware/choice.hpp"
#include "riskaware/cpt.hpp"
#include "riskaware/errors.hpp"
#include "riskaware/harness.hpp"
#include "riskaware/inference.hpp"
#include "riskaware/io.hpp"
#include "riskaware/maze.hpp"
#include "riskaware/planner.hpp"
#include "riskaware/pomdp.hpp"
#include "riskaware/prospect.hpp"
#include "riskaware/scenarios.hpp"
#include "riskaware/simulation.hpp"
