#pragma once

#include "conesched/analysis.hpp"
#include "conesched/config.hpp"
#include "conesched/lp.hpp"
#include "conesched/model.hpp"
#include "conesched/region.hpp"
#include "conesched/scheduler.hpp"
#include "conesched/sim.hpp"
#include "conesched/traces.hpp"
