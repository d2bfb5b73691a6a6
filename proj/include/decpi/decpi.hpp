#pragma once

#include "decpi/common.hpp"
#include "decpi/controller.hpp"
#include "decpi/domains.hpp"
#include "decpi/dpomdp_io.hpp"
#include "decpi/evaluate.hpp"
#include "decpi/heuristic.hpp"
#include "decpi/lp.hpp"
#include "decpi/model.hpp"
#include "decpi/oracle.hpp"
#include "decpi/solver.hpp"
#include "decpi/transform.hpp"
