#pragma once

#include "lrcomb/core.hpp"
#include "lrcomb/alloc_solver.hpp"
#include "lrcomb/lowrank.hpp"
#include "lrcomb/environment.hpp"
#include "lrcomb/data.hpp"
#include "lrcomb/policies.hpp"
#include "lrcomb/experiment.hpp"
