#pragma once

#include "uotpool/core_numerics.hpp"
#include "uotpool/uot_solvers.hpp"
#include "uotpool/pooling_ops.hpp"
#include "uotpool/learning.hpp"
#include "uotpool/experiments.hpp"
