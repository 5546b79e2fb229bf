#pragma once

#include "dtree/error.hpp"
#include "dtree/random.hpp"
#include "dtree/dataset.hpp"
#include "dtree/tree.hpp"
#include "dtree/metrics.hpp"
#include "dtree/parallel.hpp"
#include "dtree/solver.hpp"
#include "dtree/cart.hpp"
#include "dtree/tao.hpp"
#include "dtree/bench.hpp"
#include "dtree/model.hpp"
