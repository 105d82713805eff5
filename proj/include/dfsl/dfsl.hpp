#pragma once

#include "basis.hpp"
#include "bench.hpp"
#include "changepoint.hpp"
#include "dataset.hpp"
#include "flsa.hpp"
#include "simulate.hpp"
#include "solver.hpp"
#include "subspace.hpp"
#include "tuning.hpp"
