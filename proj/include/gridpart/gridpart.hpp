#pragma once

#include "gridpart/errors.hpp"
#include "gridpart/experiment.hpp"
#include "gridpart/partition_model.hpp"
#include "gridpart/penalty.hpp"
#include "gridpart/power_graph.hpp"
#include "gridpart/qubo.hpp"
#include "gridpart/rng.hpp"
#include "gridpart/solvers.hpp"
#include "gridpart/tuner.hpp"
