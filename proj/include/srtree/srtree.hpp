#pragma once

// Umbrella header: provably optimal sparse regression trees over binary
// features, trained by dynamic programming with analytical lower bounds.

#include "csv.hpp"
#include "support_set.hpp"
#include "dataset.hpp"
#include "kmeans1d.hpp"
#include "bounds.hpp"
#include "model.hpp"
#include "solver.hpp"
