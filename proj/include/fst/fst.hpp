#pragma once

#include "fst/constraints.hpp"
#include "fst/core_transform.hpp"
#include "fst/csv.hpp"
#include "fst/dual_solver.hpp"
#include "fst/estimators.hpp"
#include "fst/metrics.hpp"
#include "fst/pipeline.hpp"
#include "fst/serialization.hpp"
#include "fst/synth.hpp"
