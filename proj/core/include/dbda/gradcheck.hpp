#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dbda/rng.hpp"
#include "dbda/tensor.hpp"

namespace dbda {

struct GradCheckResult {
  std::string name;
  int64_t coords = 0;
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  bool pass = false;
  double seconds = 0.0;
};

// Builds a single-element graph over the given leaf inputs. Must be a pure
// function of the input values: it is re-evaluated under perturbation.
using GraphFn = std::function<Tensor(const std::vector<Tensor>&)>;

// Central-difference check of one analytic backward pass: on min(min_coords,
// total) coordinates chosen by rng, compares the accumulated gradient with
// (f(x+h) - f(x-h)) / 2h at rel = |a - n| / max(1, |n|).
GradCheckResult check_gradients(const std::string& name, const GraphFn& fn,
                                const std::vector<Tensor>& inputs, int64_t min_coords, Rng& rng,
                                double rel_tol = 1e-4, double step = 1e-5);

// Named suites over every differentiable op, the loss terms, and full model
// graphs. scope: ops|losses|model|all.
std::vector<GradCheckResult> run_gradcheck(const std::string& scope, uint64_t seed);

bool all_passed(const std::vector<GradCheckResult>& results);

}  // namespace dbda
