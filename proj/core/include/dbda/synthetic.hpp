#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "dbda/data.hpp"

namespace dbda {

std::array<double, 3> class_base_color(int32_t cls, int64_t classes);

// Random rectangles, ellipses, and stripes of classes 1..C-1 painted over
// background class 0; identical for a given (seed, index) in both domains.
std::vector<int32_t> synthesize_labels(const SyntheticConfig& cfg, int64_t index);

SegSample synthesize_sample(const SyntheticConfig& cfg, Domain domain, int64_t index);

std::vector<SegSample> generate_synthetic_domain(const SyntheticConfig& cfg, Domain domain,
                                                 int64_t n);
// Samples for indices [first, first+n); disjoint ranges give disjoint content.
std::vector<SegSample> generate_synthetic_domain(const SyntheticConfig& cfg, Domain domain,
                                                 int64_t first, int64_t n);

}  // namespace dbda
