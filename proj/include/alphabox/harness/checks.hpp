#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace alphabox::harness {

struct CheckRow {
    std::string name;
    double value = 0.0;      // measured error or quantity
    double tolerance = 0.0;  // pass when value < tolerance (or per the check's own rule)
    bool passed = false;
    std::string detail;
};

/// Finite-difference checks of total_objective on random small configurations
/// (up to 3 weight layers of width <= 6, M <= 4, K <= 5, alpha in
/// {0, 0.3, 0.5, 1, 2}); value is the relative error of the gradient.
std::vector<CheckRow> run_gradcheck(std::uint64_t seed, std::size_t configurations = 60,
                                    double tolerance = 1e-5);

/// Divergence, cavity and power-EP identities on 1-D Gaussian toys. Names are
/// grouped by prefix: identity.*, limit.*, reparam.*, powerep.*.
std::vector<CheckRow> run_divergence_checks(std::uint64_t seed);

bool all_passed(const std::vector<CheckRow>& rows);

/// Header `check,value,tolerance,passed,detail`.
void write_check_csv(std::ostream& os, const std::vector<CheckRow>& rows);

} // namespace alphabox::harness
