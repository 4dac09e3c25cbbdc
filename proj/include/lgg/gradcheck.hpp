#pragma once

// Finite-difference gradient suite over primitives and objectives.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lgg::harness {

enum class GradCheckScope { primitives, objectives, all };

/// Accepts "primitives", "objectives", "all". Throws UsageError otherwise.
GradCheckScope parse_gradcheck_scope(std::string_view s);

struct GradCheckCase {
  std::string name;
  std::size_t instances = 50;
  double tolerance = 1e-4;
  /// Draws one instance and returns its max relative gradient error.
  std::function<double(std::mt19937_64&)> instance_error;
};

struct GradCheckReport {
  std::string name;
  std::size_t instances = 0;
  std::size_t passed = 0;
  double max_error = 0.0;
  double tolerance = 0.0;
  double seconds = 0.0;

  bool ok() const { return passed == instances; }
};

/// Objective cases use B = 8, d = 5, k = 3, step 1e-5 on instances whose k-NN
/// selection and kinks are at least a fixed margin away from switching.
std::vector<GradCheckCase> gradcheck_cases(GradCheckScope scope);

/// A case whose analytic gradient drops one operand's contribution; it must
/// be reported as failing.
GradCheckCase corrupted_gradient_case();

GradCheckReport run_gradcheck_case(const GradCheckCase& c, std::uint64_t seed);
std::vector<GradCheckReport> run_gradcheck(std::span<const GradCheckCase> cases, std::uint64_t seed);

/// One "PASS|FAIL name passed/instances max_rel_err tol seconds" line per case.
void write_gradcheck_report(std::ostream& os, std::span<const GradCheckReport> reports);

}  // namespace lgg::harness
