#pragma once

#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace npsr::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kIo = 2, kNumerical = 3 };

/// Reference entry: mean (SE) for NPSR, the
/// curve-by-curve baseline and the AIC-selected dimension.
struct ReferenceCell {
  int n = 0;
  int q = 0;
  int p = 0;
  bool separable_ar = false;
  double npsr = 0.0, npsr_se = 0.0;
  double baseline = 0.0, baseline_se = 0.0;
  double q_star = 0.0, q_star_se = 0.0;
};

const std::vector<ReferenceCell>& reference_cells();

/// Name such as n128_q2_p10 or n128_q2_p10_ar.
std::string cell_name(const ReferenceCell& cell);

std::optional<ReferenceCell> find_cell(const std::string& name);

/// Entry point shared by the executable and the tests. argv[0] is the
/// program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace npsr::cli
