#pragma once

#include <string>
#include <vector>

namespace resp {

// Small dense linear programs. The model is stated abstractly (objective,
// relational rows, variable signs) so the solve backend is swappable; the
// bundled backend is a two-phase simplex with Bland's rule, which is exact
// enough (1e-9 pivot tolerance) for the problem sizes in this project.

enum class LpStatus { Optimal, Infeasible, Unbounded };

struct LpResult {
  LpStatus status;
  double objective = 0.0;
  std::vector<double> x;
};

enum class LpRel { Le, Eq, Ge };

class LpBuilder {
 public:
  // Returns the variable index. Variables default to x >= 0; free variables
  // are internally split into a difference of nonnegative parts.
  int add_var(double cost, bool free_var = false);

  void add_constraint(const std::vector<std::pair<int, double>>& terms,
                      LpRel rel, double rhs);

  // Minimizes the objective.
  LpResult solve() const;

  int var_count() const { return static_cast<int>(costs_.size()); }

 private:
  struct Row {
    std::vector<std::pair<int, double>> terms;
    LpRel rel;
    double rhs;
  };
  std::vector<double> costs_;
  std::vector<bool> free_;
  std::vector<Row> rows_;
};

}  // namespace resp
