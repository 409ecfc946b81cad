#include "resp/lp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace resp {

namespace {

constexpr double kTol = 1e-9;

// Standard-form tableau simplex: min c'x s.t. Ax = b, x >= 0, b >= 0.
// Returns false on unboundedness. Bland's rule prevents cycling.
struct Tableau {
  int m, n;                         // rows, structural+slack+artificial cols
  std::vector<std::vector<double>> a;  // m rows of n coefficients
  std::vector<double> b;            // rhs, kept nonnegative
  std::vector<double> c;            // objective row
  std::vector<int> basis;           // basic variable per row

  void pivot(int r, int col) {
    double piv = a[r][col];
    for (int j = 0; j < n; ++j) a[r][j] /= piv;
    b[r] /= piv;
    for (int i = 0; i < m; ++i) {
      if (i == r) continue;
      double f = a[i][col];
      if (std::fabs(f) < 1e-14) continue;
      for (int j = 0; j < n; ++j) a[i][j] -= f * a[r][j];
      b[i] -= f * b[r];
      a[i][col] = 0.0;
    }
    basis[r] = col;
  }

  // Minimizes c'x from the current basic feasible point. reduced[] is the
  // working objective row, updated in place.
  bool run(std::vector<double>& reduced, double& value) {
    while (true) {
      int col = -1;
      for (int j = 0; j < n; ++j) {
        if (reduced[j] < -kTol) { col = j; break; }  // Bland: lowest index
      }
      if (col < 0) return true;
      int row = -1;
      double best = std::numeric_limits<double>::infinity();
      for (int i = 0; i < m; ++i) {
        if (a[i][col] > kTol) {
          double ratio = b[i] / a[i][col];
          if (ratio < best - kTol ||
              (ratio < best + kTol && (row < 0 || basis[i] < basis[row]))) {
            best = ratio;
            row = i;
          }
        }
      }
      if (row < 0) return false;
      double f = reduced[col];
      pivot(row, col);
      for (int j = 0; j < n; ++j) reduced[j] -= f * a[row][j];
      value -= f * b[row];
      reduced[col] = 0.0;
    }
  }
};

}  // namespace

int LpBuilder::add_var(double cost, bool free_var) {
  costs_.push_back(cost);
  free_.push_back(free_var);
  return static_cast<int>(costs_.size()) - 1;
}

void LpBuilder::add_constraint(const std::vector<std::pair<int, double>>& terms,
                               LpRel rel, double rhs) {
  for (auto& [idx, coef] : terms) {
    (void)coef;
    if (idx < 0 || idx >= var_count())
      throw std::invalid_argument("lp constraint references unknown variable");
  }
  rows_.push_back({terms, rel, rhs});
}

LpResult LpBuilder::solve() const {
  // Column layout: for each user variable, one column (two if free);
  // then one slack/surplus column per inequality; then artificials.
  int nv = var_count();
  std::vector<int> pos_col(nv), neg_col(nv, -1);
  int ncols = 0;
  for (int i = 0; i < nv; ++i) {
    pos_col[i] = ncols++;
    if (free_[i]) neg_col[i] = ncols++;
  }
  int slack_base = ncols;
  int n_slack = 0;
  for (auto& r : rows_)
    if (r.rel != LpRel::Eq) ++n_slack;
  ncols += n_slack;
  int art_base = ncols;
  int m = static_cast<int>(rows_.size());
  ncols += m;  // at most one artificial per row

  Tableau t;
  t.m = m;
  t.n = ncols;
  t.a.assign(m, std::vector<double>(ncols, 0.0));
  t.b.assign(m, 0.0);
  t.basis.assign(m, -1);

  int slack_idx = 0;
  int n_art = 0;
  for (int i = 0; i < m; ++i) {
    const auto& r = rows_[i];
    double sign = 1.0;
    double rhs = r.rhs;
    // Normalize to nonnegative rhs.
    LpRel rel = r.rel;
    if (rhs < 0) {
      sign = -1.0;
      rhs = -rhs;
      if (rel == LpRel::Le) rel = LpRel::Ge;
      else if (rel == LpRel::Ge) rel = LpRel::Le;
    }
    for (auto& [idx, coef] : r.terms) {
      double v = sign * coef;
      t.a[i][pos_col[idx]] += v;
      if (neg_col[idx] >= 0) t.a[i][neg_col[idx]] -= v;
    }
    t.b[i] = rhs;
    if (rel == LpRel::Le) {
      t.a[i][slack_base + slack_idx] = 1.0;
      t.basis[i] = slack_base + slack_idx;
      ++slack_idx;
    } else if (rel == LpRel::Ge) {
      t.a[i][slack_base + slack_idx] = -1.0;
      ++slack_idx;
    }
    if (t.basis[i] < 0) {
      int art = art_base + n_art++;
      t.a[i][art] = 1.0;
      t.basis[i] = art;
    }
  }
  t.n = art_base + n_art;
  for (auto& row : t.a) row.resize(t.n);

  // Phase 1: minimize sum of artificials.
  std::vector<double> reduced(t.n, 0.0);
  double value = 0.0;
  for (int j = art_base; j < t.n; ++j) reduced[j] = 1.0;
  for (int i = 0; i < m; ++i) {
    if (t.basis[i] >= art_base) {
      for (int j = 0; j < t.n; ++j) reduced[j] -= t.a[i][j];
      value -= t.b[i];
    }
  }
  if (!t.run(reduced, value))
    throw std::logic_error("phase-1 simplex unbounded (internal error)");
  if (value < -1e-7) return {LpStatus::Infeasible, 0.0, {}};

  // Drive leftover artificials out of the basis where possible.
  for (int i = 0; i < m; ++i) {
    if (t.basis[i] >= art_base) {
      int col = -1;
      for (int j = 0; j < art_base; ++j) {
        if (std::fabs(t.a[i][j]) > kTol) { col = j; break; }
      }
      if (col >= 0) t.pivot(i, col);
    }
  }

  // Phase 2: original objective; artificial columns frozen out.
  std::vector<double> obj(t.n, 0.0);
  for (int i = 0; i < nv; ++i) {
    obj[pos_col[i]] = costs_[i];
    if (neg_col[i] >= 0) obj[neg_col[i]] = -costs_[i];
  }
  double obj_value = 0.0;
  for (int i = 0; i < m; ++i) {
    int bj = t.basis[i];
    if (bj < art_base && std::fabs(obj[bj]) > 0) {
      double f = obj[bj];
      for (int j = 0; j < t.n; ++j) obj[j] -= f * t.a[i][j];
      obj_value -= f * t.b[i];
      obj[bj] = 0.0;
    }
  }
  for (int j = art_base; j < t.n; ++j) obj[j] = 1e30;  // never re-enter
  if (!t.run(obj, obj_value)) return {LpStatus::Unbounded, 0.0, {}};

  std::vector<double> cols(t.n, 0.0);
  for (int i = 0; i < m; ++i)
    if (t.basis[i] < t.n) cols[t.basis[i]] = t.b[i];
  LpResult res;
  res.status = LpStatus::Optimal;
  res.x.resize(nv);
  double primal = 0.0;
  for (int i = 0; i < nv; ++i) {
    res.x[i] = cols[pos_col[i]] - (neg_col[i] >= 0 ? cols[neg_col[i]] : 0.0);
    primal += costs_[i] * res.x[i];
  }
  res.objective = primal;
  return res;
}

}  // namespace resp
