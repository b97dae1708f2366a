#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <vector>

#include "fairstream/media_model.hpp"
#include "fairstream/metrics.hpp"

namespace fairstream {

// Time-independent allocation: every client streams one fixed bitrate forever,
// the bitrates must fit in the bottleneck, and the objective is
//   alpha * mean quality + (1 - alpha) * fairness(qualities).

namespace tiopt {

inline constexpr double kObjectiveEps = 1e-12;
// Ladder sums such as 60 + 22.68 are not exact in binary.
inline constexpr double kBandwidthEps = 1e-9;

struct Solution {
  std::vector<std::size_t> indices;
  double total_bitrate = 0.0;
  double mean_quality = 0.0;
  double fairness = 0.0;

  double objective(double alpha) const { return alpha * mean_quality + (1.0 - alpha) * fairness; }
  double quality_fairness_sum() const { return mean_quality + fairness; }
};

/// One selectable (bitrate, quality) pair.
struct Rung {
  double bitrate = 0.0;
  double quality = 0.0;
};

/// Per-client option lists of any length.
using Ladders = std::vector<std::vector<Rung>>;

inline Ladders ladders_of(const ProfileSet& profiles) {
  Ladders out;
  for (const auto& p : profiles) {
    std::vector<Rung> rungs;
    for (std::size_t k = 0; k < kLadderSize; ++k) rungs.push_back({p.bitrates[k], p.qualities[k]});
    out.push_back(std::move(rungs));
  }
  return out;
}

inline Solution make_solution(const Ladders& ladders, std::vector<std::size_t> indices) {
  if (indices.size() != ladders.size()) throw std::invalid_argument("make_solution: one index per client");
  Solution s;
  std::vector<double> q;
  q.reserve(ladders.size());
  for (std::size_t i = 0; i < ladders.size(); ++i) {
    const auto& r = ladders[i].at(indices[i]);
    s.total_bitrate += r.bitrate;
    q.push_back(r.quality);
  }
  double sum = 0.0;
  for (double v : q) sum += v;
  s.mean_quality = sum / static_cast<double>(q.size());
  s.fairness = fairstream::fairness(q);
  s.indices = std::move(indices);
  return s;
}

inline Solution make_solution(const ProfileSet& profiles, std::vector<std::size_t> indices) {
  return make_solution(ladders_of(profiles), std::move(indices));
}

/// Every assignment, in lexicographic index order.
inline std::vector<Solution> enumerate_all(const Ladders& ladders) {
  if (ladders.empty()) return {};
  for (const auto& l : ladders) {
    if (l.empty()) throw std::invalid_argument("enumerate_all: client without options");
  }
  std::vector<Solution> out;
  std::vector<std::size_t> idx(ladders.size(), 0);
  while (true) {
    out.push_back(make_solution(ladders, idx));
    std::size_t pos = idx.size();
    while (pos > 0) {
      --pos;
      if (++idx[pos] < ladders[pos].size()) break;
      idx[pos] = 0;
      if (pos == 0) return out;
    }
  }
}

inline std::vector<Solution> enumerate_all(const ProfileSet& profiles) { return enumerate_all(ladders_of(profiles)); }

inline bool fits(const Solution& s, double bw) { return s.total_bitrate <= bw + kBandwidthEps; }

inline std::vector<Solution> enumerate_feasible(const Ladders& ladders, double bw) {
  if (!(bw >= 0.0)) throw std::invalid_argument("enumerate_feasible: bandwidth must be >= 0");
  auto all = enumerate_all(ladders);
  std::erase_if(all, [&](const Solution& s) { return !fits(s, bw); });
  return all;
}

inline std::vector<Solution> enumerate_feasible(const ProfileSet& profiles, double bw) {
  return enumerate_feasible(ladders_of(profiles), bw);
}

/// True when `a` beats `b` at coefficient alpha: higher objective, then lower
/// total bitrate, then higher quality+fairness sum, then lexicographically
/// smaller indices.
inline bool better(const Solution& a, const Solution& b, double alpha) {
  const double da = a.objective(alpha) - b.objective(alpha);
  if (da > kObjectiveEps) return true;
  if (da < -kObjectiveEps) return false;
  if (a.total_bitrate < b.total_bitrate - kObjectiveEps) return true;
  if (a.total_bitrate > b.total_bitrate + kObjectiveEps) return false;
  const double ds = a.quality_fairness_sum() - b.quality_fairness_sum();
  if (ds > kObjectiveEps) return true;
  if (ds < -kObjectiveEps) return false;
  return a.indices < b.indices;
}

/// `other` dominates `s`: no more expensive, at least as good in quality and
/// fairness, and strictly better in their sum.
inline bool dominates(const Solution& other, const Solution& s) {
  return other.total_bitrate <= s.total_bitrate + kObjectiveEps &&
         other.mean_quality >= s.mean_quality - kObjectiveEps && other.fairness >= s.fairness - kObjectiveEps &&
         other.quality_fairness_sum() > s.quality_fairness_sum() + kObjectiveEps;
}

/// Precomputes every assignment once so repeated solves are a linear scan.
class Solver {
public:
  explicit Solver(const ProfileSet& profiles) : Solver(ladders_of(profiles)) {}
  explicit Solver(const Ladders& ladders) : solutions_(enumerate_all(ladders)) {
    std::stable_sort(solutions_.begin(), solutions_.end(),
                     [](const Solution& a, const Solution& b) { return a.total_bitrate < b.total_bitrate; });
  }

  const std::vector<Solution>& solutions() const { return solutions_; }

  /// Number of leading solutions (sorted by total bitrate) that fit in bw.
  std::size_t feasible_count(double bw) const {
    const auto it = std::upper_bound(solutions_.begin(), solutions_.end(), bw + kBandwidthEps,
                                     [](double v, const Solution& s) { return v < s.total_bitrate; });
    return static_cast<std::size_t>(it - solutions_.begin());
  }

  /// Position in solutions() of the optimum, or empty when nothing fits.
  std::optional<std::size_t> solve_index(double bw, double alpha) const {
    const auto n = feasible_count(bw);
    if (n == 0) return std::nullopt;
    std::size_t best = 0;
    for (std::size_t k = 1; k < n; ++k) {
      if (better(solutions_[k], solutions_[best], alpha)) best = k;
    }
    return best;
  }

  std::optional<Solution> solve(double bw, double alpha) const {
    const auto k = solve_index(bw, alpha);
    if (!k) return std::nullopt;
    return solutions_[*k];
  }

private:
  std::vector<Solution> solutions_;
};

inline std::optional<Solution> solve(const Ladders& ladders, double bw, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("solve: alpha must be in [0, 1]");
  if (!(bw >= 0.0)) throw std::invalid_argument("solve: bandwidth must be >= 0");
  return Solver(ladders).solve(bw, alpha);
}

inline std::optional<Solution> solve(const ProfileSet& profiles, double bw, double alpha) {
  return solve(ladders_of(profiles), bw, alpha);
}

/// Non-dominated assignments, sorted by total bitrate.
inline std::vector<Solution> pareto_front(const Ladders& ladders) {
  Solver solver(ladders);
  const auto& all = solver.solutions();
  std::vector<Solution> front;
  for (std::size_t i = 0; i < all.size(); ++i) {
    bool dominated = false;
    for (std::size_t j = 0; j < all.size() && !dominated; ++j) {
      if (all[j].total_bitrate > all[i].total_bitrate + kObjectiveEps) break;  // sorted by bitrate
      dominated = j != i && dominates(all[j], all[i]);
    }
    if (!dominated) front.push_back(all[i]);
  }
  return front;
}

inline std::vector<Solution> pareto_front(const ProfileSet& profiles) { return pareto_front(ladders_of(profiles)); }

inline std::vector<double> linspace(double lo, double hi, std::size_t steps) {
  if (steps < 2) throw std::invalid_argument("linspace: need at least 2 steps");
  std::vector<double> out(steps);
  for (std::size_t k = 0; k < steps; ++k) {
    out[k] = k + 1 == steps ? hi : lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(steps - 1);
  }
  return out;
}

/// Optimal solutions over an (alpha x bandwidth) grid, endpoints inclusive.
struct SweepGrid {
  std::vector<double> alpha_axis;
  std::vector<double> bw_axis;
  std::vector<Solution> solutions;                // candidate set, sorted by total bitrate
  std::vector<std::optional<std::size_t>> cells;  // row-major [bw][alpha], index into solutions

  const std::optional<std::size_t>& cell(std::size_t bw_index, std::size_t alpha_index) const {
    return cells[bw_index * alpha_axis.size() + alpha_index];
  }
  const Solution* solution(std::size_t bw_index, std::size_t alpha_index) const {
    const auto& c = cell(bw_index, alpha_index);
    return c ? &solutions[*c] : nullptr;
  }
};

inline SweepGrid sweep(const ProfileSet& profiles, std::size_t alpha_steps = 100, double bw_lo = 0.0,
                       double bw_hi = 90.0, std::size_t bw_steps = 100) {
  Solver solver(profiles);
  SweepGrid grid;
  grid.alpha_axis = linspace(0.0, 1.0, alpha_steps);
  grid.bw_axis = linspace(bw_lo, bw_hi, bw_steps);
  grid.cells.reserve(alpha_steps * bw_steps);
  for (double bw : grid.bw_axis) {
    for (double alpha : grid.alpha_axis) grid.cells.push_back(solver.solve_index(bw, alpha));
  }
  grid.solutions = solver.solutions();
  return grid;
}

}  // namespace tiopt
}  // namespace fairstream
