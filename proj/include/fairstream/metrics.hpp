#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>

namespace fairstream {

struct QoEInputs {
  std::int64_t t = 0;    // step index
  double q_t = 0.0;      // quality of segment t
  double q_prev = 0.0;   // quality of segment t-1, ignored at t == 0
  double t_init = 0.0;   // initial stall during segment t [s]
  double t_reb = 0.0;    // rebuffering during segment t [s]
};

struct QoECoefficients {
  double delta = 0.025;
  double lambda_init = 1.0;
  double lambda_reb = 10.0;
  double alpha = 0.25;
  double kappa = 0.9;

  void validate() const {
    if (!(delta >= 0.0)) throw std::invalid_argument("delta must be >= 0");
    if (!(lambda_init >= 0.0)) throw std::invalid_argument("lambda_init must be >= 0");
    if (!(lambda_reb >= 0.0)) throw std::invalid_argument("lambda_reb must be >= 0");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must be in [0, 1]");
    if (!(kappa >= 0.0 && kappa < 1.0)) throw std::invalid_argument("kappa must be in [0, 1)");
  }
};

/// Segment QoE: switching-penalized quality times an exponential stall penalty.
inline double qoe(const QoEInputs& in, const QoECoefficients& c) {
  if (in.t < 0) throw std::invalid_argument("qoe: t must be >= 0");
  if (!(in.q_t >= 0.0 && in.q_t <= 1.0) || (in.t > 0 && !(in.q_prev >= 0.0 && in.q_prev <= 1.0))) {
    throw std::invalid_argument("qoe: qualities must lie in [0, 1]");
  }
  if (!(in.t_init >= 0.0) || !(in.t_reb >= 0.0)) throw std::invalid_argument("qoe: stall times must be >= 0");
  const double stall = std::exp(-c.lambda_init * in.t_init - c.lambda_reb * in.t_reb);
  if (in.t == 0) return in.q_t * stall;
  const double quality = (in.q_t + c.delta * (1.0 - std::abs(in.q_t - in.q_prev))) / (1.0 + c.delta);
  return quality * stall;
}

/// Bias-corrected exponential moving average of QoE.
struct EmaState {
  double z = 0.0;
  std::optional<std::int64_t> t_last;  // empty before the first step
};

/// Applies step t (which must follow state.t_last) and returns the new state
/// together with the bias-corrected average v_t.
inline std::pair<EmaState, double> ema_update(const EmaState& state, double qoe_value, std::int64_t t, double kappa) {
  const std::int64_t expected = state.t_last ? *state.t_last + 1 : 0;
  if (t != expected) throw std::logic_error("ema_update: steps must be applied in order");
  if (!(kappa >= 0.0 && kappa < 1.0)) throw std::invalid_argument("ema_update: kappa must be in [0, 1)");
  EmaState next;
  next.z = kappa * state.z + (1.0 - kappa) * qoe_value;
  next.t_last = t;
  const double correction = 1.0 - std::pow(kappa, static_cast<double>(t + 1));
  return {next, next.z / correction};
}

/// QoE fairness index 1 - 2 sigma for values in [0, 1], population sigma.
inline double fairness(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("fairness: empty vector");
  bool all_equal = true;
  for (double v : values) all_equal = all_equal && v == values.front();
  if (all_equal) return 1.0;
  const auto n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sigma = std::sqrt(ss / n);
  return 1.0 - 2.0 * sigma;
}

inline double utility(double qoe_value, double fairness_value, double alpha) {
  return alpha * qoe_value + (1.0 - alpha) * fairness_value;
}

inline double reward(double qoe_value, double fairness_value, const QoECoefficients& c = {}) {
  return utility(qoe_value, fairness_value, c.alpha);
}

}  // namespace fairstream
