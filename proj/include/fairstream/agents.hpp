#pragma once

#include <algorithm>
#include <charconv>
#include <cstddef>
#include <deque>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "fairstream/format.hpp"
#include "fairstream/observation.hpp"
#include "fairstream/rng.hpp"

namespace fairstream {

/// A bitrate-selection policy for one client. act() is called once per
/// segment, right before the segment is requested.
class Policy {
public:
  virtual ~Policy() = default;
  virtual std::size_t act(const Observation& obs, Rng& rng) = 0;
  virtual void reset() {}
  virtual std::string name() const = 0;
};

class MinPolicy final : public Policy {
public:
  std::size_t act(const Observation&, Rng&) override { return 0; }
  std::string name() const override { return "min"; }
};

class MaxPolicy final : public Policy {
public:
  std::size_t act(const Observation&, Rng&) override { return kLadderSize - 1; }
  std::string name() const override { return "max"; }
};

class RandomPolicy final : public Policy {
public:
  std::size_t act(const Observation&, Rng& rng) override {
    return static_cast<std::size_t>(uniform_index(rng, kLadderSize));
  }
  std::string name() const override { return "random"; }
};

/// Throughput-only heuristic: averages the download rate of up to k previous
/// segments and picks the largest bitrate whose predicted download time fits
/// in the current buffer (one segment of slack while the buffer is empty).
class GreedyPolicy final : public Policy {
public:
  explicit GreedyPolicy(std::size_t k, double segment_duration = 1.0) : k_(k), segment_duration_(segment_duration) {
    if (k_ < 1) throw std::invalid_argument("greedy: k must be >= 1");
    if (!(segment_duration_ > 0.0)) throw std::invalid_argument("greedy: segment duration must be positive");
  }

  std::size_t act(const Observation& obs, Rng&) override {
    observe(obs);
    if (history_.empty()) return 0;
    return select(obs, estimate());
  }

  void reset() override {
    history_.clear();
    last_remaining_ = -1.0;
  }

  std::string name() const override { return "greedy:k=" + std::to_string(k_); }

  double estimate() const {
    return std::accumulate(history_.begin(), history_.end(), 0.0) / static_cast<double>(history_.size());
  }

  /// Largest index predicted to arrive before the buffer drains, else 0.
  std::size_t select(const Observation& obs, double estimate_mbps) const {
    const double budget = std::max(obs.buffer, segment_duration_);
    std::size_t best = 0;
    for (std::size_t j = 0; j < kLadderSize; ++j) {
      if (obs.bitrate_ladder[j] * segment_duration_ / estimate_mbps <= budget) best = j;
    }
    return best;
  }

  std::size_t k() const { return k_; }
  const std::deque<double>& history() const { return history_; }

private:
  void observe(const Observation& obs) {
    // One sample per completed segment; re-queries for the same step are ignored.
    if (!(obs.dt_last > 0.0) || !(obs.bitrate_last > 0.0) || obs.segments_remaining == last_remaining_) return;
    last_remaining_ = obs.segments_remaining;
    history_.push_back(obs.bitrate_last * segment_duration_ / obs.dt_last);
    if (history_.size() > k_) history_.pop_front();
  }

  std::size_t k_;
  double segment_duration_;
  std::deque<double> history_;
  double last_remaining_ = -1.0;
};

enum class AgentKind { Min, Max, Random, Greedy };

struct AgentSpec {
  AgentKind kind = AgentKind::Min;
  std::size_t k = 8;

  std::string to_string() const {
    switch (kind) {
      case AgentKind::Min: return "min";
      case AgentKind::Max: return "max";
      case AgentKind::Random: return "random";
      case AgentKind::Greedy: return "greedy:k=" + std::to_string(k);
    }
    return "unknown";
  }
};

/// Parses "min", "max", "random", "greedy" or "greedy:k=<n>".
inline AgentSpec parse_agent_spec(std::string_view text) {
  text = trim(text);
  AgentSpec spec;
  const auto colon = text.find(':');
  const auto kind = text.substr(0, colon);
  if (kind == "min") spec.kind = AgentKind::Min;
  else if (kind == "max") spec.kind = AgentKind::Max;
  else if (kind == "random") spec.kind = AgentKind::Random;
  else if (kind == "greedy") spec.kind = AgentKind::Greedy;
  else throw std::invalid_argument("unknown agent kind: " + std::string(kind));
  if (colon == std::string_view::npos) return spec;
  if (spec.kind != AgentKind::Greedy) throw std::invalid_argument("agent '" + std::string(kind) + "' takes no parameters");
  const auto param = text.substr(colon + 1);
  if (param.substr(0, 2) != "k=") throw std::invalid_argument("greedy: expected parameter k=<n>");
  const auto digits = param.substr(2);
  long long k = 0;
  const auto res = std::from_chars(digits.data(), digits.data() + digits.size(), k);
  if (res.ec != std::errc() || res.ptr != digits.data() + digits.size()) {
    throw std::invalid_argument("greedy: k must be an integer");
  }
  if (k < 1) throw std::invalid_argument("greedy: k must be >= 1");
  spec.k = static_cast<std::size_t>(k);
  return spec;
}

/// Comma-separated list of specs; a single spec is later replicated per client.
inline std::vector<AgentSpec> parse_agent_specs(std::string_view text) {
  std::vector<AgentSpec> out;
  for (auto part : split_view(text, ',')) out.push_back(parse_agent_spec(part));
  return out;
}

inline std::unique_ptr<Policy> make_agent(const AgentSpec& spec, double segment_duration = 1.0) {
  switch (spec.kind) {
    case AgentKind::Min: return std::make_unique<MinPolicy>();
    case AgentKind::Max: return std::make_unique<MaxPolicy>();
    case AgentKind::Random: return std::make_unique<RandomPolicy>();
    case AgentKind::Greedy: return std::make_unique<GreedyPolicy>(spec.k, segment_duration);
  }
  throw std::invalid_argument("unknown agent kind");
}

inline std::unique_ptr<Policy> make_agent(std::string_view spec, double segment_duration = 1.0) {
  return make_agent(parse_agent_spec(spec), segment_duration);
}

}  // namespace fairstream
