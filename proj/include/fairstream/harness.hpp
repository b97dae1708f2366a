#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "fairstream/agents.hpp"
#include "fairstream/format.hpp"
#include "fairstream/media_model.hpp"
#include "fairstream/metrics.hpp"
#include "fairstream/rng.hpp"
#include "fairstream/simcore.hpp"
#include "fairstream/traces.hpp"

namespace fairstream {

// ---------------------------------------------------------------------------
// Per-episode metrics.

enum class Metric {
  Return,
  QoE,
  Fairness,
  PerceptualQuality,
  InitRebuffer,
  Rebuffer,
  QualitySwitches,
  QualityDifference,
  BufferLevel,
  TotalPlayback,
};

inline constexpr std::size_t kMetricCount = 10;

inline constexpr std::array<const char*, kMetricCount> kMetricNames{
    "return",          "qoe",          "fairness",        "perceptual_quality", "init_rebuffer_s",
    "rebuffer_s",      "quality_switches", "quality_difference", "buffer_level", "total_playback_s"};

using MetricValues = std::array<double, kMetricCount>;

inline double& at(MetricValues& v, Metric m) { return v[static_cast<std::size_t>(m)]; }
inline double at(const MetricValues& v, Metric m) { return v[static_cast<std::size_t>(m)]; }

/// One record per client. Means over steps are 0 for a client without steps.
inline std::vector<MetricValues> per_episode_metrics(const EpisodeLog& log) {
  std::vector<MetricValues> out;
  for (std::size_t i = 0; i < log.steps.size(); ++i) {
    const auto& steps = log.steps[i];
    MetricValues v{};
    double ret = 0.0, qoe_sum = 0.0, fair_sum = 0.0, q_sum = 0.0, init = 0.0, reb = 0.0;
    double switches = 0.0, diff = 0.0;
    for (std::size_t t = 0; t < steps.size(); ++t) {
      const auto& s = steps[t];
      ret += s.reward;
      qoe_sum += s.qoe;
      fair_sum += s.fairness;
      q_sum += s.quality;
      init += s.observation.t_init_last;
      reb += s.observation.t_reb_last;
      if (t > 0) {
        const double change = std::abs(s.quality - steps[t - 1].quality);
        if (s.quality != steps[t - 1].quality) switches += 1.0;
        diff += change;
      }
    }
    const auto n = static_cast<double>(steps.size());
    at(v, Metric::Return) = ret;
    at(v, Metric::QoE) = steps.empty() ? 0.0 : qoe_sum / n;
    at(v, Metric::Fairness) = steps.empty() ? 0.0 : fair_sum / n;
    at(v, Metric::PerceptualQuality) = steps.empty() ? 0.0 : q_sum / n;
    at(v, Metric::InitRebuffer) = init;
    at(v, Metric::Rebuffer) = reb;
    at(v, Metric::QualitySwitches) = steps.size() > 1 ? switches / (n - 1.0) : 0.0;
    at(v, Metric::QualityDifference) = steps.size() > 1 ? diff / (n - 1.0) : 0.0;
    at(v, Metric::BufferLevel) = log.totals[i].buffer_level();
    at(v, Metric::TotalPlayback) = log.totals[i].content_played_s;
    out.push_back(v);
  }
  return out;
}

inline MetricValues client_mean(const std::vector<MetricValues>& per_client) {
  MetricValues m{};
  if (per_client.empty()) return m;
  for (const auto& v : per_client) {
    for (std::size_t k = 0; k < kMetricCount; ++k) m[k] += v[k];
  }
  for (auto& x : m) x /= static_cast<double>(per_client.size());
  return m;
}

// ---------------------------------------------------------------------------
// Aggregation.

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population std over episodes
};

struct EpisodeRecord {
  std::string trace_id;
  TrafficClass cls = TrafficClass::Low;
  MetricValues values{};  // client mean
};

struct MetricsRow {
  std::string agent;
  std::string sharing;
  std::string cls;  // traffic class name or "all"
  std::size_t episodes = 0;
  std::array<MeanStd, kMetricCount> metrics{};
};

inline MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd r;
  if (xs.empty()) return r;
  for (double x : xs) r.mean += x;
  r.mean /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - r.mean) * (x - r.mean);
  r.std = std::sqrt(ss / static_cast<double>(xs.size()));
  return r;
}

/// Mean and std across episodes per traffic class (fixed class order), plus
/// an "all" row. Episode order within a class does not matter up to rounding;
/// records are reduced in trace-id order so the output is reproducible.
inline std::vector<MetricsRow> aggregate(std::vector<EpisodeRecord> records, const std::string& agent,
                                         const std::string& sharing, std::vector<std::string>* warnings = nullptr) {
  std::sort(records.begin(), records.end(),
            [](const EpisodeRecord& a, const EpisodeRecord& b) { return a.trace_id < b.trace_id; });
  auto make_row = [&](const std::string& label, const std::vector<const EpisodeRecord*>& members) {
    MetricsRow row;
    row.agent = agent;
    row.sharing = sharing;
    row.cls = label;
    row.episodes = members.size();
    for (std::size_t k = 0; k < kMetricCount; ++k) {
      std::vector<double> xs;
      for (const auto* r : members) xs.push_back(r->values[k]);
      row.metrics[k] = mean_std(xs);
    }
    return row;
  };
  std::vector<MetricsRow> rows;
  std::vector<const EpisodeRecord*> everything;
  for (const auto& r : records) everything.push_back(&r);
  for (auto cls : kAllClasses) {
    std::vector<const EpisodeRecord*> members;
    for (const auto& r : records) {
      if (r.cls == cls) members.push_back(&r);
    }
    if (members.empty()) {
      if (warnings) warnings->push_back("no episodes for class '" + std::string(to_string(cls)) + "'");
      continue;
    }
    rows.push_back(make_row(std::string(to_string(cls)), members));
  }
  if (!everything.empty()) rows.push_back(make_row("all", everything));
  return rows;
}

// ---------------------------------------------------------------------------
// Experiments.

struct LabeledTrace {
  Trace trace;
  TrafficClass cls = TrafficClass::Low;
};

inline LabeledTrace label(Trace trace) {
  const auto cls = classify(stats(trace));
  return {std::move(trace), cls};
}

struct SessionParams {
  double segment_duration = 1.0;
  std::size_t num_segments = 100;
  double buffer_capacity = 8.0;
  std::size_t startup_segments = 1;
};

struct ExperimentConfig {
  std::vector<AgentSpec> agents;  // one spec (replicated) or one per client
  SharingMode sharing = SharingMode::Proportional;
  ProfileSet profiles = default_profiles();
  std::vector<LabeledTrace> traces;
  SessionParams session;
  QoECoefficients coefficients;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  bool keep_logs = false;

  std::string agent_label() const {
    std::string out;
    for (std::size_t k = 0; k < agents.size(); ++k) out += (k ? "|" : "") + agents[k].to_string();
    return out;
  }
};

struct ExperimentResult {
  std::vector<MetricsRow> rows;
  std::vector<EpisodeRecord> episodes;      // in trace order
  std::vector<EpisodeLog> logs;             // in trace order, when keep_logs
  std::vector<std::string> warnings;
};

inline std::uint64_t episode_seed(std::uint64_t master, const std::string& trace_id) {
  return mix_seed(master, trace_id);
}

inline SessionConfig session_for(const ExperimentConfig& cfg, const Trace& trace) {
  SessionConfig s;
  s.profiles = cfg.profiles;
  s.trace = trace;
  s.segment_duration = cfg.session.segment_duration;
  s.num_segments = cfg.session.num_segments;
  s.buffer_capacity = cfg.session.buffer_capacity;
  s.startup_segments = cfg.session.startup_segments;
  s.sharing = cfg.sharing;
  s.coefficients = cfg.coefficients;
  s.seed = episode_seed(cfg.seed, trace.id);
  return s;
}

inline std::vector<std::unique_ptr<Policy>> make_agents(const ExperimentConfig& cfg) {
  const auto n = cfg.profiles.size();
  if (cfg.agents.size() != 1 && cfg.agents.size() != n) {
    throw std::invalid_argument("agent list must hold one spec or one per client");
  }
  std::vector<std::unique_ptr<Policy>> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(make_agent(cfg.agents.size() == 1 ? cfg.agents[0] : cfg.agents[i], cfg.session.segment_duration));
  }
  return out;
}

/// Runs `count` independent jobs on up to `jobs` threads; results keep index order.
template <typename Fn>
void parallel_for(std::size_t count, std::size_t jobs, Fn&& fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, count));
  if (jobs == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < jobs; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  if (cfg.traces.empty()) throw std::invalid_argument("experiment: empty trace selection");
  if (cfg.agents.empty()) throw std::invalid_argument("experiment: no agents");
  make_agents(cfg);  // fail fast on bad specs

  ExperimentResult result;
  result.episodes.resize(cfg.traces.size());
  if (cfg.keep_logs) result.logs.resize(cfg.traces.size());
  parallel_for(cfg.traces.size(), cfg.jobs, [&](std::size_t k) {
    const auto& lt = cfg.traces[k];
    auto agents = make_agents(cfg);
    auto log = run_episode(session_for(cfg, lt.trace), agents);
    result.episodes[k] = {lt.trace.id, lt.cls, client_mean(per_episode_metrics(log))};
    if (cfg.keep_logs) result.logs[k] = std::move(log);
  });
  result.rows = aggregate(result.episodes, cfg.agent_label(), std::string(to_string(cfg.sharing)), &result.warnings);
  return result;
}

/// Greedy-k for each k and sharing mode on the same traces.
inline std::vector<MetricsRow> greedy_k_sweep(ExperimentConfig base, const std::vector<std::size_t>& ks,
                                              const std::vector<SharingMode>& modes) {
  std::vector<MetricsRow> rows;
  for (auto mode : modes) {
    for (auto k : ks) {
      base.agents = {AgentSpec{AgentKind::Greedy, k}};
      base.sharing = mode;
      auto r = run_experiment(base);
      rows.insert(rows.end(), r.rows.begin(), r.rows.end());
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Output.

inline void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows) {
  out << "agent,sharing,class,episodes";
  for (const auto* name : kMetricNames) out << ',' << name << "_mean," << name << "_std";
  out << '\n';
  for (const auto& r : rows) {
    out << r.agent << ',' << r.sharing << ',' << r.cls << ',' << r.episodes;
    for (const auto& m : r.metrics) out << ',' << format_number(m.mean) << ',' << format_number(m.std);
    out << '\n';
  }
}

/// Numbers are rounded to the same 6 significant digits as the CSV.
inline nlohmann::ordered_json metrics_json(const std::vector<MetricsRow>& rows) {
  auto rounded = [](double v) {
    double out = 0.0;
    parse_double(format_number(v), out);
    return out;
  };
  auto arr = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    nlohmann::ordered_json j;
    j["agent"] = r.agent;
    j["sharing"] = r.sharing;
    j["class"] = r.cls;
    j["episodes"] = r.episodes;
    for (std::size_t k = 0; k < kMetricCount; ++k) {
      j[kMetricNames[k]] = {{"mean", rounded(r.metrics[k].mean)}, {"std", rounded(r.metrics[k].std)}};
    }
    arr.push_back(std::move(j));
  }
  return arr;
}

/// One JSON object per step, clients in id order, steps in order.
inline void write_step_log(std::ostream& out, const EpisodeLog& log) {
  for (std::size_t i = 0; i < log.steps.size(); ++i) {
    for (const auto& s : log.steps[i]) {
      nlohmann::ordered_json j;
      j["trace"] = log.trace_id;
      j["client"] = s.client;
      j["name"] = log.client_names[i];
      j["t"] = s.t;
      j["sim_time"] = s.sim_time;
      j["action"] = s.action;
      j["bitrate"] = s.observation.bitrate_last;
      j["quality"] = s.quality;
      j["qoe"] = s.qoe;
      j["v"] = s.observation.v_ema;
      j["fairness"] = s.fairness;
      j["reward"] = s.reward;
      j["buffer"] = s.observation.buffer;
      j["dt"] = s.observation.dt_last;
      j["t_init"] = s.observation.t_init_last;
      j["t_reb"] = s.observation.t_reb_last;
      j["participants"] = s.fairness_participants;
      out << j.dump() << '\n';
    }
  }
}

}  // namespace fairstream
