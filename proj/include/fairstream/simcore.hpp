#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "fairstream/agents.hpp"
#include "fairstream/media_model.hpp"
#include "fairstream/metrics.hpp"
#include "fairstream/observation.hpp"
#include "fairstream/rng.hpp"
#include "fairstream/traces.hpp"

namespace fairstream {

enum class SharingMode { Proportional, Minerva };

inline std::string_view to_string(SharingMode m) {
  return m == SharingMode::Proportional ? "proportional" : "minerva";
}

inline SharingMode parse_sharing_mode(std::string_view name) {
  if (name == "proportional") return SharingMode::Proportional;
  if (name == "minerva") return SharingMode::Minerva;
  throw std::invalid_argument("unknown sharing mode: " + std::string(name));
}

// ---------------------------------------------------------------------------
// Bandwidth sharing.

/// Per-client bitrates at which every profile would stream at one common
/// interpolated quality, with the bitrates summing to `total`. Totals outside
/// the achievable range clamp to the minimum or maximum bitrates.
inline std::vector<double> minerva_weights(std::span<const ClientProfile* const> profiles, double total) {
  if (profiles.empty()) throw std::invalid_argument("minerva_weights: no clients");
  auto rate_at = [](const ClientProfile& p, double theta) {
    if (theta <= p.min_quality()) return p.min_bitrate();
    return interp_bitrate(p, std::min(theta, 1.0));
  };
  auto sum_at = [&](double theta) {
    double s = 0.0;
    for (const auto* p : profiles) s += rate_at(*p, theta);
    return s;
  };
  std::vector<double> out;
  out.reserve(profiles.size());
  double lo = 1.0;
  for (const auto* p : profiles) lo = std::min(lo, p->min_quality());
  if (total <= sum_at(lo)) {
    for (const auto* p : profiles) out.push_back(p->min_bitrate());
    return out;
  }
  if (total >= sum_at(1.0)) {
    for (const auto* p : profiles) out.push_back(rate_at(*p, 1.0));
    return out;
  }
  double hi = 1.0;
  for (int iter = 0; iter < 200 && hi - lo > 1e-15; ++iter) {
    const double mid = 0.5 * (lo + hi);
    (sum_at(mid) < total ? lo : hi) = mid;
  }
  for (const auto* p : profiles) out.push_back(rate_at(*p, hi));
  return out;
}

struct DownloadRequest {
  std::size_t client = 0;
  const ClientProfile* profile = nullptr;
  double bitrate = 0.0;  // Mbps of the segment in flight
};

/// Weight-based split of `total` over the downloading clients: proportional
/// to the requested bitrates, or to the equal-quality Minerva weights.
inline std::vector<double> allocate_bandwidth(double total, std::span<const DownloadRequest> downloading,
                                              SharingMode mode) {
  if (downloading.empty()) throw std::invalid_argument("allocate_bandwidth: no downloading clients");
  if (!(total >= 0.0)) throw std::invalid_argument("allocate_bandwidth: negative bandwidth");
  std::vector<double> weights;
  weights.reserve(downloading.size());
  if (mode == SharingMode::Proportional) {
    for (const auto& d : downloading) weights.push_back(d.bitrate);
  } else {
    std::vector<const ClientProfile*> profiles;
    for (const auto& d : downloading) profiles.push_back(d.profile);
    weights = minerva_weights(profiles, total);
  }
  double sum = 0.0;
  for (double w : weights) sum += w;
  std::vector<double> shares;
  shares.reserve(weights.size());
  for (double w : weights) shares.push_back(total * w / sum);
  return shares;
}

/// A piecewise-constant download rate: `rate` Mbps from `begin` until the next piece.
struct SharePiece {
  double begin = 0.0;
  double rate = 0.0;
};

/// Time at which `remaining` megabits complete when downloading from `start`
/// over the given rate timeline, which ends at `end`. Empty if it never does.
inline std::optional<double> integrate_download(double remaining, double start, std::span<const SharePiece> timeline,
                                                double end) {
  if (!(remaining > 0.0)) throw std::invalid_argument("integrate_download: remaining must be positive");
  for (std::size_t k = 1; k < timeline.size(); ++k) {
    if (!(timeline[k].begin > timeline[k - 1].begin)) {
      throw std::invalid_argument("integrate_download: breakpoints must be sorted");
    }
  }
  for (std::size_t k = 0; k < timeline.size(); ++k) {
    const double piece_end = k + 1 < timeline.size() ? timeline[k + 1].begin : end;
    const double from = std::max(start, timeline[k].begin);
    if (piece_end <= from) continue;
    const double rate = timeline[k].rate;
    if (rate > 0.0) {
      const double capacity = rate * (piece_end - from);
      if (capacity >= remaining) return from + remaining / rate;
      remaining -= capacity;
    }
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Per-step reward.

struct StepReward {
  double qoe = 0.0;
  double v = 0.0;
  double fairness = 0.0;
  double reward = 0.0;
  EmaState ema;
  std::vector<std::size_t> participants;
};

/// QoE of the completed segment, the client's updated EMA, and fairness over
/// the latest EMA values of every client currently streaming with at least
/// one completed step. `latest_v[k]` is empty until client k completes a step;
/// `streaming[k]` is false once client k finished playback.
inline StepReward step_reward(std::size_t client, const QoEInputs& in, const EmaState& ema,
                              std::span<const std::optional<double>> latest_v, std::span<const bool> streaming,
                              const QoECoefficients& c) {
  StepReward out;
  out.qoe = qoe(in, c);
  std::tie(out.ema, out.v) = ema_update(ema, out.qoe, in.t, c.kappa);
  std::vector<double> values;
  for (std::size_t k = 0; k < latest_v.size(); ++k) {
    if (k == client) {
      values.push_back(out.v);
      out.participants.push_back(k);
    } else if (latest_v[k] && streaming[k]) {
      values.push_back(*latest_v[k]);
      out.participants.push_back(k);
    }
  }
  out.fairness = fairness(values);
  out.reward = reward(out.qoe, out.fairness, c);
  return out;
}

// ---------------------------------------------------------------------------
// Session and log types.

struct SessionConfig {
  ProfileSet profiles;
  Trace trace;
  double segment_duration = 1.0;
  std::size_t num_segments = 100;
  double buffer_capacity = 8.0;
  std::size_t startup_segments = 1;
  SharingMode sharing = SharingMode::Proportional;
  QoECoefficients coefficients;
  std::uint64_t seed = 0;

  void validate() const {
    if (profiles.empty()) throw ValidationError("session: no clients");
    for (const auto& p : profiles) validate_profile(p);
    trace.validate();
    coefficients.validate();
    if (!(segment_duration > 0.0)) throw ValidationError("session: segment_duration must be positive");
    if (num_segments == 0) throw ValidationError("session: num_segments must be positive");
    if (!(buffer_capacity >= segment_duration)) throw ValidationError("session: buffer_capacity must hold one segment");
    if (startup_segments == 0) throw ValidationError("session: startup_segments must be positive");
    if (static_cast<double>(startup_segments) * segment_duration > buffer_capacity) {
      throw ValidationError("session: startup segments do not fit in the buffer");
    }
  }
};

struct StepRecord {
  std::size_t client = 0;
  std::int64_t t = 0;
  double sim_time = 0.0;         // completion time of segment t
  double download_start = 0.0;
  std::size_t action = 0;        // ladder index of segment t
  double quality = 0.0;
  Observation observation;       // what the client sees after segment t
  double qoe = 0.0;
  double fairness = 0.0;
  double reward = 0.0;
  std::vector<std::size_t> fairness_participants;
};

struct ClientTotals {
  double playback_s = 0.0;         // wall time spent playing
  double content_played_s = 0.0;   // media seconds consumed
  double init_stall_s = 0.0;
  double rebuffer_s = 0.0;
  double idle_after_finish_s = 0.0;
  double buffer_integral = 0.0;    // integral of buffer level over time [s^2]
  double active_until = 0.0;       // finish time, or episode end if unfinished
  bool finished = false;
  std::size_t segments_downloaded = 0;

  double buffer_level() const { return active_until > 0.0 ? buffer_integral / active_until : 0.0; }
};

struct EpisodeLog {
  std::string trace_id;
  std::vector<std::string> client_names;
  std::vector<std::vector<StepRecord>> steps;  // per client, ordered by t
  std::vector<ClientTotals> totals;
  double end_time = 0.0;
  // Config echo.
  SharingMode sharing = SharingMode::Proportional;
  double segment_duration = 1.0;
  std::size_t num_segments = 0;
  double buffer_capacity = 0.0;
  QoECoefficients coefficients;
  std::uint64_t seed = 0;

  std::size_t total_steps() const {
    std::size_t n = 0;
    for (const auto& s : steps) n += s.size();
    return n;
  }
};

enum class EventKind { Start, TraceBreakpoint, DownloadComplete, BufferEmpty, BufferSpace, PlaybackFinished, End };

struct Event {
  EventKind kind = EventKind::Start;
  double time = 0.0;
  std::size_t client = 0;
};

/// Bandwidth split in force right after an event has been processed.
struct AllocationSnapshot {
  double time = 0.0;
  double total_bandwidth = 0.0;
  std::vector<double> shares;  // 0 for clients not downloading
  std::vector<bool> downloading;
};

// ---------------------------------------------------------------------------
// Event-driven simulator.

class Simulator {
public:
  using Observer = std::function<void(const AllocationSnapshot&)>;

  Simulator(SessionConfig config, std::span<Policy* const> agents, Observer observer = {})
      : cfg_(std::move(config)), agents_(agents.begin(), agents.end()), observer_(std::move(observer)) {
    cfg_.validate();
    if (agents_.size() != cfg_.profiles.size()) throw ValidationError("session: need exactly one agent per client");
    const auto n = cfg_.profiles.size();
    clients_.resize(n);
    log_.trace_id = cfg_.trace.id;
    log_.steps.resize(n);
    log_.totals.resize(n);
    log_.sharing = cfg_.sharing;
    log_.segment_duration = cfg_.segment_duration;
    log_.num_segments = cfg_.num_segments;
    log_.buffer_capacity = cfg_.buffer_capacity;
    log_.coefficients = cfg_.coefficients;
    log_.seed = cfg_.seed;
    for (std::size_t i = 0; i < n; ++i) {
      log_.client_names.push_back(cfg_.profiles[i].name);
      clients_[i].rng = Rng(mix_seed(cfg_.seed, static_cast<std::uint64_t>(i)));
      clients_[i].last_obs = Observation::initial(cfg_.profiles[i], cfg_.num_segments);
      agents_[i]->reset();
    }
  }

  bool done() const { return done_; }
  double now() const { return now_; }
  const EpisodeLog& log() const { return log_; }
  const SessionConfig& config() const { return cfg_; }
  const std::vector<double>& shares() const { return shares_; }

  double buffer(std::size_t client) const { return clients_.at(client).buffer; }
  bool downloading(std::size_t client) const { return clients_.at(client).phase == Phase::Downloading; }
  bool waiting(std::size_t client) const { return clients_.at(client).phase == Phase::Waiting; }
  double download_remaining(std::size_t client) const { return clients_.at(client).remaining; }

  /// Processes the next instant with pending events. Returns the events that
  /// fired, in processing order; the first call starts the stream.
  std::vector<Event> advance() {
    std::vector<Event> fired;
    if (done_) return fired;
    if (!started_) {
      started_ = true;
      for (std::size_t i = 0; i < clients_.size(); ++i) request_next(i);
      reallocate();
      fired.push_back({EventKind::Start, now_, 0});
      notify();
      return fired;
    }

    const double next = next_event_time();
    integrate(next - now_);
    now_ = next;

    constexpr double kTimeEps = 1e-12;
    const double horizon = cfg_.trace.duration;
    if (now_ + kTimeEps >= horizon) now_ = horizon;

    if (cfg_.trace.next_change_after(previous_time_) <= now_ + kTimeEps && now_ < horizon) {
      fired.push_back({EventKind::TraceBreakpoint, now_, 0});
    }
    // Download completions, ascending client id.
    for (std::size_t i = 0; i < clients_.size(); ++i) {
      auto& c = clients_[i];
      if (c.phase == Phase::Downloading && c.remaining <= kMegabitEps) {
        complete_download(i);
        fired.push_back({EventKind::DownloadComplete, now_, i});
      }
    }
    // Buffer events, ascending client id.
    for (std::size_t i = 0; i < clients_.size(); ++i) {
      auto& c = clients_[i];
      if (c.finished || !c.playing_started) continue;
      if (c.buffer <= kBufferEps) {
        c.buffer = 0.0;
        if (c.segments_downloaded == cfg_.num_segments && c.phase == Phase::Idle) {
          finish_playback(i);
          fired.push_back({EventKind::PlaybackFinished, now_, i});
          continue;
        }
        if (!c.stalled && c.phase != Phase::Waiting) {
          c.stalled = true;
          fired.push_back({EventKind::BufferEmpty, now_, i});
        }
      }
      if (c.phase == Phase::Waiting && c.buffer <= space_threshold() + kBufferEps) {
        c.last_obs.buffer = c.buffer;
        request_next(i);
        fired.push_back({EventKind::BufferSpace, now_, i});
      }
    }

    const bool all_finished = std::all_of(clients_.begin(), clients_.end(), [](const auto& c) { return c.finished; });
    if (all_finished || now_ >= horizon) {
      finalize();
      fired.push_back({EventKind::End, now_, 0});
    } else {
      reallocate();
    }
    previous_time_ = now_;
    notify();
    return fired;
  }

  EpisodeLog run() {
    while (!done_) advance();
    return log_;
  }

  /// The observation client `i` would receive now.
  Observation observation(std::size_t i) const { return clients_.at(i).last_obs; }

private:
  enum class Phase { Idle, Downloading, Waiting };

  static constexpr double kMegabitEps = 1e-9;
  static constexpr double kBufferEps = 1e-9;

  struct ClientState {
    Phase phase = Phase::Idle;
    double buffer = 0.0;
    bool playing_started = false;
    bool stalled = false;
    bool finished = false;
    std::size_t segments_downloaded = 0;
    std::size_t bitrate_index = 0;
    double remaining = 0.0;
    double download_start = 0.0;
    double pending_init = 0.0;
    double pending_reb = 0.0;
    double q_prev = 0.0;
    EmaState ema;
    std::optional<double> latest_v;
    Observation last_obs;
    Rng rng;
  };

  double space_threshold() const { return cfg_.buffer_capacity - cfg_.segment_duration; }

  bool playing(const ClientState& c) const { return c.playing_started && !c.finished && c.buffer > 0.0; }

  double next_event_time() const {
    double next = cfg_.trace.duration;
    next = std::min(next, cfg_.trace.next_change_after(now_));
    for (std::size_t i = 0; i < clients_.size(); ++i) {
      const auto& c = clients_[i];
      if (c.phase == Phase::Downloading && shares_[i] > 0.0) next = std::min(next, now_ + c.remaining / shares_[i]);
      if (playing(c)) next = std::min(next, now_ + c.buffer);
      if (c.phase == Phase::Waiting) next = std::min(next, now_ + std::max(0.0, c.buffer - space_threshold()));
    }
    return std::max(next, now_);
  }

  void integrate(double dt) {
    if (dt <= 0.0) return;
    for (std::size_t i = 0; i < clients_.size(); ++i) {
      auto& c = clients_[i];
      auto& tot = log_.totals[i];
      if (c.phase == Phase::Downloading) c.remaining = std::max(0.0, c.remaining - shares_[i] * dt);
      if (c.finished) {
        tot.idle_after_finish_s += dt;
      } else if (!c.playing_started) {
        c.pending_init += dt;
        tot.init_stall_s += dt;
      } else if (c.buffer > 0.0) {
        const double drained = std::min(dt, c.buffer);
        tot.buffer_integral += (c.buffer - 0.5 * drained) * drained;
        c.buffer -= drained;
        tot.playback_s += dt;
        tot.content_played_s += drained;
      } else {
        c.pending_reb += dt;
        tot.rebuffer_s += dt;
      }
    }
  }

  void request_next(std::size_t i) {
    auto& c = clients_[i];
    const std::size_t action = agents_[i]->act(c.last_obs, c.rng);
    if (action >= kLadderSize) throw std::out_of_range("agent returned an out-of-range action");
    c.phase = Phase::Downloading;
    c.bitrate_index = action;
    c.remaining = cfg_.profiles[i].bitrates[action] * cfg_.segment_duration;
    c.download_start = now_;
    c.pending_init = 0.0;
    c.pending_reb = 0.0;
  }

  void complete_download(std::size_t i) {
    auto& c = clients_[i];
    const auto& profile = cfg_.profiles[i];
    c.phase = Phase::Idle;
    c.remaining = 0.0;
    const auto t = static_cast<std::int64_t>(c.segments_downloaded);
    ++c.segments_downloaded;
    c.buffer += cfg_.segment_duration;
    c.stalled = false;
    if (!c.playing_started &&
        (c.segments_downloaded >= cfg_.startup_segments || c.segments_downloaded == cfg_.num_segments)) {
      c.playing_started = true;
    }

    QoEInputs in;
    in.t = t;
    in.q_t = profile.qualities[c.bitrate_index];
    in.q_prev = c.q_prev;
    in.t_init = c.pending_init;
    in.t_reb = c.pending_reb;

    const auto n = clients_.size();
    std::vector<std::optional<double>> latest(n);
    auto streaming = std::make_unique<bool[]>(n);  // std::vector<bool> is not contiguous
    for (std::size_t k = 0; k < n; ++k) {
      latest[k] = clients_[k].latest_v;
      streaming[k] = !clients_[k].finished;
    }
    const auto r = step_reward(i, in, c.ema, latest, std::span<const bool>(streaming.get(), n), cfg_.coefficients);
    c.ema = r.ema;
    c.latest_v = r.v;
    c.q_prev = in.q_t;

    Observation obs = Observation::initial(profile, cfg_.num_segments);
    obs.qoe_last = r.qoe;
    obs.v_ema = r.v;
    obs.q_last = in.q_t;
    obs.bitrate_last = profile.bitrates[c.bitrate_index];
    obs.dt_last = now_ - c.download_start;
    obs.t_init_last = in.t_init;
    obs.t_reb_last = in.t_reb;
    obs.buffer = c.buffer;
    obs.segments_remaining = static_cast<double>(cfg_.num_segments - c.segments_downloaded);
    c.last_obs = obs;

    StepRecord rec;
    rec.client = i;
    rec.t = t;
    rec.sim_time = now_;
    rec.download_start = c.download_start;
    rec.action = c.bitrate_index;
    rec.quality = in.q_t;
    rec.observation = obs;
    rec.qoe = r.qoe;
    rec.fairness = r.fairness;
    rec.reward = r.reward;
    rec.fairness_participants = r.participants;
    log_.steps[i].push_back(std::move(rec));
    log_.totals[i].segments_downloaded = c.segments_downloaded;

    if (c.segments_downloaded == cfg_.num_segments) return;
    if (c.buffer + cfg_.segment_duration <= cfg_.buffer_capacity + kBufferEps) {
      request_next(i);
    } else {
      c.phase = Phase::Waiting;
    }
  }

  void finish_playback(std::size_t i) {
    auto& c = clients_[i];
    c.finished = true;
    c.buffer = 0.0;
    log_.totals[i].finished = true;
    log_.totals[i].active_until = now_;
    log_.totals[i].content_played_s = static_cast<double>(cfg_.num_segments) * cfg_.segment_duration;
  }

  void reallocate() {
    std::vector<DownloadRequest> requests;
    for (std::size_t i = 0; i < clients_.size(); ++i) {
      const auto& c = clients_[i];
      if (c.phase == Phase::Downloading) {
        requests.push_back({i, &cfg_.profiles[i], cfg_.profiles[i].bitrates[c.bitrate_index]});
      }
    }
    shares_.assign(clients_.size(), 0.0);
    total_bw_ = cfg_.trace.bandwidth_at(now_);
    if (requests.empty()) return;
    const auto split = allocate_bandwidth(total_bw_, requests, cfg_.sharing);
    for (std::size_t k = 0; k < requests.size(); ++k) shares_[requests[k].client] = split[k];
  }

  void finalize() {
    done_ = true;
    log_.end_time = now_;
    for (std::size_t i = 0; i < clients_.size(); ++i) {
      auto& c = clients_[i];
      if (c.phase == Phase::Downloading) c.phase = Phase::Idle;  // in-flight segments are dropped
      if (!c.finished) log_.totals[i].active_until = now_;
    }
    shares_.assign(clients_.size(), 0.0);
    total_bw_ = cfg_.trace.bandwidth_at(std::min(now_, cfg_.trace.duration));
  }

  void notify() {
    if (!observer_) return;
    AllocationSnapshot snap;
    snap.time = now_;
    snap.total_bandwidth = total_bw_;
    snap.shares = shares_;
    for (const auto& c : clients_) snap.downloading.push_back(c.phase == Phase::Downloading);
    observer_(snap);
  }

  SessionConfig cfg_;
  std::vector<Policy*> agents_;
  Observer observer_;
  std::vector<ClientState> clients_;
  std::vector<double> shares_;
  double total_bw_ = 0.0;
  double now_ = 0.0;
  double previous_time_ = 0.0;
  bool started_ = false;
  bool done_ = false;
  EpisodeLog log_;
};

inline EpisodeLog run_episode(const SessionConfig& config, std::span<Policy* const> agents,
                              Simulator::Observer observer = {}) {
  Simulator sim(config, agents, std::move(observer));
  return sim.run();
}

inline EpisodeLog run_episode(const SessionConfig& config, const std::vector<std::unique_ptr<Policy>>& agents,
                              Simulator::Observer observer = {}) {
  std::vector<Policy*> raw;
  for (const auto& a : agents) raw.push_back(a.get());
  return run_episode(config, std::span<Policy* const>(raw), std::move(observer));
}

}  // namespace fairstream
