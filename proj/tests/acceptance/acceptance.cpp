// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "fairstream/agents.hpp"
#include "fairstream/cli.hpp"
#include "fairstream/harness.hpp"
#include "fairstream/metrics.hpp"
#include "fairstream/simcore.hpp"
#include "fairstream/tiopt.hpp"
#include "fairstream/traces.hpp"

using namespace fairstream;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      if (pass) detail = what;
      pass = false;
    }
  }
};

std::string num(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

std::vector<Policy*> raw(const std::vector<std::unique_ptr<Policy>>& a) {
  std::vector<Policy*> out;
  for (const auto& p : a) out.push_back(p.get());
  return out;
}

std::vector<LabeledTrace> synth_set(std::size_t per_class, std::uint64_t seed) {
  std::vector<LabeledTrace> out;
  for (auto cls : kAllClasses) {
    for (auto& t : synth(cls, per_class, seed)) out.push_back({std::move(t), cls});
  }
  return out;
}

const MetricsRow& row_for(const std::vector<MetricsRow>& rows, const std::string& cls) {
  for (const auto& r : rows) {
    if (r.cls == cls) return r;
  }
  throw std::runtime_error("missing row " + cls);
}

double metric(const MetricsRow& r, Metric m) { return r.metrics[static_cast<std::size_t>(m)].mean; }

Outcome rebuffer_penalty() {
  Outcome o;
  QoECoefficients c;
  for (double q : {0.3, 0.55, 0.8, 1.0}) {
    for (std::int64_t t : {0, 5}) {
      const double stalled = qoe({t, q, q, 0.0, 0.1}, c);
      const double clean = qoe({t, q, q, 0.0, 0.0}, c);
      const double factor = stalled / clean;
      o.check(std::abs(factor - std::exp(-1.0)) <= 1e-9, "factor " + num(factor) + " vs e^-1");
      // The reference constant is printed to 7 decimals.
      o.check(std::abs(factor - 0.3678794) <= 5e-8, "factor " + num(factor) + " vs 0.3678794");
      if (t == 0) o.check(std::abs(stalled - q * std::exp(-1.0)) <= 1e-9, "qoe != q*e^-1");
    }
  }
  if (o.pass) o.detail = "factor = " + num(qoe({0, 1.0, 0, 0.0, 0.1}, c)) + " (63.2% reduction)";
  return o;
}

Outcome fairness_extremes() {
  Outcome o;
  for (double c : {0.0, 0.123, 0.5, 1.0}) {
    const std::vector<double> same(5, c);
    o.check(fairness(same) == 1.0, "F(constant) != 1");
  }
  const std::vector<double> split{0, 0, 1, 1};
  o.check(fairness(split) == 0.0, "F([0,0,1,1]) = " + num(fairness(split)));
  const std::vector<double> ramp{0.2, 0.4, 0.6, 0.8};
  const double f = fairness(ramp);
  o.check(std::abs(f - (1.0 - 2.0 * std::sqrt(0.05))) <= 1e-9, "F(ramp) = " + num(f) + " vs 1-2*sqrt(0.05)");
  o.check(std::abs(f - 0.5527864) <= 5e-8, "F(ramp) = " + num(f) + " vs 0.5527864");
  if (o.pass) o.detail = "F(ramp) = " + num(f);
  return o;
}

Outcome ema_properties() {
  Outcome o;
  for (double kappa : {0.0, 0.5, 0.9, 0.99}) {
    const auto [state, v0] = ema_update({}, 0.6180339887, 0, kappa);
    (void)state;
    o.check(v0 == 0.6180339887, "v_0 != first qoe at kappa " + num(kappa));
    EmaState s;
    for (std::int64_t t = 0; t < 100; ++t) {
      const auto [next, v] = ema_update(s, 0.42, t, kappa);
      o.check(std::abs(v - 0.42) <= 1e-12, "fixpoint drift at kappa " + num(kappa) + " t " + std::to_string(t));
      s = next;
    }
  }
  return o;
}

Outcome bandwidth_conservation() {
  Outcome o;
  Rng rng(20240601);
  const char* specs[] = {"min", "max", "random", "greedy:k=8", "greedy:k=1"};
  std::size_t boundaries = 0;
  double worst = 0.0;
  for (int ep = 0; ep < 100; ++ep) {
    const auto cls = kAllClasses[uniform_index(rng, kAllClasses.size())];
    SessionConfig cfg;
    cfg.profiles = default_profiles();
    cfg.trace = synth(cls, 1, static_cast<std::uint64_t>(ep))[0];
    cfg.sharing = ep % 2 ? SharingMode::Minerva : SharingMode::Proportional;
    cfg.seed = static_cast<std::uint64_t>(ep);
    std::vector<std::unique_ptr<Policy>> agents;
    for (int i = 0; i < 4; ++i) agents.push_back(make_agent(specs[uniform_index(rng, 5)]));
    const auto ptrs = raw(agents);
    run_episode(cfg, ptrs, [&](const AllocationSnapshot& snap) {
      const bool any = std::any_of(snap.downloading.begin(), snap.downloading.end(), [](bool d) { return d; });
      if (!any) return;
      ++boundaries;
      const double sum = std::accumulate(snap.shares.begin(), snap.shares.end(), 0.0);
      const double expected = cfg.trace.bandwidth_at(snap.time);
      worst = std::max(worst, std::abs(sum - expected));
      o.check(std::abs(sum - expected) <= 1e-9, "episode " + std::to_string(ep) + " t=" + num(snap.time));
      for (std::size_t i = 0; i < snap.shares.size(); ++i) {
        o.check(snap.downloading[i] || snap.shares[i] == 0.0, "idle client holds a share");
      }
    });
  }
  if (o.pass) o.detail = std::to_string(boundaries) + " boundaries, max |error| " + num(worst);
  return o;
}

Outcome download_timing() {
  Outcome o;
  const auto& profile = default_profiles()[3];
  for (std::size_t idx = 0; idx < kLadderSize; ++idx) {
    for (double bw : {2.0, 7.3, 30.0, 95.0}) {
      struct Fixed final : Policy {
        std::size_t j;
        explicit Fixed(std::size_t k) : j(k) {}
        std::size_t act(const Observation&, Rng&) override { return j; }
        std::string name() const override { return "fixed"; }
      } agent(idx);
      Policy* ptr[] = {&agent};
      SessionConfig cfg;
      cfg.profiles = {profile};
      cfg.trace = constant_trace("const", bw);
      const auto log = run_episode(cfg, ptr);
      o.check(!log.steps[0].empty(), "no steps");
      for (const auto& s : log.steps[0]) {
        const double dt = s.sim_time - s.download_start;
        o.check(std::abs(dt - profile.bitrates[idx] / bw) <= 1e-9, "download time " + num(dt));
      }
    }
  }
  // Two-piece: 5 Mb at 10 Mbps for 0.25 s, then 5 Mbps.
  const std::vector<SharePiece> pieces{{0.0, 10.0}, {0.25, 5.0}};
  const auto done = integrate_download(5.0, 0.0, pieces, 100.0);
  o.check(done && std::abs(*done - 0.75) <= 1e-9, "two-piece integration");
  // Same shape through the simulator: 20 Mb segment, 10 Mbps until 0.5 s, then 40 Mbps.
  SessionConfig cfg;
  cfg.profiles = {default_profiles()[0]};
  cfg.trace = Trace{"two-piece", {{0.0, 10.0}, {0.5, 40.0}}, 200.0};
  cfg.num_segments = 1;
  MaxPolicy mx;
  Policy* ptr[] = {&mx};
  const auto log = run_episode(cfg, ptr);
  const double hand = 0.5 + (20.0 - 10.0 * 0.5) / 40.0;
  o.check(log.steps[0].size() == 1 && std::abs(log.steps[0][0].sim_time - hand) <= 1e-9, "simulated two-piece");
  return o;
}

Outcome solver_oracle() {
  Outcome o;
  const auto start = std::chrono::steady_clock::now();
  const tiopt::Ladders toy{{{1.0, 0.45}, {2.5, 0.8}, {4.0, 1.0}}, {{0.5, 0.3}, {2.0, 0.75}, {5.0, 1.0}}};
  struct Cand {
    std::vector<std::size_t> idx;
    double total, q, f;
  };
  std::vector<Cand> cands;
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      const double a = toy[0][i].quality, b = toy[1][j].quality;
      cands.push_back({{i, j}, toy[0][i].bitrate + toy[1][j].bitrate, 0.5 * (a + b), 1.0 - std::abs(a - b)});
    }
  }
  Rng rng(6);
  for (int k = 0; k < 20; ++k) {
    const double alpha = uniform01(rng);
    const double bw = uniform_real(rng, 0.0, 10.0);
    double best = -1.0;
    for (const auto& c : cands) {
      if (c.total <= bw) best = std::max(best, alpha * c.q + (1 - alpha) * c.f);
    }
    const auto s = tiopt::solve(toy, bw, alpha);
    if (best < 0) {
      o.check(!s.has_value(), "solution where none fits");
    } else {
      o.check(s.has_value() && std::abs(s->objective(alpha) - best) <= 1e-12,
              "argmax mismatch at alpha=" + num(alpha) + " bw=" + num(bw));
    }
  }
  std::vector<std::vector<std::size_t>> oracle, got;
  for (const auto& s : cands) {
    bool dominated = false;
    for (const auto& t : cands) {
      dominated = dominated || (t.total <= s.total && t.q >= s.q && t.f >= s.f && t.q + t.f > s.q + s.f + 1e-12);
    }
    if (!dominated) oracle.push_back(s.idx);
  }
  for (const auto& s : tiopt::pareto_front(toy)) got.push_back(s.indices);
  std::sort(oracle.begin(), oracle.end());
  std::sort(got.begin(), got.end());
  o.check(oracle == got, "pareto front mismatch");
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  o.check(secs < 1.0, "took " + num(secs) + " s");
  if (o.pass) o.detail = std::to_string(got.size()) + " front points, " + num(secs) + " s";
  return o;
}

Outcome boundary_facts() {
  Outcome o;
  const auto& ps = default_profiles();
  tiopt::Solver solver(ps);
  for (double bw : {0.0, 1.0, 2.0, 2.7, 2.749999}) {
    o.check(tiopt::enumerate_feasible(ps, bw).empty(), "feasible set non-empty at bw=" + num(bw));
    o.check(!solver.solve(bw, 0.5), "solution at bw=" + num(bw));
  }
  for (double bw : {82.68, 85.0, 90.0, 500.0}) {
    for (int k = 0; k <= 20; ++k) {
      const double alpha = k / 20.0;
      const auto s = solver.solve(bw, alpha);
      o.check(s && s->objective(alpha) == 1.0 && s->mean_quality == 1.0 && s->fairness == 1.0,
              "objective below 1 at bw=" + num(bw) + " alpha=" + num(alpha));
    }
  }
  return o;
}

Outcome subset_of_pareto() {
  Outcome o;
  const auto start = std::chrono::steady_clock::now();
  const auto& ps = default_profiles();
  const auto grid = tiopt::sweep(ps, 100, 0.0, 90.0, 100);
  auto front = tiopt::pareto_front(ps);
  std::vector<std::vector<std::size_t>> keys;
  for (const auto& s : front) keys.push_back(s.indices);
  std::sort(keys.begin(), keys.end());
  std::size_t feasible = 0;
  for (std::size_t b = 0; b < grid.bw_axis.size(); ++b) {
    for (std::size_t a = 0; a < grid.alpha_axis.size(); ++a) {
      const auto* s = grid.solution(b, a);
      if (!s) continue;
      ++feasible;
      if (!std::binary_search(keys.begin(), keys.end(), s->indices)) {
        std::string idx;
        for (auto i : s->indices) idx += std::to_string(i);
        o.check(false, "cell alpha=" + num(grid.alpha_axis[a]) + " bw=" + num(grid.bw_axis[b]) + " optimum " + idx);
      }
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  o.check(secs < 60.0, "took " + num(secs) + " s");
  if (o.pass) {
    o.detail = std::to_string(feasible) + " feasible cells, " + std::to_string(front.size()) + " front points, " +
               num(secs) + " s";
  }
  return o;
}

Outcome min_agent_episode() {
  Outcome o;
  SessionConfig cfg;
  cfg.profiles = default_profiles();
  cfg.trace = constant_trace("constant-20", 20.0);
  std::vector<std::unique_ptr<Policy>> agents;
  for (int i = 0; i < 4; ++i) agents.push_back(std::make_unique<MinPolicy>());
  const auto log = run_episode(cfg, raw(agents));
  const auto per = per_episode_metrics(log);
  std::string buffers;
  for (std::size_t i = 0; i < per.size(); ++i) {
    const double buffer = at(per[i], Metric::BufferLevel);
    buffers += (i ? "/" : "") + num(buffer).substr(0, 5);
    o.check(log.totals[i].rebuffer_s == 0.0 && at(per[i], Metric::Rebuffer) == 0.0,
            "client " + std::to_string(i) + " rebuffered");
    o.check(at(per[i], Metric::TotalPlayback) == 100.0, "playback " + num(at(per[i], Metric::TotalPlayback)));
    o.check(buffer >= 7.0 && buffer <= 8.0, "client " + std::to_string(i) + " buffer " + num(buffer));
  }
  const auto mean = client_mean(per);
  if (o.pass) o.detail = "buffer mean " + num(at(mean, Metric::BufferLevel)) + " s (clients " + buffers + ")";
  return o;
}

Outcome random_switches() {
  Outcome o;
  ExperimentConfig cfg;
  cfg.agents = {AgentSpec{AgentKind::Random}};
  cfg.traces = synth_set(20, 0);
  cfg.seed = 0;
  const auto r = run_experiment(cfg);
  const auto& all = row_for(r.rows, "all");
  const double sw = metric(all, Metric::QualitySwitches);
  o.check(all.episodes >= 50, "too few episodes");
  o.check(std::abs(sw - 0.85) <= 0.02, "switch rate " + num(sw));
  o.detail = "switch rate " + num(sw) + " over " + std::to_string(all.episodes) + " episodes (6/7 = " +
             num(6.0 / 7.0) + ")";
  return o;
}

Outcome trend_reproduction() {
  Outcome o;
  const auto start = std::chrono::steady_clock::now();
  ExperimentConfig cfg;
  cfg.traces = synth_set(20, 0);
  auto run = [&](AgentSpec spec, SharingMode mode) {
    cfg.agents = {spec};
    cfg.sharing = mode;
    return run_experiment(cfg).rows;
  };
  const auto g8 = run({AgentKind::Greedy, 8}, SharingMode::Proportional);
  const auto rnd = run({AgentKind::Random}, SharingMode::Proportional);
  const auto mn = run({AgentKind::Min}, SharingMode::Proportional);
  const auto mx = run({AgentKind::Max}, SharingMode::Proportional);
  const auto g8m = run({AgentKind::Greedy, 8}, SharingMode::Minerva);
  const double rg = metric(row_for(g8, "all"), Metric::Return);
  const double rr = metric(row_for(rnd, "all"), Metric::Return);
  const double rmin = metric(row_for(mn, "all"), Metric::Return);
  const double rmax = metric(row_for(mx, "all"), Metric::Return);
  o.check(rg > rr, "greedy-8 return " + num(rg) + " <= random " + num(rr));
  o.check(rr > std::min(rmin, rmax), "random return " + num(rr) + " <= min(min, max)");
  const double f_prop = metric(row_for(g8, "low"), Metric::Fairness);
  const double f_minerva = metric(row_for(g8m, "low"), Metric::Fairness);
  o.check(f_minerva >= f_prop, "low-class fairness minerva " + num(f_minerva) + " < proportional " + num(f_prop));
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  o.check(secs < 120.0, "took " + num(secs) + " s");
  if (o.pass) {
    o.detail = "return G8 " + num(rg).substr(0, 6) + " > Random " + num(rr).substr(0, 6) + " > min(Min " +
               num(rmin).substr(0, 6) + ", Max " + num(rmax).substr(0, 6) + "); low fairness Minerva " +
               num(f_minerva).substr(0, 5) + " >= " + num(f_prop).substr(0, 5);
  }
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "fairstream");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  return cli::run(static_cast<int>(argv.size()), argv.data(), {out, err});
}

Outcome determinism() {
  Outcome o;
  const auto root = fs::temp_directory_path() / "fairstream_acceptance_determinism";
  fs::remove_all(root);
  const std::vector<std::vector<std::string>> experiments{
      {"run", "--agents", "random", "--agents", "greedy:k=8", "--agents", "min,max,random,greedy:k=2", "--sharing",
       "proportional", "--sharing", "minerva", "--synth", "4", "--seed", "1234", "--step-logs", "--jobs", "3"},
      {"ksweep", "--k", "1", "--k", "4", "--synth", "2", "--seed", "99", "--sharing", "minerva", "--format", "json"},
      {"sweep", "--alpha-steps", "20", "--bw", "0:90:20"},
      {"traces", "gen", "--count", "3", "--seed", "5"},
  };
  std::size_t files = 0;
  for (std::size_t e = 0; e < experiments.size(); ++e) {
    std::vector<fs::path> dirs;
    for (int rep = 0; rep < 2; ++rep) {
      const auto dir = root / ("exp" + std::to_string(e) + "_" + std::to_string(rep));
      auto args = experiments[e];
      args.insert(args.end(), {"--out", dir.string()});
      o.check(cli(args) == 0, "experiment " + std::to_string(e) + " failed");
      dirs.push_back(dir);
    }
    for (const auto& entry : fs::recursive_directory_iterator(dirs[0])) {
      if (!entry.is_regular_file()) continue;
      const auto rel = fs::relative(entry.path(), dirs[0]);
      ++files;
      o.check(fs::exists(dirs[1] / rel) && slurp(entry.path()) == slurp(dirs[1] / rel),
              "differs: " + rel.generic_string());
    }
  }
  fs::remove_all(root);
  if (o.pass) o.detail = std::to_string(files) + " files byte-identical across re-runs";
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"rebuffer penalty factor e^-1", rebuffer_penalty},
      {"fairness extremes", fairness_extremes},
      {"EMA first value and fixpoint", ema_properties},
      {"bandwidth conservation", bandwidth_conservation},
      {"download timing oracle", download_timing},
      {"solver and pareto oracles", solver_oracle},
      {"feasibility and saturation boundaries", boundary_facts},
      {"optima subset of pareto front", subset_of_pareto},
      {"min agent at 20 Mbps", min_agent_episode},
      {"random agent switch rate", random_switches},
      {"trend reproduction", trend_reproduction},
      {"determinism", determinism},
  };
  int failures = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    failures += !o.pass;
    std::printf("%s %2zu %s%s%s\n", o.pass ? "PASS" : "FAIL", k + 1, criteria[k].first.c_str(),
                o.detail.empty() ? "" : ": ", o.detail.c_str());
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
