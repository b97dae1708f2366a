#pragma once

#include <cstdint>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fairstream/agents.hpp"
#include "fairstream/format.hpp"
#include "fairstream/harness.hpp"
#include "fairstream/media_model.hpp"
#include "fairstream/simcore.hpp"
#include "fairstream/tiopt.hpp"
#include "fairstream/traces.hpp"

namespace fairstream::cli {

namespace fs = std::filesystem;

struct Streams {
  std::ostream& out;
  std::ostream& err;
};

namespace detail {

inline std::vector<TrafficClass> parse_classes(const std::vector<std::string>& names) {
  std::vector<TrafficClass> out;
  for (const auto& n : names) {
    for (auto part : split_view(n, ',')) {
      if (!trim(part).empty()) out.push_back(parse_traffic_class(trim(part)));
    }
  }
  return out;
}

inline std::string join_indices(const std::vector<std::size_t>& idx) {
  std::string s;
  for (std::size_t k = 0; k < idx.size(); ++k) s += (k ? ";" : "") + std::to_string(idx[k]);
  return s;
}

inline std::string join_bitrates(const ProfileSet& profiles, const std::vector<std::size_t>& idx) {
  std::string s;
  for (std::size_t k = 0; k < idx.size(); ++k) s += (k ? ";" : "") + format_number(profiles[k].bitrates[idx[k]]);
  return s;
}

inline void solution_header(std::ostream& out, bool with_cell) {
  if (with_cell) out << "alpha,bw,feasible,";
  out << "indices,bitrates,total_bitrate,mean_quality,fairness,objective\n";
}

inline void solution_row(std::ostream& out, const ProfileSet& profiles, const tiopt::Solution* s, double alpha) {
  if (!s) {
    out << ",,,,,\n";
    return;
  }
  out << join_indices(s->indices) << ',' << join_bitrates(profiles, s->indices) << ','
      << format_number(s->total_bitrate) << ',' << format_number(s->mean_quality) << ','
      << format_number(s->fairness) << ',' << format_number(s->objective(alpha)) << '\n';
}

inline nlohmann::ordered_json solution_json(const ProfileSet& profiles, const tiopt::Solution& s, double alpha) {
  nlohmann::ordered_json j;
  j["indices"] = s.indices;
  std::vector<double> rates;
  for (std::size_t k = 0; k < s.indices.size(); ++k) rates.push_back(profiles[k].bitrates[s.indices[k]]);
  j["bitrates"] = rates;
  j["total_bitrate"] = s.total_bitrate;
  j["mean_quality"] = s.mean_quality;
  j["fairness"] = s.fairness;
  j["objective"] = s.objective(alpha);
  return j;
}

inline ProfileSet load_profile_option(const std::string& path, std::ostream& err) {
  if (path.empty()) return default_profiles();
  std::vector<std::string> warnings;
  auto set = load_profiles(path, &warnings);
  for (const auto& w : warnings) err << "warning: " << w << '\n';
  return set;
}

/// Writes `text` to `dir/name`, or to `out` when no directory is given.
inline void emit(const std::string& dir, const std::string& name, const std::string& text, std::ostream& out) {
  if (dir.empty()) {
    out << text;
    return;
  }
  fs::create_directories(dir);
  std::ofstream f(fs::path(dir) / name, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + (fs::path(dir) / name).string());
  f << text;
}

struct TraceOptions {
  std::string manifest;
  std::string split = "test";
  std::vector<std::string> classes;
  std::size_t synth_count = 20;
  std::optional<std::uint64_t> trace_seed;
  std::optional<double> constant_bw;
};

inline void add_trace_options(CLI::App* cmd, TraceOptions& o) {
  cmd->add_option("--manifest", o.manifest, "Dataset manifest to draw traces from (default: synthetic traces)");
  cmd->add_option("--split", o.split, "Manifest split to use")
      ->check(CLI::IsMember({"train", "validation", "test", "unassigned"}));
  cmd->add_option("--classes", o.classes, "Traffic classes to include (comma list; default all)");
  cmd->add_option("--synth", o.synth_count, "Synthetic traces per class when no manifest is given");
  cmd->add_option("--trace-seed", o.trace_seed, "Seed for synthetic traces (default: --seed)");
  cmd->add_option("--constant", o.constant_bw, "Use a single constant-bandwidth trace [Mbps]");
}

inline std::vector<LabeledTrace> resolve_traces(const TraceOptions& o, std::uint64_t seed) {
  const auto classes = parse_classes(o.classes);
  std::vector<LabeledTrace> out;
  if (o.constant_bw) {
    out.push_back(label(constant_trace("constant-" + format_number(*o.constant_bw), *o.constant_bw)));
  } else if (!o.manifest.empty()) {
    const auto ds = read_manifest(o.manifest);
    for (const auto* e : ds.select(parse_split(o.split), classes)) out.push_back({e->trace, e->cls});
  } else {
    const auto wanted = classes.empty() ? std::vector<TrafficClass>(kAllClasses.begin(), kAllClasses.end()) : classes;
    for (auto cls : wanted) {
      for (auto& t : synth(cls, o.synth_count, o.trace_seed.value_or(seed))) out.push_back({std::move(t), cls});
    }
  }
  if (out.empty()) throw std::invalid_argument("empty trace selection");
  return out;
}

struct RunOptions {
  std::vector<std::string> agents{"greedy:k=8"};
  std::vector<std::string> sharing{"proportional"};
  std::string profiles;
  TraceOptions traces;
  double alpha = 0.25;
  double kappa = 0.9;
  double delta = 0.025;
  double lambda_init = 1.0;
  double lambda_reb = 10.0;
  std::size_t segments = 100;
  double segment_duration = 1.0;
  double buffer = 8.0;
  std::uint64_t seed = 0;
  std::string out;
  std::string format = "csv";
  bool step_logs = false;
  std::size_t jobs = 1;
  std::vector<std::size_t> ks{1, 2, 4, 8, 16, 32};
};

inline void add_run_options(CLI::App* cmd, RunOptions& o) {
  cmd->add_option("--profiles", o.profiles, "Client profile file (default: built-in Phone/HDTV/4KTV/PCV)");
  cmd->add_option("--alpha", o.alpha, "Quality-fairness coefficient")->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--kappa", o.kappa, "EMA smoothing factor in [0,1)")->check(CLI::Range(0.0, 0.999999999));
  cmd->add_option("--delta", o.delta, "Switching penalty weight")->check(CLI::NonNegativeNumber);
  cmd->add_option("--lambda-init", o.lambda_init, "Initial stall penalty [1/s]")->check(CLI::NonNegativeNumber);
  cmd->add_option("--lambda-reb", o.lambda_reb, "Rebuffering penalty [1/s]")->check(CLI::NonNegativeNumber);
  cmd->add_option("--segments", o.segments, "Segments per stream");
  cmd->add_option("--segment-duration", o.segment_duration, "Segment duration [s]");
  cmd->add_option("--buffer", o.buffer, "Buffer capacity [s]");
  cmd->add_option("--seed", o.seed, "Master seed");
  cmd->add_option("--out", o.out, "Output directory (default: stdout)");
  cmd->add_option("--format", o.format, "Result format")->check(CLI::IsMember({"csv", "json"}));
  cmd->add_option("--jobs", o.jobs, "Episodes simulated in parallel");
  add_trace_options(cmd, o.traces);
}

inline ExperimentConfig base_experiment(const RunOptions& o, std::ostream& err) {
  ExperimentConfig cfg;
  cfg.profiles = load_profile_option(o.profiles, err);
  cfg.coefficients.alpha = o.alpha;
  cfg.coefficients.kappa = o.kappa;
  cfg.coefficients.delta = o.delta;
  cfg.coefficients.lambda_init = o.lambda_init;
  cfg.coefficients.lambda_reb = o.lambda_reb;
  cfg.coefficients.validate();
  cfg.session.num_segments = o.segments;
  cfg.session.segment_duration = o.segment_duration;
  cfg.session.buffer_capacity = o.buffer;
  cfg.seed = o.seed;
  cfg.jobs = o.jobs;
  cfg.traces = resolve_traces(o.traces, o.seed);
  return cfg;
}

inline std::string render_rows(const std::vector<MetricsRow>& rows, const std::string& format) {
  std::ostringstream os;
  if (format == "json") {
    os << metrics_json(rows).dump(2) << '\n';
  } else {
    write_metrics_csv(os, rows);
  }
  return os.str();
}

inline nlohmann::ordered_json run_meta(const RunOptions& o, const ExperimentConfig& cfg) {
  nlohmann::ordered_json meta;
  meta["std_definition"] = "population std over traces of the per-episode client mean";
  meta["return_definition"] = "per-client sum of rewards, averaged over clients";
  meta["agents"] = o.agents;
  meta["sharing"] = o.sharing;
  meta["profiles"] = nlohmann::ordered_json::array();
  for (const auto& p : cfg.profiles) meta["profiles"].push_back(p.name);
  meta["seed"] = o.seed;
  meta["alpha"] = o.alpha;
  meta["kappa"] = o.kappa;
  meta["delta"] = o.delta;
  meta["lambda_init"] = o.lambda_init;
  meta["lambda_reb"] = o.lambda_reb;
  meta["segments"] = o.segments;
  meta["segment_duration"] = o.segment_duration;
  meta["buffer_capacity"] = o.buffer;
  meta["episodes"] = cfg.traces.size();
  return meta;
}

inline int cmd_run(const RunOptions& o, Streams io) {
  auto cfg = base_experiment(o, io.err);
  cfg.keep_logs = o.step_logs;
  std::vector<MetricsRow> rows;
  std::ostringstream steps;
  for (const auto& sharing : o.sharing) {
    for (const auto& agents : o.agents) {
      cfg.agents = parse_agent_specs(agents);
      cfg.sharing = parse_sharing_mode(sharing);
      auto result = run_experiment(cfg);
      for (const auto& w : result.warnings) io.err << "warning: " << w << '\n';
      rows.insert(rows.end(), result.rows.begin(), result.rows.end());
      for (const auto& log : result.logs) write_step_log(steps, log);
    }
  }
  const std::string name = o.format == "json" ? "metrics.json" : "metrics.csv";
  emit(o.out, name, render_rows(rows, o.format), io.out);
  if (!o.out.empty()) {
    emit(o.out, "run_meta.json", run_meta(o, cfg).dump(2) + "\n", io.out);
    if (o.step_logs) emit(o.out, "steps.jsonl", steps.str(), io.out);
  }
  return 0;
}

inline int cmd_ksweep(const RunOptions& o, Streams io) {
  auto cfg = base_experiment(o, io.err);
  std::vector<SharingMode> modes;
  for (const auto& s : o.sharing) modes.push_back(parse_sharing_mode(s));
  const auto rows = greedy_k_sweep(cfg, o.ks, modes);
  emit(o.out, o.format == "json" ? "ksweep.json" : "ksweep.csv", render_rows(rows, o.format), io.out);
  return 0;
}

inline int cmd_solve(const std::string& profiles_path, double bw, double alpha, const std::string& format,
                     Streams io) {
  const auto profiles = load_profile_option(profiles_path, io.err);
  const auto s = tiopt::solve(profiles, bw, alpha);
  if (format == "json") {
    nlohmann::ordered_json j;
    j["bw"] = bw;
    j["alpha"] = alpha;
    j["feasible"] = s.has_value();
    if (s) j["solution"] = solution_json(profiles, *s, alpha);
    io.out << j.dump(2) << '\n';
  } else {
    solution_header(io.out, true);
    io.out << format_number(alpha) << ',' << format_number(bw) << ',' << (s ? 1 : 0) << ',';
    solution_row(io.out, profiles, s ? &*s : nullptr, alpha);
  }
  return 0;
}

inline int cmd_pareto(const std::string& profiles_path, double alpha, const std::string& format,
                      const std::string& out_dir, Streams io) {
  const auto profiles = load_profile_option(profiles_path, io.err);
  const auto front = tiopt::pareto_front(profiles);
  std::ostringstream os;
  if (format == "json") {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& s : front) arr.push_back(solution_json(profiles, s, alpha));
    os << arr.dump(2) << '\n';
  } else {
    solution_header(os, false);
    for (const auto& s : front) solution_row(os, profiles, &s, alpha);
  }
  emit(out_dir, format == "json" ? "pareto.json" : "pareto.csv", os.str(), io.out);
  return 0;
}

inline std::string matrix_csv(const tiopt::SweepGrid& grid, bool quality) {
  std::ostringstream os;
  os << "bw\\alpha";
  for (double a : grid.alpha_axis) os << ',' << format_number(a);
  os << '\n';
  for (std::size_t b = 0; b < grid.bw_axis.size(); ++b) {
    os << format_number(grid.bw_axis[b]);
    for (std::size_t a = 0; a < grid.alpha_axis.size(); ++a) {
      os << ',';
      if (const auto* s = grid.solution(b, a)) os << format_number(quality ? s->mean_quality : s->fairness);
    }
    os << '\n';
  }
  return os.str();
}

inline int cmd_sweep(const std::string& profiles_path, std::size_t alpha_steps, const std::string& bw_spec,
                     const std::string& format, const std::string& out_dir, Streams io) {
  const auto parts = split_view(bw_spec, ':');
  double lo = 0.0, hi = 0.0, steps = 0.0;
  if (parts.size() != 3 || !parse_double(parts[0], lo) || !parse_double(parts[1], hi) || !parse_double(parts[2], steps) ||
      steps < 2.0 || steps != std::floor(steps) || !(hi > lo) || lo < 0.0) {
    throw std::invalid_argument("--bw expects lo:hi:steps with hi > lo >= 0 and steps >= 2");
  }
  if (alpha_steps < 2) throw std::invalid_argument("--alpha-steps must be >= 2");
  const auto profiles = load_profile_option(profiles_path, io.err);
  const auto grid = tiopt::sweep(profiles, alpha_steps, lo, hi, static_cast<std::size_t>(steps));

  if (format == "json") {
    nlohmann::ordered_json j;
    j["alpha_axis"] = grid.alpha_axis;
    j["bw_axis"] = grid.bw_axis;
    for (const char* key : {"mean_quality", "fairness"}) {
      auto m = nlohmann::ordered_json::array();
      for (std::size_t b = 0; b < grid.bw_axis.size(); ++b) {
        auto row = nlohmann::ordered_json::array();
        for (std::size_t a = 0; a < grid.alpha_axis.size(); ++a) {
          const auto* s = grid.solution(b, a);
          if (s) row.push_back(std::string(key) == "fairness" ? s->fairness : s->mean_quality);
          else row.push_back(nullptr);
        }
        m.push_back(std::move(row));
      }
      j[key] = std::move(m);
    }
    emit(out_dir, "sweep.json", j.dump() + "\n", io.out);
    return 0;
  }

  std::ostringstream cells;
  solution_header(cells, true);
  for (std::size_t b = 0; b < grid.bw_axis.size(); ++b) {
    for (std::size_t a = 0; a < grid.alpha_axis.size(); ++a) {
      const auto* s = grid.solution(b, a);
      cells << format_number(grid.alpha_axis[a]) << ',' << format_number(grid.bw_axis[b]) << ',' << (s ? 1 : 0)
            << ',';
      solution_row(cells, profiles, s, grid.alpha_axis[a]);
    }
  }
  emit(out_dir, "sweep_cells.csv", cells.str(), io.out);
  if (!out_dir.empty()) {
    emit(out_dir, "mean_quality.csv", matrix_csv(grid, true), io.out);
    emit(out_dir, "fairness.csv", matrix_csv(grid, false), io.out);
  }
  return 0;
}

inline int cmd_traces_classify(const std::vector<std::string>& files, Streams io) {
  io.out << "id,mean_mbps,std_mbps,cv,class\n";
  for (const auto& f : files) {
    const auto t = read_trace_csv(f);
    const auto s = stats(t);
    const std::string cls = s.mean_bw > kMinMeanMbps ? std::string(to_string(classify(s))) : "rejected";
    io.out << t.id << ',' << format_number(s.mean_bw) << ',' << format_number(s.std_bw) << ','
           << format_number(s.cv) << ',' << cls << '\n';
  }
  return 0;
}

}  // namespace detail

/// Entry point for the `fairstream` tool. Returns the process exit code.
inline int run(int argc, const char* const* argv, Streams io = {std::cout, std::cerr}) {
  CLI::App app{"Multi-client adaptive-bitrate streaming simulator with QoE fairness metrics"};
  app.set_config("--config", "", "Read options from a TOML/INI file");
  app.require_subcommand(1);

  detail::RunOptions run_opts;
  auto* run_cmd = app.add_subcommand("run", "Run agents over a trace set and aggregate metrics per traffic class");
  detail::add_run_options(run_cmd, run_opts);
  run_cmd->add_option("--agents", run_opts.agents,
                      "Agent spec: min|max|random|greedy:k=<n>, or a comma list with one spec per client; repeatable");
  run_cmd->add_option("--sharing", run_opts.sharing, "Bandwidth sharing: proportional|minerva; repeatable")
      ->check(CLI::IsMember({"proportional", "minerva"}));
  run_cmd->add_flag("--step-logs", run_opts.step_logs, "Also write steps.jsonl (requires --out)");

  detail::RunOptions ksweep_opts;
  ksweep_opts.traces.split = "validation";
  auto* ksweep_cmd = app.add_subcommand("ksweep", "Greedy-k parameter sweep");
  detail::add_run_options(ksweep_cmd, ksweep_opts);
  ksweep_cmd->add_option("--k", ksweep_opts.ks, "Window sizes to evaluate");
  ksweep_cmd->add_option("--sharing", ksweep_opts.sharing, "Bandwidth sharing modes; repeatable")
      ->check(CLI::IsMember({"proportional", "minerva"}));

  std::string profiles_path, format = "csv", out_dir;
  double bw = 0.0, alpha = 0.25;
  auto* solve_cmd = app.add_subcommand("solve", "Optimal fixed bitrates for one bandwidth and alpha");
  solve_cmd->add_option("--profiles", profiles_path, "Client profile file");
  solve_cmd->add_option("--bw", bw, "Total bandwidth [Mbps]")->required()->check(CLI::NonNegativeNumber);
  solve_cmd->add_option("--alpha", alpha, "Quality-fairness coefficient")->check(CLI::Range(0.0, 1.0));
  solve_cmd->add_option("--format", format)->check(CLI::IsMember({"csv", "json"}));

  auto* pareto_cmd = app.add_subcommand("pareto", "Pareto-optimal fixed-bitrate assignments");
  pareto_cmd->add_option("--profiles", profiles_path, "Client profile file");
  pareto_cmd->add_option("--alpha", alpha, "Alpha used for the objective column")->check(CLI::Range(0.0, 1.0));
  pareto_cmd->add_option("--format", format)->check(CLI::IsMember({"csv", "json"}));
  pareto_cmd->add_option("--out", out_dir, "Output directory (default: stdout)");

  std::size_t alpha_steps = 100;
  std::string bw_spec = "0:90:100";
  auto* sweep_cmd = app.add_subcommand("sweep", "Optimal solutions over an alpha x bandwidth grid");
  sweep_cmd->add_option("--profiles", profiles_path, "Client profile file");
  sweep_cmd->add_option("--alpha-steps", alpha_steps, "Grid points on [0, 1]");
  sweep_cmd->add_option("--bw", bw_spec, "Bandwidth axis lo:hi:steps [Mbps]");
  sweep_cmd->add_option("--format", format)->check(CLI::IsMember({"csv", "json"}));
  sweep_cmd->add_option("--out", out_dir, "Output directory (default: cells CSV on stdout)");

  auto* traces_cmd = app.add_subcommand("traces", "Trace dataset tooling");
  traces_cmd->require_subcommand(1);

  std::vector<std::string> classify_files;
  auto* classify_cmd = traces_cmd->add_subcommand("classify", "Print statistics and traffic class of trace files");
  classify_cmd->add_option("files", classify_files, "Trace CSV files")->required()->check(CLI::ExistingFile);

  std::vector<std::string> ingest_paths;
  double scale = 3.0, length = kDefaultTraceSeconds;
  auto* ingest_cmd = traces_cmd->add_subcommand("ingest", "Cut measurement CSVs into traces and write a manifest");
  ingest_cmd->add_option("paths", ingest_paths, "Measurement CSV files or directories")->required();
  ingest_cmd->add_option("--scale", scale, "Bandwidth scale factor")->check(CLI::PositiveNumber);
  ingest_cmd->add_option("--length", length, "Trace length [s]")->check(CLI::PositiveNumber);
  ingest_cmd->add_option("--out", out_dir, "Output directory")->required();

  std::vector<std::string> gen_classes;
  std::size_t gen_count = 100;
  std::uint64_t seed = 0;
  auto* gen_cmd = traces_cmd->add_subcommand("gen", "Generate synthetic traces per class and write a manifest");
  gen_cmd->add_option("--classes", gen_classes, "Traffic classes (default all)");
  gen_cmd->add_option("--count", gen_count, "Traces per class");
  gen_cmd->add_option("--seed", seed, "Generator seed");
  gen_cmd->add_option("--out", out_dir, "Output directory")->required();

  std::string manifest;
  std::optional<std::size_t> per_class;
  auto* split_cmd = traces_cmd->add_subcommand("split", "Undersample and split a manifest 90/5/5 per class");
  split_cmd->add_option("--manifest", manifest, "Input manifest")->required()->check(CLI::ExistingFile);
  split_cmd->add_option("--per-class", per_class, "Undersample to at most this many traces per class");
  split_cmd->add_option("--seed", seed, "Split seed");
  split_cmd->add_option("--out", out_dir, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, io.out, io.err);
  }

  try {
    if (*run_cmd) return detail::cmd_run(run_opts, io);
    if (*ksweep_cmd) return detail::cmd_ksweep(ksweep_opts, io);
    if (*solve_cmd) return detail::cmd_solve(profiles_path, bw, alpha, format, io);
    if (*pareto_cmd) return detail::cmd_pareto(profiles_path, alpha, format, out_dir, io);
    if (*sweep_cmd) return detail::cmd_sweep(profiles_path, alpha_steps, bw_spec, format, out_dir, io);
    if (*classify_cmd) return detail::cmd_traces_classify(classify_files, io);
    if (*ingest_cmd) {
      std::vector<fs::path> paths(ingest_paths.begin(), ingest_paths.end());
      Dataset ds;
      for (auto& t : ingest(paths, scale, length)) ds.entries.push_back(make_entry(std::move(t)));
      write_manifest(ds, fs::path(out_dir) / "manifest.csv");
      io.out << "wrote " << ds.entries.size() << " traces to " << (fs::path(out_dir) / "manifest.csv").string() << '\n';
      return 0;
    }
    if (*gen_cmd) {
      auto classes = detail::parse_classes(gen_classes);
      if (classes.empty()) classes.assign(kAllClasses.begin(), kAllClasses.end());
      Dataset ds;
      ds.seed = seed;
      for (auto cls : classes) {
        for (auto& t : synth(cls, gen_count, seed)) ds.entries.push_back(make_entry(std::move(t)));
      }
      write_manifest(ds, fs::path(out_dir) / "manifest.csv");
      io.out << "wrote " << ds.entries.size() << " traces to " << (fs::path(out_dir) / "manifest.csv").string() << '\n';
      return 0;
    }
    if (*split_cmd) {
      auto ds = read_manifest(manifest);
      if (per_class) {
        std::map<TrafficClass, std::vector<DatasetEntry>> by_class;
        for (auto& e : ds.entries) by_class[e.cls].push_back(std::move(e));
        ds = undersample(by_class, *per_class, seed);
      }
      ds = split(std::move(ds), seed);
      write_manifest(ds, fs::path(out_dir) / "manifest.csv");
      io.out << "wrote " << ds.entries.size() << " traces to " << (fs::path(out_dir) / "manifest.csv").string() << '\n';
      return 0;
    }
  } catch (const std::exception& e) {
    io.err << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

}  // namespace fairstream::cli
