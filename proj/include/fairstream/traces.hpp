#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "fairstream/errors.hpp"
#include "fairstream/format.hpp"
#include "fairstream/rng.hpp"

namespace fairstream {

inline constexpr double kDefaultTraceSeconds = 200.0;
inline constexpr double kMinMeanMbps = 3.0;
inline constexpr double kFluctuatingCv = 0.35;

struct TraceSample {
  double time = 0.0;       // s
  double bandwidth = 0.0;  // Mbps
};

/// Piecewise-constant bottleneck bandwidth: each sample holds until the next
/// one, the last until `duration`.
struct Trace {
  std::string id;
  std::vector<TraceSample> samples;
  double duration = kDefaultTraceSeconds;

  void validate() const {
    if (samples.empty()) throw ValidationError("trace '" + id + "': no samples");
    if (samples.front().time != 0.0) throw ValidationError("trace '" + id + "': first timestamp must be 0");
    for (std::size_t k = 0; k < samples.size(); ++k) {
      const auto& s = samples[k];
      if (!std::isfinite(s.time) || !std::isfinite(s.bandwidth) || s.bandwidth < 0.0) {
        throw ValidationError("trace '" + id + "': invalid sample");
      }
      if (k > 0 && !(s.time > samples[k - 1].time)) {
        throw ValidationError("trace '" + id + "': timestamps must be strictly increasing");
      }
    }
    if (!(duration >= samples.back().time) || !std::isfinite(duration)) {
      throw ValidationError("trace '" + id + "': duration must cover the last timestamp");
    }
  }

  std::size_t sample_index_at(double t) const {
    const auto it = std::upper_bound(samples.begin(), samples.end(), t,
                                     [](double v, const TraceSample& s) { return v < s.time; });
    return it == samples.begin() ? 0 : static_cast<std::size_t>(it - samples.begin()) - 1;
  }

  double bandwidth_at(double t) const { return samples[sample_index_at(t)].bandwidth; }

  /// First sample timestamp strictly after t, or `duration` when none.
  double next_change_after(double t) const {
    const auto it = std::upper_bound(samples.begin(), samples.end(), t,
                                     [](double v, const TraceSample& s) { return v < s.time; });
    return it == samples.end() ? duration : std::min(it->time, duration);
  }
};

inline Trace constant_trace(std::string id, double bandwidth, double duration = kDefaultTraceSeconds) {
  return Trace{std::move(id), {{0.0, bandwidth}}, duration};
}

struct TraceStats {
  double mean_bw = 0.0;
  double std_bw = 0.0;
  double cv = 0.0;
};

/// Time-weighted mean and population standard deviation on [0, duration].
inline TraceStats stats(const Trace& trace) {
  if (!(trace.duration > 0.0)) throw ValidationError("trace '" + trace.id + "': zero duration");
  const auto& s = trace.samples;
  auto width = [&](std::size_t k) {
    const double end = k + 1 < s.size() ? s[k + 1].time : trace.duration;
    return end - s[k].time;
  };
  double mean = 0.0;
  for (std::size_t k = 0; k < s.size(); ++k) mean += s[k].bandwidth * width(k);
  mean /= trace.duration;
  double var = 0.0;
  for (std::size_t k = 0; k < s.size(); ++k) {
    const double d = s[k].bandwidth - mean;
    var += d * d * width(k);
  }
  var /= trace.duration;
  TraceStats out;
  out.mean_bw = mean;
  out.std_bw = std::sqrt(var);
  out.cv = mean > 0.0 ? out.std_bw / mean : 0.0;
  return out;
}

enum class TrafficClass { Fluctuating, Low, Normal, High, VeryHigh };

inline constexpr std::array<TrafficClass, 5> kAllClasses{TrafficClass::Fluctuating, TrafficClass::Low,
                                                         TrafficClass::Normal, TrafficClass::High,
                                                         TrafficClass::VeryHigh};

inline std::string_view to_string(TrafficClass c) {
  switch (c) {
    case TrafficClass::Fluctuating: return "fluctuating";
    case TrafficClass::Low: return "low";
    case TrafficClass::Normal: return "normal";
    case TrafficClass::High: return "high";
    case TrafficClass::VeryHigh: return "veryhigh";
  }
  return "unknown";
}

inline TrafficClass parse_traffic_class(std::string_view name) {
  for (auto c : kAllClasses) {
    if (to_string(c) == name) return c;
  }
  throw std::invalid_argument("unknown traffic class: " + std::string(name));
}

/// Band limits (lower exclusive, upper inclusive) of the non-fluctuating classes.
struct MeanBand {
  double lower;
  double upper;
};

inline MeanBand mean_band(TrafficClass c) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  switch (c) {
    case TrafficClass::Low: return {3.0, 10.0};
    case TrafficClass::Normal: return {10.0, 25.0};
    case TrafficClass::High: return {25.0, 50.0};
    case TrafficClass::VeryHigh: return {50.0, inf};
    case TrafficClass::Fluctuating: return {3.0, inf};
  }
  return {3.0, inf};
}

inline TrafficClass classify(const TraceStats& s) {
  if (!(s.mean_bw > kMinMeanMbps)) throw std::invalid_argument("classify: mean bandwidth must exceed 3 Mbps");
  if (s.cv >= kFluctuatingCv) return TrafficClass::Fluctuating;
  if (s.mean_bw <= 10.0) return TrafficClass::Low;
  if (s.mean_bw <= 25.0) return TrafficClass::Normal;
  if (s.mean_bw <= 50.0) return TrafficClass::High;
  return TrafficClass::VeryHigh;
}

// ---------------------------------------------------------------------------
// CSV files: header `timestamp_s,bandwidth_mbps`.

inline std::vector<TraceSample> read_samples_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open trace file: " + path.string());
  std::string line;
  if (!std::getline(in, line) || trim(line) != "timestamp_s,bandwidth_mbps") {
    throw ParseError(path.string() + ": expected header 'timestamp_s,bandwidth_mbps'");
  }
  std::vector<TraceSample> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cols = split_view(line, ',');
    TraceSample s;
    if (cols.size() != 2 || !parse_double(cols[0], s.time) || !parse_double(cols[1], s.bandwidth)) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": malformed row");
    }
    if (!std::isfinite(s.time) || (!rows.empty() && !(s.time > rows.back().time))) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": timestamps must be strictly increasing");
    }
    rows.push_back(s);
  }
  return rows;
}

/// Reads one trace file; the duration extends the last sample by the last
/// sampling interval (1 s for single-sample files) unless given.
inline Trace read_trace_csv(const std::filesystem::path& path, std::string id = {}, double duration = -1.0) {
  auto rows = read_samples_csv(path);
  if (rows.empty()) throw ParseError(path.string() + ": no samples");
  const double t0 = rows.front().time;
  for (auto& r : rows) r.time -= t0;
  Trace t;
  t.id = id.empty() ? path.stem().string() : std::move(id);
  if (duration < 0.0) {
    const double step = rows.size() > 1 ? rows.back().time - rows[rows.size() - 2].time : 1.0;
    duration = rows.back().time + step;
  }
  t.duration = duration;
  t.samples = std::move(rows);
  t.validate();
  return t;
}

inline void write_trace_csv(const Trace& trace, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "timestamp_s,bandwidth_mbps\n";
  for (const auto& s : trace.samples) out << format_exact(s.time) << ',' << format_exact(s.bandwidth) << '\n';
}

namespace detail {

inline std::vector<std::filesystem::path> expand_sources(const std::vector<std::filesystem::path>& paths) {
  std::vector<std::filesystem::path> files;
  for (const auto& p : paths) {
    if (std::filesystem::is_directory(p)) {
      std::vector<std::filesystem::path> inner;
      for (const auto& e : std::filesystem::directory_iterator(p)) {
        if (e.is_regular_file() && e.path().extension() == ".csv") inner.push_back(e.path());
      }
      std::sort(inner.begin(), inner.end());
      files.insert(files.end(), inner.begin(), inner.end());
    } else {
      files.push_back(p);
    }
  }
  return files;
}

}  // namespace detail

/// Cuts each source into consecutive traces of `segment_len` seconds, scales
/// the bandwidth and keeps the traces that are valid with mean above 3 Mbps.
inline std::vector<Trace> ingest(const std::vector<std::filesystem::path>& paths, double scale = 3.0,
                                 double segment_len = kDefaultTraceSeconds) {
  if (!(scale > 0.0)) throw std::invalid_argument("ingest: scale must be positive");
  if (!(segment_len > 0.0)) throw std::invalid_argument("ingest: segment length must be positive");
  std::vector<Trace> out;
  for (const auto& file : detail::expand_sources(paths)) {
    const auto rows = read_samples_csv(file);
    if (rows.empty()) continue;
    const double t0 = rows.front().time;
    const double last_step = rows.size() > 1 ? rows.back().time - rows[rows.size() - 2].time : 1.0;
    const double span = rows.back().time + last_step - t0;
    const auto windows = static_cast<std::size_t>(std::floor(span / segment_len + 1e-9));
    std::size_t cursor = 0;
    for (std::size_t w = 0; w < windows; ++w) {
      const double start = t0 + static_cast<double>(w) * segment_len;
      const double end = start + segment_len;
      while (cursor + 1 < rows.size() && rows[cursor + 1].time <= start) ++cursor;
      Trace t;
      t.id = file.stem().string() + "_" + std::to_string(w);
      t.duration = segment_len;
      t.samples.push_back({0.0, rows[cursor].bandwidth * scale});
      for (std::size_t k = cursor + 1; k < rows.size() && rows[k].time < end; ++k) {
        t.samples.push_back({rows[k].time - start, rows[k].bandwidth * scale});
      }
      bool valid = true;
      for (const auto& s : t.samples) valid = valid && std::isfinite(s.bandwidth) && s.bandwidth >= 0.0;
      if (!valid) continue;
      if (!(stats(t).mean_bw > kMinMeanMbps)) continue;
      out.push_back(std::move(t));
    }
  }
  if (out.empty()) throw ValidationError("ingest: no valid traces");
  return out;
}

// ---------------------------------------------------------------------------
// Datasets.

enum class Split { Unassigned, Train, Validation, Test };

inline std::string_view to_string(Split s) {
  switch (s) {
    case Split::Unassigned: return "unassigned";
    case Split::Train: return "train";
    case Split::Validation: return "validation";
    case Split::Test: return "test";
  }
  return "unassigned";
}

inline Split parse_split(std::string_view name) {
  for (auto s : {Split::Unassigned, Split::Train, Split::Validation, Split::Test}) {
    if (to_string(s) == name) return s;
  }
  throw std::invalid_argument("unknown split: " + std::string(name));
}

struct DatasetEntry {
  Trace trace;
  TraceStats stats;
  TrafficClass cls = TrafficClass::Low;
  Split split = Split::Unassigned;
};

struct Dataset {
  std::vector<DatasetEntry> entries;
  std::uint64_t seed = 0;

  std::vector<const DatasetEntry*> select(Split split, const std::vector<TrafficClass>& classes) const {
    std::vector<const DatasetEntry*> out;
    for (const auto& e : entries) {
      const bool class_ok = classes.empty() || std::find(classes.begin(), classes.end(), e.cls) != classes.end();
      if (class_ok && e.split == split) out.push_back(&e);
    }
    return out;
  }
};

inline DatasetEntry make_entry(Trace trace) {
  DatasetEntry e;
  e.stats = stats(trace);
  e.cls = classify(e.stats);
  e.trace = std::move(trace);
  return e;
}

/// Groups traces by traffic class; traces with mean <= 3 Mbps are skipped.
inline std::map<TrafficClass, std::vector<DatasetEntry>> group_by_class(std::vector<Trace> traces) {
  std::map<TrafficClass, std::vector<DatasetEntry>> out;
  for (auto& t : traces) {
    if (!(stats(t).mean_bw > kMinMeanMbps)) continue;
    auto e = make_entry(std::move(t));
    out[e.cls].push_back(std::move(e));
  }
  return out;
}

/// Draws up to n_per_class traces per class so that the mean-bandwidth
/// histogram (1 Mbps bins) is as flat as the input allows: bins are filled
/// round-robin, and a final partial round picks its bins at random.
inline Dataset undersample(const std::map<TrafficClass, std::vector<DatasetEntry>>& by_class, std::size_t n_per_class,
                           std::uint64_t seed) {
  Dataset ds;
  ds.seed = seed;
  for (const auto& [cls, entries] : by_class) {
    if (entries.empty()) throw ValidationError("undersample: class '" + std::string(to_string(cls)) + "' is empty");
    Rng rng(mix_seed(seed, to_string(cls)));
    std::map<std::int64_t, std::vector<std::size_t>> bins;
    for (std::size_t i = 0; i < entries.size(); ++i) {
      bins[static_cast<std::int64_t>(std::floor(entries[i].stats.mean_bw))].push_back(i);
    }
    std::vector<std::vector<std::size_t>> pools;
    for (auto& [_, members] : bins) {
      shuffle(std::span(members), rng);
      pools.push_back(std::move(members));
    }
    std::vector<std::size_t> taken(pools.size(), 0);
    std::vector<std::size_t> chosen;
    std::size_t remaining = std::min(n_per_class, entries.size());
    while (remaining > 0) {
      std::vector<std::size_t> active;
      for (std::size_t b = 0; b < pools.size(); ++b) {
        if (taken[b] < pools[b].size()) active.push_back(b);
      }
      if (remaining < active.size()) {
        shuffle(std::span(active), rng);
        active.resize(remaining);
      }
      for (auto b : active) chosen.push_back(pools[b][taken[b]++]);
      remaining -= active.size();
    }
    std::sort(chosen.begin(), chosen.end());
    for (auto i : chosen) ds.entries.push_back(entries[i]);
  }
  return ds;
}

/// Per-class 90/5/5 split. Classes with at least 3 traces get at least one
/// validation and one test trace.
inline Dataset split(Dataset ds, std::uint64_t seed) {
  std::map<TrafficClass, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < ds.entries.size(); ++i) by_class[ds.entries[i].cls].push_back(i);
  for (auto& [cls, idx] : by_class) {
    Rng rng(mix_seed(seed, std::string("split:") + std::string(to_string(cls))));
    shuffle(std::span(idx), rng);
    const auto n = idx.size();
    std::size_t n_val = static_cast<std::size_t>(std::lround(0.05 * static_cast<double>(n)));
    std::size_t n_test = n_val;
    if (n >= 3) {
      n_val = std::max<std::size_t>(n_val, 1);
      n_test = std::max<std::size_t>(n_test, 1);
    } else {
      n_val = n_test = 0;
    }
    for (std::size_t k = 0; k < n; ++k) {
      auto& e = ds.entries[idx[k]];
      e.split = k < n_val ? Split::Validation : (k < n_val + n_test ? Split::Test : Split::Train);
    }
  }
  ds.seed = seed;
  return ds;
}

// ---------------------------------------------------------------------------
// Synthetic traces.

namespace detail {

inline Trace synth_one(TrafficClass cls, Rng& rng, std::string id, double duration) {
  Trace t;
  t.id = std::move(id);
  t.duration = duration;
  const auto n = static_cast<std::size_t>(std::ceil(duration));
  if (cls == TrafficClass::Fluctuating) {
    // Two-level process with ~12 s mean dwell time and 5% jitter.
    const double low = uniform_real(rng, 1.5, 15.0);
    const double high = low * uniform_real(rng, 3.0, 8.0);
    bool up = uniform01(rng) < 0.5;
    for (std::size_t k = 0; k < n; ++k) {
      if (k > 0 && uniform01(rng) < 0.08) up = !up;
      const double level = up ? high : low;
      t.samples.push_back({static_cast<double>(k), level * uniform_real(rng, 0.95, 1.05)});
    }
    return t;
  }
  const auto band = mean_band(cls);
  const double upper = std::isfinite(band.upper) ? band.upper : 100.0;
  const double target = upper - (upper - band.lower) * uniform01(rng);  // (lower, upper]
  constexpr double amplitude = 0.2;
  for (std::size_t k = 0; k < n; ++k) {
    t.samples.push_back({static_cast<double>(k), target * (1.0 + amplitude * uniform_real(rng, -1.0, 1.0))});
  }
  const double factor = target / stats(t).mean_bw;
  for (auto& s : t.samples) s.bandwidth *= factor;
  return t;
}

}  // namespace detail

/// Generates `count` traces that classify as `cls`; each candidate is checked
/// with classify() and redrawn on a miss.
inline std::vector<Trace> synth(TrafficClass cls, std::size_t count, std::uint64_t seed,
                                double duration = kDefaultTraceSeconds) {
  std::vector<Trace> out;
  out.reserve(count);
  Rng rng(mix_seed(seed, std::string("synth:") + std::string(to_string(cls))));
  for (std::size_t i = 0; i < count; ++i) {
    const std::string id = "synth-" + std::string(to_string(cls)) + "-" + std::to_string(seed) + "-" + std::to_string(i);
    for (int attempt = 0;; ++attempt) {
      if (attempt == 10000) throw std::logic_error("synth: could not generate a trace for the requested class");
      auto t = detail::synth_one(cls, rng, id, duration);
      const auto s = stats(t);
      if (s.mean_bw > kMinMeanMbps && classify(s) == cls) {
        out.push_back(std::move(t));
        break;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Manifest: CSV `id,class,split,mean_mbps,std_mbps,cv,duration_s,path`, paths relative to
// the manifest's directory.

inline void write_manifest(const Dataset& ds, const std::filesystem::path& manifest_path,
                           const std::filesystem::path& trace_dir_name = "traces") {
  const auto root = manifest_path.parent_path();
  std::filesystem::create_directories(root / trace_dir_name);
  std::ofstream out(manifest_path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + manifest_path.string());
  out << "id,class,split,mean_mbps,std_mbps,cv,duration_s,path\n";
  for (const auto& e : ds.entries) {
    const auto rel = trace_dir_name / (e.trace.id + ".csv");
    write_trace_csv(e.trace, root / rel);
    out << e.trace.id << ',' << to_string(e.cls) << ',' << to_string(e.split) << ',' << format_number(e.stats.mean_bw)
        << ',' << format_number(e.stats.std_bw) << ',' << format_number(e.stats.cv) << ',' << format_exact(e.trace.duration)
        << ',' << rel.generic_string()
        << '\n';
  }
}

inline Dataset read_manifest(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw ParseError("cannot open manifest: " + manifest_path.string());
  std::string line;
  if (!std::getline(in, line) || trim(line) != "id,class,split,mean_mbps,std_mbps,cv,duration_s,path") {
    throw ParseError(manifest_path.string() + ": unexpected manifest header");
  }
  Dataset ds;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto cols = split_view(line, ',');
    double duration = 0.0;
    if (cols.size() != 8 || !parse_double(cols[6], duration)) {
      throw ParseError(manifest_path.string() + ": malformed row");
    }
    auto trace = read_trace_csv(manifest_path.parent_path() / std::string(trim(cols[7])), std::string(cols[0]), duration);
    DatasetEntry e;
    e.stats = stats(trace);
    e.cls = parse_traffic_class(trim(cols[1]));
    e.split = parse_split(trim(cols[2]));
    e.trace = std::move(trace);
    ds.entries.push_back(std::move(e));
  }
  return ds;
}

}  // namespace fairstream
