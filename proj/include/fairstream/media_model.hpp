#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fairstream/default_profiles.hpp"
#include "fairstream/errors.hpp"

namespace fairstream {

inline constexpr std::size_t kLadderSize = 7;

using Ladder = std::array<double, kLadderSize>;

/// A client type: its bitrate ladder in Mbps and the normalized perceptual
/// quality reached at each ladder point.
struct ClientProfile {
  std::string name;
  Ladder bitrates{};
  Ladder qualities{};

  double min_bitrate() const { return bitrates.front(); }
  double max_bitrate() const { return bitrates.back(); }
  double min_quality() const { return qualities.front(); }
};

using ProfileSet = std::vector<ClientProfile>;

/// Throws ValidationError naming the profile and the violated invariant.
inline void validate_profile(const ClientProfile& p) {
  auto fail = [&](const std::string& what) {
    throw ValidationError("profile '" + p.name + "': " + what);
  };
  for (std::size_t k = 0; k < kLadderSize; ++k) {
    if (!std::isfinite(p.bitrates[k]) || p.bitrates[k] <= 0.0) fail("bitrates must be positive and finite");
    if (!std::isfinite(p.qualities[k])) fail("qualities must be finite");
    if (k > 0 && !(p.bitrates[k] > p.bitrates[k - 1])) fail("bitrates must be strictly increasing");
    if (k > 0 && p.qualities[k] < p.qualities[k - 1]) fail("qualities must be non-decreasing");
  }
  if (p.qualities.front() < 0.0) fail("first quality must be >= 0");
  if (p.qualities.back() != 1.0) fail("last quality must be exactly 1.0");
}

inline double quality_at(const ClientProfile& p, std::size_t index) {
  if (index >= kLadderSize) throw std::out_of_range("ladder index out of range");
  return p.qualities[index];
}

/// Piecewise-linear quality over the ladder; exact at ladder points.
inline double interp_quality(const ClientProfile& p, double bitrate) {
  const auto& b = p.bitrates;
  if (!(bitrate >= b.front() && bitrate <= b.back())) {
    throw std::out_of_range("bitrate outside ladder range");
  }
  // First knot >= bitrate.
  const auto it = std::lower_bound(b.begin(), b.end(), bitrate);
  const auto k = static_cast<std::size_t>(it - b.begin());
  if (*it == bitrate) return p.qualities[k];
  const double w = (bitrate - b[k - 1]) / (b[k] - b[k - 1]);
  return p.qualities[k - 1] + w * (p.qualities[k] - p.qualities[k - 1]);
}

/// Inverse of interp_quality. On a flat quality segment the lowest bitrate
/// reaching the quality is returned.
inline double interp_bitrate(const ClientProfile& p, double quality) {
  const auto& q = p.qualities;
  if (!(quality >= q.front() && quality <= 1.0)) {
    throw std::out_of_range("quality outside ladder range");
  }
  const auto it = std::lower_bound(q.begin(), q.end(), quality);
  const auto k = static_cast<std::size_t>(it - q.begin());
  if (*it == quality) return p.bitrates[k];
  // q[k-1] < quality < q[k], so the segment is strictly increasing.
  const double w = (quality - q[k - 1]) / (q[k] - q[k - 1]);
  return p.bitrates[k - 1] + w * (p.bitrates[k] - p.bitrates[k - 1]);
}

/// Maps raw scores to [0, 1] as (v - floor) / (max(v) - floor).
inline std::vector<double> normalize_scores(const std::vector<double>& raw, double floor) {
  if (raw.empty()) throw std::invalid_argument("normalize_scores: empty input");
  const double top = *std::max_element(raw.begin(), raw.end());
  if (!(top > floor)) throw std::invalid_argument("normalize_scores: max(raw) must exceed floor");
  std::vector<double> out;
  out.reserve(raw.size());
  for (double v : raw) {
    out.push_back(v == top ? 1.0 : std::clamp((v - floor) / (top - floor), 0.0, 1.0));
  }
  return out;
}

inline double min_total_bitrate(const ProfileSet& set) {
  double sum = 0.0;
  for (const auto& p : set) sum += p.min_bitrate();
  return sum;
}

inline double max_total_bitrate(const ProfileSet& set) {
  double sum = 0.0;
  for (const auto& p : set) sum += p.max_bitrate();
  return sum;
}

/// Checks the cross-type anchor: a PCV client needs more than 7.5 Mbps to
/// match the Phone client's lowest setting. Returns a warning message, or an
/// empty string when the anchor holds or does not apply.
inline std::string check_quality_anchor(const ProfileSet& set) {
  const ClientProfile* phone = nullptr;
  const ClientProfile* pcv = nullptr;
  for (const auto& p : set) {
    if (p.name == "Phone") phone = &p;
    if (p.name == "PCV") pcv = &p;
  }
  if (!phone || !pcv) return {};
  constexpr double kPhoneRate = 0.5, kPcvRate = 7.5;
  if (kPhoneRate < phone->min_bitrate() || kPhoneRate > phone->max_bitrate()) return {};
  if (kPcvRate < pcv->min_bitrate() || kPcvRate > pcv->max_bitrate()) return {};
  const double phone_q = interp_quality(*phone, kPhoneRate);
  const double pcv_q = interp_quality(*pcv, kPcvRate);
  if (pcv_q > phone_q) {
    std::ostringstream os;
    os << "PCV quality at 7.5 Mbps (" << pcv_q << ") exceeds Phone quality at 0.5 Mbps (" << phone_q << ")";
    return os.str();
  }
  return {};
}

namespace detail {

inline Ladder read_ladder(const nlohmann::json& j, const char* key, const std::string& name) {
  if (!j.contains(key) || !j.at(key).is_array()) {
    throw ParseError("profile '" + name + "': missing array '" + key + "'");
  }
  const auto& arr = j.at(key);
  if (arr.size() != kLadderSize) {
    throw ValidationError("profile '" + name + "': '" + key + "' must have exactly 7 entries");
  }
  Ladder out{};
  for (std::size_t k = 0; k < kLadderSize; ++k) {
    if (!arr[k].is_number()) throw ParseError("profile '" + name + "': '" + key + "' must hold numbers");
    out[k] = arr[k].get<double>();
  }
  return out;
}

}  // namespace detail

/// Parses the profile document: {"profiles": [{"name", "bitrates_mbps", "qualities"}, ...]}.
/// Anchor warnings are appended to `warnings` when given.
inline ProfileSet parse_profiles(const std::string& text, std::vector<std::string>* warnings = nullptr) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("profile file: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("profiles") || !doc["profiles"].is_array()) {
    throw ParseError("profile file: expected an object with a 'profiles' array");
  }
  ProfileSet set;
  for (const auto& entry : doc["profiles"]) {
    if (!entry.is_object() || !entry.contains("name") || !entry["name"].is_string()) {
      throw ParseError("profile file: every profile needs a string 'name'");
    }
    ClientProfile p;
    p.name = entry["name"].get<std::string>();
    p.bitrates = detail::read_ladder(entry, "bitrates_mbps", p.name);
    p.qualities = detail::read_ladder(entry, "qualities", p.name);
    validate_profile(p);
    set.push_back(std::move(p));
  }
  if (set.empty()) throw ValidationError("profile file: no profiles");
  if (warnings) {
    if (auto w = check_quality_anchor(set); !w.empty()) warnings->push_back(std::move(w));
  }
  return set;
}

inline ProfileSet load_profiles(const std::filesystem::path& path, std::vector<std::string>* warnings = nullptr) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open profile file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_profiles(buf.str(), warnings);
}

/// Phone, HDTV, 4KTV and PCV from the shipped config/default_profiles.json.
inline const ProfileSet& default_profiles() {
  static const ProfileSet set = parse_profiles(detail::kDefaultProfilesJson);
  return set;
}

}  // namespace fairstream
