#pragma once

#include <array>
#include <cstddef>

#include "fairstream/media_model.hpp"

namespace fairstream {

/// What a client sees after each completed segment (and once at stream start).
struct Observation {
  double qoe_last = 0.0;
  double v_ema = 0.0;
  double q_last = 0.0;
  double bitrate_last = 0.0;   // Mbps
  double dt_last = 0.0;        // download duration of the last segment [s]
  double t_init_last = 0.0;    // [s]
  double t_reb_last = 0.0;     // [s]
  double buffer = 0.0;         // [s]
  double segments_remaining = 0.0;
  Ladder bitrate_ladder{};
  Ladder quality_ladder{};

  static constexpr std::size_t kSize = 9 + 2 * kLadderSize;

  /// Flat layout: the nine scalars in declaration order, then both ladders.
  std::array<double, kSize> to_array() const {
    std::array<double, kSize> out{qoe_last, v_ema,  q_last, bitrate_last,      dt_last,
                                  t_init_last, t_reb_last, buffer, segments_remaining};
    for (std::size_t k = 0; k < kLadderSize; ++k) {
      out[9 + k] = bitrate_ladder[k];
      out[9 + kLadderSize + k] = quality_ladder[k];
    }
    return out;
  }

  static Observation initial(const ClientProfile& profile, std::size_t num_segments) {
    Observation o;
    o.segments_remaining = static_cast<double>(num_segments);
    o.bitrate_ladder = profile.bitrates;
    o.quality_ladder = profile.qualities;
    return o;
  }
};

}  // namespace fairstream
