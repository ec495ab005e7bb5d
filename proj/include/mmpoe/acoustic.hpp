#pragma once

// Phonation and prosody features from PCM WAV audio, averaged into a
// fixed-size vector.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mmpoe/parallel.hpp"

namespace mmpoe {

struct AudioClip {
  std::vector<double> samples;  // mono, in [-1, 1]
  int sample_rate = 16000;

  double duration() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

/// RIFF/WAVE, 16-bit PCM, mono or stereo (stereo is averaged). Samples are
/// scaled by 1/32768. Throws AudioError on other codecs, bit depths, or
/// truncated data.
AudioClip read_wav(const std::filesystem::path& path);
AudioClip decode_wav(std::span<const std::uint8_t> bytes);

/// Writes 16-bit PCM mono, rounding x * 32768 and clamping to int16.
void write_wav(const std::filesystem::path& path, const AudioClip& clip);

struct AcousticParams {
  double frame_ms = 40.0;
  double hop_ms = 10.0;
  double f0_min = 60.0;
  double f0_max = 400.0;
  /// Minimum normalized autocorrelation peak for a voiced frame.
  double voicing_threshold = 0.3;
  /// Pauses are unvoiced, low-energy runs at least this long.
  double pause_min_ms = 150.0;
  /// Frame log-energy floor.
  double energy_floor_db = -80.0;
  /// Frames below this log-energy count as low-energy for pause detection.
  double silence_db = -40.0;
  /// Cycle peaks must reach this fraction of the segment's maximum sample.
  double peak_fraction = 0.5;

  std::size_t frame_length(int sample_rate) const;
  std::size_t hop_length(int sample_rate) const;
  void validate() const;
};

struct F0Frame {
  double f0 = 0.0;    // Hz, 0 when unvoiced
  bool voiced = false;
  double peak = 0.0;  // normalized autocorrelation at the chosen lag
  double energy_db = 0.0;
};

struct F0Contour {
  std::vector<F0Frame> frames;
  std::size_t frame_length = 0;
  std::size_t hop_length = 0;
  int sample_rate = 0;
};

/// Autocorrelation pitch per frame. Within [f0_min, f0_max] the chosen lag is
/// the shortest local maximum of the normalized autocorrelation reaching 90%
/// of the best one, refined by parabolic interpolation. Throws AudioError when
/// the clip is shorter than one frame or sampled below 8 kHz.
F0Contour estimate_f0_contour(const AudioClip& clip, const AcousticParams& params = {},
                              Exec exec = Exec::kParallel);

/// Consecutive glottal cycles inside one voiced stretch.
struct PeriodTrack {
  std::vector<double> periods;     // seconds
  std::vector<double> amplitudes;  // peak amplitude of each cycle
};

/// Marks cycle peaks inside voiced stretches of the contour. A track is split
/// where a gap exceeds 1 / f0_min.
std::vector<PeriodTrack> extract_period_tracks(const AudioClip& clip, const F0Contour& contour,
                                               const AcousticParams& params = {});

struct PhonationMetrics {
  double jitter_percent = 0.0;
  double shimmer_percent = 0.0;
  /// False when fewer than two consecutive periods were available; the
  /// metrics are then reported as 0.
  bool sufficient = false;
};

/// jitter = mean |T_i - T_{i-1}| / mean T * 100 over consecutive periods in
/// each track; shimmer is the same statistic on cycle amplitudes.
PhonationMetrics phonation_metrics(std::span<const PeriodTrack> tracks);

struct ProsodyMetrics {
  double mean_log_energy = 0.0;  // dB over all frames
  double log_energy_std = 0.0;
  std::size_t voiced_segments = 0;
  double speech_rate = 0.0;  // voiced segments per second
  std::size_t pause_count = 0;
  double mean_pause = 0.0;  // seconds, 0 without pauses
  double pause_rate = 0.0;  // pauses per second
  std::vector<double> pause_durations;
};

ProsodyMetrics prosody_metrics(const F0Contour& contour, double duration,
                               const AcousticParams& params = {});

inline constexpr std::size_t kAcousticDim = 10;

/// Order of AcousticVector::values.
inline constexpr std::array<std::string_view, kAcousticDim> kAcousticFeatureNames = {
    "f0_mean_hz",       "f0_std_hz",        "jitter_percent",  "shimmer_percent",
    "voiced_fraction",  "log_energy_mean_db", "log_energy_std_db", "speech_rate_per_s",
    "pause_mean_s",     "pause_rate_per_s"};

struct AcousticVector {
  std::array<double, kAcousticDim> values{};
  bool unvoiced = false;                // no voiced frame: F0 stats are 0
  bool phonation_insufficient = false;  // jitter/shimmer reported as 0
  std::vector<std::string> warnings;
};

AcousticVector aggregate_acoustic_vector(const F0Contour& contour,
                                         const PhonationMetrics& phonation,
                                         const ProsodyMetrics& prosody);

/// Full pipeline: contour, period tracks, phonation, prosody, aggregation.
AcousticVector extract_acoustic_vector(const AudioClip& clip, const AcousticParams& params = {},
                                       Exec exec = Exec::kParallel);

}  // namespace mmpoe
