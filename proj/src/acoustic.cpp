#include "mmpoe/acoustic.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <optional>

#include "mmpoe/error.hpp"

namespace mmpoe {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t u16_at(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

std::uint32_t u32_at(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) | (static_cast<std::uint32_t>(b[at + 1]) << 8) |
         (static_cast<std::uint32_t>(b[at + 2]) << 16) |
         (static_cast<std::uint32_t>(b[at + 3]) << 24);
}

bool tag_is(std::span<const std::uint8_t> b, std::size_t at, const char* tag) {
  return std::memcmp(b.data() + at, tag, 4) == 0;
}

void put_u16(std::vector<char>& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>(v >> 8));
}

void put_u32(std::vector<char>& out, std::uint32_t v) {
  for (int s = 0; s < 32; s += 8) out.push_back(static_cast<char>((v >> s) & 0xFF));
}

// Vertex offset of the parabola through (-1, a), (0, b), (1, c).
double parabolic_offset(double a, double b, double c) {
  const double denom = a - 2.0 * b + c;
  if (denom >= 0.0) return 0.0;
  return std::clamp(0.5 * (a - c) / denom, -0.5, 0.5);
}

double mean_of(std::span<const double> v) {
  double total = 0.0;
  for (double x : v) total += x;
  return v.empty() ? 0.0 : total / static_cast<double>(v.size());
}

double std_of(std::span<const double> v) {
  if (v.empty()) return 0.0;
  const double m = mean_of(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(v.size()));
}

F0Frame analyze_frame(std::span<const double> raw, int sample_rate, std::size_t min_lag,
                      std::size_t max_lag, const AcousticParams& params) {
  F0Frame frame;
  const std::size_t n = raw.size();
  double mean = 0.0;
  double power = 0.0;
  for (double x : raw) {
    mean += x;
    power += x * x;
  }
  mean /= static_cast<double>(n);
  power /= static_cast<double>(n);
  const double floor_power = std::pow(10.0, params.energy_floor_db / 10.0);
  frame.energy_db = 10.0 * std::log10(std::max(power, floor_power));

  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = raw[i] - mean;

  // Normalized autocorrelation over [min_lag - 1, max_lag + 1].
  const std::size_t lo = min_lag - 1;
  const std::size_t hi = max_lag + 1;
  std::vector<double> r(hi + 1, 0.0);
  for (std::size_t lag = lo; lag <= hi; ++lag) {
    double cross = 0.0, e0 = 0.0, e1 = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) {
      cross += x[i] * x[i + lag];
      e0 += x[i] * x[i];
      e1 += x[i + lag] * x[i + lag];
    }
    const double denom = std::sqrt(e0 * e1);
    r[lag] = denom > 0.0 ? cross / denom : 0.0;
  }

  std::vector<std::size_t> peaks;
  double best = 0.0;
  for (std::size_t lag = min_lag; lag <= max_lag; ++lag) {
    if (r[lag] > r[lag - 1] && r[lag] >= r[lag + 1] && r[lag] > 0.0) {
      peaks.push_back(lag);
      best = std::max(best, r[lag]);
    }
  }
  if (peaks.empty()) return frame;
  std::size_t chosen = peaks.front();
  for (std::size_t lag : peaks) {
    if (r[lag] >= 0.9 * best) {
      chosen = lag;
      break;
    }
  }
  frame.peak = r[chosen];
  if (frame.peak < params.voicing_threshold) return frame;
  const double offset = parabolic_offset(r[chosen - 1], r[chosen], r[chosen + 1]);
  const double f0 = static_cast<double>(sample_rate) / (static_cast<double>(chosen) + offset);
  if (f0 < params.f0_min || f0 > params.f0_max) return frame;
  frame.voiced = true;
  frame.f0 = f0;
  return frame;
}

}  // namespace

AudioClip decode_wav(std::span<const std::uint8_t> b) {
  if (b.size() < 12 || !tag_is(b, 0, "RIFF") || !tag_is(b, 8, "WAVE")) {
    throw AudioError("not a RIFF/WAVE file");
  }
  std::optional<std::uint16_t> format, channels, bits;
  std::uint32_t rate = 0;
  std::optional<std::span<const std::uint8_t>> data;
  std::size_t pos = 12;
  while (pos + 8 <= b.size()) {
    const std::uint32_t size = u32_at(b, pos + 4);
    const std::size_t body = pos + 8;
    if (tag_is(b, pos, "fmt ")) {
      if (size < 16 || body + size > b.size()) throw AudioError("truncated fmt chunk");
      format = u16_at(b, body);
      channels = u16_at(b, body + 2);
      rate = u32_at(b, body + 4);
      bits = u16_at(b, body + 14);
      if (*format == kFormatExtensible) {
        if (size < 40) throw AudioError("truncated WAVE_FORMAT_EXTENSIBLE header");
        format = u16_at(b, body + 24);  // first two bytes of the subformat GUID
      }
    } else if (tag_is(b, pos, "data")) {
      if (body + size > b.size()) throw AudioError("truncated file: data chunk exceeds file size");
      data = b.subspan(body, size);
      break;
    }
    if (body + size > b.size()) throw AudioError("truncated file: chunk exceeds file size");
    pos = body + size + (size & 1u);
  }
  if (!format) throw AudioError("missing fmt chunk");
  if (*format != kFormatPcm) {
    throw AudioError("unsupported codec (format tag " + std::to_string(*format) +
                     "); only PCM is supported");
  }
  if (*bits != 16) {
    throw AudioError("unsupported bit depth " + std::to_string(*bits) + "; only 16-bit PCM");
  }
  if (*channels != 1 && *channels != 2) {
    throw AudioError("unsupported channel count " + std::to_string(*channels));
  }
  if (rate == 0) throw AudioError("sample rate is zero");
  if (!data) throw AudioError("truncated file: missing data chunk");

  const std::size_t frame_bytes = 2u * *channels;
  if (data->size() % frame_bytes != 0) {
    throw AudioError("truncated file: partial sample frame in data chunk");
  }
  AudioClip clip;
  clip.sample_rate = static_cast<int>(rate);
  const std::size_t frames = data->size() / frame_bytes;
  clip.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < *channels; ++c) {
      const auto raw = static_cast<std::int16_t>(u16_at(*data, i * frame_bytes + 2 * c));
      acc += static_cast<double>(raw) / 32768.0;
    }
    clip.samples[i] = acc / static_cast<double>(*channels);
  }
  return clip;
}

AudioClip read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw AudioError("cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  try {
    return decode_wav(bytes);
  } catch (const AudioError& e) {
    throw AudioError(path.string() + ": " + e.what());
  }
}

void write_wav(const std::filesystem::path& path, const AudioClip& clip) {
  const auto data_bytes = static_cast<std::uint32_t>(clip.samples.size() * 2);
  std::vector<char> out;
  out.reserve(44 + data_bytes);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put_u32(out, 36 + data_bytes);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put_u32(out, 16);
  put_u16(out, kFormatPcm);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put_u32(out, data_bytes);
  for (double x : clip.samples) {
    const double scaled = std::clamp(std::round(x * 32768.0), -32768.0, 32767.0);
    put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(scaled)));
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw Error("cannot open " + path.string() + " for writing");
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw Error("failed writing " + path.string());
}

std::size_t AcousticParams::frame_length(int sample_rate) const {
  return static_cast<std::size_t>(std::lround(frame_ms * 1e-3 * sample_rate));
}

std::size_t AcousticParams::hop_length(int sample_rate) const {
  return static_cast<std::size_t>(std::lround(hop_ms * 1e-3 * sample_rate));
}

void AcousticParams::validate() const {
  if (!(frame_ms > 0.0) || !(hop_ms > 0.0)) throw ConfigError("frame and hop must be positive");
  if (!(f0_min > 0.0) || !(f0_max > f0_min)) throw ConfigError("need 0 < f0_min < f0_max");
  if (!(voicing_threshold > 0.0 && voicing_threshold < 1.0)) {
    throw ConfigError("voicing_threshold must lie in (0, 1)");
  }
  if (!(pause_min_ms >= 0.0)) throw ConfigError("pause_min_ms must be non-negative");
  if (!(peak_fraction > 0.0 && peak_fraction <= 1.0)) {
    throw ConfigError("peak_fraction must lie in (0, 1]");
  }
}

F0Contour estimate_f0_contour(const AudioClip& clip, const AcousticParams& params, Exec exec) {
  params.validate();
  if (clip.sample_rate < 8000) {
    throw AudioError("sample rate " + std::to_string(clip.sample_rate) + " Hz is below 8000 Hz");
  }
  F0Contour contour;
  contour.sample_rate = clip.sample_rate;
  contour.frame_length = params.frame_length(clip.sample_rate);
  contour.hop_length = std::max<std::size_t>(1, params.hop_length(clip.sample_rate));
  if (clip.samples.size() < contour.frame_length) {
    throw AudioError("clip shorter than one analysis frame");
  }
  const auto min_lag = static_cast<std::size_t>(
      std::max(2.0, std::floor(clip.sample_rate / params.f0_max)));
  const auto max_lag =
      static_cast<std::size_t>(std::ceil(clip.sample_rate / params.f0_min));
  if (max_lag + 2 > contour.frame_length) {
    throw ConfigError("frame too short for f0_min: need more than " +
                      std::to_string(max_lag + 2) + " samples");
  }
  const std::size_t count =
      (clip.samples.size() - contour.frame_length) / contour.hop_length + 1;
  contour.frames.resize(count);
  for_each_index(count, exec, [&](std::size_t i) {
    const std::span<const double> window(clip.samples.data() + i * contour.hop_length,
                                         contour.frame_length);
    contour.frames[i] = analyze_frame(window, clip.sample_rate, min_lag, max_lag, params);
  });
  return contour;
}

std::vector<PeriodTrack> extract_period_tracks(const AudioClip& clip, const F0Contour& contour,
                                               const AcousticParams& params) {
  std::vector<PeriodTrack> tracks;
  const auto& frames = contour.frames;
  const double fs = contour.sample_rate;
  const double min_spacing = fs / params.f0_max;
  const double max_period = 1.0 / params.f0_min;
  const auto& x = clip.samples;

  std::size_t f = 0;
  while (f < frames.size()) {
    if (!frames[f].voiced) {
      ++f;
      continue;
    }
    std::size_t g = f;
    while (g + 1 < frames.size() && frames[g + 1].voiced) ++g;
    const std::size_t begin = f * contour.hop_length;
    const std::size_t end = std::min(x.size(), g * contour.hop_length + contour.frame_length);
    f = g + 1;
    if (end < begin + 3) continue;

    double seg_max = 0.0;
    for (std::size_t i = begin; i < end; ++i) seg_max = std::max(seg_max, x[i]);
    if (!(seg_max > 0.0)) continue;
    const double level = params.peak_fraction * seg_max;

    std::vector<std::size_t> marks;
    for (std::size_t i = std::max<std::size_t>(begin, 1); i + 1 < end; ++i) {
      if (!(x[i] > x[i - 1] && x[i] >= x[i + 1] && x[i] >= level)) continue;
      if (!marks.empty() && static_cast<double>(i - marks.back()) < min_spacing) {
        if (x[i] > x[marks.back()]) marks.back() = i;
        continue;
      }
      marks.push_back(i);
    }

    PeriodTrack track;
    double prev_pos = 0.0;
    double prev_amp = 0.0;
    for (std::size_t m = 0; m < marks.size(); ++m) {
      const std::size_t i = marks[m];
      const double a = x[i - 1], b = x[i], c = x[i + 1];
      const double offset = parabolic_offset(a, b, c);
      const double pos = static_cast<double>(i) + offset;
      const double amp = b - 0.25 * (a - c) * offset;
      if (m > 0) {
        const double period = (pos - prev_pos) / fs;
        if (period > max_period) {
          if (!track.periods.empty()) tracks.push_back(std::move(track));
          track = PeriodTrack{};
        } else {
          if (track.amplitudes.empty()) track.amplitudes.push_back(prev_amp);
          track.periods.push_back(period);
          track.amplitudes.push_back(amp);
        }
      }
      prev_pos = pos;
      prev_amp = amp;
    }
    if (!track.periods.empty()) tracks.push_back(std::move(track));
  }
  return tracks;
}

PhonationMetrics phonation_metrics(std::span<const PeriodTrack> tracks) {
  PhonationMetrics out;
  double period_diff = 0.0, period_sum = 0.0, amp_diff = 0.0, amp_sum = 0.0;
  std::size_t period_pairs = 0, period_count = 0, amp_pairs = 0, amp_count = 0;
  for (const auto& t : tracks) {
    if (t.periods.size() < 2) continue;
    for (std::size_t i = 0; i < t.periods.size(); ++i) {
      period_sum += t.periods[i];
      ++period_count;
      if (i > 0) {
        period_diff += std::abs(t.periods[i] - t.periods[i - 1]);
        ++period_pairs;
      }
    }
    for (std::size_t i = 0; i < t.amplitudes.size(); ++i) {
      amp_sum += t.amplitudes[i];
      ++amp_count;
      if (i > 0) {
        amp_diff += std::abs(t.amplitudes[i] - t.amplitudes[i - 1]);
        ++amp_pairs;
      }
    }
  }
  if (period_pairs == 0 || period_sum <= 0.0) return out;
  out.sufficient = true;
  out.jitter_percent = (period_diff / static_cast<double>(period_pairs)) /
                       (period_sum / static_cast<double>(period_count)) * 100.0;
  if (amp_pairs > 0 && amp_sum > 0.0) {
    out.shimmer_percent = (amp_diff / static_cast<double>(amp_pairs)) /
                          (amp_sum / static_cast<double>(amp_count)) * 100.0;
  }
  return out;
}

ProsodyMetrics prosody_metrics(const F0Contour& contour, double duration,
                               const AcousticParams& params) {
  ProsodyMetrics out;
  const auto& frames = contour.frames;
  std::vector<double> energy;
  energy.reserve(frames.size());
  for (const auto& f : frames) energy.push_back(f.energy_db);
  out.mean_log_energy = mean_of(energy);
  out.log_energy_std = std_of(energy);

  const double hop_s = static_cast<double>(contour.hop_length) / contour.sample_rate;
  const double frame_s = static_cast<double>(contour.frame_length) / contour.sample_rate;
  const double pause_min_s = params.pause_min_ms * 1e-3;
  std::size_t run = 0;
  auto close_run = [&] {
    if (run == 0) return;
    const double span = static_cast<double>(run - 1) * hop_s + frame_s;
    if (span + 1e-9 >= pause_min_s) out.pause_durations.push_back(span);
    run = 0;
  };
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (frames[i].voiced && (i == 0 || !frames[i - 1].voiced)) ++out.voiced_segments;
    if (!frames[i].voiced && frames[i].energy_db < params.silence_db) {
      ++run;
    } else {
      close_run();
    }
  }
  close_run();
  out.pause_count = out.pause_durations.size();
  out.mean_pause = mean_of(out.pause_durations);
  if (duration > 0.0) {
    out.speech_rate = static_cast<double>(out.voiced_segments) / duration;
    out.pause_rate = static_cast<double>(out.pause_count) / duration;
  }
  return out;
}

AcousticVector aggregate_acoustic_vector(const F0Contour& contour,
                                         const PhonationMetrics& phonation,
                                         const ProsodyMetrics& prosody) {
  AcousticVector out;
  std::vector<double> f0;
  for (const auto& f : contour.frames) {
    if (f.voiced) f0.push_back(f.f0);
  }
  out.unvoiced = f0.empty();
  out.phonation_insufficient = !phonation.sufficient;
  if (out.unvoiced) out.warnings.emplace_back("no voiced frames: F0 statistics set to 0");
  if (out.phonation_insufficient) {
    out.warnings.emplace_back("fewer than two consecutive pitch periods: jitter/shimmer set to 0");
  }
  const double voiced_fraction =
      contour.frames.empty()
          ? 0.0
          : static_cast<double>(f0.size()) / static_cast<double>(contour.frames.size());
  out.values = {mean_of(f0),
                std_of(f0),
                phonation.jitter_percent,
                phonation.shimmer_percent,
                voiced_fraction,
                prosody.mean_log_energy,
                prosody.log_energy_std,
                prosody.speech_rate,
                prosody.mean_pause,
                prosody.pause_rate};
  return out;
}

AcousticVector extract_acoustic_vector(const AudioClip& clip, const AcousticParams& params,
                                       Exec exec) {
  const F0Contour contour = estimate_f0_contour(clip, params, exec);
  const auto tracks = extract_period_tracks(clip, contour, params);
  const auto phonation = phonation_metrics(tracks);
  const auto prosody = prosody_metrics(contour, clip.duration(), params);
  return aggregate_acoustic_vector(contour, phonation, prosody);
}

}  // namespace mmpoe
