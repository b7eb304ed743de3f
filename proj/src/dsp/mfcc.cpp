#include "kwscl/dsp/mfcc.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

#include "kwscl/common.hpp"

namespace kwscl::dsp {

std::size_t FrontendConfig::frame_length() const {
  return static_cast<std::size_t>(std::lround(frame_length_ms * sample_rate / 1000.0));
}

std::size_t FrontendConfig::hop_length() const {
  return static_cast<std::size_t>(std::lround(frame_shift_ms * sample_rate / 1000.0));
}

std::size_t FrontendConfig::fft_size() const {
  std::size_t n = 1;
  while (n < frame_length()) n <<= 1;
  return n;
}

std::size_t FrontendConfig::frame_count(std::size_t n_samples) const {
  if (n_samples < frame_length()) return 0;
  return 1 + (n_samples - frame_length()) / hop_length();
}

void FrontendConfig::validate() const {
  if (sample_rate <= 0) throw ConfigError("frontend: sample_rate must be positive");
  if (frame_length() == 0 || hop_length() == 0) {
    throw ConfigError("frontend: frame length and shift must be at least one sample");
  }
  if (n_mel == 0 || n_mfcc == 0) throw ConfigError("frontend: n_mel and n_mfcc must be positive");
  if (n_mfcc > n_mel) {
    throw ConfigError("frontend: n_mfcc (" + std::to_string(n_mfcc) + ") exceeds n_mel (" +
                      std::to_string(n_mel) + ")");
  }
  if (!(log_floor > 0.0)) throw ConfigError("frontend: log_floor must be positive");
  const double nyquist = sample_rate / 2.0;
  const double hi = f_max > 0.0 ? f_max : nyquist;
  if (f_min < 0.0 || hi > nyquist || f_min >= hi) throw ConfigError("frontend: invalid mel band edges");
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<std::vector<double>> mel_filterbank(const FrontendConfig& cfg) {
  cfg.validate();
  const std::size_t n_fft = cfg.fft_size();
  const std::size_t n_bins = n_fft / 2 + 1;
  const double hi = cfg.f_max > 0.0 ? cfg.f_max : cfg.sample_rate / 2.0;
  const double mel_lo = hz_to_mel(cfg.f_min);
  const double mel_hi = hz_to_mel(hi);

  std::vector<double> edges(cfg.n_mel + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) / static_cast<double>(cfg.n_mel + 1));
  }

  std::vector<std::vector<double>> bank(cfg.n_mel, std::vector<double>(n_bins, 0.0));
  for (std::size_t m = 0; m < cfg.n_mel; ++m) {
    const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
    for (std::size_t k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * cfg.sample_rate / static_cast<double>(n_fft);
      const double up = (f - left) / (center - left);
      const double down = (right - f) / (right - center);
      bank[m][k] = std::max(0.0, std::min(up, down));
    }
  }
  return bank;
}

namespace {

// FFTW planning is not thread-safe; execution on fresh arrays is.
fftw_plan r2c_plan(std::size_t n) {
  static std::mutex mu;
  static std::map<std::size_t, fftw_plan> plans;
  std::lock_guard lock(mu);
  auto it = plans.find(n);
  if (it != plans.end()) return it->second;
  double* in = fftw_alloc_real(n);
  fftw_complex* out = fftw_alloc_complex(n / 2 + 1);
  fftw_plan p = fftw_plan_dft_r2c_1d(static_cast<int>(n), in, out, FFTW_ESTIMATE | FFTW_UNALIGNED);
  fftw_free(in);
  fftw_free(out);
  plans.emplace(n, p);
  return p;
}

}  // namespace

std::vector<std::vector<double>> log_mel_energies(const AudioClip& clip, const FrontendConfig& cfg) {
  cfg.validate();
  if (clip.sample_rate != cfg.sample_rate) {
    throw Error("mfcc: clip sample rate " + std::to_string(clip.sample_rate) + " does not match config");
  }
  const std::size_t frame_len = cfg.frame_length();
  const std::size_t hop = cfg.hop_length();
  const std::size_t n_fft = cfg.fft_size();
  const std::size_t n_bins = n_fft / 2 + 1;
  if (clip.samples.size() < frame_len) {
    throw Error("mfcc: frame length " + std::to_string(frame_len) + " exceeds clip length " +
                std::to_string(clip.samples.size()));
  }

  std::vector<double> emphasized(clip.samples.size());
  emphasized[0] = clip.samples[0];
  for (std::size_t i = 1; i < emphasized.size(); ++i) {
    emphasized[i] = static_cast<double>(clip.samples[i]) - cfg.preemphasis * static_cast<double>(clip.samples[i - 1]);
  }

  std::vector<double> window(frame_len);
  for (std::size_t n = 0; n < frame_len; ++n) {
    window[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) / static_cast<double>(frame_len));
  }

  const auto bank = mel_filterbank(cfg);
  const fftw_plan plan = r2c_plan(n_fft);
  std::vector<double> frame(n_fft, 0.0);
  std::vector<fftw_complex> spectrum(n_bins);
  std::vector<double> power(n_bins);

  const std::size_t n_frames = cfg.frame_count(clip.samples.size());
  std::vector<std::vector<double>> out(n_frames, std::vector<double>(cfg.n_mel));
  for (std::size_t f = 0; f < n_frames; ++f) {
    const std::size_t start = f * hop;
    std::fill(frame.begin(), frame.end(), 0.0);
    for (std::size_t n = 0; n < frame_len; ++n) frame[n] = emphasized[start + n] * window[n];
    fftw_execute_dft_r2c(plan, frame.data(), spectrum.data());
    for (std::size_t k = 0; k < n_bins; ++k) {
      power[k] = spectrum[k][0] * spectrum[k][0] + spectrum[k][1] * spectrum[k][1];
    }
    for (std::size_t m = 0; m < cfg.n_mel; ++m) {
      double e = 0.0;
      for (std::size_t k = 0; k < n_bins; ++k) e += bank[m][k] * power[k];
      out[f][m] = std::log(std::max(e, cfg.log_floor));
    }
  }
  return out;
}

FeatureMatrix mfcc(const AudioClip& clip, const FrontendConfig& cfg) {
  const auto logmel = log_mel_energies(clip, cfg);
  const std::size_t n_mel = cfg.n_mel;

  std::vector<double> dct(cfg.n_mfcc * n_mel);
  for (std::size_t k = 0; k < cfg.n_mfcc; ++k) {
    const double scale = std::sqrt((k == 0 ? 1.0 : 2.0) / static_cast<double>(n_mel));
    for (std::size_t n = 0; n < n_mel; ++n) {
      dct[k * n_mel + n] =
          scale * std::cos(std::numbers::pi * static_cast<double>(k) * (2.0 * static_cast<double>(n) + 1.0) /
                           (2.0 * static_cast<double>(n_mel)));
    }
  }

  FeatureMatrix fm;
  fm.n_frames = logmel.size();
  fm.n_mfcc = cfg.n_mfcc;
  fm.frame_length_ms = cfg.frame_length_ms;
  fm.frame_shift_ms = cfg.frame_shift_ms;
  fm.data.resize(fm.n_frames * fm.n_mfcc);
  for (std::size_t f = 0; f < fm.n_frames; ++f) {
    for (std::size_t k = 0; k < cfg.n_mfcc; ++k) {
      double acc = 0.0;
      for (std::size_t n = 0; n < n_mel; ++n) acc += dct[k * n_mel + n] * logmel[f][n];
      if (!std::isfinite(acc)) throw NumericError("mfcc: non-finite coefficient in '" + clip.source_id + "'");
      fm.data[f * fm.n_mfcc + k] = static_cast<float>(acc);
    }
  }
  return fm;
}

}  // namespace kwscl::dsp
