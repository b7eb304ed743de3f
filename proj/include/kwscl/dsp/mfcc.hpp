#pragma once

#include <cstddef>
#include <vector>

#include "kwscl/dsp/audio.hpp"

namespace kwscl::dsp {

struct FrontendConfig {
  int sample_rate = kSampleRate;
  std::size_t n_mfcc = 40;
  std::size_t n_mel = 40;
  double frame_length_ms = 30.0;
  double frame_shift_ms = 10.0;
  double preemphasis = 0.97;
  double log_floor = 1e-10;
  double f_min = 0.0;
  double f_max = 0.0;  // 0 means Nyquist

  std::size_t frame_length() const;
  std::size_t hop_length() const;
  /// Next power of two >= frame_length().
  std::size_t fft_size() const;
  std::size_t frame_count(std::size_t n_samples) const;
  void validate() const;
};

/// Row-major [n_frames x n_mfcc].
struct FeatureMatrix {
  std::size_t n_frames = 0;
  std::size_t n_mfcc = 0;
  double frame_length_ms = 0.0;
  double frame_shift_ms = 0.0;
  std::vector<float> data;

  float at(std::size_t frame, std::size_t coef) const { return data[frame * n_mfcc + coef]; }
  std::size_t byte_size() const { return data.size() * sizeof(float); }
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// [n_mel x (fft_size/2 + 1)] triangular HTK filters, unnormalized.
std::vector<std::vector<double>> mel_filterbank(const FrontendConfig& cfg);

/// Log mel energies per frame, [n_frames x n_mel], before the DCT.
std::vector<std::vector<double>> log_mel_energies(const AudioClip& clip, const FrontendConfig& cfg);

/// pre-emphasis -> framing -> Hann -> |FFT|^2 -> mel -> log(max(e, floor)) -> DCT-II (ortho).
FeatureMatrix mfcc(const AudioClip& clip, const FrontendConfig& cfg = {});

}  // namespace kwscl::dsp
