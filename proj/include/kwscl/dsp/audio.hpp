#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace kwscl::dsp {

inline constexpr int kSampleRate = 16000;
inline constexpr std::size_t kClipSamples = 16000;

struct AudioClip {
  std::vector<float> samples;  // in [-1, 1]
  int sample_rate = kSampleRate;
  int label = -1;
  std::string source_id;
};

/// Zero-pads the tail or truncates to exactly `target_len` samples.
AudioClip pad_or_trim(const AudioClip& clip, std::size_t target_len = kClipSamples);

/// Reads RIFF/WAVE, 16-bit signed PCM, mono, 16 kHz. Anything else throws WavError.
AudioClip read_wav(const std::filesystem::path& path);

/// Writes 16-bit PCM mono. Samples are clipped to [-1, 1].
void write_wav(const std::filesystem::path& path, const AudioClip& clip);

std::vector<char> encode_wav(const AudioClip& clip);
AudioClip decode_wav(const std::vector<char>& bytes, const std::string& source_id = {});

}  // namespace kwscl::dsp
