#include "kwscl/dsp/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "kwscl/common.hpp"

namespace kwscl::dsp {

AudioClip pad_or_trim(const AudioClip& clip, std::size_t target_len) {
  if (target_len == 0) throw Error("pad_or_trim: target length must be positive");
  if (clip.samples.empty()) throw Error("pad_or_trim: empty clip '" + clip.source_id + "'");
  AudioClip out = clip;
  out.samples.resize(target_len, 0.0f);
  return out;
}

namespace {

std::uint32_t read_u32(const char* p) {
  const auto* b = reinterpret_cast<const unsigned char*>(p);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint16_t read_u16(const char* p) {
  const auto* b = reinterpret_cast<const unsigned char*>(p);
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

void put_u32(std::vector<char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u16(std::vector<char>& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

}  // namespace

AudioClip decode_wav(const std::vector<char>& bytes, const std::string& source_id) {
  auto fail = [&](const std::string& why) -> WavError {
    return WavError("wav '" + source_id + "': " + why);
  };
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw fail("not a RIFF/WAVE file");
  }
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const char* id = bytes.data() + pos;
    const std::uint32_t size = read_u32(id + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) throw fail("truncated chunk");
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (size < 16) throw fail("fmt chunk too short");
      const char* f = bytes.data() + body;
      const std::uint16_t format = read_u16(f);
      const std::uint16_t channels = read_u16(f + 2);
      const std::uint32_t rate = read_u32(f + 4);
      const std::uint16_t bits = read_u16(f + 14);
      if (format != 1) throw fail("unsupported encoding (format tag " + std::to_string(format) + ", need PCM)");
      if (channels != 1) throw fail("expected mono, got " + std::to_string(channels) + " channels");
      if (rate != static_cast<std::uint32_t>(kSampleRate)) {
        throw fail("expected 16000 Hz, got " + std::to_string(rate));
      }
      if (bits != 16) throw fail("expected 16-bit samples, got " + std::to_string(bits));
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      if (!have_fmt) throw fail("data chunk before fmt chunk");
      AudioClip clip;
      clip.source_id = source_id;
      clip.samples.resize(size / 2);
      const char* d = bytes.data() + body;
      for (std::size_t i = 0; i < clip.samples.size(); ++i) {
        const auto s = static_cast<std::int16_t>(read_u16(d + 2 * i));
        clip.samples[i] = static_cast<float>(s) / 32768.0f;
      }
      return clip;
    }
    pos = body + size + (size & 1u);
  }
  throw fail(have_fmt ? "missing data chunk" : "missing fmt chunk");
}

AudioClip read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw WavError("cannot open '" + path.string() + "'");
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_wav(bytes, path.string());
}

std::vector<char> encode_wav(const AudioClip& clip) {
  const auto n = static_cast<std::uint32_t>(clip.samples.size());
  std::vector<char> out;
  out.reserve(44 + 2 * n);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put_u32(out, 36 + 2 * n);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put_u32(out, 2 * n);
  for (float s : clip.samples) {
    const double clipped = std::clamp(static_cast<double>(s), -1.0, 1.0);
    const auto q = static_cast<std::int16_t>(std::lround(std::clamp(clipped * 32768.0, -32768.0, 32767.0)));
    put_u16(out, static_cast<std::uint16_t>(q));
  }
  return out;
}

void write_wav(const std::filesystem::path& path, const AudioClip& clip) {
  const auto bytes = encode_wav(clip);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace kwscl::dsp
