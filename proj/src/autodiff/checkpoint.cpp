#include "kwscl/autodiff/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "kwscl/common.hpp"

namespace kwscl::ad {

namespace {

constexpr char kMagic[8] = {'K', 'W', 'S', 'C', 'K', 'P', 'T', '\0'};

template <typename T>
void put(std::vector<char>& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(const std::vector<char>& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<T>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return v;
  }

  std::string str(std::size_t n) {
    need(n);
    std::string s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw IoError("checkpoint: truncated data");
  }
  const std::vector<char>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<char> encode_checkpoint(const ParameterVector& params) {
  std::vector<char> out(kMagic, kMagic + 8);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.segments().size()));
  for (const auto& seg : params.segments()) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(seg.name.size()));
    out.insert(out.end(), seg.name.begin(), seg.name.end());
    put<std::uint8_t>(out, seg.trainable ? 1 : 0);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(seg.tensor.rank()));
    for (auto d : seg.tensor.shape()) put<std::uint64_t>(out, d);
    for (double v : seg.tensor.data()) put<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  return out;
}

void write_checkpoint(const std::filesystem::path& path, const ParameterVector& params) {
  const auto bytes = encode_checkpoint(params);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("checkpoint: cannot write '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::vector<CheckpointSegment> decode_checkpoint(const std::vector<char>& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 8) != 0) throw IoError("checkpoint: bad magic");
  Reader r(bytes);
  r.str(8);
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw IoError("checkpoint: unsupported version " + std::to_string(version));
  }
  const auto count = r.get<std::uint32_t>();
  std::vector<CheckpointSegment> segs(count);
  for (auto& seg : segs) {
    seg.name = r.str(r.get<std::uint32_t>());
    seg.trainable = r.get<std::uint8_t>() != 0;
    const auto rank = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < rank; ++i) seg.shape.push_back(static_cast<std::size_t>(r.get<std::uint64_t>()));
    seg.values.resize(shape_size(seg.shape));
    for (auto& v : seg.values) v = std::bit_cast<float>(r.get<std::uint32_t>());
  }
  if (!r.done()) throw IoError("checkpoint: trailing bytes");
  return segs;
}

std::vector<CheckpointSegment> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint: cannot open '" + path.string() + "'");
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

void load_checkpoint(const std::vector<CheckpointSegment>& segments, ParameterVector& params) {
  auto& dst = params.segments();
  if (dst.size() != segments.size()) throw ShapeError("checkpoint: segment count mismatch");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i].name != segments[i].name || dst[i].tensor.shape() != segments[i].shape) {
      throw ShapeError("checkpoint: segment '" + segments[i].name + "' does not match '" + dst[i].name + "'");
    }
    auto d = dst[i].tensor.data();
    for (std::size_t j = 0; j < d.size(); ++j) d[j] = segments[i].values[j];
  }
}

}  // namespace kwscl::ad
