// SPDX-License-Identifier: Apache-2.0
#include "vqa/feature_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "vqa/errors.hpp"

namespace vqa {

namespace {

constexpr char kMagic[4] = {'V', 'Q', 'A', 'F'};

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int shift = 0; shift < 32; shift += 8)
    out.push_back(static_cast<std::uint8_t>((v >> shift) & 0xff));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError("VQAF truncated at byte offset " + std::to_string(pos_) +
                        " while reading " + what + " (need " + std::to_string(n) +
                        " bytes, have " + std::to_string(bytes_.size() - pos_) + ")");
    }
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return bytes_[pos_++];
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    const std::uint16_t v =
        static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  const std::uint8_t* cursor() const { return bytes_.data() + pos_; }
  void skip(std::size_t n) { pos_ += n; }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void FrameFeatureSequence::validate() const {
  if (frames == 0) throw ValidationError("feature sequence '" + video_id + "' has no frames");
  if (dim == 0) throw ValidationError("feature sequence '" + video_id + "' has zero dimension");
  if (features.size() != frames * dim) {
    throw ValidationError("feature sequence '" + video_id + "' holds " +
                          std::to_string(features.size()) + " values, expected " +
                          std::to_string(frames * dim));
  }
  for (float v : features) {
    if (!std::isfinite(v)) {
      throw ValidationError("feature sequence '" + video_id + "' contains non-finite values");
    }
  }
}

Tensor FrameFeatureSequence::to_tensor() const {
  std::vector<double> data(features.begin(), features.end());
  return Tensor({frames, dim}, std::move(data));
}

std::vector<std::uint8_t> encode_features(const FrameFeatureSequence& seq) {
  seq.validate();
  if (seq.frames > std::numeric_limits<std::uint32_t>::max() ||
      seq.dim > std::numeric_limits<std::uint32_t>::max()) {
    throw ValidationError("feature sequence too large for VQAF");
  }
  if (seq.video_id.size() > std::numeric_limits<std::uint16_t>::max()) {
    throw ValidationError("video id longer than 65535 bytes");
  }
  std::vector<std::uint8_t> out;
  out.reserve(4 + 1 + 8 + 4 * seq.features.size() + 2 + seq.video_id.size());
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  out.push_back(kFeatureFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(seq.frames));
  put_u32(out, static_cast<std::uint32_t>(seq.dim));
  for (float v : seq.features) put_u32(out, std::bit_cast<std::uint32_t>(v));
  put_u16(out, static_cast<std::uint16_t>(seq.video_id.size()));
  out.insert(out.end(), seq.video_id.begin(), seq.video_id.end());
  return out;
}

FrameFeatureSequence decode_features(const std::vector<std::uint8_t>& bytes) {
  Reader in(bytes);
  in.need(4, "magic");
  if (std::memcmp(in.cursor(), kMagic, 4) != 0) {
    throw FormatError("VQAF bad magic at byte offset 0");
  }
  in.skip(4);
  const std::size_t version_at = in.pos();
  const std::uint8_t version = in.u8("version");
  if (version != kFeatureFormatVersion) {
    throw FormatError("VQAF unsupported version " + std::to_string(version) +
                      " at byte offset " + std::to_string(version_at));
  }
  FrameFeatureSequence seq;
  const std::size_t frames_at = in.pos();
  seq.frames = in.u32("frame count");
  seq.dim = in.u32("feature dim");
  if (seq.frames == 0 || seq.dim == 0) {
    throw FormatError("VQAF zero frame count or dimension at byte offset " +
                      std::to_string(frames_at));
  }
  const std::size_t count = seq.frames * seq.dim;
  if (count > in.remaining() / 4) in.need(4 * count, "features");
  seq.features.resize(count);
  for (std::size_t i = 0; i < count; ++i)
    seq.features[i] = std::bit_cast<float>(in.u32("features"));
  const std::uint16_t id_len = in.u16("id length");
  in.need(id_len, "video id");
  seq.video_id.assign(reinterpret_cast<const char*>(in.cursor()), id_len);
  in.skip(id_len);
  if (in.remaining() != 0) {
    throw FormatError("VQAF trailing bytes at byte offset " + std::to_string(in.pos()));
  }
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::isfinite(seq.features[i])) {
      throw FormatError("VQAF non-finite feature at byte offset " +
                        std::to_string(13 + 4 * i));
    }
  }
  return seq;
}

void write_features(const FrameFeatureSequence& seq,
                    const std::filesystem::path& path) {
  const auto bytes = encode_features(seq);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

FrameFeatureSequence read_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open feature file '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_features(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace vqa
