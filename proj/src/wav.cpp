#include "binaural/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>

#include "binaural/error.hpp"
#include "binaural/io.hpp"

namespace binaural {
namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::string read_tag(io::ByteReader& reader) {
  std::string tag(4, ' ');
  for (auto& c : tag) c = static_cast<char>(reader.get<std::uint8_t>());
  return tag;
}

}  // namespace

PcmStream read_wav(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  io::ByteReader reader(bytes);
  if (!reader.magic_matches("RIFF")) throw Error(Errc::format, path.string() + ": not RIFF");
  reader.get<std::uint32_t>();
  if (!reader.magic_matches("WAVE")) throw Error(Errc::format, path.string() + ": not WAVE");

  std::uint16_t format = 0;
  std::uint16_t channels = 0;
  std::uint32_t rate = 0;
  std::uint16_t bits = 0;
  bool have_fmt = false;

  while (reader.remaining() >= 8) {
    const std::string tag = read_tag(reader);
    const auto size = reader.get<std::uint32_t>();
    if (tag == "fmt ") {
      if (size < 16) throw Error(Errc::format, "fmt chunk too small");
      format = reader.get<std::uint16_t>();
      channels = reader.get<std::uint16_t>();
      rate = reader.get<std::uint32_t>();
      reader.get<std::uint32_t>();  // byte rate
      reader.get<std::uint16_t>();  // block align
      bits = reader.get<std::uint16_t>();
      std::uint32_t consumed = 16;
      if (format == kFormatExtensible && size >= 40) {
        reader.get<std::uint16_t>();  // cbSize
        reader.get<std::uint16_t>();  // valid bits
        reader.get<std::uint32_t>();  // channel mask
        format = reader.get<std::uint16_t>();  // first two bytes of the subformat GUID
        consumed += 10;
      }
      std::vector<std::byte> skip(size - consumed + (size & 1U));
      reader.get_span(std::span(skip));
      have_fmt = true;
    } else if (tag == "data") {
      if (!have_fmt) throw Error(Errc::format, "data chunk before fmt chunk");
      if (channels != 2) {
        throw Error(Errc::format, "expected 2 channels, got " + std::to_string(channels));
      }
      if (rate != static_cast<std::uint32_t>(kSampleRate)) {
        throw Error(Errc::format, "unsupported sample rate " + std::to_string(rate));
      }
      const bool pcm16 = format == kFormatPcm && bits == 16;
      const bool f32 = format == kFormatFloat && bits == 32;
      if (!pcm16 && !f32) {
        throw Error(Errc::format, "unsupported encoding (format " + std::to_string(format) +
                                      ", " + std::to_string(bits) + " bits)");
      }
      const std::size_t frame_bytes = pcm16 ? 4 : 8;
      const std::size_t available = std::min<std::size_t>(size, reader.remaining());
      if (available < size) throw Error(Errc::format, "truncated data chunk");
      const std::size_t n = size / frame_bytes;
      PcmStream stream;
      stream.sample_rate = static_cast<int>(rate);
      stream.left.resize(n);
      stream.right.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        if (pcm16) {
          stream.left[i] = reader.get<std::int16_t>() / 32768.0;
          stream.right[i] = reader.get<std::int16_t>() / 32768.0;
        } else {
          stream.left[i] = reader.get<float>();
          stream.right[i] = reader.get<float>();
        }
      }
      return stream;
    } else {
      std::vector<std::byte> skip(size + (size & 1U));
      reader.get_span(std::span(skip));
    }
  }
  throw Error(Errc::format, path.string() + ": no data chunk");
}

void write_wav(const std::filesystem::path& path, const PcmStream& stream,
               WavEncoding encoding) {
  stream.validate();
  const bool pcm16 = encoding == WavEncoding::pcm16;
  const std::uint16_t bits = pcm16 ? 16 : 32;
  const std::uint16_t block_align = 2 * bits / 8;
  const auto data_bytes = static_cast<std::uint32_t>(stream.size() * block_align);

  io::ByteWriter w;
  w.put_magic("RIFF");
  w.put<std::uint32_t>(36 + data_bytes);
  w.put_magic("WAVE");
  w.put_magic("fmt ");
  w.put<std::uint32_t>(16);
  w.put<std::uint16_t>(pcm16 ? kFormatPcm : kFormatFloat);
  w.put<std::uint16_t>(2);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(stream.sample_rate));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(stream.sample_rate) * block_align);
  w.put<std::uint16_t>(block_align);
  w.put<std::uint16_t>(bits);
  w.put_magic("data");
  w.put<std::uint32_t>(data_bytes);
  for (std::size_t i = 0; i < stream.size(); ++i) {
    for (double v : {stream.left[i], stream.right[i]}) {
      if (pcm16) {
        const double scaled = std::clamp(std::round(v * 32768.0), -32768.0, 32767.0);
        w.put(static_cast<std::int16_t>(scaled));
      } else {
        w.put(static_cast<float>(v));
      }
    }
  }
  io::write_file_atomic(path, w.bytes());
}

}  // namespace binaural
