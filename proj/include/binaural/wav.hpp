#pragma once

#include <filesystem>

#include "binaural/frontend.hpp"

namespace binaural {

enum class WavEncoding { pcm16, float32 };

/// Reads a 2-channel, 44100 Hz WAV file (16-bit PCM or 32-bit IEEE float).
/// Samples are scaled to [-1, 1). Other layouts are rejected with Errc::format;
/// no resampling is performed.
PcmStream read_wav(const std::filesystem::path& path);

void write_wav(const std::filesystem::path& path, const PcmStream& stream,
               WavEncoding encoding = WavEncoding::float32);

}  // namespace binaural
