#pragma once

#include "dap/dsp.hpp"

#include <filesystem>
#include <stdexcept>

namespace dap {

class WavError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

enum class WavEncoding
{
  Pcm16,
  Float32,
};

/// Reads RIFF/WAVE PCM16 or IEEE float32; multi-channel input is averaged to mono.
Waveform read_wav(const std::filesystem::path& path);

/// Writes a mono file. PCM16 samples are clamped to [-1, 1).
void write_wav(const std::filesystem::path& path, const Waveform& w, WavEncoding encoding = WavEncoding::Float32);

} // namespace dap
