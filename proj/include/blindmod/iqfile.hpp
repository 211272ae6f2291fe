#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "blindmod/rbc.hpp"
#include "blindmod/signal.hpp"

namespace blindmod {

/// In-memory image of an IQFR file.
///
/// Layout (little-endian):
///   char[4]  magic "IQFR"
///   u32      version (1)
///   u32      frame_len
///   u64      frame count F
///   f32      F * frame_len * 2 interleaved I, Q values
///   u16      F labels
struct FrameFile {
    std::uint32_t frame_len = 0;
    std::vector<float> iq;
    std::vector<std::uint16_t> labels;

    std::size_t frame_count() const { return labels.size(); }
};

inline constexpr std::uint32_t kIqfrVersion = 1;
inline constexpr std::size_t kIqfrHeaderBytes = 4 + 4 + 4 + 8;

void write_frame_file(const std::filesystem::path& path, const FrameFile& file);
FrameFile read_frame_file(const std::filesystem::path& path);

/// Byte offset of frame `index` inside an IQFR file with this frame length.
std::uint64_t frame_offset(std::uint32_t frame_len, std::uint64_t index);

FrameFile frames_to_file(const std::vector<Frame>& frames, const std::vector<std::uint16_t>& labels);
std::vector<Frame> file_to_frames(const FrameFile& file);

/// A whole signal stored as a single frame (frame_len = signal length).
/// The sample rate is not part of the format and must be supplied by the
/// reader.
void write_signal_file(const std::filesystem::path& path, const ComplexSignal& x, std::uint16_t label = 0);
ComplexSignal read_signal_file(const std::filesystem::path& path, double sample_rate, std::uint16_t* label = nullptr);

}  // namespace blindmod
