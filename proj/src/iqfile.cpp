#include "blindmod/iqfile.hpp"

#include <cstring>
#include <fstream>

#include "binary_io.hpp"
#include "blindmod/error.hpp"

namespace blindmod {

namespace {

using detail::put_le;

template <typename T>
T get_le(std::istream& is) {
    return detail::get_le<T>(is, "IQFR");
}

}  // namespace

std::uint64_t frame_offset(std::uint32_t frame_len, std::uint64_t index) {
    return kIqfrHeaderBytes + index * std::uint64_t{frame_len} * 2 * sizeof(float);
}

void write_frame_file(const std::filesystem::path& path, const FrameFile& file) {
    if (file.iq.size() != file.frame_count() * file.frame_len * 2)
        throw ParameterError("write_frame_file: sample count does not match frame_len * frame count * 2");
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot open '" + path.string() + "' for writing");
    os.write("IQFR", 4);
    put_le<std::uint32_t>(os, kIqfrVersion);
    put_le<std::uint32_t>(os, file.frame_len);
    put_le<std::uint64_t>(os, file.frame_count());
    for (float v : file.iq) put_le<float>(os, v);
    for (auto label : file.labels) put_le<std::uint16_t>(os, label);
    if (!os) throw Error("write to '" + path.string() + "' failed");
}

FrameFile read_frame_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open '" + path.string() + "'");
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "IQFR", 4) != 0)
        throw FormatError("'" + path.string() + "' is not an IQFR file (bad magic)");
    const auto version = get_le<std::uint32_t>(is);
    if (version != kIqfrVersion) throw FormatError("IQFR: unsupported version " + std::to_string(version));
    FrameFile file;
    file.frame_len = get_le<std::uint32_t>(is);
    const auto count = get_le<std::uint64_t>(is);

    const auto expected = kIqfrHeaderBytes + count * (std::uint64_t{file.frame_len} * 2 * sizeof(float) + sizeof(std::uint16_t));
    if (std::filesystem::file_size(path) != expected)
        throw FormatError("IQFR: file size does not match header (" + path.string() + ")");
    file.iq.resize(count * file.frame_len * 2);
    for (auto& v : file.iq) v = get_le<float>(is);
    file.labels.resize(count);
    for (auto& label : file.labels) label = get_le<std::uint16_t>(is);
    return file;
}

FrameFile frames_to_file(const std::vector<Frame>& frames, const std::vector<std::uint16_t>& labels) {
    if (frames.size() != labels.size()) throw ParameterError("frames_to_file: frame and label counts differ");
    FrameFile file;
    file.frame_len = frames.empty() ? 0 : static_cast<std::uint32_t>(frames.front().length());
    file.iq.reserve(frames.size() * file.frame_len * 2);
    for (const auto& f : frames) {
        if (f.length() != file.frame_len) throw ParameterError("frames_to_file: frames differ in length");
        for (double v : f.iq) file.iq.push_back(static_cast<float>(v));
    }
    file.labels = labels;
    return file;
}

std::vector<Frame> file_to_frames(const FrameFile& file) {
    std::vector<Frame> frames(file.frame_count());
    const std::size_t stride = std::size_t{file.frame_len} * 2;
    for (std::size_t f = 0; f < frames.size(); ++f)
        frames[f].iq.assign(file.iq.begin() + static_cast<std::ptrdiff_t>(f * stride),
                            file.iq.begin() + static_cast<std::ptrdiff_t>((f + 1) * stride));
    return frames;
}

void write_signal_file(const std::filesystem::path& path, const ComplexSignal& x, std::uint16_t label) {
    FrameFile file;
    file.frame_len = static_cast<std::uint32_t>(x.size());
    file.iq.reserve(2 * x.size());
    for (const auto& s : x.samples) {
        file.iq.push_back(static_cast<float>(s.real()));
        file.iq.push_back(static_cast<float>(s.imag()));
    }
    file.labels = {label};
    write_frame_file(path, file);
}

ComplexSignal read_signal_file(const std::filesystem::path& path, double sample_rate, std::uint16_t* label) {
    const auto file = read_frame_file(path);
    if (file.frame_count() != 1) throw FormatError("'" + path.string() + "' holds " + std::to_string(file.frame_count()) + " frames, expected one signal");
    ComplexSignal x;
    x.sample_rate = sample_rate;
    x.samples.resize(file.frame_len);
    for (std::size_t k = 0; k < x.size(); ++k) x.samples[k] = cplx(file.iq[2 * k], file.iq[2 * k + 1]);
    if (label) *label = file.labels.front();
    return x;
}

}  // namespace blindmod
