#include <algorithm>
#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "doctest.h"

namespace fs = std::filesystem;

namespace {

struct Result {
    int status = -1;
    std::string out;
};

const fs::path& workdir() {
    static const fs::path dir = [] {
        auto d = fs::temp_directory_path() / "blindmod_cli_test";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

Result run(const std::string& args, const std::string& env = "") {
    const std::string cmd = "cd '" + workdir().string() + "' && " + env + " '" BLINDMOD_CLI "' " + args + " 2>&1";
    Result r;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::array<char, 4096> buf;
    while (std::fgets(buf.data(), buf.size(), pipe)) r.out += buf.data();
    const int raw = pclose(pipe);
    r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    return r;
}

double field(const std::string& out, const std::string& name) {
    std::istringstream is(out);
    for (std::string line; std::getline(is, line);)
        if (line.rfind(name, 0) == 0) return std::stod(line.substr(name.size()));
    FAIL("no line starting with " << name << " in:\n" << out);
    return 0.0;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

// Lines from the first probability line to the end of the prediction.
std::string prediction_block(const std::string& out) {
    std::istringstream is(out);
    std::string block;
    bool in = false;
    for (std::string line; std::getline(is, line);) {
        if (line.rfind("  p(", 0) == 0) in = true;
        if (!in) continue;
        block += line + "\n";
        if (line.rfind("  p(", 0) != 0) break;
    }
    return block;
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream os(p, std::ios::trunc);
    os << text;
}

}  // namespace

TEST_CASE("usage and argument errors") {
    auto r = run("");
    CHECK(r.status != 0);
    CHECK(r.out.find("Usage") != std::string::npos);
    CHECK(r.out.find("pipeline") != std::string::npos);

    CHECK(run("synth --no-such-flag").status != 0);
    CHECK(run("frobnicate").status != 0);
    r = run("estimate does_not_exist.iqfr");
    CHECK(r.status != 0);
    CHECK(r.out.find("does_not_exist.iqfr") != std::string::npos);
    CHECK(run("estimate").status != 0);

    write_text(workdir() / "bad.toml", "n_fft = lots\n");
    r = run("--config bad.toml synth");
    CHECK(r.status != 0);
    CHECK(r.out.find("n_fft") != std::string::npos);
    CHECK(run("--config missing.toml synth").status != 0);
    CHECK(run("synth --scheme OOK").status != 0);
}

TEST_CASE("synth then estimate") {
    auto r = run("synth --scheme 16QAM --symbol-rate 0.0125 --rolloff 0.6 --carrier 0.05 --snr-db 25 --seed 3 --out q.iqfr");
    REQUIRE(r.status == 0);
    r = run("estimate q.iqfr --dump-spectrum spec.csv");
    REQUIRE(r.status == 0);
    CHECK(std::abs(field(r.out, "carrier") - 0.05) <= 1e-3);
    CHECK(std::abs(field(r.out, "bandwidth") - 1.6 * 0.0125) <= 1e-3);
    CHECK(field(r.out, "samples/symbol") > 0.0);

    std::ifstream csv(workdir() / "spec.csv");
    std::string header;
    std::getline(csv, header);
    CHECK(header == "bin_index,frequency,power_db");
    std::size_t rows = 0;
    for (std::string line; std::getline(csv, line);) ++rows;
    CHECK(rows == 1024);
}

TEST_CASE("flags override the config file, which overrides defaults") {
    REQUIRE(run("synth --seed 5 --out s.iqfr").status == 0);
    write_text(workdir() / "nfft.toml", "n_fft = 512\ndump_spectrum = \"from_config.csv\"\n");
    REQUIRE(run("--config nfft.toml estimate s.iqfr").status == 0);
    std::ifstream a(workdir() / "from_config.csv");
    CHECK(std::count(std::istreambuf_iterator<char>(a), std::istreambuf_iterator<char>(), '\n') == 513);
    REQUIRE(run("--config nfft.toml estimate s.iqfr --nfft 2048 --dump-spectrum from_flag.csv").status == 0);
    std::ifstream b(workdir() / "from_flag.csv");
    CHECK(std::count(std::istreambuf_iterator<char>(b), std::istreambuf_iterator<char>(), '\n') == 2049);
}

TEST_CASE("subcommands are deterministic") {
    REQUIRE(run("synth --scheme 8PSK --seed 9 --out a.iqfr").status == 0);
    REQUIRE(run("synth --scheme 8PSK --seed 9 --out b.iqfr", "BLINDMOD_THREADS=1").status == 0);
    CHECK(slurp(workdir() / "a.iqfr") == slurp(workdir() / "b.iqfr"));
    REQUIRE(run("synth --scheme 8PSK --seed 10 --out c.iqfr").status == 0);
    CHECK(slurp(workdir() / "a.iqfr") != slurp(workdir() / "c.iqfr"));
    REQUIRE(run("convert a.iqfr --out fa.iqfr").status == 0);
    REQUIRE(run("convert a.iqfr --out fb.iqfr", "BLINDMOD_THREADS=1").status == 0);
    CHECK(slurp(workdir() / "fa.iqfr") == slurp(workdir() / "fb.iqfr"));
}

TEST_CASE("dataset, training, evaluation and pipeline") {
    write_text(workdir() / "small.toml",
               "frames_per_class = 20\nframes_per_signal = 4\nrf_length = 16384\n"
               "hidden = 8\nlayers = 1\nbench_repetitions = 10\nmodel = \"small.lstm\"\n");
    auto r = run("--config small.toml make-dataset --out ds --seed 2");
    REQUIRE(r.status == 0);
    CHECK(r.out.find("120 frames") != std::string::npos);
    CHECK(fs::exists(workdir() / "ds" / "frames.iqfr"));
    CHECK(fs::exists(workdir() / "ds" / "manifest.json"));

    r = run("--config small.toml train ds --epochs 2 --batch 24 --lr 0.01");
    REQUIRE(r.status == 0);
    CHECK(r.out.find("epoch    2") != std::string::npos);
    CHECK(fs::exists(workdir() / "small.lstm"));
    CHECK(fs::exists(workdir() / "small.lstm.json"));

    r = run("--config small.toml eval ds");
    REQUIRE(r.status == 0);
    CHECK(r.out.find("accuracy") != std::string::npos);
    CHECK(r.out.find("256QAM") != std::string::npos);

    r = run("--config small.toml bench ds");
    REQUIRE(r.status == 0);
    CHECK(r.out.find("frames/sec") != std::string::npos);

    // pipeline is estimate + convert + eval on the converted frames.
    REQUIRE(run("synth --scheme BPSK --seed 4 --out bpsk.iqfr").status == 0);
    const auto piped = run("--config small.toml pipeline bpsk.iqfr");
    REQUIRE(piped.status == 0);
    REQUIRE(run("convert bpsk.iqfr --out bpsk_frames.iqfr").status == 0);
    const auto staged = run("--config small.toml eval bpsk_frames.iqfr");
    REQUIRE(staged.status == 0);
    CHECK(!prediction_block(piped.out).empty());
    CHECK(prediction_block(piped.out) == prediction_block(staged.out));
    const auto est = run("estimate bpsk.iqfr");
    CHECK(piped.out.find(est.out.substr(0, est.out.find("noise"))) == 0);

    CHECK(run("--config small.toml pipeline bpsk.iqfr --model nope.lstm").status != 0);
}
