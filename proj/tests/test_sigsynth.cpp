#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "doctest.h"

#include "blindmod/error.hpp"
#include "blindmod/sigsynth.hpp"

using namespace blindmod;

namespace {

constexpr double kPi = std::numbers::pi;

// Naive DFT magnitude peak, independent of the FFT backend.
std::size_t dft_peak(const std::vector<cplx>& x) {
    const std::size_t n = x.size();
    std::size_t best = 0;
    double best_mag = -1.0;
    for (std::size_t k = 0; k < n; ++k) {
        cplx acc = 0.0;
        for (std::size_t t = 0; t < n; ++t)
            acc += x[t] * std::polar(1.0, -2.0 * kPi * static_cast<double>(k * t % n) / static_cast<double>(n));
        if (std::abs(acc) > best_mag) {
            best_mag = std::abs(acc);
            best = k;
        }
    }
    return best;
}

ComplexSignal constant(std::size_t n, cplx v = 1.0) {
    ComplexSignal x;
    x.samples.assign(n, v);
    return x;
}

std::vector<std::uint8_t> random_bits(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<std::uint8_t> bits(n);
    for (auto& b : bits) b = static_cast<std::uint8_t>(rng() & 1u);
    return bits;
}

}  // namespace

TEST_CASE("scheme names and orders") {
    const std::vector<std::pair<const char*, int>> expect = {{"BPSK", 2},   {"QPSK", 4},   {"8PSK", 8},
                                                             {"16QAM", 16}, {"64QAM", 64}, {"256QAM", 256}};
    for (std::size_t k = 0; k < expect.size(); ++k) {
        ModulationScheme s{kAllModulations[k]};
        CHECK(s.name() == expect[k].first);
        CHECK(s.order() == expect[k].second);
        CHECK((1 << s.bits_per_symbol()) == expect[k].second);
        CHECK(ModulationScheme::parse(expect[k].first).kind == s.kind);
    }
    CHECK(ModulationScheme::parse("qam16").kind == Modulation::Qam16);
    CHECK_THROWS_AS(ModulationScheme::parse("OOK"), ParameterError);
}

TEST_CASE("constellations have unit average power and distinct points") {
    for (auto kind : kAllModulations) {
        const auto& pts = constellation({kind});
        CHECK(pts.size() == static_cast<std::size_t>(ModulationScheme{kind}.order()));
        double p = 0.0;
        for (auto s : pts) p += std::norm(s);
        CHECK(std::abs(p / static_cast<double>(pts.size()) - 1.0) < 1e-12);
        for (std::size_t a = 0; a < pts.size(); ++a)
            for (std::size_t b = a + 1; b < pts.size(); ++b) CHECK(std::abs(pts[a] - pts[b]) > 1e-3);
    }
}

TEST_CASE("QAM16 is the odd-integer lattice over sqrt(10)") {
    // Enumerate the lattice independently and average its power.
    std::set<std::pair<int, int>> lattice;
    double p = 0.0;
    for (int i : {-3, -1, 1, 3})
        for (int q : {-3, -1, 1, 3}) {
            lattice.insert({i, q});
            p += i * i + q * q;
        }
    CHECK(p / 16.0 == doctest::Approx(10.0));
    std::set<std::pair<int, int>> got;
    for (auto s : constellation({Modulation::Qam16})) {
        const double i = s.real() * std::sqrt(10.0), q = s.imag() * std::sqrt(10.0);
        CHECK(std::abs(i - std::round(i)) < 1e-12);
        CHECK(std::abs(q - std::round(q)) < 1e-12);
        got.insert({static_cast<int>(std::lround(i)), static_cast<int>(std::lround(q))});
    }
    CHECK(got == lattice);
}

TEST_CASE("Gray labelling: nearest neighbours differ in one bit") {
    for (auto kind : kAllModulations) {
        const auto& pts = constellation({kind});
        double dmin = 1e9;
        for (std::size_t a = 0; a < pts.size(); ++a)
            for (std::size_t b = a + 1; b < pts.size(); ++b) dmin = std::min(dmin, std::abs(pts[a] - pts[b]));
        for (std::size_t a = 0; a < pts.size(); ++a)
            for (std::size_t b = a + 1; b < pts.size(); ++b)
                if (std::abs(pts[a] - pts[b]) < dmin * (1.0 + 1e-9)) CHECK(std::popcount(a ^ b) == 1);
    }
}

TEST_CASE("map_symbols") {
    const std::vector<std::uint8_t> bpsk_bits = {0, 1, 1};
    const auto s = map_symbols(bpsk_bits, {Modulation::Bpsk});
    REQUIRE(s.size() == 3);
    CHECK(s[0] == cplx(1.0, 0.0));
    CHECK(s[1] == cplx(-1.0, 0.0));
    CHECK(s[2] == cplx(-1.0, 0.0));

    const auto bits = random_bits(2 * 500, 3);
    for (auto v : map_symbols(bits, {Modulation::Qpsk})) CHECK(std::abs(std::abs(v) - 1.0) < 1e-12);

    for (auto kind : kAllModulations) {
        ModulationScheme scheme{kind};
        const auto b = random_bits(static_cast<std::size_t>(scheme.bits_per_symbol()) * 300, 9);
        const auto& pts = constellation(scheme);
        const auto syms = map_symbols(b, scheme);
        for (std::size_t k = 0; k < syms.size(); ++k) {
            std::size_t label = 0;
            for (int j = 0; j < scheme.bits_per_symbol(); ++j)
                label = (label << 1) | b[k * static_cast<std::size_t>(scheme.bits_per_symbol()) + static_cast<std::size_t>(j)];
            CHECK(syms[k] == pts[label]);
        }
    }

    const std::vector<std::uint8_t> bad(10, 0);
    try {
        map_symbols(bad, {Modulation::Qam16});
        FAIL("expected an error");
    } catch (const ParameterError& e) {
        CHECK(std::string(e.what()).find('2') != std::string::npos);
    }
}

TEST_CASE("rrc_pulse at its singular points matches neighbouring values") {
    for (double rho : {0.1, 0.35, 0.5, 0.9}) {
        const double t0 = 1.0 / (4.0 * rho);
        CHECK(rrc_pulse(t0, rho) == doctest::Approx(rrc_pulse(t0 + 1e-7, rho)).epsilon(1e-5));
        CHECK(rrc_pulse(-t0, rho) == doctest::Approx(rrc_pulse(-t0 - 1e-7, rho)).epsilon(1e-5));
        CHECK(rrc_pulse(0.0, rho) == doctest::Approx(rrc_pulse(1e-7, rho)).epsilon(1e-6));
        CHECK(rrc_pulse(0.0, rho) == doctest::Approx(1.0 - rho + 4.0 * rho / kPi));
    }
}

TEST_CASE("rrc_taps shape and symmetry") {
    CHECK(rrc_taps(0.5, 8.0, 10).taps.size() == 81);
    for (double rho : {0.1, 0.35, 0.9})
        for (double sps : {2.0, 4.0, 7.3, 8.0, 10.0}) {
            const auto f = rrc_taps(rho, sps, 10);
            const auto n = f.taps.size();
            CHECK(n == static_cast<std::size_t>(10 * std::lround(sps) + 1));
            CHECK(n % 2 == 1);
            for (std::size_t k = 0; k < n; ++k) CHECK(std::abs(f.taps[k] - f.taps[n - 1 - k]) < 1e-12);
        }
    CHECK_THROWS_AS(rrc_taps(0.0, 8.0), ParameterError);
    CHECK_THROWS_AS(rrc_taps(1.0, 8.0), ParameterError);
    CHECK_THROWS_AS(rrc_taps(0.5, 1.5), ParameterError);
    CHECK_THROWS_AS(rrc_taps(0.5, 8.0, 3), ParameterError);
}

// Truncation to 10 symbols leaves up to 5e-2 of ISI at rho = 0.1; 40 symbols
// keeps every roll-off of the grid under 1e-3.
TEST_CASE("RRC self-convolution is ISI free") {
    for (int r = 1; r <= 9; ++r)
        for (int sps : {4, 8, 10}) {
            const double rho = r / 10.0;
            const auto f = rrc_taps(rho, sps, 40);
            const auto& g = f.taps;
            const std::size_t n = g.size();
            std::vector<double> conv(2 * n - 1, 0.0);
            for (std::size_t a = 0; a < n; ++a)
                for (std::size_t b = 0; b < n; ++b) conv[a + b] += g[a] * g[b];
            const std::size_t mid = n - 1;
            CHECK(conv[mid] == doctest::Approx(1.0).epsilon(1e-12));
            double worst = 0.0;
            for (std::size_t k = static_cast<std::size_t>(sps); k <= mid; k += static_cast<std::size_t>(sps)) {
                worst = std::max(worst, std::abs(conv[mid + k]));
                worst = std::max(worst, std::abs(conv[mid - k]));
            }
            INFO("rho " << rho << " sps " << sps);
            CHECK(worst < 1e-3);
        }
}

TEST_CASE("synthesize_baseband") {
    const auto f = rrc_taps(0.35, 8.0, 10);

    SUBCASE("single unit symbol reproduces the taps") {
        const auto y = synthesize_baseband({cplx(1.0, 0.0)}, f, 0.0);
        REQUIRE(y.size() == f.taps.size());
        for (std::size_t k = 0; k < y.size(); ++k) {
            CHECK(std::abs(y.samples[k].real() - f.taps[k]) < 1e-12);
            CHECK(std::abs(y.samples[k].imag()) < 1e-15);
        }
    }

    SUBCASE("half-symbol timing error shifts the correlation peak by sps/2") {
        const auto syms = map_symbols(random_bits(400, 5), {Modulation::Bpsk});
        const auto a = synthesize_baseband(syms, f, 0.0);
        const auto b = synthesize_baseband(syms, f, 0.5);
        int best_lag = 0;
        double best = -1.0;
        for (int lag = -16; lag <= 16; ++lag) {
            cplx acc = 0.0;
            for (std::size_t k = 40; k + 40 < a.size(); ++k)
                acc += b.samples[static_cast<std::size_t>(static_cast<long>(k) + lag)] * std::conj(a.samples[k]);
            if (std::abs(acc) > best) {
                best = std::abs(acc);
                best_lag = lag;
            }
        }
        CHECK(best_lag == 4);
    }

    SUBCASE("energy per symbol is one over a long random stream") {
        // Unit-energy pulses: mean power is 1/sps, so mean power * sps ~ 1.
        const auto syms = map_symbols(random_bits(4 * 20000, 17), {Modulation::Qam16});
        const auto y = synthesize_baseband(syms, f, 0.0);
        REQUIRE(y.size() >= 100000);
        std::vector<cplx> mid(y.samples.begin() + 80, y.samples.end() - 80);
        double p = 0.0;
        for (auto v : mid) p += std::norm(v);
        p /= static_cast<double>(mid.size());
        CHECK(std::abs(p * 8.0 - 1.0) < 0.02);
    }

    SUBCASE("matched filter recovers the symbols") {
        for (auto kind : kAllModulations) {
            const ModulationScheme scheme{kind};
            const auto syms = map_symbols(random_bits(static_cast<std::size_t>(scheme.bits_per_symbol()) * 200, 8), scheme);
            const auto y = synthesize_baseband(syms, f, 0.0);
            const auto& g = f.taps;
            double err = 0.0;
            for (std::size_t n = 0; n < syms.size(); ++n) {
                // Matched filter output at the instant of symbol n.
                cplx acc = 0.0;
                for (std::size_t k = 0; k < g.size(); ++k) acc += y.samples[n * 8 + k] * g[k];
                err += std::norm(acc - syms[n]);
            }
            const double evm = std::sqrt(err / static_cast<double>(syms.size()));
            INFO(scheme.name());
            CHECK(evm < 0.01);
        }
    }

    CHECK_THROWS_AS(synthesize_baseband({}, f, 0.0), ParameterError);
    CHECK_THROWS_AS(synthesize_baseband({cplx(1.0)}, f, 1.0), ParameterError);
}

TEST_CASE("upconvert") {
    const std::size_t n = 200;
    const auto tone = upconvert(constant(n), 0.1);
    CHECK(dft_peak(tone.samples) == 20);
    for (auto v : tone.samples) CHECK(std::abs(std::abs(v) - 1.0) < 1e-12);

    const auto x = synthesize_baseband(map_symbols(random_bits(100, 1), {Modulation::Qpsk}), rrc_taps(0.35, 8.0), 0.0);
    const auto same = upconvert(x, 0.0);
    CHECK(same.samples == x.samples);
    const auto y = upconvert(x, 0.2);
    for (std::size_t k = 0; k < x.size(); ++k) CHECK(std::abs(std::abs(y.samples[k]) - std::abs(x.samples[k])) < 1e-12);

    CHECK_THROWS_AS(upconvert(x, 0.45, 0.2), ParameterError);
    CHECK_THROWS_AS(upconvert(x, 0.05, 0.2), ParameterError);
}

TEST_CASE("add_awgn") {
    const auto x = upconvert(constant(1000000, cplx(0.6, 0.8)), 0.05);
    const auto a = add_awgn(x, 25.0, 42);
    const auto b = add_awgn(x, 25.0, 42);
    CHECK(a.samples == b.samples);
    CHECK(add_awgn(x, 25.0, 43).samples != a.samples);

    double noise = 0.0, noise_i = 0.0, noise_q = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const cplx d = a.samples[k] - x.samples[k];
        noise += std::norm(d);
        noise_i += d.real() * d.real();
        noise_q += d.imag() * d.imag();
    }
    const double snr = 10.0 * std::log10(mean_power(x) * static_cast<double>(x.size()) / noise);
    CHECK(std::abs(snr - 25.0) < 0.1);
    CHECK(noise_i / noise == doctest::Approx(0.5).epsilon(0.01));
    CHECK(noise_q / noise == doctest::Approx(0.5).epsilon(0.01));

    CHECK(add_awgn(x, kNoNoise, 1).samples == x.samples);
    CHECK_THROWS_AS(add_awgn(constant(100, 0.0), 10.0, 1), ParameterError);
    CHECK_THROWS_AS(add_awgn(ComplexSignal{}, 10.0, 1), ParameterError);
}

TEST_CASE("apply_carrier_impairment") {
    const auto x = synthesize_baseband(map_symbols(random_bits(64, 2), {Modulation::Qpsk}), rrc_taps(0.35, 8.0), 0.0);
    CHECK(apply_carrier_impairment(x, 0.0, 0.0).samples == x.samples);
    const auto r = apply_carrier_impairment(x, 0.0, kPi / 2);
    for (std::size_t k = 0; k < x.size(); ++k) {
        CHECK(std::abs(r.samples[k] - x.samples[k] * cplx(0.0, 1.0)) < 1e-12);
    }
    const auto tone = upconvert(constant(200), 0.1);
    CHECK(dft_peak(apply_carrier_impairment(tone, 0.01, 0.3).samples) == 22);
    const auto s = apply_carrier_impairment(x, 0.003, 1.0);
    for (std::size_t k = 0; k < x.size(); ++k) CHECK(std::abs(std::abs(s.samples[k]) - std::abs(x.samples[k])) < 1e-12);
}

TEST_CASE("SignalParams validation") {
    SignalParams p;
    CHECK_NOTHROW(p.validate());
    CHECK(p.bandwidth() == doctest::Approx(0.016875));
    auto bad = p;
    bad.rho = 1.0;
    CHECK_THROWS_AS(bad.validate(), ParameterError);
    bad = p;
    bad.phase_offset = kPi;
    CHECK_THROWS_AS(bad.validate(), ParameterError);
    bad = p;
    bad.freq_offset = p.symbol_rate;
    CHECK_THROWS_AS(bad.validate(), ParameterError);
    bad = p;
    bad.carrier = 0.495;
    CHECK_THROWS_AS(bad.validate(), ParameterError);
    bad = p;
    bad.carrier = 0.005;
    CHECK_THROWS_AS(bad.validate(), ParameterError);
}

TEST_CASE("synthesize_rf is deterministic and well formed") {
    SignalParams p;
    p.phase_offset = 0.7;
    p.timing_error = 0.3;
    for (auto kind : kAllModulations) {
        const auto a = synthesize_rf(p, {kind}, 8192, 99);
        const auto b = synthesize_rf(p, {kind}, 8192, 99);
        CHECK(a.size() == 8192);
        CHECK(all_finite(a));
        CHECK(a.samples == b.samples);
        CHECK(synthesize_rf(p, {kind}, 8192, 100).samples != a.samples);
    }
}

TEST_CASE("derive_seed separates streams") {
    std::set<std::uint64_t> seen;
    for (std::uint64_t i = 0; i < 100; ++i)
        for (std::uint64_t s = 0; s < 4; ++s) seen.insert(derive_seed(1, i, s));
    CHECK(seen.size() == 400);
    CHECK(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
}
