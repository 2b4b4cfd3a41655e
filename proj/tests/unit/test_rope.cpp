#include <cmath>
#include <numbers>
#include <sstream>

#include "doctest.h"
#include "nextdit/numkernel/error.hpp"
#include "nextdit/rope/rope.hpp"
#include "support.hpp"

using namespace nextdit;
using nk::Shape;
using nk::Tensor;
using rope::Strategy;

namespace {

rope::Coords random_coords(nk::Rng& rng, std::size_t n) {
    rope::Coords c(n);
    for (auto& p : c) p = {std::floor(8 * rng.uniform()), std::floor(8 * rng.uniform()), std::floor(8 * rng.uniform())};
    return c;
}

double dot_rows(const Tensor& a, std::size_t i, const Tensor& b, std::size_t j) {
    double s = 0;
    for (std::size_t c = 0; c < a.cols(); ++c) s += a(i, c) * b(j, c);
    return s;
}

}  // namespace

TEST_CASE("frequency table layout") {
    const auto f = rope::freq_matrix(10000.0, 12, 3);
    REQUIRE(f.theta.size() == 3);
    REQUIRE(f.theta[0].size() == 2);
    // theta_d = b^(-2*axes*d/d_head), d = 1..d_head/(2 axes)
    CHECK(f.theta[0][0] == doctest::Approx(std::pow(10000.0, -6.0 / 12)).epsilon(1e-15));
    CHECK(f.theta[2][1] == doctest::Approx(std::pow(10000.0, -12.0 / 12)).epsilon(1e-15));
    CHECK_THROWS_AS(rope::freq_matrix(10000.0, 10, 3), ConfigError);
    CHECK_THROWS_AS(rope::freq_matrix(10000.0, 12, 4), ConfigError);
    CHECK_THROWS_AS(rope::freq_matrix(1.0, 12, 1), ConfigError);
}

TEST_CASE("single pair rotates by position times frequency") {
    rope::RopeFreqs f;
    f.axes = 1;
    f.d_head = 2;
    f.base = 10000.0;
    f.theta = {{1.0}};
    const Tensor x({1, 2}, {1.0, 0.0});
    const Tensor y = rope::apply_rope(x, {{0, 0, 1}}, f);
    CHECK(y(0, 0) == doctest::Approx(std::cos(1.0)).epsilon(1e-15));
    CHECK(y(0, 1) == doctest::Approx(std::sin(1.0)).epsilon(1e-15));
}

TEST_CASE("axes read their own coordinate") {
    // Only the h coordinate moves: w-chunk must be untouched.
    const auto f = rope::freq_matrix(100.0, 8, 2);
    nk::Rng rng(1);
    const Tensor x = rng.normal_tensor({1, 8});
    const Tensor y = rope::apply_rope(x, {{0, 3, 0}}, f);
    for (std::size_t c = 4; c < 8; ++c) CHECK(y(0, c) == x(0, c));
    CHECK(y(0, 0) != x(0, 0));
}

TEST_CASE("rotated dot products equal the relative-offset logits") {
    nk::Rng rng(2);
    for (std::size_t axes = 1; axes <= 3; ++axes) {
        const auto f = rope::freq_matrix(10000.0, 12, axes);
        const Tensor q = rng.normal_tensor({5, 12}), k = rng.normal_tensor({6, 12});
        const auto cq = random_coords(rng, 5), ck = random_coords(rng, 6);
        const Tensor logits = rope::rope_attention_logits(q, k, cq, ck, f);
        const Tensor rq = rope::apply_rope(q, cq, f), rk = rope::apply_rope(k, ck, f);
        for (std::size_t i = 0; i < 5; ++i) {
            for (std::size_t j = 0; j < 6; ++j) CHECK(std::abs(logits(i, j) - dot_rows(rq, i, rk, j)) < 1e-9);
        }
    }
}

TEST_CASE("strategy parsing and errors") {
    CHECK(rope::parse_strategy("freq_aware") == Strategy::freq_aware);
    CHECK_THROWS_AS(rope::parse_strategy("yarn"), ConfigError);
    CHECK(rope::parse_convention("literal") == rope::Convention::literal);
    const auto f = rope::freq_matrix(10000.0, 12, 3);
    CHECK_THROWS_AS(rope::scaled_freqs(f, rope::ScaleSpec{Strategy::ntk, 0.5, 16, 1}), DomainError);
    CHECK_THROWS_AS(rope::scaled_freqs(f, rope::ScaleSpec{Strategy::time_aware, 2, 16, 1.5}), DomainError);
    CHECK_THROWS_AS(rope::d_target(10000.0, 12, 3, 6.0), DomainError);
}

TEST_CASE("scale factor one leaves every strategy at the base table") {
    const auto f = rope::freq_matrix(10000.0, 24, 3);
    for (const auto s : rope::kAllStrategies) {
        const auto g = rope::scaled_freqs(f, rope::ScaleSpec{s, 1.0, 64, 0.5});
        for (std::size_t a = 0; a < 3; ++a) {
            for (std::size_t j = 0; j < f.per_axis(); ++j) {
                CHECK(g.theta[a][j] == doctest::Approx(f.theta[a][j]).epsilon(1e-14));
            }
        }
    }
}

TEST_CASE("interpolation and ntk closed forms") {
    const double b = 5, s = 4;
    const std::size_t D = 24, axes = 3;
    const auto f = rope::freq_matrix(b, D, axes);
    const auto interp = rope::scaled_freqs(f, {Strategy::interpolate, s, 16, 1});
    const auto ntk = rope::scaled_freqs(f, {Strategy::ntk, s, 16, 1});
    for (std::size_t j = 0; j < f.per_axis(); ++j) {
        const double d = static_cast<double>(j + 1);
        CHECK(interp.theta[0][j] == doctest::Approx(std::pow(b, -6.0 * d / 24) / s).epsilon(1e-14));
        CHECK(ntk.theta[0][j] == doctest::Approx(std::pow(b * s, -6.0 * d / 24)).epsilon(1e-14));
    }
    // lowest frequency under ntk coincides with interpolation
    CHECK(ntk.theta[0].back() == doctest::Approx(interp.theta[0].back()).epsilon(1e-14));
    // highest frequency under ntk stays closest to extrapolation
    CHECK(ntk.theta[0].front() / f.theta[0].front() > interp.theta[0].front() / f.theta[0].front());
}

TEST_CASE("d_target is the dimension whose wavelength equals the extent") {
    const double b = 5, L = 16;
    const double dt = rope::d_target(b, 24, 3, L);
    const double theta = std::pow(b, -6.0 * dt / 24);
    CHECK(2 * std::numbers::pi / theta == doctest::Approx(L).epsilon(1e-12));
    // literal convention drops the per-axis factor
    const double lit = rope::d_target(b, 24, 3, L, rope::Convention::literal);
    CHECK(lit == doctest::Approx(6 * dt).epsilon(1e-12));
}

TEST_CASE("time-aware scaling moves from interpolation to ntk monotonically") {
    const auto f = rope::freq_matrix(10000.0, 24, 3);
    const auto at = [&](double t) { return rope::scaled_freqs(f, {Strategy::time_aware, 4, 64, t}); };
    double prev_t = 0;
    auto prev = at(0);
    for (double t = 0.1; t <= 1.0001; t += 0.1) {
        const auto cur = at(std::min(t, 1.0));
        for (std::size_t j = 0; j < f.per_axis(); ++j) CHECK(cur.theta[1][j] >= prev.theta[1][j] * (1 - 1e-15));
        prev = cur;
        prev_t = t;
    }
    CHECK(prev_t > 0.9);
}

TEST_CASE("frequency CSV rows") {
    const auto f = rope::freq_matrix(5, 24, 3);
    std::ostringstream out;
    rope::write_freq_rows(out, "ntk", f);
    std::istringstream in(out.str());
    std::string line;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        ++rows;
        CHECK(line.rfind("ntk,", 0) == 0);
        CHECK(std::count(line.begin(), line.end(), ',') == 4);
    }
    CHECK(rows == 12);
    CHECK(std::string(rope::kFreqCsvHeader) == "strategy,axis,d,theta,lambda");
}

TEST_CASE("time-aware Fourier features") {
    nk::Rng rng(3);
    const Tensor p = rng.normal_tensor({4, 3});
    const Tensor freq = rng.normal_tensor({5, 3});
    // s = 1 or t where d_t... with s = 1 the features are the plain Fourier map
    const Tensor y = rope::scaled_fourier_features(p, freq, 0.3, 1.0);
    REQUIRE(y.shape() == Shape{4, 10});
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t f = 0; f < 5; ++f) {
            double a = 0;
            for (std::size_t c = 0; c < 3; ++c) a += p(i, c) * freq(f, c);
            CHECK(y(i, f) == doctest::Approx(std::cos(2 * std::numbers::pi * a)).epsilon(1e-12));
            CHECK(y(i, 5 + f) == doctest::Approx(std::sin(2 * std::numbers::pi * a)).epsilon(1e-12));
        }
    }
    // at t = 1, d_t = d_head and the frequencies scale by s
    const Tensor z = rope::scaled_fourier_features(p, freq, 1.0, 2.0);
    double a = 0;
    for (std::size_t c = 0; c < 3; ++c) a += p(0, c) * freq(0, c) * 2.0;
    CHECK(z(0, 0) == doctest::Approx(std::cos(2 * std::numbers::pi * a)).epsilon(1e-12));
}
