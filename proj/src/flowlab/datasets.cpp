#include <cmath>
#include <numbers>
#include <string>

#include "nextdit/flowlab/flowlab.hpp"
#include "nextdit/numkernel/error.hpp"
#include "nextdit/numkernel/random.hpp"

namespace nextdit::flowlab {

namespace {

constexpr double kRadius = 4.0;
constexpr double kModeStd = 0.2;

}  // namespace

std::size_t nearest_mode(double x, double y) {
    std::size_t best = 0;
    double best_d = INFINITY;
    for (std::size_t k = 0; k < 8; ++k) {
        const double a = 2.0 * std::numbers::pi * static_cast<double>(k) / 8.0;
        const double dx = x - kRadius * std::cos(a), dy = y - kRadius * std::sin(a);
        const double d = dx * dx + dy * dy;
        if (d < best_d) {
            best_d = d;
            best = k;
        }
    }
    return best;
}

nk::Tensor toy_dataset(std::string_view name, std::size_t n, std::uint64_t seed) {
    if (n == 0) throw ConfigError("toy_dataset: n must be >= 1");
    nk::Rng rng(seed);
    nk::Tensor out(nk::Shape{n, 2});
    if (name == "eight_gaussians") {
        for (std::size_t i = 0; i < n; ++i) {
            const double a = 2.0 * std::numbers::pi * static_cast<double>(rng.index(8)) / 8.0;
            out(i, 0) = kRadius * std::cos(a) + kModeStd * rng.normal();
            out(i, 1) = kRadius * std::sin(a) + kModeStd * rng.normal();
        }
    } else if (name == "two_moons") {
        for (std::size_t i = 0; i < n; ++i) {
            const double a = std::numbers::pi * rng.uniform();
            const bool upper = rng.index(2) == 0;
            out(i, 0) = (upper ? std::cos(a) : 1.0 - std::cos(a)) + 0.1 * rng.normal();
            out(i, 1) = (upper ? std::sin(a) : 0.5 - std::sin(a)) + 0.1 * rng.normal();
        }
    } else if (name == "checkerboard") {
        for (std::size_t i = 0; i < n;) {
            const double x = -4.0 + 8.0 * rng.uniform(), y = -4.0 + 8.0 * rng.uniform();
            const auto cx = static_cast<long>(std::floor((x + 4.0) / 2.0));
            const auto cy = static_cast<long>(std::floor((y + 4.0) / 2.0));
            if ((cx + cy) % 2 != 0) continue;
            out(i, 0) = x;
            out(i, 1) = y;
            ++i;
        }
    } else {
        throw ConfigError("toy_dataset: unknown dataset '" + std::string(name) +
                          "' (eight_gaussians, two_moons, checkerboard)");
    }
    return out;
}

}  // namespace nextdit::flowlab
