#include <cmath>
#include <numbers>

#include "nextdit/numkernel/error.hpp"
#include "nextdit/rope/rope.hpp"

namespace nextdit::rope {

nk::Tensor scaled_fourier_features(const nk::Tensor& p, const nk::Tensor& freq, double t, double s, std::size_t d_head) {
    if (p.rank() != 2 || p.dim(1) != 3) throw DimensionError("scaled_fourier_features: points must be [n,3]");
    if (freq.rank() != 2 || freq.dim(1) != 3) throw DimensionError("scaled_fourier_features: frequencies must be [F,3]");
    if (!(t >= 0.0 && t <= 1.0)) throw DomainError("scaled_fourier_features: t must lie in [0,1]");
    if (!(s >= 1.0)) throw DomainError("scaled_fourier_features: s must be >= 1");
    const std::size_t F = freq.dim(0);
    const double D = static_cast<double>(d_head == 0 ? 2 * F : d_head);
    const double d_t = (D - 1.0) * t + 1.0;
    const double gain = std::pow(s, D / d_t);
    const std::size_t n = p.dim(0);
    nk::Tensor out(nk::Shape{n, 2 * F});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t f = 0; f < F; ++f) {
            double phase = 0;
            for (std::size_t c = 0; c < 3; ++c) phase += p(i, c) * freq(f, c) * gain;
            phase *= 2.0 * std::numbers::pi;
            out(i, f) = std::cos(phase);
            out(i, F + f) = std::sin(phase);
        }
    }
    return out;
}

}  // namespace nextdit::rope
