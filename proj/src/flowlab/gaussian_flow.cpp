#include <cmath>
#include <string>

#include "nextdit/flowlab/flowlab.hpp"
#include "nextdit/numkernel/error.hpp"

namespace nextdit::flowlab {

void GaussianFlowSpec::validate() const {
    if (m.empty()) throw ConfigError("gaussian flow: mean must have at least one component");
    if (!(s > 0)) throw ConfigError("gaussian flow: s must be > 0");
}

namespace {

void check_points(const GaussianFlowSpec& spec, const nk::Tensor& x, const char* what) {
    spec.validate();
    if (x.cols() != spec.m.size()) {
        throw DimensionError(std::string(what) + ": points have " + std::to_string(x.cols()) + " components, mean has " +
                             std::to_string(spec.m.size()));
    }
}

}  // namespace

nk::Tensor gaussian_flow_velocity(const GaussianFlowSpec& spec, const nk::Tensor& x, double t) {
    check_points(spec, x, "gaussian_flow_velocity");
    if (!(t >= 0.0 && t <= 1.0)) throw DomainError("gaussian_flow_velocity: t must lie in [0, 1]");
    const double s2 = spec.s * spec.s, u = 1.0 - t;
    const double g = (t * s2 - u) / (u * u + t * t * s2);
    nk::Tensor out(x.shape());
    const std::size_t D = spec.m.size();
    for (std::size_t r = 0; r < x.rows(); ++r) {
        for (std::size_t j = 0; j < D; ++j) out(r, j) = spec.m[j] + g * (x(r, j) - t * spec.m[j]);
    }
    return out;
}

sampler::Velocity gaussian_flow_field(GaussianFlowSpec spec) {
    spec.validate();
    return [spec = std::move(spec)](const nk::Tensor& x, double t) {
        // Sub-step times can overshoot 1 by an ulp.
        return gaussian_flow_velocity(spec, x, std::fmin(std::fmax(t, 0.0), 1.0));
    };
}

nk::Tensor gaussian_flow_transport(const GaussianFlowSpec& spec, const nk::Tensor& x0, double t) {
    check_points(spec, x0, "gaussian_flow_transport");
    const double u = 1.0 - t;
    const double scale = std::sqrt(u * u + t * t * spec.s * spec.s);
    nk::Tensor out(x0.shape());
    for (std::size_t r = 0; r < x0.rows(); ++r) {
        for (std::size_t j = 0; j < spec.m.size(); ++j) out(r, j) = t * spec.m[j] + scale * x0(r, j);
    }
    return out;
}

}  // namespace nextdit::flowlab
