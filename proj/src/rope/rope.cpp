#include "nextdit/rope/rope.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <ostream>
#include <string>

#include "nextdit/numkernel/error.hpp"

namespace nextdit::rope {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double log_base(double b, double x) { return std::log(x) / std::log(b); }

void check_spec(const ScaleSpec& spec) {
    if (!(spec.s >= 1.0)) throw DomainError("scaled_freqs: scale factor must be >= 1, got " + std::to_string(spec.s));
    if (!(spec.t >= 0.0 && spec.t <= 1.0)) throw DomainError("scaled_freqs: t must lie in [0,1]");
}

std::vector<double> table_for_base(double base, std::size_t d_head, std::size_t axes) {
    const double k = exponent_scale(d_head, axes);
    std::vector<double> th(d_head / (2 * axes));
    for (std::size_t j = 0; j < th.size(); ++j) th[j] = std::pow(base, -k * static_cast<double>(j + 1));
    return th;
}

std::vector<double> scale_axis(const RopeFreqs& f, const std::vector<double>& theta, const ScaleSpec& spec) {
    check_spec(spec);
    const bool literal = f.convention == Convention::literal;
    const double D = static_cast<double>(f.d_head);
    const double k = exponent_scale(f.d_head, f.axes);
    const double s = spec.s;
    std::vector<double> out(theta.size());
    auto interp = [&](double th) { return literal ? th * s : th / s; };
    auto with_base = [&](double b, std::size_t j) { return std::pow(b, -k * static_cast<double>(j + 1)); };

    switch (spec.strategy) {
        case Strategy::extrapolate: return theta;
        case Strategy::interpolate:
            std::transform(theta.begin(), theta.end(), out.begin(), interp);
            return out;
        case Strategy::ntk: {
            // With d = 1..d_head/(2 axes) the lowest frequency is base^-1, so b*s already lands it on
            // interpolation; both conventions agree here.
            const double b2 = f.base * s;
            for (std::size_t j = 0; j < out.size(); ++j) out[j] = with_base(b2, j);
            return out;
        }
        case Strategy::freq_aware: {
            const double dt = d_target(f.base, f.d_head, f.axes, spec.L, f.convention);
            const double b2 = literal ? f.base * std::pow(s, D / dt) : f.base * std::pow(s, 1.0 / (k * dt));
            for (std::size_t j = 0; j < out.size(); ++j) out[j] = std::max(with_base(b2, j), interp(theta[j]));
            return out;
        }
        case Strategy::time_aware: {
            const double d_t = (D - 1.0) * spec.t + 1.0;
            // consistent: anchor d_t / (2 axes) in (0, d_head/(2 axes)]; base exponent reduces to D / d_t.
            double b2 = f.base * std::pow(s, D / d_t);
            if (!literal) {
                const double anchor = std::clamp(d_t / (2.0 * static_cast<double>(f.axes)),
                                                 std::numeric_limits<double>::min(), static_cast<double>(f.per_axis()));
                b2 = f.base * std::pow(s, 1.0 / (k * anchor));
            }
            for (std::size_t j = 0; j < out.size(); ++j) out[j] = std::max(with_base(b2, j), interp(theta[j]));
            return out;
        }
    }
    return out;
}

}  // namespace

std::string_view to_string(Strategy s) {
    switch (s) {
        case Strategy::extrapolate: return "extrapolate";
        case Strategy::interpolate: return "interpolate";
        case Strategy::ntk: return "ntk";
        case Strategy::freq_aware: return "freq_aware";
        case Strategy::time_aware: return "time_aware";
    }
    return "?";
}

std::string_view to_string(Convention c) {
    return c == Convention::consistent ? "consistent" : "literal";
}

Strategy parse_strategy(std::string_view name) {
    for (auto s : kAllStrategies) {
        if (to_string(s) == name) return s;
    }
    throw ConfigError("unknown rope strategy '" + std::string(name) + "'");
}

Convention parse_convention(std::string_view name) {
    if (name == "consistent") return Convention::consistent;
    if (name == "literal") return Convention::literal;
    throw ConfigError("unknown rope convention '" + std::string(name) + "'");
}

double exponent_scale(std::size_t d_head, std::size_t axes) {
    return 2.0 * static_cast<double>(axes) / static_cast<double>(d_head);
}

RopeFreqs freq_matrix(double base, std::size_t d_head, std::size_t axes, Convention convention) {
    if (axes < 1 || axes > 3) throw ConfigError("freq_matrix: axes must be 1, 2 or 3");
    if (d_head == 0 || d_head % (2 * axes) != 0) {
        throw ConfigError("freq_matrix: d_head " + std::to_string(d_head) + " not divisible by 2*axes=" +
                          std::to_string(2 * axes));
    }
    if (!(base > 1.0)) throw ConfigError("freq_matrix: base must exceed 1");
    RopeFreqs f{axes, d_head, base, convention, {}};
    f.theta.assign(axes, table_for_base(base, d_head, axes));
    return f;
}

nk::Tensor angle_table(const Coords& coords, const RopeFreqs& freqs) {
    const std::size_t per = freqs.per_axis();
    nk::Tensor ang(nk::Shape{coords.size(), freqs.pairs()});
    for (std::size_t i = 0; i < coords.size(); ++i) {
        for (std::size_t a = 0; a < freqs.axes; ++a) {
            const double c = coords[i][3 - freqs.axes + a];
            for (std::size_t j = 0; j < per; ++j) ang(i, a * per + j) = c * freqs.theta[a][j];
        }
    }
    return ang;
}

nk::Tensor apply_rope(const nk::Tensor& x, const Coords& coords, const RopeFreqs& freqs) {
    if (x.rank() != 2 || x.dim(1) != freqs.d_head) {
        throw DimensionError("apply_rope: expected [n," + std::to_string(freqs.d_head) + "], got " +
                             nk::shape_string(x.shape()));
    }
    if (coords.size() != x.dim(0)) {
        throw DimensionError("apply_rope: " + std::to_string(coords.size()) + " coordinates for " +
                             std::to_string(x.dim(0)) + " tokens");
    }
    const nk::Tensor ang = angle_table(coords, freqs);
    nk::Tensor y(x.shape());
    for (std::size_t i = 0; i < x.dim(0); ++i) {
        for (std::size_t p = 0; p < freqs.pairs(); ++p) {
            const double c = std::cos(ang(i, p)), s = std::sin(ang(i, p));
            const double x0 = x(i, 2 * p), x1 = x(i, 2 * p + 1);
            y(i, 2 * p) = x0 * c - x1 * s;
            y(i, 2 * p + 1) = x0 * s + x1 * c;
        }
    }
    return y;
}

nk::Tensor rope_attention_logits(const nk::Tensor& q, const nk::Tensor& k, const Coords& coords_q,
                                 const Coords& coords_k, const RopeFreqs& freqs) {
    if (q.rank() != 2 || k.rank() != 2 || q.dim(1) != freqs.d_head || k.dim(1) != freqs.d_head) {
        throw DimensionError("rope_attention_logits: q/k must be [n," + std::to_string(freqs.d_head) + "]");
    }
    if (coords_q.size() != q.dim(0) || coords_k.size() != k.dim(0)) {
        throw DimensionError("rope_attention_logits: coordinate/token count mismatch");
    }
    const std::size_t per = freqs.per_axis();
    nk::Tensor out(nk::Shape{q.dim(0), k.dim(0)});
    for (std::size_t m = 0; m < q.dim(0); ++m) {
        for (std::size_t n = 0; n < k.dim(0); ++n) {
            std::complex<double> acc = 0;
            for (std::size_t a = 0; a < freqs.axes; ++a) {
                const std::size_t comp = 3 - freqs.axes + a;
                const double delta = coords_q[m][comp] - coords_k[n][comp];
                for (std::size_t j = 0; j < per; ++j) {
                    const std::size_t p = a * per + j;
                    const std::complex<double> zq(q(m, 2 * p), q(m, 2 * p + 1));
                    const std::complex<double> zk(k(n, 2 * p), k(n, 2 * p + 1));
                    acc += zq * std::conj(zk) * std::polar(1.0, freqs.theta[a][j] * delta);
                }
            }
            out(m, n) = acc.real();
        }
    }
    return out;
}

std::vector<std::vector<double>> wavelength(const RopeFreqs& freqs) {
    auto out = freqs.theta;
    for (auto& axis : out) {
        for (auto& v : axis) v = kTwoPi / v;
    }
    return out;
}

double d_target(double base, std::size_t d_head, std::size_t axes, double L, Convention convention) {
    if (!(L > kTwoPi)) throw DomainError("d_target: extent L must exceed 2*pi, got " + std::to_string(L));
    const double lb = log_base(base, L / kTwoPi);
    if (convention == Convention::literal) return static_cast<double>(d_head) * lb;
    return static_cast<double>(d_head) / (2.0 * static_cast<double>(axes)) * lb;
}

double freq_aware_theta(const RopeFreqs& f, double s, double dt, double d) {
    const double k = exponent_scale(f.d_head, f.axes);
    const bool literal = f.convention == Convention::literal;
    const double b2 =
        literal ? f.base * std::pow(s, static_cast<double>(f.d_head) / dt) : f.base * std::pow(s, 1.0 / (k * dt));
    const double plain = std::pow(f.base, -k * d);
    return std::max(std::pow(b2, -k * d), literal ? plain * s : plain / s);
}

RopeFreqs scaled_freqs(const RopeFreqs& freqs, const ScaleSpec& spec) {
    std::vector<ScaleSpec> all(freqs.axes, spec);
    return scaled_freqs(freqs, all);
}

RopeFreqs scaled_freqs(const RopeFreqs& freqs, std::span<const ScaleSpec> per_axis) {
    if (per_axis.size() != freqs.axes) {
        throw ConfigError("scaled_freqs: expected " + std::to_string(freqs.axes) + " per-axis specs");
    }
    RopeFreqs out = freqs;
    for (std::size_t a = 0; a < freqs.axes; ++a) out.theta[a] = scale_axis(freqs, freqs.theta[a], per_axis[a]);
    return out;
}

void write_freq_rows(std::ostream& out, std::string_view label, const RopeFreqs& freqs) {
    const auto lambda = wavelength(freqs);
    const auto old = out.precision(17);
    for (std::size_t a = 0; a < freqs.axes; ++a) {
        for (std::size_t j = 0; j < freqs.theta[a].size(); ++j) {
            out << label << ',' << a << ',' << (j + 1) << ',' << freqs.theta[a][j] << ',' << lambda[a][j] << '\n';
        }
    }
    out.precision(old);
}

}  // namespace nextdit::rope
