#include <cmath>
#include <limits>
#include <ostream>

#include "nextdit/numkernel/error.hpp"
#include "nextdit/sampler/sampler.hpp"

namespace nextdit::sampler {

namespace {

void euler_steps(const Velocity& v, nk::Tensor& x, double t0, double t1, std::size_t steps) {
    const double h = (t1 - t0) / static_cast<double>(steps);
    for (std::size_t k = 0; k < steps; ++k) {
        const nk::Tensor d = v(x, t0 + h * static_cast<double>(k));
        if (d.shape() != x.shape()) throw DimensionError("diagnostics: velocity changed the state shape");
        auto xd = x.data();
        const auto dd = d.data();
        for (std::size_t i = 0; i < xd.size(); ++i) xd[i] += h * dd[i];
    }
}

// Mean over rows of the row-wise L2 norm of a - b (+ c when given, with weights).
double mean_row_norm(const nk::Tensor& a, const nk::Tensor& b, double wb, const nk::Tensor* c = nullptr, double wc = 0) {
    const std::size_t cols = a.cols(), rows = a.rows();
    double total = 0;
    for (std::size_t r = 0; r < rows; ++r) {
        double ss = 0;
        for (std::size_t j = 0; j < cols; ++j) {
            double e = a(r, j) - wb * b(r, j);
            if (c) e -= wc * (*c)(r, j);
            ss += e * e;
        }
        total += std::sqrt(ss);
    }
    return total / static_cast<double>(rows);
}

double anchor_time(std::size_t i, std::size_t n) {
    return i == n ? 1.0 : static_cast<double>(i) / static_cast<double>(n);
}

}  // namespace

std::vector<double> truncation_error_profile(const Velocity& v, const nk::Tensor& x0, std::size_t n_anchor,
                                             std::size_t oracle_substeps) {
    if (n_anchor == 0) throw ConfigError("truncation_error_profile: need at least one anchor step");
    if (oracle_substeps < 2) throw ConfigError("truncation_error_profile: oracle needs at least two sub-steps");
    std::vector<double> tau(n_anchor);
    nk::Tensor x = x0;
    for (std::size_t i = 0; i < n_anchor; ++i) {
        const double t0 = anchor_time(i, n_anchor), t1 = anchor_time(i + 1, n_anchor);
        nk::Tensor x_hat = x;
        euler_steps(v, x_hat, t0, t1, 1);
        euler_steps(v, x, t0, t1, oracle_substeps);
        tau[i] = mean_row_norm(x, x_hat, 1.0);
    }
    return tau;
}

std::vector<double> curvature_profile(const Velocity& v, const nk::Tensor& x0, std::size_t n_anchor,
                                      std::size_t oracle_substeps) {
    if (n_anchor < 3) throw ConfigError("curvature_profile: need at least three anchor steps");
    if (oracle_substeps == 0) throw ConfigError("curvature_profile: oracle needs at least one sub-step");
    std::vector<nk::Tensor> traj{x0};
    traj.reserve(n_anchor + 1);
    for (std::size_t i = 0; i < n_anchor; ++i) {
        nk::Tensor x = traj.back();
        euler_steps(v, x, anchor_time(i, n_anchor), anchor_time(i + 1, n_anchor), oracle_substeps);
        traj.push_back(std::move(x));
    }
    std::vector<double> kappa;
    kappa.reserve(n_anchor - 1);
    for (std::size_t i = 1; i < n_anchor; ++i) kappa.push_back(mean_row_norm(traj[i], traj[i + 1], 0.5, &traj[i - 1], 0.5));
    return kappa;
}

void write_diagnostic_rows(std::ostream& out, std::span<const double> tau, std::span<const double> kappa) {
    const std::size_t n = tau.size();
    if (kappa.size() + 1 != n) throw DimensionError("write_diagnostic_rows: kappa must have one entry fewer than tau");
    const auto old = out.precision(17);
    for (std::size_t i = 0; i <= n; ++i) {
        out << i << ',' << anchor_time(i, n) << ',';
        if (i < n) out << tau[i]; else out << "nan";
        out << ',';
        if (i >= 1 && i < n) out << kappa[i - 1]; else out << "nan";
        out << '\n';
    }
    out.precision(old);
}

}  // namespace nextdit::sampler
