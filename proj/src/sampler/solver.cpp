#include <cmath>
#include <string>

#include "nextdit/numkernel/error.hpp"
#include "nextdit/numkernel/kernels.hpp"
#include "nextdit/sampler/sampler.hpp"

namespace nextdit::sampler {

void ButcherTableau::validate() const {
    const std::size_t s = b.size();
    if (s == 0 || a.size() != s || c.size() != s) throw ConfigError("tableau '" + name + "': inconsistent stage count");
    double sum_b = 0;
    for (const double w : b) sum_b += w;
    if (std::abs(sum_b - 1.0) > 1e-12) throw ConfigError("tableau '" + name + "': weights do not sum to 1");
    for (std::size_t i = 0; i < s; ++i) {
        if (a[i].size() != s) throw ConfigError("tableau '" + name + "': A must be square");
        double row = 0;
        for (std::size_t j = 0; j < s; ++j) {
            if (j >= i && a[i][j] != 0.0) throw ConfigError("tableau '" + name + "': A is not strictly lower triangular");
            row += a[i][j];
        }
        if (std::abs(row - c[i]) > 1e-12) throw ConfigError("tableau '" + name + "': c_i != sum_j A_ij");
    }
}

ButcherTableau ButcherTableau::euler() { return {"euler", {{0.0}}, {1.0}, {0.0}, 1}; }

ButcherTableau ButcherTableau::midpoint() { return {"midpoint", {{0.0, 0.0}, {0.5, 0.0}}, {0.0, 1.0}, {0.0, 0.5}, 2}; }

ButcherTableau ButcherTableau::rk4() {
    return {"rk4",
            {{0, 0, 0, 0}, {0.5, 0, 0, 0}, {0, 0.5, 0, 0}, {0, 0, 1.0, 0}},
            {1.0 / 6, 1.0 / 3, 1.0 / 3, 1.0 / 6},
            {0, 0.5, 0.5, 1.0},
            4};
}

std::string_view to_string(Solver s) {
    switch (s) {
        case Solver::euler: return "euler";
        case Solver::midpoint: return "midpoint";
        case Solver::rk4: return "rk4";
    }
    return "?";
}

Solver parse_solver(std::string_view name) {
    if (name == "euler") return Solver::euler;
    if (name == "midpoint") return Solver::midpoint;
    if (name == "rk4") return Solver::rk4;
    throw ConfigError("unknown solver '" + std::string(name) + "' (euler, midpoint, rk4)");
}

std::size_t evaluations_per_step(Solver s) {
    switch (s) {
        case Solver::euler: return 1;
        case Solver::midpoint: return 2;
        case Solver::rk4: return 4;
    }
    return 0;
}

namespace {

void check_grid(std::span<const double> ts) {
    if (ts.size() < 2) throw ConfigError("sampler: need at least two timesteps");
}

nk::Tensor checked_eval(const Velocity& v, const nk::Tensor& x, double t) {
    nk::Tensor out = v(x, t);
    if (out.shape() != x.shape()) {
        throw DimensionError("sampler: velocity returned " + nk::shape_string(out.shape()) + " for state " +
                             nk::shape_string(x.shape()));
    }
    return out;
}

// x + s * k elementwise.
void add_scaled(nk::Tensor& x, double s, const nk::Tensor& k) {
    auto xd = x.data();
    const auto kd = k.data();
    for (std::size_t i = 0; i < xd.size(); ++i) xd[i] += s * kd[i];
}

}  // namespace

nk::Tensor euler_sample(const Velocity& v, const nk::Tensor& x0, std::span<const double> ts) {
    check_grid(ts);
    nk::Tensor x = x0;
    for (std::size_t i = 0; i + 1 < ts.size(); ++i) add_scaled(x, ts[i + 1] - ts[i], checked_eval(v, x, ts[i]));
    return x;
}

nk::Tensor midpoint_sample(const Velocity& v, const nk::Tensor& x0, std::span<const double> ts) {
    check_grid(ts);
    nk::Tensor x = x0;
    for (std::size_t i = 0; i + 1 < ts.size(); ++i) {
        const double dt = ts[i + 1] - ts[i];
        const nk::Tensor d_i = checked_eval(v, x, ts[i]);
        nk::Tensor x_mid = x;
        add_scaled(x_mid, dt * 0.5, d_i);
        const nk::Tensor d = checked_eval(v, x_mid, ts[i] + dt * 0.5);
        add_scaled(x, dt, d);
    }
    return x;
}

nk::Tensor rk_sample(const ButcherTableau& tab, const Velocity& v, const nk::Tensor& x0, std::span<const double> ts) {
    tab.validate();
    check_grid(ts);
    const std::size_t s = tab.stages();
    nk::Tensor x = x0;
    std::vector<nk::Tensor> k(s);
    for (std::size_t i = 0; i + 1 < ts.size(); ++i) {
        const double h = ts[i + 1] - ts[i];
        for (std::size_t st = 0; st < s; ++st) {
            nk::Tensor y = x;
            for (std::size_t j = 0; j < st; ++j) {
                if (tab.a[st][j] != 0.0) add_scaled(y, h * tab.a[st][j], k[j]);
            }
            k[st] = checked_eval(v, y, ts[i] + h * tab.c[st]);
        }
        for (std::size_t st = 0; st < s; ++st) {
            if (tab.b[st] != 0.0) add_scaled(x, h * tab.b[st], k[st]);
        }
    }
    return x;
}

nk::Tensor solve(Solver solver, const Velocity& v, const nk::Tensor& x0, std::span<const double> ts) {
    switch (solver) {
        case Solver::euler: return euler_sample(v, x0, ts);
        case Solver::midpoint: return midpoint_sample(v, x0, ts);
        case Solver::rk4: return rk_sample(ButcherTableau::rk4(), v, x0, ts);
    }
    throw ConfigError("solve: unknown solver");
}

Velocity cfg_velocity(Velocity v_cond, Velocity v_uncond, double w) {
    if (!(w >= 0)) throw DomainError("cfg_velocity: guidance weight must be >= 0");
    return [vc = std::move(v_cond), vu = std::move(v_uncond), w](const nk::Tensor& x, double t) {
        nk::Tensor u = vu(x, t);
        const nk::Tensor c = vc(x, t);
        nk::require_same_shape(u.shape(), c.shape(), "cfg_velocity");
        auto ud = u.data();
        const auto cd = c.data();
        for (std::size_t i = 0; i < ud.size(); ++i) ud[i] = (1.0 - w) * ud[i] + w * cd[i];
        return u;
    };
}

}  // namespace nextdit::sampler
