#include <cmath>
#include <ostream>
#include <string>

#include "nextdit/flowlab/flowlab.hpp"
#include "nextdit/numkernel/error.hpp"
#include "nextdit/numkernel/random.hpp"

namespace nextdit::flowlab {

namespace ad = nk::ad;

namespace {

// x_t = (1-t) x0 + t x1 and u = x1 - x0, row b of the leading axis using t[b].
void interpolate(const nk::Tensor& x1, std::span<const double> t, const nk::Tensor& noise, nk::Tensor& x_t,
                 nk::Tensor& u) {
    if (x1.shape() != noise.shape()) throw DimensionError("cfm: data and noise shapes differ");
    if (x1.rank() == 0 || x1.dim(0) != t.size()) throw DimensionError("cfm: need one t per sample");
    const std::size_t per = x1.size() / t.size();
    x_t = nk::Tensor(x1.shape());
    u = nk::Tensor(x1.shape());
    for (std::size_t b = 0; b < t.size(); ++b) {
        for (std::size_t k = b * per; k < (b + 1) * per; ++k) {
            x_t[k] = (1.0 - t[b]) * noise[k] + t[b] * x1[k];
            u[k] = x1[k] - noise[k];
        }
    }
}

}  // namespace

double cfm_loss(const Predictor& v, const nk::Tensor& x1, std::span<const double> t, const nk::Tensor& noise) {
    nk::Tensor x_t, u;
    interpolate(x1, t, noise, x_t, u);
    const nk::Tensor pred = v(x_t, t);
    nk::require_same_shape(pred.shape(), u.shape(), "cfm_loss");
    double ss = 0;
    for (std::size_t k = 0; k < u.size(); ++k) {
        const double e = pred[k] - u[k];
        ss += e * e;
    }
    return ss / static_cast<double>(t.size());
}

ad::Var cfm_loss_graph(const dit::ModelParams& m, const nk::Tensor& x1, std::span<const double> t,
                       const nk::Tensor& noise) {
    nk::Tensor x_t, u;
    interpolate(x1, t, noise, x_t, u);
    const dit::TokenBatch in = dit::images_to_tokens(m.config, x_t);
    const dit::TokenBatch target = dit::images_to_tokens(m.config, u);
    const ad::Var pred = dit::velocity_graph(m, ad::Var::constant(in.tokens), in.batch, in.coords, t, {}, in.grid);
    return ad::squared_error(pred, ad::Var::constant(target.tokens), static_cast<double>(t.size()));
}

std::vector<nk::Tensor> grad(const dit::ModelParams& m, const ad::Var& loss) {
    if (loss.value().size() != 1) throw DimensionError("grad: loss must be a scalar");
    auto params = m.parameters();
    for (ad::Var& p : params) p.zero_grad();
    ad::backward(loss);
    std::vector<nk::Tensor> out;
    out.reserve(params.size());
    for (const ad::Var& p : params) out.push_back(p.grad());
    return out;
}

nk::Tensor points_to_images(const nk::Tensor& points) {
    if (points.rank() != 2) throw DimensionError("points_to_images: expected [n,D]");
    return points.reshaped({points.dim(0), 1, 1, points.dim(1)});
}

nk::Tensor images_to_points(const nk::Tensor& images) {
    if (images.rank() != 4) throw DimensionError("images_to_points: expected [n,H,W,C]");
    return images.reshaped({images.dim(0), images.size() / images.dim(0)});
}

sampler::Velocity model_velocity(const dit::ModelParams& m) {
    return [&m](const nk::Tensor& x, double t) {
        const bool points = x.rank() == 2;
        const nk::Tensor images = points ? points_to_images(x) : x;
        const std::vector<double> ts(images.dim(0), t);
        nk::Tensor v = dit::forward_velocity_batch(m, images, ts);
        return points ? images_to_points(v) : v;
    };
}

Optimizer parse_optimizer(std::string_view name) {
    if (name == "sgd") return Optimizer::sgd;
    if (name == "adam") return Optimizer::adam;
    throw ConfigError("unknown optimizer '" + std::string(name) + "' (sgd, adam)");
}

void TrainConfig::validate() const {
    if (steps == 0 || batch == 0) throw ConfigError("train: steps and batch must be positive");
    if (!(lr >= 0) || !std::isfinite(lr)) throw ConfigError("train: lr must be finite and >= 0");
    if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1) || !(eps > 0)) {
        throw ConfigError("train: adam needs beta1, beta2 in [0,1) and eps > 0");
    }
}

TrainResult train(dit::ModelParams& m, const nk::Tensor& data, const TrainConfig& cfg) {
    cfg.validate();
    if (data.rank() != 2 && data.rank() != 4) throw DimensionError("train: data must be [n,D] or [n,H,W,C]");
    const nk::Tensor images = data.rank() == 2 ? points_to_images(data) : data;
    const std::size_t n = images.dim(0), per = images.size() / n;
    nk::Shape batch_shape = images.shape();
    batch_shape[0] = cfg.batch;

    nk::Rng rng(cfg.seed);
    auto params = m.parameters();
    std::vector<nk::Tensor> m1, m2;
    for (const ad::Var& p : params) {
        m1.emplace_back(p.shape(), 0.0);
        m2.emplace_back(p.shape(), 0.0);
    }

    TrainResult result;
    result.loss.reserve(cfg.steps);
    nk::Tensor x1(batch_shape), noise(batch_shape);
    std::vector<double> t(cfg.batch);
    for (std::size_t step = 1; step <= cfg.steps; ++step) {
        for (std::size_t b = 0; b < cfg.batch; ++b) {
            const std::size_t idx = rng.index(n);
            for (std::size_t k = 0; k < per; ++k) x1[b * per + k] = images[idx * per + k];
        }
        for (double& tb : t) tb = rng.uniform_open();
        for (std::size_t k = 0; k < noise.size(); ++k) noise[k] = rng.normal();

        const ad::Var loss = cfm_loss_graph(m, x1, t, noise);
        const double value = loss.value()[0];
        if (!std::isfinite(value)) {
            throw DivergenceError("train: loss became " + std::to_string(value) + " at step " + std::to_string(step) +
                                  " (lr " + std::to_string(cfg.lr) + ")");
        }
        result.loss.push_back(value);
        const std::vector<nk::Tensor> g = grad(m, loss);

        const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
        const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto w = params[i].mutable_value().data();
            const auto gi = g[i].data();
            if (cfg.optimizer == Optimizer::sgd) {
                for (std::size_t k = 0; k < w.size(); ++k) w[k] -= cfg.lr * gi[k];
                continue;
            }
            auto a = m1[i].data();
            auto v = m2[i].data();
            for (std::size_t k = 0; k < w.size(); ++k) {
                a[k] = cfg.beta1 * a[k] + (1.0 - cfg.beta1) * gi[k];
                v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * gi[k] * gi[k];
                w[k] -= cfg.lr * (a[k] / c1) / (std::sqrt(v[k] / c2) + cfg.eps);
            }
        }
    }
    return result;
}

void write_loss_rows(std::ostream& out, std::span<const double> loss) {
    const auto old = out.precision(17);
    for (std::size_t i = 0; i < loss.size(); ++i) out << i + 1 << ',' << loss[i] << '\n';
    out.precision(old);
}

nk::Tensor sample_model(const dit::ModelParams& m, std::size_t n, sampler::Solver solver, const sampler::Timesteps& ts,
                        std::uint64_t seed, const nk::Shape& item_shape) {
    nk::Shape shape{n};
    shape.insert(shape.end(), item_shape.begin(), item_shape.end());
    nk::Rng rng(seed);
    const nk::Tensor x0 = rng.normal_tensor(shape);
    return sampler::solve(solver, model_velocity(m), x0, ts);
}

}  // namespace nextdit::flowlab
