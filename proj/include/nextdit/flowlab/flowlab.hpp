#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nextdit/dit/model.hpp"
#include "nextdit/numkernel/tensor.hpp"
#include "nextdit/sampler/sampler.hpp"

namespace nextdit::flowlab {

// ---------------------------------------------------------------------------------------------
// Analytic oracle for the linear path x_t = (1-t) x0 + t x1, x0 ~ N(0, I), x1 ~ N(m, s^2 I).

struct GaussianFlowSpec {
    std::vector<double> m;
    double s = 1.0;

    void validate() const;
};

// u(x, t) = m + g(t) (x - t m), g = (t s^2 - (1-t)) / ((1-t)^2 + t^2 s^2). x is [n, D].
nk::Tensor gaussian_flow_velocity(const GaussianFlowSpec& spec, const nk::Tensor& x, double t);
sampler::Velocity gaussian_flow_field(GaussianFlowSpec spec);

// Closed-form flow map from the source: x_t = t m + sqrt((1-t)^2 + t^2 s^2) x0.
nk::Tensor gaussian_flow_transport(const GaussianFlowSpec& spec, const nk::Tensor& x0, double t);

// ---------------------------------------------------------------------------------------------
// Data

// eight_gaussians: equal-weight modes at 4 (cos 2 pi k/8, sin 2 pi k/8), std 0.2.
// two_moons: upper arc (cos a, sin a) and lower arc (1 - cos a, 1/2 - sin a), a ~ U[0, pi], noise 0.1.
// checkerboard: x ~ U[-4, 4) restricted to the unit-2 cells with an even index sum.
nk::Tensor toy_dataset(std::string_view name, std::size_t n, std::uint64_t seed);
inline constexpr std::string_view kDatasetNames[] = {"eight_gaussians", "two_moons", "checkerboard"};

// Index of the eight_gaussians mode nearest to p.
std::size_t nearest_mode(double x, double y);

// ---------------------------------------------------------------------------------------------
// Flow matching

// Batched velocity predictor: (x_t [B, ...], t [B]) -> prediction with the shape of x_t.
using Predictor = std::function<nk::Tensor(const nk::Tensor& x_t, std::span<const double> t)>;

// mean_b |v(x_t, t) - (x1 - x0)|^2 with x_t = (1-t) x0 + t x1. Leading axis is the batch.
double cfm_loss(const Predictor& v, const nk::Tensor& x1, std::span<const double> t, const nk::Tensor& noise);

// Same objective on the model as a differentiable graph. x1 and noise are [B, H, W, C].
nk::ad::Var cfm_loss_graph(const dit::ModelParams& m, const nk::Tensor& x1, std::span<const double> t,
                           const nk::Tensor& noise);

// Gradient of a scalar graph with respect to every model parameter, in named_parameters() order.
std::vector<nk::Tensor> grad(const dit::ModelParams& m, const nk::ad::Var& loss);

// Points [n, D] are fed to the model as [n, 1, 1, D] images (single token of D channels).
nk::Tensor points_to_images(const nk::Tensor& points);
nk::Tensor images_to_points(const nk::Tensor& images);

// Velocity on points [n, D] (or images [n, H, W, C]) evaluated by the model.
sampler::Velocity model_velocity(const dit::ModelParams& m);

// ---------------------------------------------------------------------------------------------
// Training

enum class Optimizer { sgd, adam };
Optimizer parse_optimizer(std::string_view name);

struct TrainConfig {
    std::size_t steps = 5000;
    std::size_t batch = 256;
    double lr = 1e-3;
    Optimizer optimizer = Optimizer::adam;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t seed = 0;

    void validate() const;
};

struct TrainResult {
    std::vector<double> loss;  // one entry per step
};

// data is [n, D] points or [n, H, W, C] images. Minibatches are drawn with replacement; t is
// uniform on (0, 1). Throws DivergenceError when the loss becomes non-finite.
TrainResult train(dit::ModelParams& m, const nk::Tensor& data, const TrainConfig& cfg);

void write_loss_rows(std::ostream& out, std::span<const double> loss);
inline constexpr const char* kLossCsvHeader = "step,loss";

// Smoothed curve: mean over consecutive windows of `window` steps.
std::vector<double> window_means(std::span<const double> values, std::size_t window);

// Draws n points (or images of the model's token shape) by integrating the model velocity.
nk::Tensor sample_model(const dit::ModelParams& m, std::size_t n, sampler::Solver solver, const sampler::Timesteps& ts,
                        std::uint64_t seed, const nk::Shape& item_shape);

// ---------------------------------------------------------------------------------------------
// Metrics and artifacts

// V-statistic form 2 E|a-b| - E|a-a'| - E|b-b'| over all pairs (zero when a == b).
double energy_distance(const nk::Tensor& a, const nk::Tensor& b);

// 2D histogram of points in [lo, hi)^2 rendered as a binary PGM (P5, maxval 255).
void write_density_pgm(std::ostream& out, const nk::Tensor& points, std::size_t size, double lo, double hi);

void write_points_csv(std::ostream& out, const nk::Tensor& points);

}  // namespace nextdit::flowlab
