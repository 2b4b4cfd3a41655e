#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

#include "nextdit/numkernel/tensor.hpp"

namespace nextdit::rope {

// literal drops the per-axis factor from the scaling exponents and interpolates with theta * s.
// consistent keeps the 2*axes factor, which makes time_aware meet interpolate at t = 0 and ntk at
// t = 1 exactly, and interpolates by dividing frequencies.
enum class Convention { literal, consistent };

enum class Strategy { extrapolate, interpolate, ntk, freq_aware, time_aware };

std::string_view to_string(Strategy s);
std::string_view to_string(Convention c);
Strategy parse_strategy(std::string_view name);
Convention parse_convention(std::string_view name);
inline constexpr std::array<Strategy, 5> kAllStrategies{Strategy::extrapolate, Strategy::interpolate, Strategy::ntk,
                                                        Strategy::freq_aware, Strategy::time_aware};

// Token position (t, h, w). A table with `axes` axes reads the last `axes` components, so 1D
// sequences put their index in w and images leave t at 0.
using Coord = std::array<double, 3>;
using Coords = std::vector<Coord>;

// Per-axis frequency tables. theta[a][j] is the frequency of dimension index d = j + 1,
// theta_d = base^(-2*axes*d/d_head), so each table is strictly decreasing and below 1.
struct RopeFreqs {
    std::size_t axes = 1;
    std::size_t d_head = 2;
    double base = 10000.0;
    Convention convention = Convention::consistent;
    std::vector<std::vector<double>> theta;

    [[nodiscard]] std::size_t per_axis() const noexcept { return d_head / (2 * axes); }
    [[nodiscard]] std::size_t pairs() const noexcept { return d_head / 2; }
};

struct ScaleSpec {
    Strategy strategy = Strategy::extrapolate;
    double s = 1.0;   // test extent / train extent, >= 1
    double L = 0.0;   // longest training extent in tokens (freq_aware)
    double t = 1.0;   // diffusion time (time_aware), 0 = noise
};

// Exponent factor 2*axes/d_head shared by every formula below.
[[nodiscard]] double exponent_scale(std::size_t d_head, std::size_t axes);

RopeFreqs freq_matrix(double base, std::size_t d_head, std::size_t axes,
                      Convention convention = Convention::consistent);

// Rotates each axis chunk of every row by coord_a * theta_a. x is [n, d_head].
nk::Tensor apply_rope(const nk::Tensor& x, const Coords& coords, const RopeFreqs& freqs);

// Angles [n, d_head/2] consumed by apply_rope and by the attention kernels.
nk::Tensor angle_table(const Coords& coords, const RopeFreqs& freqs);

// Real part of the Hermitian product of rotated queries and keys, evaluated directly from
// coordinate differences: logits[m,n] = Re sum_p q_p conj(k_p) exp(i theta_p (c_m - c_n)).
nk::Tensor rope_attention_logits(const nk::Tensor& q, const nk::Tensor& k, const Coords& coords_q,
                                 const Coords& coords_k, const RopeFreqs& freqs);

// lambda = 2*pi / theta for every table entry, same layout as theta.
std::vector<std::vector<double>> wavelength(const RopeFreqs& freqs);

// Real-valued dimension index whose wavelength equals the training extent L.
double d_target(double base, std::size_t d_head, std::size_t axes, double L,
                Convention convention = Convention::consistent);

// Frequency-aware curve evaluated at a real dimension index d (used for anchor checks).
double freq_aware_theta(const RopeFreqs& freqs, double s, double d_target_value, double d);

RopeFreqs scaled_freqs(const RopeFreqs& freqs, const ScaleSpec& spec);
// One spec per axis; lets t/h/w extrapolate independently.
RopeFreqs scaled_freqs(const RopeFreqs& freqs, std::span<const ScaleSpec> per_axis);

// CSV rows "strategy,axis,d,theta,lambda" (no header).
void write_freq_rows(std::ostream& out, std::string_view label, const RopeFreqs& freqs);
inline constexpr std::string_view kFreqCsvHeader = "strategy,axis,d,theta,lambda";

// Time-aware scaled Fourier features for point clouds. p is [n,3], freq is [F,3]; output
// [n, 2F] = [cos(2 pi p.theta'_f) ..., sin(2 pi p.theta'_f) ...] with
// theta' = theta * s^(d_head / d_t), d_t = (d_head - 1) t + 1. d_head defaults to 2F.
nk::Tensor scaled_fourier_features(const nk::Tensor& p, const nk::Tensor& freq, double t, double s,
                                   std::size_t d_head = 0);

}  // namespace nextdit::rope
