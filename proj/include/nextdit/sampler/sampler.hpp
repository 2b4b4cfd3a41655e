#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nextdit/numkernel/tensor.hpp"

namespace nextdit::sampler {

// Time runs from 0 (noise) to 1 (data).

enum class ScheduleKind { uniform, rational, sigmoid };
enum class ScheduleForm { literal, endpoint_normalized };

std::string_view to_string(ScheduleKind k);
std::string_view to_string(ScheduleForm f);
ScheduleKind parse_schedule_kind(std::string_view name);
ScheduleForm parse_schedule_form(std::string_view name);

struct ScheduleSpec {
    ScheduleKind kind = ScheduleKind::uniform;
    std::size_t steps = 16;
    double sigma = 1.0;
    double mu = 0.6;
    double alpha = 6.0;
    double beta = 20.0;
    ScheduleForm form = ScheduleForm::endpoint_normalized;

    void validate() const;
};

using Timesteps = std::vector<double>;

// The two sigmoid branches, each evaluated on its own (both give 0.5 at t = mu).
double sigmoid_lower(double t, double mu, double alpha);
double sigmoid_upper(double t, double mu, double beta);

// Warp t' applied to a single time; the normalized sigmoid is rescaled to hit 0 and 1.
double warp(const ScheduleSpec& spec, double t);

// Warped uniform grid i/N, i = 0..N. Strictly increasing.
Timesteps make_schedule(const ScheduleSpec& spec);

void write_schedule_rows(std::ostream& out, std::span<const double> ts);
inline constexpr const char* kScheduleCsvHeader = "i,t";

// ---------------------------------------------------------------------------------------------
// Solvers

using Velocity = std::function<nk::Tensor(const nk::Tensor& x, double t)>;

struct ButcherTableau {
    std::string name;
    std::vector<std::vector<double>> a;  // stages x stages, strictly lower triangular
    std::vector<double> b;
    std::vector<double> c;
    int order = 1;

    [[nodiscard]] std::size_t stages() const noexcept { return b.size(); }
    void validate() const;

    static ButcherTableau euler();
    static ButcherTableau midpoint();
    static ButcherTableau rk4();
};

enum class Solver { euler, midpoint, rk4 };
std::string_view to_string(Solver s);
Solver parse_solver(std::string_view name);

nk::Tensor euler_sample(const Velocity& v, const nk::Tensor& x0, std::span<const double> ts);
nk::Tensor midpoint_sample(const Velocity& v, const nk::Tensor& x0, std::span<const double> ts);
nk::Tensor rk_sample(const ButcherTableau& tableau, const Velocity& v, const nk::Tensor& x0, std::span<const double> ts);
nk::Tensor solve(Solver solver, const Velocity& v, const nk::Tensor& x0, std::span<const double> ts);

// Velocity evaluations per interval.
std::size_t evaluations_per_step(Solver solver);

Velocity cfg_velocity(Velocity v_cond, Velocity v_uncond, double w);

// ---------------------------------------------------------------------------------------------
// Trajectory diagnostics on a uniform anchor grid. x0 is [batch, dim] (or a single vector);
// magnitudes are L2 norms averaged over the batch.

// tau_i = |x_{i+1} - (x_i + h v(x_i, t_i))| where x_{i+1} comes from `oracle_substeps` Euler
// sub-steps started at x_i; x_i follows the oracle trajectory. N entries.
std::vector<double> truncation_error_profile(const Velocity& v, const nk::Tensor& x0, std::size_t n_anchor,
                                             std::size_t oracle_substeps = 100);

// kappa_i = |x_i - (x_{i+1} + x_{i-1}) / 2| along the oracle trajectory for i = 1..N-1.
std::vector<double> curvature_profile(const Velocity& v, const nk::Tensor& x0, std::size_t n_anchor,
                                      std::size_t oracle_substeps = 100);

// CSV rows "i,t,tau,kappa"; kappa is nan at the end points.
void write_diagnostic_rows(std::ostream& out, std::span<const double> tau, std::span<const double> kappa);
inline constexpr const char* kDiagnosticCsvHeader = "i,t,tau,kappa";

}  // namespace nextdit::sampler
