#include <cmath>
#include <ostream>
#include <stdexcept>
#include <string>

#include "nextdit/numkernel/error.hpp"
#include "nextdit/sampler/sampler.hpp"

namespace nextdit::sampler {

std::string_view to_string(ScheduleKind k) {
    switch (k) {
        case ScheduleKind::uniform: return "uniform";
        case ScheduleKind::rational: return "rational";
        case ScheduleKind::sigmoid: return "sigmoid";
    }
    return "?";
}

std::string_view to_string(ScheduleForm f) {
    return f == ScheduleForm::literal ? "literal" : "normalized";
}

ScheduleKind parse_schedule_kind(std::string_view name) {
    if (name == "uniform") return ScheduleKind::uniform;
    if (name == "rational") return ScheduleKind::rational;
    if (name == "sigmoid") return ScheduleKind::sigmoid;
    throw ConfigError("unknown schedule '" + std::string(name) + "' (uniform, rational, sigmoid)");
}

ScheduleForm parse_schedule_form(std::string_view name) {
    if (name == "literal") return ScheduleForm::literal;
    if (name == "normalized" || name == "endpoint_normalized") return ScheduleForm::endpoint_normalized;
    throw ConfigError("unknown schedule form '" + std::string(name) + "' (literal, normalized)");
}

void ScheduleSpec::validate() const {
    if (steps == 0) throw ConfigError("schedule: steps must be >= 1");
    if (kind == ScheduleKind::rational) {
        if (!(sigma > 0)) throw ConfigError("schedule: sigma must be > 0");
        // t / (sigma - t + sigma t) has a pole inside [0, 1] once 2 sigma - 1 <= 0.
        if (form == ScheduleForm::literal && !(sigma > 0.5)) {
            throw ConfigError("schedule: literal rational form needs sigma > 0.5");
        }
    }
    if (kind == ScheduleKind::sigmoid) {
        if (!(alpha > 0) || !(beta > 0)) throw ConfigError("schedule: alpha and beta must be > 0");
        if (!(mu > 0) || !(mu < 1)) throw ConfigError("schedule: mu must lie in (0, 1)");
    }
}

double sigmoid_lower(double t, double mu, double alpha) { return 1.0 / (1.0 + std::exp(-alpha * (t - mu))); }

double sigmoid_upper(double t, double mu, double beta) { return 1.0 - 1.0 / (1.0 + std::exp(beta * (t - mu))); }

namespace {

double sigmoid_raw(const ScheduleSpec& s, double t) {
    return t < s.mu ? sigmoid_lower(t, s.mu, s.alpha) : sigmoid_upper(t, s.mu, s.beta);
}

}  // namespace

double warp(const ScheduleSpec& s, double t) {
    switch (s.kind) {
        case ScheduleKind::uniform: return t;
        case ScheduleKind::rational:
            if (s.form == ScheduleForm::literal) return t / (s.sigma + (s.sigma - 1.0) * t);
            return s.sigma * t / (1.0 + (s.sigma - 1.0) * t);
        case ScheduleKind::sigmoid: {
            const double raw = sigmoid_raw(s, t);
            if (s.form == ScheduleForm::literal) return raw;
            const double lo = sigmoid_raw(s, 0.0), hi = sigmoid_raw(s, 1.0);
            return (raw - lo) / (hi - lo);
        }
    }
    return t;
}

Timesteps make_schedule(const ScheduleSpec& spec) {
    spec.validate();
    Timesteps ts(spec.steps + 1);
    const double n = static_cast<double>(spec.steps);
    for (std::size_t i = 0; i <= spec.steps; ++i) {
        // i / N, with the last entry pinned so the uniform grid ends at exactly 1.
        const double u = i == spec.steps ? 1.0 : static_cast<double>(i) / n;
        ts[i] = warp(spec, u);
    }
    for (std::size_t i = 1; i < ts.size(); ++i) {
        // steep sigmoids saturate in double precision and collapse neighbouring points
        if (!(ts[i] > ts[i - 1])) {
            throw ConfigError("make_schedule: grid is not strictly increasing at i=" + std::to_string(i) +
                              " (schedule saturates; lower alpha/beta or steps)");
        }
    }
    return ts;
}

void write_schedule_rows(std::ostream& out, std::span<const double> ts) {
    const auto old = out.precision(17);
    for (std::size_t i = 0; i < ts.size(); ++i) out << i << ',' << ts[i] << '\n';
    out.precision(old);
}

}  // namespace nextdit::sampler
