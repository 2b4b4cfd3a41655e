#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cmath>
#include <functional>
#include <vector>

#include "nextdit/numkernel/autograd.hpp"
#include "nextdit/numkernel/random.hpp"
#include "nextdit/numkernel/tensor.hpp"

namespace testsupport {

using nextdit::nk::Tensor;
namespace ad = nextdit::nk::ad;

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

inline bool bitwise_equal(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (std::bit_cast<std::uint64_t>(a[i]) != std::bit_cast<std::uint64_t>(b[i])) return false;
    }
    return true;
}

struct GradCheck {
    double max_rel = 0;
    std::size_t checked = 0;
};

// Central differences against reverse mode. With `sample` > 0 only that many coordinates, drawn
// uniformly over all parameter entries, are perturbed; otherwise every coordinate is. f rebuilds
// the scalar graph from the current parameter values. The relative error denominator is floored
// so coordinates with a (near) zero derivative compare absolutely.
inline GradCheck check_gradients(std::vector<ad::Var> params, const std::function<ad::Var()>& f, double eps = 1e-6,
                                 double floor = 1e-8, std::size_t sample = 0, std::uint64_t seed = 0) {
    for (auto& p : params) p.zero_grad();
    ad::backward(f());
    std::vector<Tensor> grads;
    std::vector<std::pair<std::size_t, std::size_t>> coords;
    for (std::size_t k = 0; k < params.size(); ++k) {
        grads.push_back(params[k].grad());
        for (std::size_t i = 0; i < params[k].value().size(); ++i) coords.emplace_back(k, i);
    }
    if (sample > 0 && sample < coords.size()) {
        nextdit::nk::Rng rng(seed);
        std::shuffle(coords.begin(), coords.end(), rng.engine());
        coords.resize(sample);
    }
    GradCheck out;
    for (const auto& [k, i] : coords) {
        double& w = params[k].mutable_value().data()[i];
        const double keep = w;
        w = keep + eps;
        const double up = f().value()[0];
        w = keep - eps;
        const double down = f().value()[0];
        w = keep;
        const double fd = (up - down) / (2 * eps);
        const double g = grads[k][i];
        const double rel = std::abs(fd - g) / std::max({std::abs(fd), std::abs(g), floor});
        out.max_rel = std::max(out.max_rel, rel);
        ++out.checked;
    }
    return out;
}

}  // namespace testsupport
