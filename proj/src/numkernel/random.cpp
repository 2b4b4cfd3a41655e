#include "nextdit/numkernel/random.hpp"

#include <cmath>

namespace nextdit::nk {

double Rng::uniform_open() {
    double u = 0.0;
    do {
        u = uniform();
    } while (u <= 0.0);
    return u;
}

double Rng::truncated_normal(double std) {
    for (;;) {
        const double z = normal();
        if (std::abs(z) <= 2.0) return z * std;
    }
}

Tensor Rng::normal_tensor(Shape shape, double std) {
    Tensor t(std::move(shape));
    for (auto& v : t.data()) v = normal() * std;
    return t;
}

Tensor Rng::truncated_normal_tensor(Shape shape, double std) {
    Tensor t(std::move(shape));
    for (auto& v : t.data()) v = truncated_normal(std);
    return t;
}

Tensor Rng::uniform_tensor(Shape shape, double lo, double hi) {
    Tensor t(std::move(shape));
    for (auto& v : t.data()) v = lo + (hi - lo) * uniform();
    return t;
}

}  // namespace nextdit::nk
