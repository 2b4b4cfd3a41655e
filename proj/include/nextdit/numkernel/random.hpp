#pragma once

#include <cstdint>
#include <random>

#include "nextdit/numkernel/tensor.hpp"

namespace nextdit::nk {

// Seeded generator shared by initializers, datasets and samplers.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double normal() { return normal_(engine_); }
    double uniform() { return uniform_(engine_); }
    // Uniform on the open interval (0, 1).
    double uniform_open();
    std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_); }
    // Normal with std `std`, resampled outside +-2 std.
    double truncated_normal(double std);

    Tensor normal_tensor(Shape shape, double std = 1.0);
    Tensor truncated_normal_tensor(Shape shape, double std);
    Tensor uniform_tensor(Shape shape, double lo, double hi);

    std::mt19937_64& engine() noexcept { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace nextdit::nk
