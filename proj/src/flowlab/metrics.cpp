#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>

#include "nextdit/flowlab/flowlab.hpp"
#include "nextdit/numkernel/error.hpp"

namespace nextdit::flowlab {

namespace {

double mean_pair_distance(const nk::Tensor& a, const nk::Tensor& b) {
    const std::size_t D = a.cols();
    double total = 0;
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const auto ai = a.row(i);
        double row = 0;
        for (std::size_t j = 0; j < b.rows(); ++j) {
            const auto bj = b.row(j);
            double ss = 0;
            for (std::size_t k = 0; k < D; ++k) {
                const double d = ai[k] - bj[k];
                ss += d * d;
            }
            row += std::sqrt(ss);
        }
        total += row;
    }
    return total / (static_cast<double>(a.rows()) * static_cast<double>(b.rows()));
}

}  // namespace

double energy_distance(const nk::Tensor& a, const nk::Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols()) {
        throw DimensionError("energy_distance: expected [n,D] and [m,D], got " + nk::shape_string(a.shape()) + " and " +
                             nk::shape_string(b.shape()));
    }
    if (a.rows() == 0 || b.rows() == 0) throw DomainError("energy_distance: sample sets must be non-empty");
    return 2.0 * mean_pair_distance(a, b) - mean_pair_distance(a, a) - mean_pair_distance(b, b);
}

void write_density_pgm(std::ostream& out, const nk::Tensor& points, std::size_t size, double lo, double hi) {
    if (points.rank() != 2 || points.cols() != 2) throw DimensionError("write_density_pgm: points must be [n,2]");
    if (size == 0 || !(hi > lo)) throw ConfigError("write_density_pgm: need size > 0 and hi > lo");
    std::vector<std::size_t> counts(size * size, 0);
    for (std::size_t i = 0; i < points.rows(); ++i) {
        const double fx = (points(i, 0) - lo) / (hi - lo), fy = (points(i, 1) - lo) / (hi - lo);
        if (!(fx >= 0 && fx < 1 && fy >= 0 && fy < 1)) continue;
        const auto col = static_cast<std::size_t>(fx * static_cast<double>(size));
        // y grows upwards in the picture
        const auto row = size - 1 - static_cast<std::size_t>(fy * static_cast<double>(size));
        ++counts[row * size + col];
    }
    const std::size_t peak = std::max<std::size_t>(1, *std::max_element(counts.begin(), counts.end()));
    out << "P5\n" << size << ' ' << size << "\n255\n";
    for (const std::size_t c : counts) {
        out.put(static_cast<char>(static_cast<unsigned char>((255 * c) / peak)));
    }
}

void write_points_csv(std::ostream& out, const nk::Tensor& points) {
    for (std::size_t j = 0; j < points.cols(); ++j) out << (j ? ",x" : "x") << j;
    out << '\n';
    const auto old = out.precision(17);
    for (std::size_t i = 0; i < points.rows(); ++i) {
        for (std::size_t j = 0; j < points.cols(); ++j) out << (j ? "," : "") << points(i, j);
        out << '\n';
    }
    out.precision(old);
}

std::vector<double> window_means(std::span<const double> values, std::size_t window) {
    if (window == 0) throw ConfigError("window_means: window must be positive");
    std::vector<double> out;
    for (std::size_t i = 0; i + window <= values.size(); i += window) {
        double s = 0;
        for (std::size_t j = i; j < i + window; ++j) s += values[j];
        out.push_back(s / static_cast<double>(window));
    }
    return out;
}

}  // namespace nextdit::flowlab
