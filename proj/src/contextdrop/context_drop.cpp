#include "nextdit/contextdrop/context_drop.hpp"

#include <algorithm>
#include <ostream>
#include <string>

#include "nextdit/numkernel/error.hpp"

namespace nextdit::contextdrop {

double drop_ratio(double t, const DropSpec& spec) {
    if (!(t >= 0.0 && t <= 1.0)) throw DomainError("drop_ratio: t must lie in [0,1]");
    if (!(spec.r_max >= 0.0 && spec.r_max < 1.0)) throw ConfigError("drop_ratio: r_max must lie in [0,1)");
    return spec.r_max * (1.0 - t);
}

double drop_fraction(nk::Grid2 window) noexcept {
    return 1.0 - 1.0 / static_cast<double>(window.h * window.w);
}

nk::Grid2 window_for_ratio(double ratio) {
    if (!(ratio >= 0.0 && ratio < 1.0)) throw DomainError("window_for_ratio: ratio must lie in [0,1)");
    nk::Grid2 best = kWindowLadder.front();
    for (auto w : kWindowLadder) {
        if (drop_fraction(w) <= ratio) best = w;
    }
    return best;
}

rope::Coords pool_coords(const rope::Coords& coords, nk::Grid2 grid, nk::Grid2 window) {
    if (coords.size() != grid.count()) throw GridError("pool_coords: coordinate count does not match grid");
    const nk::Grid2 og = nk::pooled_grid(grid, window);
    rope::Coords out(og.count(), rope::Coord{0, 0, 0});
    std::vector<double> count(og.count(), 0.0);
    for (std::size_t h = 0; h < grid.h; ++h) {
        for (std::size_t w = 0; w < grid.w; ++w) {
            const std::size_t o = (h / window.h) * og.w + w / window.w;
            for (std::size_t c = 0; c < 3; ++c) out[o][c] += coords[h * grid.w + w][c];
            count[o] += 1.0;
        }
    }
    for (std::size_t o = 0; o < out.size(); ++o) {
        for (auto& c : out[o]) c /= count[o];
    }
    return out;
}

PooledKV pool_kv(const nk::Tensor& k, const nk::Tensor& v, nk::Grid2 grid, double ratio, const rope::Coords& coords) {
    if (k.rank() != 2 || k.dim(0) != grid.count() || v.rank() != 2 || v.dim(0) != grid.count()) {
        throw GridError("pool_kv: keys/values do not form a " + std::to_string(grid.h) + "x" + std::to_string(grid.w) +
                        " grid");
    }
    const nk::Grid2 window = window_for_ratio(ratio);
    if (window == nk::Grid2{1, 1}) return {k, v, coords, window, grid};
    PooledKV out{nk::avg_pool_tokens(k, grid, window), nk::avg_pool_tokens(v, grid, window), {}, window,
                 nk::pooled_grid(grid, window)};
    if (!coords.empty()) out.coords = pool_coords(coords, grid, window);
    return out;
}

void write_drop_rows(std::ostream& out, const DropSpec& spec, nk::Grid2 grid, int samples) {
    for (int i = 0; i <= samples; ++i) {
        const double t = samples == 0 ? 0.0 : static_cast<double>(i) / samples;
        const double r = drop_ratio(t, spec);
        out << t << ',' << r << ',' << nk::pooled_grid(grid, window_for_ratio(r)).count() << '\n';
    }
}

}  // namespace nextdit::contextdrop
