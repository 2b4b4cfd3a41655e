#pragma once

#include <array>
#include <iosfwd>

#include "nextdit/numkernel/kernels.hpp"
#include "nextdit/rope/rope.hpp"

namespace nextdit::contextdrop {

// r(t) = r_max * (1 - t): full dropping at t = 0 (noise), none at t = 1 (data), same ratio in
// every layer.
struct DropSpec {
    double r_max = 0.75;
};

double drop_ratio(double t, const DropSpec& spec);

// Pooling windows in increasing drop fraction 1 - 1/(h*w).
inline constexpr std::array<nk::Grid2, 5> kWindowLadder{
    nk::Grid2{1, 1}, nk::Grid2{2, 1}, nk::Grid2{2, 2}, nk::Grid2{4, 2}, nk::Grid2{4, 4}};

[[nodiscard]] double drop_fraction(nk::Grid2 window) noexcept;

// Largest ladder window whose drop fraction does not exceed `ratio`.
nk::Grid2 window_for_ratio(double ratio);

// Member-mean coordinates of each pooled window.
rope::Coords pool_coords(const rope::Coords& coords, nk::Grid2 grid, nk::Grid2 window);

struct PooledKV {
    nk::Tensor k;
    nk::Tensor v;
    rope::Coords coords;
    nk::Grid2 window;
    nk::Grid2 grid;  // pooled grid
};

// Pools keys and values identically on the token grid; queries are never touched. With a 1x1
// window the inputs are returned unchanged.
PooledKV pool_kv(const nk::Tensor& k, const nk::Tensor& v, nk::Grid2 grid, double ratio, const rope::Coords& coords = {});

// CSV rows "t,ratio,n_kv" for a sweep over t.
void write_drop_rows(std::ostream& out, const DropSpec& spec, nk::Grid2 grid, int samples);
inline constexpr const char* kDropCsvHeader = "t,ratio,n_kv";

}  // namespace nextdit::contextdrop
