#include <string>

#include "nextdit/dit/model.hpp"
#include "nextdit/numkernel/error.hpp"

namespace nextdit::dit {

rope::Coords grid_coords(nk::Grid2 grid) {
    rope::Coords out;
    out.reserve(grid.count());
    for (std::size_t i = 0; i < grid.h; ++i) {
        for (std::size_t j = 0; j < grid.w; ++j) out.push_back({0.0, static_cast<double>(i), static_cast<double>(j)});
    }
    return out;
}

Patches patchify(const nk::Tensor& image, std::size_t patch) {
    if (image.rank() != 3) throw DimensionError("patchify: expected [H,W,C], got " + nk::shape_string(image.shape()));
    if (patch == 0) throw ConfigError("patchify: patch size must be positive");
    const std::size_t H = image.dim(0), W = image.dim(1), C = image.dim(2);
    if (H % patch != 0 || W % patch != 0) {
        throw DimensionError("patchify: " + std::to_string(H) + "x" + std::to_string(W) + " is not divisible by patch " +
                             std::to_string(patch));
    }
    const nk::Grid2 grid{H / patch, W / patch};
    const std::size_t feat = patch * patch * C;
    nk::Tensor tokens(nk::Shape{grid.count(), feat});
    const auto src = image.data();
    for (std::size_t gi = 0; gi < grid.h; ++gi) {
        for (std::size_t gj = 0; gj < grid.w; ++gj) {
            const std::size_t row = gi * grid.w + gj;
            std::size_t f = 0;
            for (std::size_t pi = 0; pi < patch; ++pi) {
                for (std::size_t pj = 0; pj < patch; ++pj) {
                    const std::size_t base = ((gi * patch + pi) * W + gj * patch + pj) * C;
                    for (std::size_t c = 0; c < C; ++c) tokens(row, f++) = src[base + c];
                }
            }
        }
    }
    return {std::move(tokens), grid_coords(grid), grid};
}

nk::Tensor unpatchify(const nk::Tensor& tokens, nk::Grid2 grid, std::size_t patch, std::size_t channels) {
    const std::size_t feat = patch * patch * channels;
    if (tokens.rank() != 2 || tokens.dim(0) != grid.count() || tokens.dim(1) != feat) {
        throw DimensionError("unpatchify: expected [" + std::to_string(grid.count()) + "," + std::to_string(feat) +
                             "], got " + nk::shape_string(tokens.shape()));
    }
    const std::size_t W = grid.w * patch;
    nk::Tensor image(nk::Shape{grid.h * patch, W, channels});
    auto dst = image.data();
    for (std::size_t gi = 0; gi < grid.h; ++gi) {
        for (std::size_t gj = 0; gj < grid.w; ++gj) {
            const std::size_t row = gi * grid.w + gj;
            std::size_t f = 0;
            for (std::size_t pi = 0; pi < patch; ++pi) {
                for (std::size_t pj = 0; pj < patch; ++pj) {
                    const std::size_t base = ((gi * patch + pi) * W + gj * patch + pj) * channels;
                    for (std::size_t c = 0; c < channels; ++c) dst[base + c] = tokens(row, f++);
                }
            }
        }
    }
    return image;
}

}  // namespace nextdit::dit
