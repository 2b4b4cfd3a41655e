#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "nextdit/numkernel/tensor.hpp"

namespace nextdit::partition {

struct PartitionGrid {
    std::size_t h_patches = 0;
    std::size_t w_patches = 0;
    std::size_t patch = 1;

    [[nodiscard]] std::size_t area() const noexcept { return h_patches * w_patches; }
    friend bool operator==(const PartitionGrid&, const PartitionGrid&) = default;
};

// Candidate grids with h*w <= max_patches and max(h,w)/min(h,w) <= max_aspect, ordered by
// h ascending then w ascending.
std::vector<PartitionGrid> candidate_set(std::size_t max_patches, double max_aspect, std::size_t patch);

// min(h/H, w/W) / max(h/H, w/W) as an exact fraction num/den (integers, num <= den).
struct MatchingRatio {
    std::uint64_t num = 0;
    std::uint64_t den = 1;
    [[nodiscard]] double value() const noexcept { return static_cast<double>(num) / static_cast<double>(den); }
};
MatchingRatio matching_ratio(std::size_t height, std::size_t width, const PartitionGrid& grid);

// Argmax of the matching ratio; ties go to the larger area, then to the earlier candidate.
PartitionGrid best_partition(std::size_t height, std::size_t width, const std::vector<PartitionGrid>& candidates);

// Pixel size the input is resized to before patchify.
std::pair<std::size_t, std::size_t> resize_target(const PartitionGrid& grid);

// Validity of each position in a padded batch. Each sequence has at least one valid token.
struct TokenMask {
    std::size_t padded_length = 0;
    std::vector<std::vector<std::uint8_t>> valid;

    static TokenMask from_lengths(const std::vector<std::size_t>& lengths, std::size_t padded_length);
    [[nodiscard]] std::size_t batch() const noexcept { return valid.size(); }
    // Row-major [batch * padded_length] flags for the attention kernels.
    [[nodiscard]] std::vector<std::uint8_t> flat() const;
};

struct PaddedBatch {
    nk::Tensor tokens;  // [B, n_max, d], pad rows are zero
    TokenMask mask;
};

PaddedBatch pad_batch(const std::vector<nk::Tensor>& token_seqs);

}  // namespace nextdit::partition
