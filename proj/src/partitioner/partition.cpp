#include "nextdit/partitioner/partition.hpp"

#include <algorithm>
#include <string>

#include "nextdit/numkernel/error.hpp"

namespace nextdit::partition {

std::vector<PartitionGrid> candidate_set(std::size_t max_patches, double max_aspect, std::size_t patch) {
    if (max_patches < 1) throw ConfigError("candidate_set: max_patches must be >= 1");
    if (!(max_aspect >= 1.0)) throw ConfigError("candidate_set: max_aspect must be >= 1");
    if (patch < 1) throw ConfigError("candidate_set: patch must be >= 1");
    std::vector<PartitionGrid> out;
    for (std::size_t h = 1; h <= max_patches; ++h) {
        for (std::size_t w = 1; h * w <= max_patches; ++w) {
            const double aspect = static_cast<double>(std::max(h, w)) / static_cast<double>(std::min(h, w));
            if (aspect <= max_aspect) out.push_back({h, w, patch});
        }
    }
    return out;
}

MatchingRatio matching_ratio(std::size_t height, std::size_t width, const PartitionGrid& grid) {
    if (height == 0 || width == 0) throw DomainError("matching_ratio: input size must be positive");
    // h/H vs w/W compared through cross products h*W and w*H.
    const std::uint64_t a = static_cast<std::uint64_t>(grid.h_patches) * width;
    const std::uint64_t b = static_cast<std::uint64_t>(grid.w_patches) * height;
    return {std::min(a, b), std::max(a, b)};
}

PartitionGrid best_partition(std::size_t height, std::size_t width, const std::vector<PartitionGrid>& candidates) {
    if (candidates.empty()) throw ConfigError("best_partition: empty candidate set");
    const PartitionGrid* best = &candidates.front();
    MatchingRatio best_r = matching_ratio(height, width, *best);
    for (const auto& c : candidates) {
        const MatchingRatio r = matching_ratio(height, width, c);
        const unsigned __int128 lhs = static_cast<unsigned __int128>(r.num) * best_r.den;
        const unsigned __int128 rhs = static_cast<unsigned __int128>(best_r.num) * r.den;
        if (lhs > rhs || (lhs == rhs && c.area() > best->area())) {
            best = &c;
            best_r = r;
        }
    }
    return *best;
}

std::pair<std::size_t, std::size_t> resize_target(const PartitionGrid& grid) {
    return {grid.h_patches * grid.patch, grid.w_patches * grid.patch};
}

TokenMask TokenMask::from_lengths(const std::vector<std::size_t>& lengths, std::size_t padded_length) {
    TokenMask m;
    m.padded_length = padded_length;
    for (auto len : lengths) {
        if (len == 0 || len > padded_length) throw DomainError("TokenMask: sequence length out of range");
        std::vector<std::uint8_t> v(padded_length, 0);
        std::fill(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(len), 1);
        m.valid.push_back(std::move(v));
    }
    return m;
}

std::vector<std::uint8_t> TokenMask::flat() const {
    std::vector<std::uint8_t> out;
    out.reserve(valid.size() * padded_length);
    for (const auto& v : valid) out.insert(out.end(), v.begin(), v.end());
    return out;
}

PaddedBatch pad_batch(const std::vector<nk::Tensor>& token_seqs) {
    if (token_seqs.empty()) throw DomainError("pad_batch: empty batch");
    const std::size_t d = token_seqs.front().cols();
    std::size_t n_max = 0;
    std::vector<std::size_t> lengths;
    for (const auto& t : token_seqs) {
        if (t.rank() != 2 || t.dim(1) != d) throw DimensionError("pad_batch: sequences must be [n," + std::to_string(d) + "]");
        lengths.push_back(t.dim(0));
        n_max = std::max(n_max, t.dim(0));
    }
    PaddedBatch out{nk::Tensor(nk::Shape{token_seqs.size(), n_max, d}), TokenMask::from_lengths(lengths, n_max)};
    for (std::size_t b = 0; b < token_seqs.size(); ++b) {
        const auto src = token_seqs[b].data();
        std::copy(src.begin(), src.end(), out.tokens.data().begin() + static_cast<std::ptrdiff_t>(b * n_max * d));
    }
    return out;
}

}  // namespace nextdit::partition
