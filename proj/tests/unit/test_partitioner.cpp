#include <algorithm>

#include "doctest.h"
#include "nextdit/numkernel/error.hpp"
#include "nextdit/numkernel/random.hpp"
#include "nextdit/partitioner/partition.hpp"

using namespace nextdit;
using partition::PartitionGrid;

TEST_CASE("candidate set ordering and constraint") {
    const auto c = partition::candidate_set(8, 2.0, 16);
    for (const auto& g : c) {
        CHECK(g.area() <= 8);
        CHECK(std::max(g.h_patches, g.w_patches) <= 2 * std::min(g.h_patches, g.w_patches));
        CHECK(g.patch == 16);
    }
    CHECK(std::is_sorted(c.begin(), c.end(), [](const PartitionGrid& a, const PartitionGrid& b) {
        return a.h_patches != b.h_patches ? a.h_patches < b.h_patches : a.w_patches < b.w_patches;
    }));
    CHECK(c.front() == PartitionGrid{1, 1, 16});
    CHECK_THROWS_AS(partition::candidate_set(0, 2.0, 16), ConfigError);
    CHECK_THROWS_AS(partition::candidate_set(8, 0.5, 16), ConfigError);
    CHECK_THROWS_AS(partition::candidate_set(8, 2.0, 0), ConfigError);
}

TEST_CASE("matching ratio is exact and at most one") {
    const auto r = partition::matching_ratio(448, 224, {16, 8, 16});
    CHECK(r.value() == 1.0);
    const auto q = partition::matching_ratio(300, 200, {1, 1, 16});
    CHECK(q.value() == doctest::Approx(200.0 / 300.0));
    CHECK(q.value() <= 1.0);
}

TEST_CASE("documented example and resize target") {
    const auto c = partition::candidate_set(128, 4.0, 16);
    const auto best = partition::best_partition(448, 224, c);
    CHECK(best.h_patches == 16);
    CHECK(best.w_patches == 8);
    const auto [h, w] = partition::resize_target(best);
    CHECK(h == 256);
    CHECK(w == 128);
    CHECK_THROWS_AS(partition::best_partition(0, 10, c), DomainError);
    CHECK_THROWS_AS(partition::best_partition(10, 10, {}), ConfigError);
}

TEST_CASE("ties prefer the larger grid") {
    // square input: every square grid matches exactly; the largest one wins
    const auto best = partition::best_partition(512, 512, partition::candidate_set(20, 1.0, 8));
    CHECK(best.h_patches == 4);
    CHECK(best.w_patches == 4);
}

TEST_CASE("token masks and padded batches") {
    const auto m = partition::TokenMask::from_lengths({2, 3}, 4);
    CHECK(m.flat() == std::vector<std::uint8_t>{1, 1, 0, 0, 1, 1, 1, 0});
    CHECK_THROWS_AS(partition::TokenMask::from_lengths({0, 3}, 4), DomainError);
    CHECK_THROWS(partition::TokenMask::from_lengths({5}, 4));

    nk::Rng rng(1);
    const auto b = partition::pad_batch({rng.normal_tensor({2, 3}), rng.normal_tensor({4, 3})});
    CHECK(b.tokens.shape() == nk::Shape{2, 4, 3});
    CHECK(b.mask.padded_length == 4);
    for (std::size_t j = 0; j < 3; ++j) CHECK(b.tokens[(0 * 4 + 3) * 3 + j] == 0.0);
    CHECK_THROWS_AS(partition::pad_batch({}), DomainError);
    CHECK_THROWS(partition::pad_batch({rng.normal_tensor({2, 3}), rng.normal_tensor({2, 4})}));
}
