#include <doctest.h>

#include "helpers.hpp"
#include "scan/embedding.hpp"

using namespace scan;

TEST_SUITE("embedding") {

TEST_CASE("l2_normalize_rows scales a 3-4-5 row") {
    const EmbeddingMatrix m = test::matrix_from({{3.0, 4.0}});
    const EmbeddingMatrix out = l2_normalize_rows(m);
    CHECK(out.normalized);
    CHECK(out.values[0] == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(out.values[1] == doctest::Approx(0.8).epsilon(1e-15));
}

TEST_CASE("l2_normalize_rows keeps a unit row") {
    const EmbeddingMatrix out = l2_normalize_rows(test::matrix_from({{1.0, 0.0}}));
    CHECK(out.values[0] == 1.0);
    CHECK(out.values[1] == 0.0);
}

TEST_CASE("l2_normalize_rows rejects a zero row") {
    const EmbeddingMatrix m = test::matrix_from({{1.0, 0.0}, {0.0, 0.0}});
    CHECK_THROWS_AS(l2_normalize_rows(m), ZeroRow);
    try {
        l2_normalize_rows(m);
    } catch (const ZeroRow& e) {
        CHECK(e.row == 1);
    }
}

TEST_CASE("semantic_similarity is the label indicator") {
    CHECK(semantic_similarity(5, 5) == 1.0);
    CHECK(semantic_similarity(5, 7) == 0.0);
    CHECK(semantic_similarity(0, 0) == 1.0);
}

TEST_CASE("appearance_similarity on reference pairs") {
    const std::vector<double> ex = {1.0, 0.0};
    const std::vector<double> neg_ex = {-1.0, 0.0};
    const std::vector<double> ey = {0.0, 1.0};
    CHECK(appearance_similarity(ex, ex) == 1.0);
    CHECK(appearance_similarity(ex, neg_ex) == 0.0);
    CHECK(appearance_similarity(ex, ey) == 0.5);
}

TEST_CASE("appearance_similarity validates inputs") {
    const std::vector<double> a = {1.0, 0.0};
    const std::vector<double> b = {1.0, 0.0, 0.0};
    const std::vector<double> long_a = {1.1, 0.0};
    CHECK_THROWS_AS(appearance_similarity(a, b), DimensionMismatch);
    CHECK_THROWS_AS(appearance_similarity(a, long_a), NotNormalized);
}

TEST_CASE("combined_similarity gates on the class") {
    const std::vector<double> ex = {1.0, 0.0};
    const std::vector<double> ey = {0.0, 1.0};
    CHECK(combined_similarity(ex, 3, ex, 3) == 1.0);
    CHECK(combined_similarity(ex, 3, ex, 4) == 0.0);
    CHECK(combined_similarity(ex, 3, ey, 3) == 0.5);
}

TEST_CASE("pairwise_combined flags the self entry") {
    const EmbeddingMatrix m = l2_normalize_rows(test::matrix_from({{1.0, 0.0}}));
    const LabelVector labels{{0}, {}};
    const std::size_t queries[1] = {0};
    const auto table = pairwise_combined(m, labels, queries);
    REQUIRE(table.size() == 1);
    CHECK(table[0].scores[0] == 1.0);
    CHECK(table[0].is_self(0));
}

TEST_CASE("pairwise_combined equals the scalar loop on a hand-set gallery") {
    const EmbeddingMatrix m = l2_normalize_rows(
        test::matrix_from({{1.0, 0.0, 0.0}, {0.5, 0.5, 0.0}, {-0.25, 1.0, 0.5}}));
    const LabelVector labels{{0, 0, 1}, {}};
    const std::vector<std::size_t> queries = {0, 1, 2};
    const auto table = pairwise_combined(m, labels, queries);
    for (std::size_t q = 0; q < queries.size(); ++q) {
        for (std::size_t j = 0; j < m.n; ++j) {
            const double expected = combined_similarity(m.row(q), labels.labels[q], m.row(j),
                                                        labels.labels[j]);
            CHECK(table[q].scores[j] == expected);
        }
    }
}

TEST_CASE("pairwise_combined zeroes all-distinct labels") {
    Rng rng(11);
    const EmbeddingMatrix m = test::random_unit_rows(5, 4, rng);
    const LabelVector labels{{0, 1, 2, 3, 4}, {}};
    const std::vector<std::size_t> queries = {0, 3};
    const auto table = pairwise_combined(m, labels, queries);
    for (const auto& row : table) {
        for (std::size_t j = 0; j < m.n; ++j) {
            if (row.is_self(j)) continue;
            CHECK(row.scores[j] == 0.0);
        }
    }
}

TEST_CASE("pairwise_combined rejects out-of-range queries") {
    const EmbeddingMatrix m = l2_normalize_rows(test::matrix_from({{1.0, 0.0}}));
    const LabelVector labels{{0}, {}};
    const std::size_t queries[1] = {1};
    CHECK_THROWS_AS(pairwise_combined(m, labels, queries), IndexOutOfRange);
}

TEST_CASE("appearance similarity is symmetric and bounded") {
    Rng rng(42);
    for (int trial = 0; trial < 10000; ++trial) {
        const EmbeddingMatrix pair = test::random_unit_rows(2, 6, rng);
        const double ab = appearance_similarity(pair.row(0), pair.row(1));
        const double ba = appearance_similarity(pair.row(1), pair.row(0));
        CHECK(std::fabs(ab - ba) <= 1e-12);
        CHECK(ab >= 0.0);
        CHECK(ab <= 1.0);
        const std::int32_t label_a = trial % 3;
        const std::int32_t label_b = trial % 2;
        const double combined =
            combined_similarity(pair.row(0), label_a, pair.row(1), label_b);
        CHECK(combined >= 0.0);
        CHECK(combined <= ab);
    }
}

TEST_CASE("combined similarity of a point with itself is 1") {
    Rng rng(7);
    const EmbeddingMatrix m = test::random_unit_rows(20, 8, rng);
    for (std::size_t i = 0; i < m.n; ++i) {
        CHECK(combined_similarity(m.row(i), 3, m.row(i), 3) == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("pairwise_combined matches the scalar double loop on a random gallery") {
    Rng rng(99);
    const EmbeddingMatrix m = test::random_unit_rows(200, 16, rng);
    LabelVector labels;
    for (std::size_t i = 0; i < m.n; ++i) {
        labels.labels.push_back(static_cast<std::int32_t>(rng.below(7)));
    }
    std::vector<std::size_t> queries;
    for (std::size_t q = 0; q < m.n; q += 17) queries.push_back(q);

    const auto table = pairwise_combined(m, labels, queries);
    for (std::size_t qi = 0; qi < queries.size(); ++qi) {
        const std::size_t q = queries[qi];
        for (std::size_t j = 0; j < m.n; ++j) {
            const double expected = combined_similarity(m.row(q), labels.labels[q], m.row(j),
                                                        labels.labels[j]);
            CHECK(table[qi].scores[j] == expected);  // exact, same dot routine
        }
    }
}

}  // TEST_SUITE
