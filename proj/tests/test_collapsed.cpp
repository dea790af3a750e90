#include <catch2/catch_amalgamated.hpp>

#include "smcvar/collapsed.hpp"
#include "support/fixtures.hpp"

using namespace smcvar;

TEST_CASE("class-collapsed statistics equal the dense recursion") {
    // Same particle stream, dense N x N path vs K x K class path: the
    // estimator values must agree to roundoff.
    RngStream setup(1, 0);
    for (int rep = 0; rep < 5; ++rep) {
        const int k = 2 + rep % 2;
        const DiscreteHmm hmm = test::random_hmm(setup, k, 9);
        const Vector h = test::random_test_function(setup, k);
        RngStream rng(1, 10 + rep);
        const int n = 40;
        auto state = filter_init(hmm, n, rng);
        BsStats dense = BsStats::init(n);
        CollapsedBsStats collapsed = CollapsedBsStats::init(k);
        for (int s = 1; s <= 8; ++s) {
            const auto prev = state;
            state = filter_step(state, hmm, rng);
            const auto bw = backward_matrix(prev, std::span<const int>(state.particles), hmm);
            dense = bs_update(dense, bw, prev.norm_weights);
            const Vector counts_prev = class_counts(prev.particles, k);
            const Matrix beta_hat = collapsed_backward_matrix(hmm, counts_prev, s);
            collapsed = collapsed_bs_update(collapsed, beta_hat, counts_prev);

            const Vector counts = class_counts(state.particles, k);
            const auto h_fn = [&](int x) { return h[x]; };
            const double dense_eta = bs_var_eta(dense, state, h_fn);
            const double fast_eta = collapsed_bs_var_eta(collapsed, counts, h, n);
            CHECK(fast_eta == Catch::Approx(dense_eta).epsilon(1e-10).margin(1e-12));

            const double dense_gamma = bs_var_gamma(dense, state, h_fn);
            const double fast_gamma =
                collapsed_bs_var_gamma(collapsed, counts, h, n, state.log_gamma1);
            CHECK(fast_gamma == Catch::Approx(dense_gamma).epsilon(1e-10).margin(1e-12));

            CHECK(collapsed_bs_disjoint_fraction(collapsed, counts, n) ==
                  Catch::Approx(bs_disjoint_fraction(dense)).epsilon(1e-10));
        }
    }
}

TEST_CASE("collapsed backward matrix rows are stochastic under counts") {
    RngStream setup(2, 0);
    const DiscreteHmm hmm = test::random_hmm(setup, 3, 4);
    Vector counts(3);
    counts << 5, 3, 2;
    const Matrix beta_hat = collapsed_backward_matrix(hmm, counts, 2);
    for (int x = 0; x < 3; ++x) {
        double total = 0.0;
        for (int b = 0; b < 3; ++b) total += counts[b] * beta_hat(x, b);
        CHECK(total == Catch::Approx(1.0).margin(1e-12));
    }
}
