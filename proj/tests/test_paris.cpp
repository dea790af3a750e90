#include <catch2/catch_amalgamated.hpp>

#include "smcvar/models.hpp"
#include "smcvar/paris.hpp"
#include "support/fixtures.hpp"

using namespace smcvar;

namespace {

BackwardMatrix one_hot_rows(const std::vector<int>& hot) {
    BackwardMatrix bw;
    const int n = static_cast<int>(hot.size());
    bw.beta = Matrix::Zero(n, n);
    for (int k = 0; k < n; ++k) bw.beta(k, hot[k]) = 1.0;
    return bw;
}

}  // namespace

TEST_CASE("index sampling") {
    RngStream rng(1, 0);
    SECTION("M <= 1 is rejected") {
        BackwardMatrix bw;
        bw.beta = Matrix::Constant(2, 2, 0.5);
        CHECK_THROWS_WITH(paris_sample_indices(bw, 1, rng),
                          Catch::Matchers::ContainsSubstring("PaRIS requires M > 1"));
    }
    SECTION("one-hot rows are deterministic") {
        const auto bw = one_hot_rows({2, 0, 1});
        const auto indices = paris_sample_indices(bw, 3, rng);
        for (int i = 0; i < 3; ++i) {
            CHECK(indices(0, i) == 2);
            CHECK(indices(1, i) == 0);
            CHECK(indices(2, i) == 1);
        }
    }
    SECTION("uniform row frequencies are within three sigma") {
        const int n = 5, m = 3, reps = 40000;
        BackwardMatrix bw;
        bw.beta = Matrix::Constant(n, n, 1.0 / n);
        Vector counts = Vector::Zero(n);
        for (int r = 0; r < reps; ++r) {
            const auto indices = paris_sample_indices(bw, m, rng);
            for (int i = 0; i < m; ++i) counts[indices(0, i)] += 1.0;
        }
        const double draws = double(reps) * m;
        const double p = 1.0 / n;
        const double sigma = std::sqrt(draws * p * (1 - p));
        for (int l = 0; l < n; ++l) {
            CHECK(std::abs(counts[l] - draws * p) < 3.5 * sigma);
        }
    }
    SECTION("biased two-atom row matches the binomial band") {
        BackwardMatrix bw;
        bw.beta = Matrix(1, 2);
        bw.beta << 0.25, 0.75;
        const int reps = 5000, m = 2;
        double ones = 0.0;
        for (int r = 0; r < reps; ++r) {
            const auto indices = paris_sample_indices(bw, m, rng);
            for (int i = 0; i < m; ++i) ones += indices(0, i) == 1;
        }
        const double draws = double(reps) * m;
        const double sigma = std::sqrt(draws * 0.25 * 0.75);
        CHECK(std::abs(ones - 0.75 * draws) < 3.0 * sigma);
    }
}

TEST_CASE("paris update special cases") {
    SECTION("non-colliding index columns keep the statistic at one") {
        const int n = 3, m = 2;
        ParisStats stats = ParisStats::init(n, m);
        Eigen::MatrixXi indices(n, m);
        for (int k = 0; k < n; ++k) {
            for (int i = 0; i < m; ++i) indices(k, i) = (k + i) % n;
        }
        const Vector w = Vector::Constant(n, 1.0 / n);
        const ParisStats next = paris_update(stats, indices, w);
        for (int k = 0; k < n; ++k) {
            for (int l = 0; l < n; ++l) {
                CHECK(next.t0_tilde(k, l) == (k == l ? 0.0 : 1.0));
            }
        }
    }
    SECTION("one-hot backward matrix reproduces the exact update") {
        RngStream rng(2, 0);
        const int n = 4, m = 3;
        const auto bw = one_hot_rows({1, 3, 0, 2});
        Vector w(n);
        w << 0.4, 0.3, 0.2, 0.1;
        ParisStats sampled = ParisStats::init(n, m);
        BsStats exact = BsStats::init(n);
        for (int step = 0; step < 3; ++step) {
            const auto indices = paris_sample_indices(bw, m, rng);
            sampled = paris_update(sampled, indices, w);
            exact = bs_update(exact, bw, w);
            CHECK((sampled.t0_tilde - exact.t0).cwiseAbs().maxCoeff() < 1e-14);
        }
    }
}

TEST_CASE("paris statistic is conditionally unbiased") {
    // Fixed filtration: mean of the sampled statistic over fresh index
    // draws must match the exact update entrywise within three sigma.
    RngStream setup(3, 0);
    const DiscreteHmm hmm = test::random_hmm(setup, 3, 3);
    RngStream rng(3, 1);
    const int n = 6, m = 3, reps = 20000;
    auto run = test::run_recorded(hmm, n, 2, rng);
    BsStats exact = BsStats::init(n);
    BackwardMatrix bw1, bw2;
    bw1.beta = run.record.betas[0];
    bw2.beta = run.record.betas[1];
    exact = bs_update(exact, bw1, run.record.prev_weights[0]);
    const BsStats exact2 = bs_update(exact, bw2, run.record.prev_weights[1]);

    // Start PaRIS from the exact statistic at step 1 and resample step 2.
    Matrix mean = Matrix::Zero(n, n);
    Matrix second = Matrix::Zero(n, n);
    for (int r = 0; r < reps; ++r) {
        ParisStats stats;
        stats.t = exact.t;
        stats.m = m;
        stats.t0_tilde = exact.t0;
        const auto indices = paris_sample_indices(bw2, m, rng);
        const ParisStats next = paris_update(stats, indices, run.record.prev_weights[1]);
        mean += next.t0_tilde;
        second += next.t0_tilde.cwiseAbs2();
    }
    mean /= double(reps);
    second /= double(reps);
    for (int k = 0; k < n; ++k) {
        for (int l = 0; l < n; ++l) {
            if (k == l) continue;
            const double var = std::max(second(k, l) - mean(k, l) * mean(k, l), 0.0);
            const double se = std::sqrt(var / reps) + 1e-12;
            INFO("entry (" << k << "," << l << ")");
            CHECK(std::abs(mean(k, l) - exact2.t0(k, l)) < 3.5 * se);
        }
    }
}

TEST_CASE("paris mask sum is exactly one with shared draws") {
    RngStream setup(4, 0);
    const DiscreteHmm hmm = test::random_hmm(setup, 2, 3);
    for (int rep = 0; rep < 5; ++rep) {
        RngStream rng(4, 1 + rep);
        const int n = 2 + rep % 2, m = 2, horizon = 2;
        auto run = test::run_recorded(hmm, n, horizon, rng);
        std::vector<Eigen::MatrixXi> draws;
        for (int s = 0; s < horizon; ++s) {
            BackwardMatrix bw;
            bw.beta = run.record.betas[s];
            draws.push_back(paris_sample_indices(bw, m, rng));
        }
        Matrix total = Matrix::Zero(n, n);
        for (std::size_t bits = 0; bits < (std::size_t{1} << (horizon + 1)); ++bits) {
            const auto mask = test::mask_from_bits(bits, horizon + 1);
            total += paris_masked_statistic(mask, draws, run.record.prev_weights, n, m);
        }
        CHECK((total - Matrix::Ones(n, n)).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("paris estimators coincide with the exact ones when they should") {
    RngStream setup(5, 0);
    const DiscreteHmm hmm = test::random_hmm(setup, 2, 2);
    RngStream rng(5, 1);
    const auto h = [](int x) { return 1.0 + 2.0 * x; };
    SECTION("at t = 0") {
        auto state = filter_init(hmm, 5, rng);
        const ParisStats paris = ParisStats::init(5, 2);
        const BsStats exact = BsStats::init(5);
        CHECK(paris_var_gamma(paris, state, h) == bs_var_gamma(exact, state, h));
        CHECK(paris_var_eta(paris, state, h) == bs_var_eta(exact, state, h));
        CHECK(paris_var_phi(paris, state, h) == bs_var_phi(exact, state, h));
    }
    SECTION("deterministic backward rows keep both estimators equal at every t") {
        // Shared particle stream with synthetic one-hot backward matrices:
        // the sampled indices are then deterministic, so the trackers must
        // agree exactly, step after step.
        RngStream prng(5, 2);
        auto state = filter_init(hmm, 6, prng);
        ParisStats paris = ParisStats::init(6, 3);
        BsStats exact = BsStats::init(6);
        for (int s = 1; s <= 4; ++s) {
            const auto prev = state;
            state = filter_step(state, hmm, prng);
            std::vector<int> hot(6);
            for (int k = 0; k < 6; ++k) hot[k] = (k + s) % 6;
            const auto bw = one_hot_rows(hot);
            const auto indices = paris_sample_indices(bw, 3, prng);
            paris = paris_update(paris, indices, prev.norm_weights);
            exact = bs_update(exact, bw, prev.norm_weights);
            const auto id = [](int x) { return double(x); };
            CHECK(paris_var_eta(paris, state, id) ==
                  Catch::Approx(bs_var_eta(exact, state, id)).margin(1e-13));
            CHECK(paris_var_gamma(paris, state, id) ==
                  Catch::Approx(bs_var_gamma(exact, state, id)).margin(1e-13));
        }
    }
}
