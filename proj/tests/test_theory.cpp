#include <cmath>

#include "doctest.h"
#include "revlab/theory.hpp"

using namespace revlab;

namespace {

Vec safe_query(const AlignmentModel& m, RngStream& rng) {
    while (true) {
        Vec q = rng.gauss(m.rope.dim, m.sigma);
        bool ok = true;
        for (int i = 0; i < m.rope.planes(); ++i) {
            if (q[2 * i] * q[2 * i] + q[2 * i + 1] * q[2 * i + 1] < 1e-10) {
                ok = false;
            }
        }
        if (ok) {
            return q;
        }
    }
}

}  // namespace

TEST_CASE("conditional correlation trivial cases") {
    RngStream rng(31);
    AlignmentModel m = AlignmentModel::random(16, 7, rng);
    const Vec q = safe_query(m, rng);

    AlignmentModel aligned = m;
    std::fill(aligned.rho.begin(), aligned.rho.end(), 1.0);
    CHECK(conditional_corr(aligned, q) == doctest::Approx(1.0).epsilon(1e-12));

    AlignmentModel zero_delta = m;
    zero_delta.delta = 0;
    CHECK(conditional_corr(zero_delta, q) == doctest::Approx(1.0).epsilon(1e-12));

    // Degenerate query plane is rejected.
    Vec bad = q;
    bad[0] = bad[1] = 0.0;
    CHECK_THROWS_AS(conditional_corr(m, bad), ContractError);
}

TEST_CASE("analytic conditional correlation matches monte carlo") {
    RngStream rng(32);
    AlignmentModel m = AlignmentModel::random(16, 9, rng);
    const Vec q = safe_query(m, rng);
    const double analytic = conditional_corr(m, q);
    RngStream mc_rng(1001, 3);
    const double mc = mc_conditional_corr(m, q, 100000, mc_rng);
    CHECK(std::abs(analytic - mc) <= 0.02);
}

TEST_CASE("monte carlo trivial and symmetry cases") {
    RngStream rng(33);
    AlignmentModel m = AlignmentModel::random(8, 11, rng);
    const Vec q = safe_query(m, rng);

    AlignmentModel aligned = m;
    std::fill(aligned.rho.begin(), aligned.rho.end(), 1.0);
    RngStream r1(5, 0);
    CHECK(mc_conditional_corr(aligned, q, 2000, r1) == doctest::Approx(1.0).epsilon(1e-6));

    // Swapping delta -> -delta relabels the score pair; Pearson is symmetric.
    AlignmentModel neg = m;
    neg.delta = -m.delta;
    RngStream r2(6, 0), r3(6, 0);
    const double a = mc_conditional_corr(m, q, 5000, r2);
    const double b = mc_conditional_corr(neg, q, 5000, r3);
    CHECK(a == b);
}

TEST_CASE("monte carlo converges toward the analytic value") {
    RngStream rng(34);
    AlignmentModel m = AlignmentModel::random(16, 13, rng);
    const Vec q = safe_query(m, rng);
    const double analytic = conditional_corr(m, q);
    double prev_err = 1.0;
    int level = 0;
    for (int n : {1000, 10000, 100000}) {
        RngStream r(77, 1);
        const double err = std::abs(mc_conditional_corr(m, q, n, r) - analytic);
        const double tol = level == 0 ? 0.12 : (level == 1 ? 0.04 : 0.02);
        CHECK(err <= tol);
        ++level;
        prev_err = std::max(prev_err, err);
    }
    (void)prev_err;
}

TEST_CASE("conditional correlation dominates its lower-bound term") {
    RngStream rng(35);
    AlignmentModel m = AlignmentModel::random(32, 17, rng);
    for (int trial = 0; trial < 1000; ++trial) {
        const Vec q = safe_query(m, rng);
        double total = 0.0;
        Vec w(m.rope.planes());
        for (int i = 0; i < m.rope.planes(); ++i) {
            w[i] = q[2 * i] * q[2 * i] + q[2 * i + 1] * q[2 * i + 1];
            total += w[i];
        }
        double bound = 0.0;
        for (int i = 0; i < m.rope.planes(); ++i) {
            bound += w[i] / total * std::cos(2.0 * m.delta * m.rope.freqs[i]);
        }
        CHECK(conditional_corr(m, q) >= bound - 1e-12);
    }
}

TEST_CASE("expected correlation bound holds across deltas and dims") {
    for (int dim : {64, 128}) {
        for (int delta : {5, 10, 20, 50}) {
            RngStream rng(100 + delta, dim);
            AlignmentModel m = AlignmentModel::random(dim, delta, rng);
            const CorrBoundReport rep = expected_corr_bound_check(m, 2000, rng);
            CHECK(rep.holds());
        }
    }
}

TEST_CASE("expected correlation is tight when rho vanishes") {
    RngStream rng(36);
    AlignmentModel m = AlignmentModel::random(64, 20, rng);
    std::fill(m.rho.begin(), m.rho.end(), 0.0);
    const CorrBoundReport rep = expected_corr_bound_check(m, 5000, rng);
    CHECK(std::abs(rep.mean_corr - rep.bound) <= 3.0 * rep.std_err);

    AlignmentModel zero = m;
    zero.delta = 0;
    const CorrBoundReport rep0 = expected_corr_bound_check(zero, 1000, rng);
    CHECK(rep0.mean_corr == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rep0.bound == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("plane weights are uniform on the simplex") {
    RngStream rng(37);
    const DirichletReport rep2 = dirichlet_weight_check(4, 10000, rng);
    CHECK(rep2.m == 2);
    CHECK(rep2.ks_stat >= 0.0);
    CHECK(rep2.ks_stat < 0.02);
    CHECK(rep2.weight_sum == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rep2.ok);

    const DirichletReport rep64 = dirichlet_weight_check(128, 20000, rng);
    CHECK(rep64.m == 64);
    CHECK(rep64.max_abs_dev <= rep64.tol);
    CHECK(rep64.ok);
}

TEST_CASE("cantelli rows reproduce the paper anchors") {
    CHECK(cantelli_row(RopeParams::make(256), 20, 0.30).bound ==
          doctest::Approx(0.938).epsilon(0.0011));
    CHECK(cantelli_row(RopeParams::make(128), 10, 0.05).bound ==
          doctest::Approx(0.981).epsilon(0.0011));
    CHECK(cantelli_row(RopeParams::make(128), 50, 0.30).bound ==
          doctest::Approx(0.827).epsilon(0.0011));
}

TEST_CASE("cantelli bound edge cases and monotonicity") {
    const RopeParams p = RopeParams::make(128);
    const CantelliRow row = cantelli_row(p, 20, 0.1);
    CHECK(row.variance >= 0.0);
    CHECK(row.bound >= 0.0);
    CHECK(row.bound < 1.0);

    // c = E gives a zero bound.
    const double e = row.mean;
    CHECK(cantelli_row(p, 20, e).bound == 0.0);
    // c > E is rejected.
    CHECK_THROWS_AS(cantelli_row(p, 20, e + 0.01), ContractError);

    // Monotone nonincreasing in c.
    double prev = 1.0;
    for (double c : {0.05, 0.10, 0.15, 0.20, 0.25, 0.30}) {
        const double b = cantelli_row(p, 20, c).bound;
        CHECK(b <= prev + 1e-15);
        prev = b;
    }

    const auto rows = cantelli_table({64, 128}, {10, 20, 30, 40, 50},
                                     {0.05, 0.10, 0.15, 0.20, 0.25, 0.30});
    CHECK(rows.size() == 60);
}

TEST_CASE("key sampler reproduces the A2 covariance structure") {
    RngStream rng(38);
    AlignmentModel m = AlignmentModel::random(4, 3, rng);
    m.rho = {0.3, 0.9};
    const Vec q = safe_query(m, rng);
    const int n = 200000;
    // Empirical per-plane variance along and across q_i.
    for (int plane = 0; plane < 2; ++plane) {
        double along2 = 0.0, across2 = 0.0;
        RngStream krng(39, plane);
        const double qx = q[2 * plane], qy = q[2 * plane + 1];
        const double qn = std::sqrt(qx * qx + qy * qy);
        for (int s = 0; s < n / 100; ++s) {
            const Vec k = sample_key_given_query(m, q, krng);
            const double along = (k[2 * plane] * qx + k[2 * plane + 1] * qy) / qn;
            const double across = (-k[2 * plane] * qy + k[2 * plane + 1] * qx) / qn;
            along2 += along * along;
            across2 += across * across;
        }
        along2 /= n / 100;
        across2 /= n / 100;
        const double want_along = m.tau * m.tau * (1.0 + m.rho[plane]) / 2.0;
        const double want_across = m.tau * m.tau * (1.0 - m.rho[plane]) / 2.0;
        CHECK(along2 == doctest::Approx(want_along).epsilon(0.15));
        CHECK(across2 == doctest::Approx(want_across).epsilon(0.15));
    }
}
