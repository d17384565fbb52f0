#include <cmath>

#include "doctest.h"
#include "revlab/numerics.hpp"
#include "revlab/rng.hpp"

using namespace revlab;

namespace {

Matrix random_matrix(int r, int c, RngStream& rng) {
    Matrix m(r, c);
    for (double& v : m.data) {
        v = rng.normal();
    }
    return m;
}

// Naive triple-loop product, independent of the library kernels.
Matrix triple_loop(const Matrix& a, const Matrix& b) {
    Matrix c(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i) {
        for (int j = 0; j < b.cols; ++j) {
            double s = 0.0;
            for (int k = 0; k < a.cols; ++k) {
                s += a.at(i, k) * b.at(k, j);
            }
            c.at(i, j) = s;
        }
    }
    return c;
}

}  // namespace

TEST_CASE("matmul identity and annihilator") {
    RngStream rng(11);
    Matrix a = random_matrix(2, 2, rng);
    Matrix eye(2, 2);
    eye.at(0, 0) = eye.at(1, 1) = 1.0;
    const Matrix ia = matmul(eye, a);
    for (size_t i = 0; i < a.data.size(); ++i) {
        CHECK(ia.data[i] == a.data[i]);
    }
    Matrix zero(2, 3);
    const Matrix az = matmul(a, zero);
    for (double v : az.data) {
        CHECK(v == 0.0);
    }
}

TEST_CASE("matmul matches triple-loop oracle") {
    RngStream rng(12);
    const Matrix a = random_matrix(3, 4, rng);
    const Matrix b = random_matrix(4, 2, rng);
    const Matrix c = matmul(a, b);
    const Matrix ref = triple_loop(a, b);
    for (size_t i = 0; i < c.data.size(); ++i) {
        CHECK(c.data[i] == doctest::Approx(ref.data[i]).epsilon(1e-14));
    }
}

TEST_CASE("matmul rejects dimension mismatch") {
    Matrix a(2, 3), b(2, 3);
    CHECK_THROWS_AS(matmul(a, b), ContractError);
}

TEST_CASE("matmul associativity on random conformable triples") {
    RngStream rng(13);
    for (int trial = 0; trial < 20; ++trial) {
        const int m = 1 + rng.uniform_int(6);
        const int k = 1 + rng.uniform_int(6);
        const int l = 1 + rng.uniform_int(6);
        const int n = 1 + rng.uniform_int(6);
        const Matrix a = random_matrix(m, k, rng);
        const Matrix b = random_matrix(k, l, rng);
        const Matrix c = random_matrix(l, n, rng);
        const Matrix left = matmul(matmul(a, b), c);
        const Matrix right = matmul(a, matmul(b, c));
        for (size_t i = 0; i < left.data.size(); ++i) {
            CHECK(left.data[i] == doctest::Approx(right.data[i]).epsilon(1e-10));
        }
    }
}

TEST_CASE("gemm variants agree with the naive product") {
    RngStream rng(14);
    const Matrix a = random_matrix(7, 5, rng);
    const Matrix b = random_matrix(5, 6, rng);
    const Matrix ref = triple_loop(a, b);

    Matrix c1(7, 6);
    gemm_nn(c1, a, b, false);

    // b^T stored row-major, then gemm_nt.
    Matrix bt(6, 5);
    for (int i = 0; i < 5; ++i) {
        for (int j = 0; j < 6; ++j) {
            bt.at(j, i) = b.at(i, j);
        }
    }
    Matrix c2(7, 6);
    gemm_nt(c2, a, bt, false);

    Matrix at(5, 7);
    for (int i = 0; i < 7; ++i) {
        for (int j = 0; j < 5; ++j) {
            at.at(j, i) = a.at(i, j);
        }
    }
    Matrix c3(7, 6);
    gemm_tn_acc(c3, at, b);

    for (size_t i = 0; i < ref.data.size(); ++i) {
        CHECK(c1.data[i] == doctest::Approx(ref.data[i]).epsilon(1e-13));
        CHECK(c2.data[i] == doctest::Approx(ref.data[i]).epsilon(1e-13));
        CHECK(c3.data[i] == doctest::Approx(ref.data[i]).epsilon(1e-13));
    }
}

TEST_CASE("softmax symmetry, stability, oracle") {
    const Vec p = softmax({0.0, 0.0, 0.0}, 1.0);
    for (double v : p) {
        CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    }

    const Vec q = softmax({1000.0, 0.0}, 1.0);
    CHECK(q[0] == doctest::Approx(1.0));
    CHECK(q[1] == doctest::Approx(0.0));
    CHECK(std::isfinite(q[0]));

    // Direct exponentiation oracle at scale 1/sqrt(D).
    const double scale = 1.0 / std::sqrt(16.0);
    const Vec z = {1.0, 2.0, 3.0};
    const Vec r = softmax(z, scale);
    double denom = 0.0;
    for (double v : z) {
        denom += std::exp(v * scale);
    }
    for (size_t i = 0; i < z.size(); ++i) {
        CHECK(r[i] == doctest::Approx(std::exp(z[i] * scale) / denom).epsilon(1e-14));
    }
}

TEST_CASE("softmax sums to one and is shift invariant") {
    RngStream rng(15);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 2 + rng.uniform_int(10);
        Vec z(n);
        for (double& v : z) {
            v = rng.normal() * 10.0;
        }
        const Vec p = softmax(z, 1.0);
        double sum = 0.0;
        for (double v : p) {
            CHECK(v > 0.0);
            sum += v;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));

        Vec shifted = z;
        const double c = rng.normal() * 5.0;
        for (double& v : shifted) {
            v += c;
        }
        const Vec ps = softmax(shifted, 1.0);
        for (int i = 0; i < n; ++i) {
            CHECK(ps[i] == doctest::Approx(p[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("pearson trivial and oracle cases") {
    RngStream rng(16);
    Vec xs(50), ys(50);
    for (size_t i = 0; i < xs.size(); ++i) {
        xs[i] = rng.normal();
        ys[i] = 2.0 * xs[i] + 1.0;
    }
    CHECK(pearson(xs, ys) == doctest::Approx(1.0).epsilon(1e-12));
    for (size_t i = 0; i < xs.size(); ++i) {
        ys[i] = -xs[i];
    }
    CHECK(pearson(xs, ys) == doctest::Approx(-1.0).epsilon(1e-12));

    // Two-pass covariance/stddev oracle on an independent pair.
    Vec a(100), b(100);
    for (size_t i = 0; i < a.size(); ++i) {
        a[i] = rng.normal();
        b[i] = rng.normal() + 0.4 * a[i];
    }
    double ma = 0.0, mb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= a.size();
    mb /= b.size();
    double cab = 0.0, va = 0.0, vb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        cab += (a[i] - ma) * (b[i] - mb);
        va += (a[i] - ma) * (a[i] - ma);
        vb += (b[i] - mb) * (b[i] - mb);
    }
    CHECK(pearson(a, b) == doctest::Approx(cab / std::sqrt(va * vb)).epsilon(1e-12));
}

TEST_CASE("pearson affine invariance property") {
    RngStream rng(17);
    Vec xs(64), ys(64);
    for (size_t i = 0; i < xs.size(); ++i) {
        xs[i] = rng.normal();
        ys[i] = rng.normal();
    }
    const double base = pearson(xs, ys);
    for (int trial = 0; trial < 50; ++trial) {
        const double a = rng.normal() + (rng.uniform() < 0.5 ? 2.0 : -2.0);
        const double b = rng.normal();
        const double c = rng.normal() + (rng.uniform() < 0.5 ? 2.0 : -2.0);
        const double d = rng.normal();
        Vec xs2(xs.size()), ys2(ys.size());
        for (size_t i = 0; i < xs.size(); ++i) {
            xs2[i] = a * xs[i] + b;
            ys2[i] = c * ys[i] + d;
        }
        const double sign = a * c > 0.0 ? 1.0 : -1.0;
        CHECK(pearson(xs2, ys2) == doctest::Approx(sign * base).epsilon(1e-12));
    }
}

TEST_CASE("pearson rejects zero variance") {
    const Vec flat(10, 3.0);
    Vec other(10);
    for (size_t i = 0; i < other.size(); ++i) {
        other[i] = static_cast<double>(i);
    }
    CHECK_THROWS_AS(pearson(flat, other), ContractError);
}

TEST_CASE("cosine similarity basics") {
    const Vec a = {1.0, 2.0, -3.0};
    CHECK(cosine_similarity(a, a) == doctest::Approx(1.0));
    const Vec e1 = {1.0, 0.0};
    const Vec e2 = {0.0, 1.0};
    CHECK(cosine_similarity(e1, e2) == doctest::Approx(0.0));

    RngStream rng(18);
    Vec u(32), v(32);
    for (size_t i = 0; i < u.size(); ++i) {
        u[i] = rng.normal();
        v[i] = rng.normal();
    }
    const double oracle = dot(u, v) / (norm2(u) * norm2(v));
    CHECK(cosine_similarity(u, v) == doctest::Approx(oracle).epsilon(1e-12));
    // Positive-scaling invariance.
    Vec u2 = u;
    for (double& x : u2) {
        x *= 7.25;
    }
    CHECK(cosine_similarity(u2, v) == doctest::Approx(oracle).epsilon(1e-12));

    CHECK_THROWS_AS(cosine_similarity(Vec(32, 0.0), v), ContractError);
}

TEST_CASE("gauss moments at one million draws") {
    RngStream rng(42, 7);
    const int n = 1000000;
    const Vec x = rng.gauss(n, 1.0);
    double mean = 0.0;
    for (double v : x) {
        mean += v;
    }
    mean /= n;
    CHECK(std::abs(mean) < 0.005);

    RngStream rng2(43, 7);
    const Vec y = rng2.gauss(n, 2.0);
    double m2 = 0.0, s2 = 0.0;
    for (double v : y) {
        m2 += v;
    }
    m2 /= n;
    for (double v : y) {
        s2 += (v - m2) * (v - m2);
    }
    s2 /= (n - 1);
    CHECK(s2 > 3.97);
    CHECK(s2 < 4.03);
}

TEST_CASE("rng determinism and stream independence") {
    RngStream a(123, 5);
    RngStream b(123, 5);
    for (int i = 0; i < 1000; ++i) {
        CHECK(a.next_u64() == b.next_u64());
    }

    // Interleaving order does not change either stream's sequence.
    RngStream s0(9, 0), s1(9, 1);
    Vec seq0, seq1;
    for (int i = 0; i < 100; ++i) {
        seq0.push_back(s0.uniform());
        seq1.push_back(s1.uniform());
    }
    RngStream t0(9, 0), t1(9, 1);
    Vec u1, u0;
    for (int i = 0; i < 100; ++i) {
        u1.push_back(t1.uniform());
    }
    for (int i = 0; i < 100; ++i) {
        u0.push_back(t0.uniform());
    }
    CHECK(seq0 == u0);
    CHECK(seq1 == u1);
}

TEST_CASE("finite differences on simple functions") {
    const auto half_norm2 = [](const Vec& x) {
        double s = 0.0;
        for (double v : x) {
            s += v * v;
        }
        return 0.5 * s;
    };
    RngStream rng(19);
    Vec x(8);
    for (double& v : x) {
        v = rng.normal();
    }
    const Vec g = finite_diff_grad(half_norm2, x);
    for (size_t i = 0; i < x.size(); ++i) {
        CHECK(g[i] == doctest::Approx(x[i]).epsilon(1e-8));
    }

    const auto constant = [](const Vec&) { return 4.0; };
    const Vec gz = finite_diff_grad(constant, x);
    for (double v : gz) {
        CHECK(v == 0.0);
    }
}
