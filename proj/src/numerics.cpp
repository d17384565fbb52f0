#include "revlab/numerics.hpp"

#include <algorithm>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace revlab {

Matrix matmul(const Matrix& a, const Matrix& b) {
    require(a.cols == b.rows, "dimension-mismatch",
            "matmul: " + std::to_string(a.cols) + " != " + std::to_string(b.rows));
    Matrix c(a.rows, b.cols);
    gemm_nn(c, a, b, false);
    return c;
}

void gemm_nn(Matrix& c, const Matrix& a, const Matrix& b, bool accumulate) {
    require(a.cols == b.rows && c.rows == a.rows && c.cols == b.cols, "dimension-mismatch",
            "gemm_nn shape mismatch");
    const int m = a.rows, k = a.cols, n = b.cols;
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
        double* crow = c.row(i);
        if (!accumulate) {
            std::fill(crow, crow + n, 0.0);
        }
        const double* arow = a.row(i);
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) {
                continue;
            }
            const double* brow = b.row(p);
            for (int j = 0; j < n; ++j) {
                crow[j] += av * brow[j];
            }
        }
    }
}

void gemm_nt(Matrix& c, const Matrix& a, const Matrix& b, bool accumulate) {
    require(a.cols == b.cols && c.rows == a.rows && c.cols == b.rows, "dimension-mismatch",
            "gemm_nt shape mismatch");
    const int m = a.rows, k = a.cols, n = b.rows;
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
        const double* arow = a.row(i);
        double* crow = c.row(i);
        for (int j = 0; j < n; ++j) {
            const double d = dot(arow, b.row(j), static_cast<size_t>(k));
            crow[j] = accumulate ? crow[j] + d : d;
        }
    }
}

void gemm_tn_acc(Matrix& c, const Matrix& a, const Matrix& b) {
    require(a.rows == b.rows && c.rows == a.cols && c.cols == b.cols, "dimension-mismatch",
            "gemm_tn_acc shape mismatch");
    const int k = a.rows, m = a.cols, n = b.cols;
    // Tile output rows so each tile streams B exactly once and the tile of C
    // stays cache-resident; tiles are independent, so the parallel split does
    // not change any result.
    constexpr int tile = 8;
    const int ntiles = (m + tile - 1) / tile;
#pragma omp parallel for schedule(static)
    for (int t = 0; t < ntiles; ++t) {
        const int m0 = t * tile;
        const int m1 = std::min(m0 + tile, m);
        for (int p = 0; p < k; ++p) {
            const double* arow = a.row(p);
            const double* brow = b.row(p);
            for (int i = m0; i < m1; ++i) {
                const double av = arow[i];
                if (av == 0.0) {
                    continue;
                }
                double* crow = c.row(i);
                for (int j = 0; j < n; ++j) {
                    crow[j] += av * brow[j];
                }
            }
        }
    }
}

void softmax_inplace(double* z, int n, double scale) {
    double mx = -HUGE_VAL;
    for (int i = 0; i < n; ++i) {
        mx = std::max(mx, z[i] * scale);
    }
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        z[i] = std::exp(z[i] * scale - mx);
        sum += z[i];
    }
    const double inv = 1.0 / sum;
    for (int i = 0; i < n; ++i) {
        z[i] *= inv;
    }
}

Vec softmax(const Vec& z, double scale) {
    require(!z.empty(), "dimension-mismatch", "softmax: empty input");
    for (double v : z) {
        require(std::isfinite(v), "contract-violation", "softmax: non-finite logit");
    }
    Vec p = z;
    softmax_inplace(p.data(), static_cast<int>(p.size()), scale);
    return p;
}

double dot(const double* a, const double* b, size_t n) {
    double s = 0.0;
    for (size_t i = 0; i < n; ++i) {
        s += a[i] * b[i];
    }
    return s;
}

double dot(const Vec& a, const Vec& b) {
    require(a.size() == b.size(), "dimension-mismatch", "dot: length mismatch");
    return dot(a.data(), b.data(), a.size());
}

double norm2(const Vec& a) { return std::sqrt(dot(a.data(), a.data(), a.size())); }

double pearson(const Vec& xs, const Vec& ys) {
    require(xs.size() == ys.size(), "dimension-mismatch", "pearson: length mismatch");
    require(xs.size() >= 2, "contract-violation", "pearson: need at least 2 points");
    const size_t n = xs.size();
    double mx = 0.0, my = 0.0;
    for (size_t i = 0; i < n; ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double dx = xs[i] - mx;
        const double dy = ys[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    require(sxx > 0.0 && syy > 0.0, "undefined-correlation",
            "pearson: zero variance in an argument");
    const double r = sxy / (std::sqrt(sxx) * std::sqrt(syy));
    return std::clamp(r, -1.0, 1.0);
}

double cosine_similarity(const Vec& a, const Vec& b) {
    require(a.size() == b.size(), "dimension-mismatch", "cosine: length mismatch");
    const double na = norm2(a);
    const double nb = norm2(b);
    require(na > 0.0 && nb > 0.0, "undefined-similarity", "cosine: zero vector");
    return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

Vec finite_diff_grad(const std::function<double(const Vec&)>& f, const Vec& params,
                     double eps) {
    require(eps > 0.0, "domain-error", "finite_diff_grad: eps must be positive");
    Vec g(params.size(), 0.0);
    Vec p = params;
    for (size_t i = 0; i < params.size(); ++i) {
        const double orig = p[i];
        p[i] = orig + eps;
        const double fp = f(p);
        p[i] = orig - eps;
        const double fm = f(p);
        p[i] = orig;
        require(std::isfinite(fp) && std::isfinite(fm), "oracle-failure",
                "finite_diff_grad: non-finite function value");
        g[i] = (fp - fm) / (2.0 * eps);
    }
    return g;
}

}  // namespace revlab
