#include "revlab/rope.hpp"

#include <cmath>

namespace revlab {

RopeParams RopeParams::make(int dim, double base) {
    require(dim > 0 && dim % 2 == 0, "domain-error", "RopeParams: dim must be positive and even");
    require(base > 1.0, "domain-error", "RopeParams: base must exceed 1");
    RopeParams p;
    p.dim = dim;
    p.base = base;
    p.freqs.resize(static_cast<size_t>(dim / 2));
    for (int s = 0; s < dim / 2; ++s) {
        p.freqs[s] = std::pow(base, -2.0 * s / dim);
    }
    return p;
}

void rotate_inplace(const RopeParams& params, double angle_scale, double* x) {
    const int m = params.planes();
    for (int s = 0; s < m; ++s) {
        const double a = angle_scale * params.freqs[s];
        const double c = std::cos(a);
        const double sn = std::sin(a);
        const double x0 = x[2 * s];
        const double x1 = x[2 * s + 1];
        x[2 * s] = c * x0 - sn * x1;
        x[2 * s + 1] = sn * x0 + c * x1;
    }
}

Vec apply_rotation(const RopeParams& params, long long delta, const Vec& x) {
    require(static_cast<int>(x.size()) == params.dim, "dimension-mismatch",
            "apply_rotation: vector length != dim");
    Vec y = x;
    rotate_inplace(params, static_cast<double>(delta), y.data());
    return y;
}

double trace_ratio(const RopeParams& params, long long delta) {
    const int m = params.planes();
    double s = 0.0;
    for (int i = 0; i < m; ++i) {
        s += std::cos(static_cast<double>(delta) * params.freqs[i]);
    }
    return s / static_cast<double>(m);
}

double quadratic_form(const RopeParams& params, long long delta, const Vec& x) {
    require(static_cast<int>(x.size()) == params.dim, "dimension-mismatch",
            "quadratic_form: vector length != dim");
    const int m = params.planes();
    double s = 0.0;
    for (int i = 0; i < m; ++i) {
        const double n2 = x[2 * i] * x[2 * i] + x[2 * i + 1] * x[2 * i + 1];
        s += std::cos(static_cast<double>(delta) * params.freqs[i]) * n2;
    }
    return s;
}

namespace {

double cim1_over_t(double t) {
    // (cos t - 1)/t, stable near zero.
    if (std::abs(t) < 1e-4) {
        const double t2 = t * t;
        return -t / 2.0 + t * t2 / 24.0 - t * t2 * t2 / 720.0;
    }
    return (std::cos(t) - 1.0) / t;
}

double simpson(double a, double b, double fa, double fm, double fb) {
    return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

double adaptive_simpson(double a, double b, double fa, double fm, double fb, double whole,
                        double tol, int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m);
    const double rm = 0.5 * (m + b);
    const double flm = cim1_over_t(lm);
    const double frm = cim1_over_t(rm);
    const double left = simpson(a, m, fa, flm, fm);
    const double right = simpson(m, b, fm, frm, fb);
    if (depth <= 0 || std::abs(left + right - whole) < 15.0 * tol) {
        return left + right + (left + right - whole) / 15.0;
    }
    return adaptive_simpson(a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           adaptive_simpson(m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

}  // namespace

double cosine_integral(double x) {
    require(x > 0.0, "domain-error", "cosine_integral: x must be positive");
    if (x <= 20.0) {
        const double fa = 0.0;  // limit of (cos t - 1)/t at t -> 0
        const double fm = cim1_over_t(0.5 * x);
        const double fb = cim1_over_t(x);
        const double whole = simpson(0.0, x, fa, fm, fb);
        const double integral = adaptive_simpson(0.0, x, fa, fm, fb, whole, 1e-13, 48);
        return kEulerGamma + std::log(x) + integral;
    }
    // Ci(x) = f(x) sin x - g(x) cos x with the asymptotic auxiliary series
    //   f(x) ~ (1/x)   sum_k (-1)^k (2k)!   / x^(2k)
    //   g(x) ~ (1/x^2) sum_k (-1)^k (2k+1)! / x^(2k)
    // truncated at the smallest term (error ~1e-9 at the x = 20 switch point).
    const double inv2 = 1.0 / (x * x);
    double fsum = 0.0, gsum = 0.0;
    double fterm = 1.0;  // (2k)!   / x^(2k)
    double gterm = 1.0;  // (2k+1)! / x^(2k)
    double sign = 1.0;
    for (int k = 0; k <= 60; ++k) {
        fsum += sign * fterm;
        gsum += sign * gterm;
        const double fnext = fterm * (2 * k + 1) * (2 * k + 2) * inv2;
        const double gnext = gterm * (2 * k + 2) * (2 * k + 3) * inv2;
        if (fnext >= fterm || gnext >= gterm) {
            break;
        }
        fterm = fnext;
        gterm = gnext;
        sign = -sign;
    }
    const double f = fsum / x;
    const double g = gsum / (x * x);
    return f * std::sin(x) - g * std::cos(x);
}

double ci_integral(const RopeParams& params, long long delta) {
    require(delta >= 1, "domain-error", "ci_integral: delta must be >= 1");
    const double d = static_cast<double>(delta);
    return (cosine_integral(d) - cosine_integral(d / params.base)) / std::log(params.base);
}

}  // namespace revlab
