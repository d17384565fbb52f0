#pragma once

#include "revlab/numerics.hpp"

namespace revlab {

// Rotary position embedding parameters: per-plane frequencies
// theta_s = base^(-2(s-1)/D) for s = 1..D/2, so theta_1 = 1 and the
// frequencies are strictly decreasing.
struct RopeParams {
    int dim = 0;
    double base = 10000.0;
    Vec freqs;

    static RopeParams make(int dim, double base = 10000.0);

    int planes() const { return dim / 2; }
};

// y = R(delta) x, applied plane-wise; never materialises the DxD matrix.
Vec apply_rotation(const RopeParams& params, long long delta, const Vec& x);
void rotate_inplace(const RopeParams& params, double angle_scale, double* x);

// (1/D) Tr(R(delta)) = (2/D) sum_s cos(delta * theta_s).
double trace_ratio(const RopeParams& params, long long delta);

// Classical cosine integral Ci(x) = gamma + ln x + int_0^x (cos t - 1)/t dt,
// accurate to ~1e-9 over [1e-8, 1e6]. Adaptive Simpson below the switch
// point, asymptotic sin/cos expansion above it.
double cosine_integral(double x);

// Integral approximation of trace_ratio:
// (Ci(delta) - Ci(delta/base)) / log(base).
double ci_integral(const RopeParams& params, long long delta);

// x^T R(delta) x = sum_s cos(delta * theta_s) * |x^(s)|^2. Even in delta.
double quadratic_form(const RopeParams& params, long long delta, const Vec& x);

inline constexpr double kEulerGamma = 0.57721566490153286060651209;

}  // namespace revlab
