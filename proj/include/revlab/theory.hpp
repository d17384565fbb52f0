#pragma once

#include "revlab/rng.hpp"
#include "revlab/rope.hpp"

namespace revlab {

// The assumption set behind the attention-correlation bound: isotropic
// queries (A1), per-plane aligned conditional key covariance (A2) with
// eigenvalue weights rho_i in [0,1], symmetric distances (A3).
struct AlignmentModel {
    RopeParams rope;
    double sigma = 1.0;  // query scale
    double tau = 1.0;    // conditional key scale
    Vec rho;             // length D/2, each in [0,1]
    int delta = 1;

    static AlignmentModel random(int dim, int delta, RngStream& rng);
    void validate() const;
};

// Analytic conditional correlation of (q^T R(d) k, q^T R(-d) k) given q:
//   (sum_i w_i [cos(2 d th_i) + rho_i]) / (1 + sum_i w_i rho_i cos(2 d th_i))
// with w_i = |q_i|^2 / |q|^2.
double conditional_corr(const AlignmentModel& model, const Vec& q);

// Monte Carlo estimate of the same quantity: samples k | q per plane from
// N(0, Sigma_i(q)) in the eigenbasis and returns the Pearson correlation of
// the paired scores.
double mc_conditional_corr(const AlignmentModel& model, const Vec& q, int n_samples,
                           RngStream& rng);

// One conditional key draw k | q under (A2); plane i has variance
// tau^2 (1+rho_i)/2 along q_i and tau^2 (1-rho_i)/2 across it.
Vec sample_key_given_query(const AlignmentModel& model, const Vec& q, RngStream& rng);

struct CorrBoundReport {
    double mean_corr = 0.0;
    double bound = 0.0;  // trace_ratio(2 delta)
    double std_err = 0.0;
    int n = 0;

    bool holds() const { return mean_corr >= bound - 3.0 * std_err; }
};

// Averages conditional_corr over n_q isotropic queries and compares against
// the (1/D) Tr(R(2 delta)) bound.
CorrBoundReport expected_corr_bound_check(const AlignmentModel& model, int n_q, RngStream& rng);

struct DirichletReport {
    int m = 0;
    int n = 0;
    double max_abs_dev = 0.0;  // max_i |mean(w_i) - 1/m|
    double tol = 0.0;          // 3 standard errors of mean(w_i)
    double weight_sum = 0.0;   // mean over samples of sum_i w_i (exactly 1)
    double ks_stat = -1.0;     // KS distance of w_1 to U[0,1]; only when m == 2
    bool ok = false;
};

// Checks that the normalized plane weights of an isotropic Gaussian query are
// uniform on the simplex: E[w_i] = 1/m, and for m = 2, w_1 ~ U[0,1].
DirichletReport dirichlet_weight_check(int dim, int n_q, RngStream& rng);

struct CantelliRow {
    int delta = 0;
    int m = 0;
    double c = 0.0;
    double mean = 0.0;      // E = (1/m) sum cos(2 delta th_i)
    double variance = 0.0;  // V = (1/(m+1)) [ mean(cos^2) - mean(cos)^2 ]
    double bound = 0.0;     // (E-c)^2 / (V + (E-c)^2)
};

CantelliRow cantelli_row(const RopeParams& params, int delta, double c);

std::vector<CantelliRow> cantelli_table(const std::vector<int>& ms,
                                        const std::vector<int>& deltas,
                                        const std::vector<double>& thresholds);

}  // namespace revlab
