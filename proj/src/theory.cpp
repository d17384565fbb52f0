#include "revlab/theory.hpp"

#include <algorithm>
#include <cmath>

namespace revlab {

namespace {

constexpr double kBlockNormGuard = 1e-12;

// Per-plane squared norms, normalized to weights w_i = |q_i|^2 / |q|^2.
// Throws if any plane is numerically degenerate.
Vec plane_weights(const RopeParams& rope, const Vec& q) {
    require(static_cast<int>(q.size()) == rope.dim, "dimension-mismatch",
            "query length != rope dim");
    const int m = rope.planes();
    Vec w(static_cast<size_t>(m));
    double total = 0.0;
    for (int i = 0; i < m; ++i) {
        const double n2 = q[2 * i] * q[2 * i] + q[2 * i + 1] * q[2 * i + 1];
        require(n2 > kBlockNormGuard, "degenerate-query", "query plane norm below guard");
        w[i] = n2;
        total += n2;
    }
    for (int i = 0; i < m; ++i) {
        w[i] /= total;
    }
    return w;
}

// Draws an isotropic query, resampling on the probability-zero event that a
// plane lands below the norm guard.
Vec sample_query(const AlignmentModel& model, RngStream& rng) {
    for (int attempt = 0; attempt < 100; ++attempt) {
        Vec q = rng.gauss(model.rope.dim, model.sigma);
        bool ok = true;
        for (int i = 0; i < model.rope.planes(); ++i) {
            const double n2 = q[2 * i] * q[2 * i] + q[2 * i + 1] * q[2 * i + 1];
            if (n2 <= kBlockNormGuard) {
                ok = false;
                break;
            }
        }
        if (ok) {
            return q;
        }
    }
    throw ContractError("degenerate-query", "could not sample a non-degenerate query");
}

}  // namespace

AlignmentModel AlignmentModel::random(int dim, int delta, RngStream& rng) {
    AlignmentModel m;
    m.rope = RopeParams::make(dim);
    m.delta = delta;
    m.rho.resize(static_cast<size_t>(dim / 2));
    for (double& r : m.rho) {
        r = rng.uniform();
    }
    return m;
}

void AlignmentModel::validate() const {
    require(sigma > 0.0 && tau > 0.0, "domain-error", "sigma and tau must be positive");
    require(static_cast<int>(rho.size()) == rope.planes(), "dimension-mismatch",
            "rho length != number of planes");
    for (double r : rho) {
        require(r >= 0.0 && r <= 1.0, "domain-error", "rho_i must lie in [0,1]");
    }
}

double conditional_corr(const AlignmentModel& model, const Vec& q) {
    model.validate();
    const Vec w = plane_weights(model.rope, q);
    const int m = model.rope.planes();
    double num = 0.0;
    double den = 0.0;
    for (int i = 0; i < m; ++i) {
        const double c2 = std::cos(2.0 * model.delta * model.rope.freqs[i]);
        num += w[i] * (c2 + model.rho[i]);
        den += w[i] * model.rho[i] * c2;
    }
    return std::clamp(num / (1.0 + den), -1.0, 1.0);
}

Vec sample_key_given_query(const AlignmentModel& model, const Vec& q, RngStream& rng) {
    model.validate();
    const Vec w = plane_weights(model.rope, q);  // validates the query
    (void)w;
    const int m = model.rope.planes();
    Vec k(static_cast<size_t>(model.rope.dim));
    for (int i = 0; i < m; ++i) {
        const double qx = q[2 * i], qy = q[2 * i + 1];
        const double n = std::sqrt(qx * qx + qy * qy);
        const double e1x = qx / n, e1y = qy / n;
        const double s1 = model.tau * std::sqrt((1.0 + model.rho[i]) / 2.0);
        const double s2 = model.tau * std::sqrt((1.0 - model.rho[i]) / 2.0);
        const double a = rng.normal() * s1;
        const double b = rng.normal() * s2;
        k[2 * i] = a * e1x - b * e1y;
        k[2 * i + 1] = a * e1y + b * e1x;
    }
    return k;
}

double mc_conditional_corr(const AlignmentModel& model, const Vec& q, int n_samples,
                           RngStream& rng) {
    model.validate();
    require(n_samples >= 1000, "domain-error", "mc_conditional_corr: n_samples >= 1e3");
    const Vec w_unused = plane_weights(model.rope, q);  // validates the query
    (void)w_unused;
    const int m = model.rope.planes();

    // Per-plane eigenbasis of Sigma_i(q): q-direction carries variance
    // tau^2 (1+rho)/2, the orthogonal direction tau^2 (1-rho)/2. Sampling in
    // this basis stays exact when rho = 1 collapses the second eigenvalue.
    struct Plane {
        double e1x, e1y;  // unit q_i direction
        double s1, s2;    // eigen std-devs
        double qx, qy;
    };
    std::vector<Plane> planes(static_cast<size_t>(m));
    for (int i = 0; i < m; ++i) {
        const double qx = q[2 * i], qy = q[2 * i + 1];
        const double n = std::sqrt(qx * qx + qy * qy);
        Plane p;
        p.e1x = qx / n;
        p.e1y = qy / n;
        p.s1 = model.tau * std::sqrt((1.0 + model.rho[i]) / 2.0);
        p.s2 = model.tau * std::sqrt((1.0 - model.rho[i]) / 2.0);
        p.qx = qx;
        p.qy = qy;
        planes[i] = p;
    }

    Vec sf(static_cast<size_t>(n_samples));
    Vec sr(static_cast<size_t>(n_samples));
    for (int s = 0; s < n_samples; ++s) {
        double fwd = 0.0, rev = 0.0;
        for (int i = 0; i < m; ++i) {
            const Plane& p = planes[i];
            const double a = rng.normal() * p.s1;
            const double b = rng.normal() * p.s2;
            const double kx = a * p.e1x - b * p.e1y;
            const double ky = a * p.e1y + b * p.e1x;
            const double ang = model.delta * model.rope.freqs[i];
            const double c = std::cos(ang), sn = std::sin(ang);
            // q_i^T R(+ang) k_i and q_i^T R(-ang) k_i
            fwd += p.qx * (c * kx - sn * ky) + p.qy * (sn * kx + c * ky);
            rev += p.qx * (c * kx + sn * ky) + p.qy * (-sn * kx + c * ky);
        }
        sf[s] = fwd;
        sr[s] = rev;
    }
    // rho_i = 1 for all i makes both scores proportional; Pearson would see
    // zero residual variance, so report the exact limit.
    bool all_aligned = true;
    for (double r : model.rho) {
        all_aligned = all_aligned && (r >= 1.0 - 1e-15);
    }
    if (all_aligned || model.delta == 0) {
        return 1.0;
    }
    return pearson(sf, sr);
}

CorrBoundReport expected_corr_bound_check(const AlignmentModel& model, int n_q, RngStream& rng) {
    model.validate();
    require(n_q >= 1000, "domain-error", "expected_corr_bound_check: n_q >= 1e3");
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < n_q; ++i) {
        const Vec q = sample_query(model, rng);
        const double c = conditional_corr(model, q);
        sum += c;
        sum2 += c * c;
    }
    CorrBoundReport rep;
    rep.n = n_q;
    rep.mean_corr = sum / n_q;
    const double var = std::max(0.0, sum2 / n_q - rep.mean_corr * rep.mean_corr);
    rep.std_err = std::sqrt(var / n_q);
    rep.bound = trace_ratio(model.rope, 2LL * model.delta);
    return rep;
}

DirichletReport dirichlet_weight_check(int dim, int n_q, RngStream& rng) {
    require(n_q >= 10000, "domain-error", "dirichlet_weight_check: n_q >= 1e4");
    const RopeParams rope = RopeParams::make(dim);
    const int m = rope.planes();
    AlignmentModel model;
    model.rope = rope;
    model.rho.assign(static_cast<size_t>(m), 0.0);
    model.delta = 1;

    Vec mean_w(static_cast<size_t>(m), 0.0);
    Vec w1;  // for the KS check when m == 2
    if (m == 2) {
        w1.reserve(static_cast<size_t>(n_q));
    }
    double weight_sum_mean = 0.0;
    for (int s = 0; s < n_q; ++s) {
        const Vec q = sample_query(model, rng);
        const Vec w = plane_weights(rope, q);
        double tot = 0.0;
        for (int i = 0; i < m; ++i) {
            mean_w[i] += w[i];
            tot += w[i];
        }
        weight_sum_mean += tot;
        if (m == 2) {
            w1.push_back(w[0]);
        }
    }
    DirichletReport rep;
    rep.m = m;
    rep.n = n_q;
    rep.weight_sum = weight_sum_mean / n_q;
    // Var(w_i) for Dirichlet(1,...,1) is (m-1) / (m^2 (m+1)).
    const double var_wi = (m - 1.0) / (static_cast<double>(m) * m * (m + 1.0));
    rep.tol = 3.0 * std::sqrt(var_wi / n_q);
    for (int i = 0; i < m; ++i) {
        rep.max_abs_dev = std::max(rep.max_abs_dev, std::abs(mean_w[i] / n_q - 1.0 / m));
    }
    if (m == 2) {
        std::sort(w1.begin(), w1.end());
        double ks = 0.0;
        const double n = static_cast<double>(w1.size());
        for (size_t i = 0; i < w1.size(); ++i) {
            const double f = w1[i];  // CDF of U[0,1]
            ks = std::max(ks, std::max(std::abs((i + 1) / n - f), std::abs(f - i / n)));
        }
        rep.ks_stat = ks;
    }
    rep.ok = rep.max_abs_dev <= rep.tol && (m != 2 || rep.ks_stat < 0.02);
    return rep;
}

CantelliRow cantelli_row(const RopeParams& params, int delta, double c) {
    const int m = params.planes();
    double s1 = 0.0, s2 = 0.0;
    for (int i = 0; i < m; ++i) {
        const double v = std::cos(2.0 * delta * params.freqs[i]);
        s1 += v;
        s2 += v * v;
    }
    CantelliRow row;
    row.delta = delta;
    row.m = m;
    row.c = c;
    row.mean = s1 / m;
    row.variance = (s2 / m - row.mean * row.mean) / (m + 1.0);
    require(c > 0.0, "domain-error", "cantelli_row: c must be positive");
    require(c <= row.mean, "threshold-exceeds-mean",
            "cantelli_row: threshold c exceeds the mean E");
    const double margin = row.mean - c;
    row.bound = margin * margin / (row.variance + margin * margin);
    return row;
}

std::vector<CantelliRow> cantelli_table(const std::vector<int>& ms, const std::vector<int>& deltas,
                                        const std::vector<double>& thresholds) {
    std::vector<CantelliRow> rows;
    rows.reserve(ms.size() * deltas.size() * thresholds.size());
    for (int m : ms) {
        const RopeParams params = RopeParams::make(2 * m);
        for (int d : deltas) {
            for (double c : thresholds) {
                rows.push_back(cantelli_row(params, d, c));
            }
        }
    }
    return rows;
}

}  // namespace revlab
