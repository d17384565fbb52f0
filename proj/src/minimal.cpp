#include "revlab/minimal.hpp"

#include <algorithm>
#include <cmath>

namespace revlab {

namespace {

Vec matvec(const Matrix& w, const Vec& x) {
    Vec y(static_cast<size_t>(w.rows), 0.0);
    for (int r = 0; r < w.rows; ++r) {
        y[r] = dot(w.row(r), x.data(), x.size());
    }
    return y;
}

Vec matvec_t(const Matrix& w, const Vec& x) {
    Vec y(static_cast<size_t>(w.cols), 0.0);
    for (int r = 0; r < w.rows; ++r) {
        const double v = x[r];
        if (v == 0.0) {
            continue;
        }
        const double* row = w.row(r);
        for (int c = 0; c < w.cols; ++c) {
            y[c] += v * row[c];
        }
    }
    return y;
}

void add_outer_scaled(Matrix& m, double s, const Vec& a, const Vec& b) {
    for (int r = 0; r < m.rows; ++r) {
        const double v = s * a[r];
        double* row = m.row(r);
        for (int c = 0; c < m.cols; ++c) {
            row[c] += v * b[c];
        }
    }
}

}  // namespace

const char* to_string(Direction d) { return d == Direction::fwd ? "fwd" : "rev"; }

MinimalInstance MinimalInstance::random(int dim, int vocab, int delta1, int delta2,
                                        RngStream& rng) {
    MinimalInstance inst;
    inst.dim = dim;
    inst.vocab = vocab;
    inst.delta1 = delta1;
    inst.delta2 = delta2;
    inst.rope = RopeParams::make(dim);
    const double emb_sigma = 1.0 / std::sqrt(static_cast<double>(dim));
    inst.h_mask = rng.gauss(dim, emb_sigma);
    inst.h_b = rng.gauss(dim, emb_sigma);
    const double w_sigma = 1.0 / std::sqrt(static_cast<double>(dim));
    auto fill = [&](Matrix& m, int rows, int cols) {
        m = Matrix(rows, cols);
        for (double& v : m.data) {
            v = rng.normal() * w_sigma;
        }
    };
    fill(inst.wq, dim, dim);
    fill(inst.wk, dim, dim);
    fill(inst.wv, dim, dim);
    fill(inst.wo, vocab, dim);
    inst.target = rng.uniform_int(vocab);
    return inst;
}

void MinimalInstance::validate() const {
    require(dim > 0 && dim % 2 == 0, "contract-violation", "minimal: dim must be even");
    require(delta1 > 0 && delta2 > 0, "contract-violation", "minimal: deltas must be positive");
    require(target >= 0 && target < vocab, "contract-violation", "minimal: target out of range");
    require(static_cast<int>(h_mask.size()) == dim && static_cast<int>(h_b.size()) == dim,
            "dimension-mismatch", "minimal: embedding size");
    require(wq.rows == dim && wq.cols == dim && wk.rows == dim && wk.cols == dim &&
                wv.rows == dim && wv.cols == dim && wo.rows == vocab && wo.cols == dim,
            "dimension-mismatch", "minimal: projection shapes");
}

double self_attention_score(const MinimalInstance& inst) {
    const Vec q = matvec(inst.wq, inst.h_mask);
    const Vec k_mask = matvec(inst.wk, inst.h_mask);
    return dot(q, k_mask);
}

MinimalForward minimal_forward(const MinimalInstance& inst, Direction dir) {
    return minimal_forward(inst, dir, self_attention_score(inst));
}

MinimalForward minimal_forward(const MinimalInstance& inst, Direction dir,
                               double competitor_score) {
    inst.validate();
    const double sqrt_d = std::sqrt(static_cast<double>(inst.dim));
    const Vec q = matvec(inst.wq, inst.h_mask);
    const Vec k_b = matvec(inst.wk, inst.h_b);
    const Vec v_b = matvec(inst.wv, inst.h_b);
    const long long delta = dir == Direction::fwd ? inst.delta1 : -inst.delta2;

    MinimalForward out;
    out.direction = dir;
    out.score = dot(q, apply_rotation(inst.rope, delta, k_b));
    out.self_score = competitor_score;

    // Two-slot softmax over the B score and the competitor, 1/sqrt(D) scaled.
    const double zb = out.score / sqrt_d;
    const double zs = out.self_score / sqrt_d;
    const double mx = std::max(zb, zs);
    const double eb = std::exp(zb - mx);
    const double es = std::exp(zs - mx);
    out.attn = eb / (eb + es);
    out.beta = out.attn * (1.0 - out.attn);

    out.context.resize(static_cast<size_t>(inst.dim));
    for (int i = 0; i < inst.dim; ++i) {
        out.context[i] = out.attn * v_b[i];
    }
    out.logits = matvec(inst.wo, out.context);
    out.probs = softmax(out.logits, 1.0);
    out.error = out.probs;
    out.error[inst.target] -= 1.0;
    out.backprop = matvec_t(inst.wo, out.error);
    out.logit_components = matvec(inst.wo, v_b);
    out.margin = dot(out.error, out.logit_components);
    return out;
}

double minimal_loss(const MinimalInstance& inst, Direction dir) {
    return minimal_loss(inst, dir, self_attention_score(inst));
}

double minimal_loss(const MinimalInstance& inst, Direction dir, double competitor_score) {
    const MinimalForward f = minimal_forward(inst, dir, competitor_score);
    return -std::log(f.probs[inst.target]);
}

MinimalGrads minimal_gradients(const MinimalInstance& inst, Direction dir) {
    return minimal_gradients(inst, dir, self_attention_score(inst));
}

MinimalGrads minimal_gradients(const MinimalInstance& inst, Direction dir,
                               double competitor_score) {
    const MinimalForward f = minimal_forward(inst, dir, competitor_score);
    const double sqrt_d = std::sqrt(static_cast<double>(inst.dim));
    const Vec q = matvec(inst.wq, inst.h_mask);
    const Vec k_b = matvec(inst.wk, inst.h_b);
    const Vec v_b = matvec(inst.wv, inst.h_b);
    const long long delta = dir == Direction::fwd ? inst.delta1 : -inst.delta2;

    MinimalGrads g;
    g.wq = Matrix(inst.dim, inst.dim);
    g.wk = Matrix(inst.dim, inst.dim);
    g.wv = Matrix(inst.dim, inst.dim);
    g.wo = Matrix(inst.vocab, inst.dim);

    // dL/dW_O = e c^T
    add_outer_scaled(g.wo, 1.0, f.error, f.context);
    // dL/dW_V = alpha u h_B^T
    add_outer_scaled(g.wv, f.attn, f.backprop, inst.h_b);
    // dL/dW_Q = (mu beta / sqrt(D)) R(delta) k_B h_mask^T
    const double s = f.margin * f.beta / sqrt_d;
    add_outer_scaled(g.wq, s, apply_rotation(inst.rope, delta, k_b), inst.h_mask);
    // dL/dW_K = (mu beta / sqrt(D)) R(-delta) q h_B^T
    add_outer_scaled(g.wk, s, apply_rotation(inst.rope, -delta, q), inst.h_b);
    return g;
}

GradBlocks closed_form_blocks(const MinimalInstance& inst) {
    const MinimalForward f = minimal_forward(inst, Direction::fwd);
    const MinimalForward r = minimal_forward(inst, Direction::rev);
    const Vec q = matvec(inst.wq, inst.h_mask);
    const Vec k_b = matvec(inst.wk, inst.h_b);
    const Vec v_b = matvec(inst.wv, inst.h_b);
    const long long dsum = inst.delta1 + inst.delta2;

    GradBlocks b;
    b.i_wo = dot(f.error, r.error) * f.attn * r.attn * dot(v_b, v_b);
    b.i_wv = dot(f.backprop, r.backprop) * f.attn * r.attn * dot(inst.h_b, inst.h_b);
    const double scalar = f.margin * r.margin * f.beta * r.beta / inst.dim;
    b.i_wq = scalar * dot(inst.h_mask, inst.h_mask) * quadratic_form(inst.rope, dsum, k_b);
    b.i_wk = scalar * dot(inst.h_b, inst.h_b) * quadratic_form(inst.rope, dsum, q);
    return b;
}

CorollaryReport corollary_conditions(const MinimalInstance& inst) {
    const MinimalForward f = minimal_forward(inst, Direction::fwd);
    const MinimalForward r = minimal_forward(inst, Direction::rev);
    const Vec q = matvec(inst.wq, inst.h_mask);
    const Vec k_b = matvec(inst.wk, inst.h_b);
    const long long dsum = inst.delta1 + inst.delta2;

    CorollaryReport rep;
    rep.nonsaturated = f.probs[inst.target] < 1.0 && r.probs[inst.target] < 1.0;
    rep.u_aligned = dot(f.backprop, r.backprop) > 0.0;
    rep.margins_same_sign = f.margin * r.margin > 0.0;
    rep.rope_forms_positive = quadratic_form(inst.rope, dsum, k_b) > 0.0 &&
                              quadratic_form(inst.rope, dsum, q) > 0.0;
    rep.blocks = closed_form_blocks(inst);
    return rep;
}

ErrorAlignReport error_alignment_check(const Vec& p, const Vec& q, int target) {
    require(p.size() == q.size(), "dimension-mismatch", "error_alignment: length mismatch");
    require(target >= 0 && target < static_cast<int>(p.size()), "contract-violation",
            "error_alignment: target out of range");
    auto check_simplex = [](const Vec& v) {
        double s = 0.0;
        for (double x : v) {
            require(x >= 0.0, "contract-violation", "error_alignment: negative probability");
            s += x;
        }
        require(std::abs(s - 1.0) < 1e-9, "contract-violation",
                "error_alignment: probabilities must sum to 1");
    };
    check_simplex(p);
    check_simplex(q);
    require(p[target] < 1.0 && q[target] < 1.0, "saturated-input",
            "error_alignment: saturated distribution");

    ErrorAlignReport rep;
    double inner = 0.0;
    for (size_t t = 0; t < p.size(); ++t) {
        const double ep = p[t] - (static_cast<int>(t) == target ? 1.0 : 0.0);
        const double eq = q[t] - (static_cast<int>(t) == target ? 1.0 : 0.0);
        inner += ep * eq;
    }
    rep.inner = inner;
    rep.bound = (1.0 - p[target]) * (1.0 - q[target]);
    rep.ok = inner >= rep.bound && rep.bound > 0.0;
    return rep;
}

ProjectionReport projection_preservation_check(int dim, int vocab, double delta_norm, int trials,
                                               RngStream& rng) {
    require(delta_norm >= 0.0 && delta_norm <= 1.0 / 32.0, "domain-error",
            "projection_preservation: delta must lie in [0, 1/32]");
    int positive = 0;
    const double p0_sigma = 1.0 / std::sqrt(static_cast<double>(dim));
    for (int t = 0; t < trials; ++t) {
        Matrix p0(dim, vocab);
        for (double& v : p0.data) {
            v = rng.normal() * p0_sigma;
        }
        // Unit a, and b at a uniform cosine in [1/2, 1] from a.
        Vec a = rng.gauss(vocab, 1.0);
        double na = norm2(a);
        for (double& v : a) {
            v /= na;
        }
        Vec perp = rng.gauss(vocab, 1.0);
        const double proj = dot(perp, a);
        for (size_t i = 0; i < perp.size(); ++i) {
            perp[i] -= proj * a[i];
        }
        const double np = norm2(perp);
        const double cosab = 0.5 + 0.5 * rng.uniform();
        const double sinab = std::sqrt(std::max(0.0, 1.0 - cosab * cosab));
        Vec b(a.size());
        for (size_t i = 0; i < a.size(); ++i) {
            b[i] = cosab * a[i] + sinab * perp[i] / np;
        }

        Vec pa = matvec(p0, a);
        Vec pb = matvec(p0, b);
        if (delta_norm > 0.0) {
            // Worst-case-norm rank-1 drift pointed against the shared
            // projection direction: Delta = -delta y x^T with |y| = |x| = 1.
            Vec x(a.size());
            for (size_t i = 0; i < a.size(); ++i) {
                x[i] = a[i] + b[i];
            }
            const double nx = norm2(x);
            for (double& v : x) {
                v /= nx;
            }
            Vec y = matvec(p0, x);
            const double ny = norm2(y);
            for (double& v : y) {
                v /= ny;
            }
            const double xa = dot(x, a);
            const double xb = dot(x, b);
            for (int i = 0; i < dim; ++i) {
                pa[i] -= delta_norm * y[i] * xa;
                pb[i] -= delta_norm * y[i] * xb;
            }
        }
        if (dot(pa, pb) > 0.0) {
            ++positive;
        }
    }
    ProjectionReport rep;
    rep.trials = trials;
    rep.positive_fraction = static_cast<double>(positive) / trials;
    return rep;
}

MarginStepReport margin_sgd_step_check(const MinimalInstance& inst, double eta) {
    require(eta >= 0.0, "domain-error", "margin_sgd_step: eta must be nonnegative");
    const MinimalForward f = minimal_forward(inst, Direction::fwd);
    require(f.probs[inst.target] < 1.0, "saturated-input", "margin_sgd_step: saturated forward");
    const Vec v_b = matvec(inst.wv, inst.h_b);
    const double vb2 = dot(v_b, v_b);

    MinimalInstance stepped = inst;
    // W_O <- W_O - eta e_fwd c_fwd^T
    add_outer_scaled(stepped.wo, -eta, f.error, f.context);
    const Vec c_after = matvec(stepped.wo, v_b);

    MarginStepReport rep;
    rep.max_d_c_other = -HUGE_VAL;
    for (int t = 0; t < inst.vocab; ++t) {
        const double actual = c_after[t] - f.logit_components[t];
        const double closed = -eta * f.attn * vb2 * f.error[t];
        rep.max_closed_form_err = std::max(rep.max_closed_form_err, std::abs(actual - closed));
        if (t == inst.target) {
            rep.d_c_target = actual;
        } else {
            rep.max_d_c_other = std::max(rep.max_d_c_other, actual);
        }
    }
    return rep;
}

namespace {

void apply_step(MinimalInstance& inst, const MinimalGrads& g, double eta) {
    auto axpy = [eta](Matrix& w, const Matrix& gw) {
        for (size_t i = 0; i < w.data.size(); ++i) {
            w.data[i] -= eta * gw.data[i];
        }
    };
    axpy(inst.wq, g.wq);
    axpy(inst.wk, g.wk);
    axpy(inst.wv, g.wv);
    axpy(inst.wo, g.wo);
}

}  // namespace

TransferReport first_order_transfer_check(const MinimalInstance& inst, double eta0) {
    require(eta0 > 0.0, "domain-error", "transfer_check: eta0 must be positive");
    const double s0 = self_attention_score(inst);
    const MinimalGrads g_fwd = minimal_gradients(inst, Direction::fwd, s0);
    const GradBlocks blocks = closed_form_blocks(inst);

    TransferReport rep;
    rep.predicted_inner = blocks.total();
    rep.loss_before = minimal_loss(inst, Direction::rev, s0);

    double grad_norm2 = 0.0;
    for (const Matrix* m : {&g_fwd.wq, &g_fwd.wk, &g_fwd.wv, &g_fwd.wo}) {
        grad_norm2 += dot(m->data.data(), m->data.data(), m->data.size());
    }
    if (grad_norm2 == 0.0) {
        rep.eta = eta0;
        rep.loss_after = rep.loss_before;
        rep.decrease = 0.0;
        rep.decreased = false;
        rep.first_order_ok = rep.predicted_inner == 0.0;
        return rep;
    }

    // Halve eta until the decrease/eta ratio stabilises to < 5%, then report
    // the last step ("sufficiently small eta" made operational).
    double eta = eta0;
    double prev_ratio = 0.0;
    bool have_prev = false;
    for (int it = 0; it < 40; ++it) {
        MinimalInstance stepped = inst;
        apply_step(stepped, g_fwd, eta);
        const double after = minimal_loss(stepped, Direction::rev, s0);
        const double decrease_per_eta = (rep.loss_before - after) / eta;
        rep.eta = eta;
        rep.loss_after = after;
        rep.decrease = rep.loss_before - after;
        if (have_prev && std::abs(decrease_per_eta - prev_ratio) <=
                             0.05 * std::max(std::abs(prev_ratio), 1e-300)) {
            break;
        }
        prev_ratio = decrease_per_eta;
        have_prev = true;
        eta *= 0.5;
    }
    rep.decreased = rep.loss_after < rep.loss_before;
    rep.ratio = rep.predicted_inner != 0.0 ? rep.decrease / (rep.eta * rep.predicted_inner) : 0.0;
    rep.first_order_ok = rep.ratio >= 0.8 && rep.ratio <= 1.2;
    return rep;
}

}  // namespace revlab
