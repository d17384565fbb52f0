#include <cmath>

#include "doctest.h"
#include "revlab/minimal.hpp"

using namespace revlab;

namespace {

Vec flatten_weights(const MinimalInstance& inst) {
    Vec flat;
    for (const Matrix* m : {&inst.wq, &inst.wk, &inst.wv, &inst.wo}) {
        flat.insert(flat.end(), m->data.begin(), m->data.end());
    }
    return flat;
}

MinimalInstance with_weights(const MinimalInstance& base, const Vec& flat) {
    MinimalInstance inst = base;
    size_t off = 0;
    for (Matrix* m : {&inst.wq, &inst.wk, &inst.wv, &inst.wo}) {
        std::copy(flat.begin() + off, flat.begin() + off + m->data.size(), m->data.begin());
        off += m->data.size();
    }
    return inst;
}

// Finite-difference gradient of the frozen-competitor loss, per block.
MinimalGrads fd_gradients(const MinimalInstance& inst, Direction dir, double eps = 1e-5) {
    const double s0 = self_attention_score(inst);
    const auto f = [&](const Vec& flat) {
        return minimal_loss(with_weights(inst, flat), dir, s0);
    };
    const Vec g = finite_diff_grad(f, flatten_weights(inst), eps);
    MinimalGrads out;
    out.wq = Matrix(inst.dim, inst.dim);
    out.wk = Matrix(inst.dim, inst.dim);
    out.wv = Matrix(inst.dim, inst.dim);
    out.wo = Matrix(inst.vocab, inst.dim);
    size_t off = 0;
    for (Matrix* m : {&out.wq, &out.wk, &out.wv, &out.wo}) {
        std::copy(g.begin() + off, g.begin() + off + m->data.size(), m->data.begin());
        off += m->data.size();
    }
    return out;
}

double frob_inner(const Matrix& a, const Matrix& b) {
    return dot(a.data.data(), b.data.data(), a.data.size());
}

}  // namespace

TEST_CASE("zero output projection gives uniform predictions") {
    RngStream rng(41);
    MinimalInstance inst = MinimalInstance::random(16, 8, 2, 3, rng);
    std::fill(inst.wo.data.begin(), inst.wo.data.end(), 0.0);
    const MinimalForward f = minimal_forward(inst, Direction::fwd);
    for (double z : f.logits) {
        CHECK(z == 0.0);
    }
    for (double p : f.probs) {
        CHECK(p == doctest::Approx(1.0 / 8.0).epsilon(1e-15));
    }
    CHECK(f.margin == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("score-symmetric instance yields identical directions") {
    // With wk = wq and h_b = h_mask the B key equals the query, so the score
    // q^T R(+-d) q is even in d and the two directions coincide.
    RngStream rng(42);
    MinimalInstance inst = MinimalInstance::random(16, 8, 4, 4, rng);
    inst.wk = inst.wq;
    inst.h_b = inst.h_mask;
    const MinimalForward f = minimal_forward(inst, Direction::fwd);
    const MinimalForward r = minimal_forward(inst, Direction::rev);
    CHECK(f.score == doctest::Approx(r.score).epsilon(1e-12));
    CHECK(f.attn == doctest::Approx(r.attn).epsilon(1e-12));
    for (size_t i = 0; i < f.probs.size(); ++i) {
        CHECK(f.probs[i] == doctest::Approx(r.probs[i]).epsilon(1e-12));
    }
}

TEST_CASE("probabilities match a direct softmax oracle") {
    RngStream rng(43);
    const MinimalInstance inst = MinimalInstance::random(16, 8, 1, 5, rng);
    const MinimalForward f = minimal_forward(inst, Direction::rev);
    // Recompute by independent loops.
    Vec q(16, 0.0), kb(16, 0.0), vb(16, 0.0);
    for (int r = 0; r < 16; ++r) {
        for (int c = 0; c < 16; ++c) {
            q[r] += inst.wq.at(r, c) * inst.h_mask[c];
            kb[r] += inst.wk.at(r, c) * inst.h_b[c];
            vb[r] += inst.wv.at(r, c) * inst.h_b[c];
        }
    }
    const Vec kb_rot = apply_rotation(inst.rope, -inst.delta2, kb);
    double score = 0.0;
    for (int i = 0; i < 16; ++i) {
        score += q[i] * kb_rot[i];
    }
    double self = 0.0;
    for (int r = 0; r < 16; ++r) {
        double km = 0.0;
        for (int c = 0; c < 16; ++c) {
            km += inst.wk.at(r, c) * inst.h_mask[c];
        }
        self += q[r] * km;
    }
    const double alpha =
        1.0 / (1.0 + std::exp((self - score) / std::sqrt(16.0)));
    Vec logits(8, 0.0);
    for (int t = 0; t < 8; ++t) {
        for (int c = 0; c < 16; ++c) {
            logits[t] += inst.wo.at(t, c) * alpha * vb[c];
        }
    }
    double mx = logits[0];
    for (double z : logits) {
        mx = std::max(mx, z);
    }
    double denom = 0.0;
    for (double z : logits) {
        denom += std::exp(z - mx);
    }
    for (int t = 0; t < 8; ++t) {
        CHECK(f.probs[t] ==
              doctest::Approx(std::exp(logits[t] - mx) / denom).epsilon(1e-12));
    }
    CHECK(f.attn == doctest::Approx(alpha).epsilon(1e-12));
    CHECK(f.beta == doctest::Approx(alpha * (1.0 - alpha)).epsilon(1e-12));
}

TEST_CASE("closed-form blocks equal finite-difference inner products") {
    RngStream rng(44);
    for (int trial = 0; trial < 4; ++trial) {
        const MinimalInstance inst =
            MinimalInstance::random(16, 8, 1 + rng.uniform_int(6), 1 + rng.uniform_int(6), rng);
        const GradBlocks blocks = closed_form_blocks(inst);
        const MinimalGrads gf = fd_gradients(inst, Direction::fwd);
        const MinimalGrads gr = fd_gradients(inst, Direction::rev);
        const double i_wo = frob_inner(gf.wo, gr.wo);
        const double i_wv = frob_inner(gf.wv, gr.wv);
        const double i_wq = frob_inner(gf.wq, gr.wq);
        const double i_wk = frob_inner(gf.wk, gr.wk);
        CHECK(blocks.i_wo == doctest::Approx(i_wo).epsilon(1e-4));
        CHECK(blocks.i_wv == doctest::Approx(i_wv).epsilon(1e-4));
        CHECK(blocks.i_wq == doctest::Approx(i_wq).epsilon(1e-4));
        CHECK(blocks.i_wk == doctest::Approx(i_wk).epsilon(1e-4));
    }
}

TEST_CASE("analytic gradients equal finite differences blockwise") {
    RngStream rng(45);
    const MinimalInstance inst = MinimalInstance::random(8, 6, 2, 5, rng);
    for (Direction dir : {Direction::fwd, Direction::rev}) {
        const MinimalGrads a = minimal_gradients(inst, dir);
        const MinimalGrads n = fd_gradients(inst, dir);
        for (auto [ap, np] : {std::pair{&a.wq, &n.wq}, std::pair{&a.wk, &n.wk},
                              std::pair{&a.wv, &n.wv}, std::pair{&a.wo, &n.wo}}) {
            for (size_t i = 0; i < ap->data.size(); ++i) {
                CHECK(ap->data[i] == doctest::Approx(np->data[i]).epsilon(1e-4));
            }
        }
    }
}

TEST_CASE("saturated target suppresses every block") {
    RngStream rng(46);
    MinimalInstance inst = MinimalInstance::random(16, 8, 2, 2, rng);
    // Blow up the target row so softmax saturates exactly in floating point.
    Vec vb(16, 0.0);
    for (int r = 0; r < 16; ++r) {
        for (int c = 0; c < 16; ++c) {
            vb[r] += inst.wv.at(r, c) * inst.h_b[c];
        }
    }
    const double vb2 = dot(vb, vb);
    for (int c = 0; c < 16; ++c) {
        inst.wo.at(inst.target, c) = 5000.0 * vb[c] / vb2;
    }
    const MinimalForward f = minimal_forward(inst, Direction::fwd);
    CHECK(f.probs[inst.target] == 1.0);
    const GradBlocks blocks = closed_form_blocks(inst);
    CHECK(std::abs(blocks.i_wo) <= 1e-12);
    CHECK(std::abs(blocks.i_wv) <= 1e-12);
    CHECK(std::abs(blocks.i_wq) <= 1e-12);
    CHECK(std::abs(blocks.i_wk) <= 1e-12);

    const CorollaryReport rep = corollary_conditions(inst);
    CHECK_FALSE(rep.nonsaturated);
}

TEST_CASE("crafted key cancels the query-projection block") {
    // Two active planes with opposite-sign cosines at delta1+delta2 cancel
    // the RoPE quadratic form on k_B, so I_WQ vanishes.
    RngStream rng(47);
    MinimalInstance inst = MinimalInstance::random(4, 6, 1, 2, rng);
    const RopeParams& rope = inst.rope;
    const long long dsum = inst.delta1 + inst.delta2;  // 3
    const double c1 = std::cos(dsum * rope.freqs[0]);
    const double c2 = std::cos(dsum * rope.freqs[1]);
    REQUIRE(c1 * c2 < 0.0);
    // k_B = (a, 0, b, 0) with c1 a^2 + c2 b^2 = 0.
    const double a = 1.0;
    const double b = std::sqrt(-c1 / c2);
    std::fill(inst.h_b.begin(), inst.h_b.end(), 0.0);
    inst.h_b[0] = 1.0;
    for (int r = 0; r < 4; ++r) {
        inst.wk.at(r, 0) = 0.0;
    }
    inst.wk.at(0, 0) = a;
    inst.wk.at(2, 0) = b;
    Vec kb(4, 0.0);
    for (int r = 0; r < 4; ++r) {
        kb[r] = inst.wk.at(r, 0);
    }
    CHECK(std::abs(quadratic_form(rope, dsum, kb)) <= 1e-15);
    const GradBlocks blocks = closed_form_blocks(inst);
    CHECK(std::abs(blocks.i_wq) <= 1e-15);
}

TEST_CASE("corollary gate flags violated conditions") {
    RngStream rng(48);
    bool found_violation = false;
    for (int trial = 0; trial < 400 && !found_violation; ++trial) {
        const MinimalInstance inst =
            MinimalInstance::random(16, 8, 1 + rng.uniform_int(20), 1 + rng.uniform_int(20), rng);
        const CorollaryReport rep = corollary_conditions(inst);
        if (!rep.margins_same_sign) {
            found_violation = true;
            CHECK_FALSE(rep.all_conditions());
        }
    }
    CHECK(found_violation);
}

TEST_CASE("no random instance satisfies all conditions with nonpositive total") {
    RngStream rng(49);
    int satisfied = 0;
    for (int trial = 0; trial < 300; ++trial) {
        const MinimalInstance inst =
            MinimalInstance::random(16, 8, 1 + rng.uniform_int(10), 1 + rng.uniform_int(10), rng);
        const CorollaryReport rep = corollary_conditions(inst);
        if (rep.all_conditions()) {
            ++satisfied;
            CHECK(rep.blocks.total() > 0.0);
        }
    }
    CHECK(satisfied > 0);
}

TEST_CASE("blocks depend on the deltas only through their sum") {
    // Craft scores that vanish for every offset: the query lives in plane 1,
    // the B key in plane 2, so swapping (d1, d2) changes nothing at all.
    RngStream rng(50);
    MinimalInstance inst = MinimalInstance::random(4, 6, 2, 5, rng);
    std::fill(inst.h_mask.begin(), inst.h_mask.end(), 0.0);
    inst.h_mask[0] = 1.0;
    std::fill(inst.h_b.begin(), inst.h_b.end(), 0.0);
    inst.h_b[1] = 1.0;
    for (int r = 0; r < 4; ++r) {
        inst.wq.at(r, 0) = r < 2 ? 0.7 : 0.0;   // query in plane 1
        inst.wk.at(r, 1) = r >= 2 ? -0.4 : 0.0; // key in plane 2
    }
    MinimalInstance swapped = inst;
    std::swap(swapped.delta1, swapped.delta2);

    const MinimalForward f1 = minimal_forward(inst, Direction::fwd);
    const MinimalForward f2 = minimal_forward(swapped, Direction::fwd);
    CHECK(f1.score == doctest::Approx(f2.score).epsilon(1e-15));

    const GradBlocks b1 = closed_form_blocks(inst);
    const GradBlocks b2 = closed_form_blocks(swapped);
    CHECK(b1.i_wo == b2.i_wo);
    CHECK(b1.i_wv == b2.i_wv);
    CHECK(b1.i_wq == doctest::Approx(b2.i_wq).epsilon(1e-14));
    CHECK(b1.i_wk == doctest::Approx(b2.i_wk).epsilon(1e-14));
}

TEST_CASE("cross-entropy error alignment") {
    Vec p = {0.5, 0.5, 0.0, 0.0};
    Vec q = {0.5, 0.5, 0.0, 0.0};
    const ErrorAlignReport rep = error_alignment_check(p, q, 0);
    CHECK(rep.inner == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(rep.bound == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(rep.ok);

    Vec sat = {1.0, 0.0, 0.0, 0.0};
    CHECK_THROWS_AS(error_alignment_check(sat, q, 0), ContractError);

    // Random simplex pairs never violate the bound.
    RngStream rng(51);
    for (int trial = 0; trial < 10000; ++trial) {
        const int n = 2 + rng.uniform_int(12);
        const int target = rng.uniform_int(n);
        auto draw = [&]() {
            Vec v(n);
            double s = 0.0;
            for (double& x : v) {
                x = -std::log(1.0 - rng.uniform());
                s += x;
            }
            for (double& x : v) {
                x /= s;
            }
            return v;
        };
        const Vec a = draw();
        const Vec b = draw();
        if (a[target] >= 1.0 || b[target] >= 1.0) {
            continue;
        }
        CHECK(error_alignment_check(a, b, target).ok);
    }
}

TEST_CASE("random projections preserve acute angles") {
    RngStream rng(52);
    const ProjectionReport clean = projection_preservation_check(128, 64, 0.0, 300, rng);
    CHECK(clean.positive_fraction >= 0.99);

    const ProjectionReport drifted =
        projection_preservation_check(512, 64, 1.0 / 32.0, 300, rng);
    CHECK(drifted.positive_fraction >= 0.99);

    CHECK_THROWS_AS(projection_preservation_check(64, 64, 0.5, 10, rng), ContractError);
}

TEST_CASE("forward sgd step on the output projection raises the margin") {
    RngStream rng(53);
    for (int trial = 0; trial < 1000; ++trial) {
        const MinimalInstance inst =
            MinimalInstance::random(16, 8, 1 + rng.uniform_int(8), 1 + rng.uniform_int(8), rng);
        const MarginStepReport rep = margin_sgd_step_check(inst, 0.1);
        CHECK(rep.d_c_target > 0.0);
        CHECK(rep.max_d_c_other < 0.0);
        CHECK(rep.max_closed_form_err <= 1e-10);
    }

    const MinimalInstance inst = MinimalInstance::random(16, 8, 2, 2, rng);
    const MarginStepReport frozen = margin_sgd_step_check(inst, 0.0);
    CHECK(frozen.d_c_target == 0.0);
    CHECK(frozen.max_d_c_other == 0.0);
}

TEST_CASE("forward step decreases the reverse loss to first order") {
    RngStream rng(54);
    int checked = 0;
    for (int trial = 0; trial < 50 && checked < 10; ++trial) {
        const MinimalInstance inst =
            MinimalInstance::random(16, 8, 1 + rng.uniform_int(6), 1 + rng.uniform_int(6), rng);
        const GradBlocks blocks = closed_form_blocks(inst);
        if (blocks.total() <= 0.0) {
            continue;
        }
        const TransferReport rep = first_order_transfer_check(inst);
        CHECK(rep.decreased);
        CHECK(rep.first_order_ok);
        ++checked;
    }
    CHECK(checked >= 10);

    // Saturated instance: zero gradient, loss unchanged.
    MinimalInstance sat = MinimalInstance::random(16, 8, 2, 2, rng);
    Vec vb(16, 0.0);
    for (int r = 0; r < 16; ++r) {
        for (int c = 0; c < 16; ++c) {
            vb[r] += sat.wv.at(r, c) * sat.h_b[c];
        }
    }
    const double vb2 = dot(vb, vb);
    for (int c = 0; c < 16; ++c) {
        sat.wo.at(sat.target, c) = 5000.0 * vb[c] / vb2;
    }
    const TransferReport rep = first_order_transfer_check(sat);
    CHECK(rep.loss_after == rep.loss_before);
    CHECK_FALSE(rep.decreased);
}
