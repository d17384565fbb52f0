#pragma once

#include "revlab/rng.hpp"
#include "revlab/rope.hpp"

namespace revlab {

enum class Direction { fwd, rev };

const char* to_string(Direction d);

// The two-token probe: a mask query and a single informative context token B
// at relative distance delta1 (mask before B) or delta2 (mask after B), with
// fixed embeddings and trainable projections.
struct MinimalInstance {
    int dim = 0;
    int vocab = 0;
    Vec h_mask;  // embedding of the mask token
    Vec h_b;     // embedding of B
    Matrix wq;   // D x D
    Matrix wk;   // D x D
    Matrix wv;   // D x D
    Matrix wo;   // vocab x D
    int delta1 = 1;
    int delta2 = 1;
    int target = 0;  // token A
    RopeParams rope;

    static MinimalInstance random(int dim, int vocab, int delta1, int delta2, RngStream& rng);
    void validate() const;
};

// One evaluated direction. The attention weight comes from a two-slot softmax
// over the B score and the mask self-score; the self-score enters as a fixed
// scalar of the instance so that the closed-form gradient blocks below are
// the exact gradients of this loss.
struct MinimalForward {
    Direction direction = Direction::fwd;
    double score = 0.0;       // q^T R(+-delta) k_B, unscaled
    double self_score = 0.0;  // q^T k_mask, unscaled, frozen competitor
    double attn = 0.0;        // alpha
    double beta = 0.0;        // alpha (1 - alpha)
    Vec context;              // alpha * v_B
    Vec logits;               // W_O context
    Vec probs;
    Vec error;             // probs - onehot(target)
    Vec backprop;          // W_O^T error
    Vec logit_components;  // C_t = w_{O,t} . v_B
    double margin = 0.0;   // mu = sum_t e_t C_t
};

double self_attention_score(const MinimalInstance& inst);

MinimalForward minimal_forward(const MinimalInstance& inst, Direction dir);
MinimalForward minimal_forward(const MinimalInstance& inst, Direction dir,
                               double competitor_score);

double minimal_loss(const MinimalInstance& inst, Direction dir);
double minimal_loss(const MinimalInstance& inst, Direction dir, double competitor_score);

struct MinimalGrads {
    Matrix wq, wk, wv, wo;
};

MinimalGrads minimal_gradients(const MinimalInstance& inst, Direction dir);
MinimalGrads minimal_gradients(const MinimalInstance& inst, Direction dir,
                               double competitor_score);

// Per-block forward/reverse gradient inner products.
struct GradBlocks {
    double i_wo = 0.0;
    double i_wv = 0.0;
    double i_wq = 0.0;
    double i_wk = 0.0;

    double total() const { return i_wo + i_wv + i_wq + i_wk; }
};

GradBlocks closed_form_blocks(const MinimalInstance& inst);

struct CorollaryReport {
    bool nonsaturated = false;
    bool u_aligned = false;
    bool margins_same_sign = false;
    bool rope_forms_positive = false;
    GradBlocks blocks;

    bool all_conditions() const {
        return nonsaturated && u_aligned && margins_same_sign && rope_forms_positive;
    }
    bool total_positive() const { return blocks.total() > 0.0; }
};

CorollaryReport corollary_conditions(const MinimalInstance& inst);

struct ErrorAlignReport {
    double inner = 0.0;
    double bound = 0.0;  // (1 - p_A)(1 - q_A)
    bool ok = false;
};

// Cross-entropy error alignment: <p - 1_A, q - 1_A> >= (1-p_A)(1-q_A) > 0.
ErrorAlignReport error_alignment_check(const Vec& p, const Vec& q, int target);

struct ProjectionReport {
    int trials = 0;
    double positive_fraction = 0.0;
};

// Random-projection angle preservation under a spectral-norm-delta drift:
// fraction of trials with <P a, P b> > 0 for unit a, b with <a,b> >= 1/2.
ProjectionReport projection_preservation_check(int dim, int vocab, double delta_norm, int trials,
                                               RngStream& rng);

struct MarginStepReport {
    double d_c_target = 0.0;
    double max_d_c_other = 0.0;
    double max_closed_form_err = 0.0;
};

// One SGD step on W_O with the forward gradient; the target logit component
// rises and every other one falls, matching -eta alpha |v_B|^2 e_t.
MarginStepReport margin_sgd_step_check(const MinimalInstance& inst, double eta);

struct TransferReport {
    double eta = 0.0;
    double loss_before = 0.0;
    double loss_after = 0.0;
    double decrease = 0.0;
    double predicted_inner = 0.0;  // <g_fwd, g_rev>
    double ratio = 0.0;            // decrease / (eta * predicted_inner)
    bool decreased = false;
    bool first_order_ok = false;  // ratio within [0.8, 1.2]
};

// Applies theta - eta g_fwd to all four matrices and measures the reverse
// loss; eta is halved until successive decrease/eta ratios differ by < 5%.
TransferReport first_order_transfer_check(const MinimalInstance& inst, double eta0 = 1e-3);

}  // namespace revlab
