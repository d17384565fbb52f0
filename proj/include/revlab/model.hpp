#pragma once

#include <string>

#include "revlab/data.hpp"
#include "revlab/rope.hpp"

namespace revlab {

enum class Block { attn_only, full };
enum class AttnMode { full, causal };

const char* to_string(Block b);
Block block_from_string(const std::string& s);

struct ModelConfig {
    Arch arch = Arch::mdm;
    int dim = 256;
    int heads = 1;  // fixed at 1
    int vocab = Vocab::size;
    int max_len = 10;
    Block block = Block::full;
    double dropout = 0.02;
    bool tied_embeddings = false;
    double rope_base = 10000.0;

    int mlp_hidden() const { return 4 * dim; }
    AttnMode attn_mode() const { return arch == Arch::arm ? AttnMode::causal : AttnMode::full; }
    void validate() const;
};

struct TensorView {
    const char* name;
    double* data;
    size_t size;
};

// All trainable tensors. Layout of the flat parameter/gradient vector is the
// canonical order: embed, wq, wk, wv, wo, mlp, norms, head.
struct ModelParams {
    ModelConfig config;
    RopeParams rope;
    Matrix embed;  // vocab x D
    Matrix wq, wk, wv, wo;
    Matrix mlp_fc;  // 4D x D
    Vec mlp_fc_b;
    Matrix mlp_proj;  // D x 4D
    Vec mlp_proj_b;
    Vec ln1_g, ln1_b, ln2_g, ln2_b, lnf_g, lnf_b;
    Matrix head;  // vocab x D, absent when tied_embeddings

    static ModelParams init(const ModelConfig& config, RngStream& rng);

    std::vector<TensorView> tensors();
    std::vector<TensorView> tensors() const;
    size_t param_count() const;
    Vec to_flat() const;
    void from_flat(const Vec& flat);

    const Matrix& head_matrix() const { return config.tied_embeddings ? embed : head; }
};

struct ModelGrads {
    ModelConfig config;
    Matrix embed, wq, wk, wv, wo, mlp_fc, mlp_proj, head;
    Vec mlp_fc_b, mlp_proj_b, ln1_g, ln1_b, ln2_g, ln2_b, lnf_g, lnf_b;

    static ModelGrads zeros(const ModelConfig& config);
    void zero();
    std::vector<TensorView> tensors();
    Vec to_flat() const;
    void flatten_into(double* out) const;
};

// Per-row loss specification of a batch: `weights[r] > 0` marks rows that
// contribute -weights[r] * log p(targets[r]) to the loss.
struct Batch {
    int batch = 0;
    int length = 0;
    std::vector<int> tokens;   // batch * length
    std::vector<int> targets;  // batch * length
    Vec weights;               // batch * length
};

Batch make_mdm_batch(const std::vector<MaskedBatch>& examples);
Batch make_arm_batch(const std::vector<std::vector<int>>& sequences);

// Scratch buffers for forward/backward; reusable across steps.
struct Workspace;
Workspace* workspace_create();
void workspace_destroy(Workspace*);

struct WorkspaceHandle {
    Workspace* ws;
    WorkspaceHandle() : ws(workspace_create()) {}
    ~WorkspaceHandle() { workspace_destroy(ws); }
    WorkspaceHandle(const WorkspaceHandle&) = delete;
    WorkspaceHandle& operator=(const WorkspaceHandle&) = delete;
};

// Mean batch loss; fills `grads` with its exact gradient. Dropout masks are
// drawn from `dropout_rng` when training and dropout > 0.
double forward_backward(const ModelParams& params, const Batch& batch, bool training,
                        RngStream* dropout_rng, Workspace& ws, ModelGrads& grads);

double batch_loss(const ModelParams& params, const Batch& batch, Workspace& ws);

// Single-sequence analysis forward (no dropout): logits per position plus raw
// attention scores S_ij = q_i^T R(j-i) k_j and the softmaxed weights.
struct ForwardResult {
    Matrix logits;   // L x vocab
    Matrix scores;   // L x L, unscaled
    Matrix weights;  // L x L, rows sum to 1 over allowed keys
};

ForwardResult forward(const ModelParams& params, const std::vector<int>& tokens, AttnMode mode);
ForwardResult forward(const ModelParams& params, const std::vector<int>& tokens);

double loss_mdm(const ModelParams& params, const std::vector<int>& clean,
                const std::vector<int>& corrupted, double t);
double loss_arm(const ModelParams& params, const std::vector<int>& tokens);

// Gradient of a single-prompt loss with dropout disabled, flattened in
// canonical order. MDM: tokens[query_pos] is the mask, loss is
// -log p(target at query_pos). ARM: tokens is the bare prefix and the loss is
// -log p(target | prefix) at the next position.
Vec snapshot_gradient(const ModelParams& params, const std::vector<int>& tokens, int query_pos,
                      int target);

// Buffer-reusing variant for measurement loops; writes param_count() doubles.
void snapshot_gradient_into(const ModelParams& params, const std::vector<int>& tokens,
                            int query_pos, int target, Workspace& ws, ModelGrads& grads,
                            double* out_flat);

// Probability of `target` at `pos` under the prompt (dropout off).
double token_probability(const ModelParams& params, const std::vector<int>& tokens, int pos,
                         int target);
double token_probability(const ModelParams& params, const std::vector<int>& tokens, int pos,
                         int target, Workspace& ws);

struct Schedule {
    double lr = 3e-4;
    int warmup = 1000;
    double clip = 1.0;
    double weight_decay = 0.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double ema_decay = 0.9999;
};

struct OptState {
    int64_t step = 0;
    Vec m, v;
    Vec ema;

    static OptState init(const ModelParams& params);
};

// Global-norm clip at schedule.clip, linear warmup to schedule.lr, AdamW
// update with decoupled weight decay, then EMA shadow update.
void adamw_step(ModelParams& params, OptState& opt, const Vec& grads, const Schedule& schedule);

// Self-describing binary checkpoint; round-trips bitwise.
void save_checkpoint(const std::string& path, const ModelParams& params, uint64_t seed,
                     int64_t step);
ModelParams load_checkpoint(const std::string& path, uint64_t* seed = nullptr,
                            int64_t* step = nullptr);

ModelConfig config_from_json_string(const std::string& s);
std::string config_to_json_string(const ModelConfig& c);

}  // namespace revlab
