#include "revlab/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace revlab {

const char* to_string(Block b) { return b == Block::attn_only ? "attn_only" : "full"; }

Block block_from_string(const std::string& s) {
    if (s == "attn_only") {
        return Block::attn_only;
    }
    if (s == "full") {
        return Block::full;
    }
    throw ContractError("contract-violation", "unknown block: " + s);
}

void ModelConfig::validate() const {
    require(heads == 1, "contract-violation", "config: heads must be 1");
    require(dim > 0 && dim % 2 == 0, "contract-violation", "config: dim must be even");
    require(dropout >= 0.0 && dropout < 1.0, "contract-violation", "config: dropout in [0,1)");
    require(vocab >= 2 && max_len >= 1, "contract-violation", "config: vocab/max_len");
}

namespace {

constexpr double kInitStd = 0.02;
constexpr double kLnEps = 1e-5;

template <class P>
std::vector<TensorView> collect_tensors(P& p) {
    using NC = std::remove_const_t<P>;
    NC& q = const_cast<NC&>(p);
    std::vector<TensorView> out;
    auto add_m = [&](const char* name, Matrix& m) {
        if (!m.data.empty()) {
            out.push_back({name, m.data.data(), m.data.size()});
        }
    };
    auto add_v = [&](const char* name, Vec& v) {
        if (!v.empty()) {
            out.push_back({name, v.data(), v.size()});
        }
    };
    add_m("embed", q.embed);
    add_m("wq", q.wq);
    add_m("wk", q.wk);
    add_m("wv", q.wv);
    add_m("wo", q.wo);
    add_m("mlp_fc", q.mlp_fc);
    add_v("mlp_fc_b", q.mlp_fc_b);
    add_m("mlp_proj", q.mlp_proj);
    add_v("mlp_proj_b", q.mlp_proj_b);
    add_v("ln1_g", q.ln1_g);
    add_v("ln1_b", q.ln1_b);
    add_v("ln2_g", q.ln2_g);
    add_v("ln2_b", q.ln2_b);
    add_v("lnf_g", q.lnf_g);
    add_v("lnf_b", q.lnf_b);
    add_m("head", q.head);
    return out;
}

}  // namespace

ModelParams ModelParams::init(const ModelConfig& config, RngStream& rng) {
    config.validate();
    ModelParams p;
    p.config = config;
    p.rope = RopeParams::make(config.dim, config.rope_base);
    auto gauss_fill = [&](Matrix& m, int r, int c) {
        m = Matrix(r, c);
        for (double& v : m.data) {
            v = rng.normal() * kInitStd;
        }
    };
    gauss_fill(p.embed, config.vocab, config.dim);
    gauss_fill(p.wq, config.dim, config.dim);
    gauss_fill(p.wk, config.dim, config.dim);
    gauss_fill(p.wv, config.dim, config.dim);
    gauss_fill(p.wo, config.dim, config.dim);
    if (config.block == Block::full) {
        gauss_fill(p.mlp_fc, config.mlp_hidden(), config.dim);
        p.mlp_fc_b.assign(static_cast<size_t>(config.mlp_hidden()), 0.0);
        gauss_fill(p.mlp_proj, config.dim, config.mlp_hidden());
        p.mlp_proj_b.assign(static_cast<size_t>(config.dim), 0.0);
        p.ln1_g.assign(static_cast<size_t>(config.dim), 1.0);
        p.ln1_b.assign(static_cast<size_t>(config.dim), 0.0);
        p.ln2_g.assign(static_cast<size_t>(config.dim), 1.0);
        p.ln2_b.assign(static_cast<size_t>(config.dim), 0.0);
        p.lnf_g.assign(static_cast<size_t>(config.dim), 1.0);
        p.lnf_b.assign(static_cast<size_t>(config.dim), 0.0);
    }
    if (!config.tied_embeddings) {
        gauss_fill(p.head, config.vocab, config.dim);
    }
    return p;
}

std::vector<TensorView> ModelParams::tensors() { return collect_tensors(*this); }
std::vector<TensorView> ModelParams::tensors() const { return collect_tensors(*this); }

size_t ModelParams::param_count() const {
    size_t n = 0;
    for (const auto& t : tensors()) {
        n += t.size;
    }
    return n;
}

Vec ModelParams::to_flat() const {
    Vec flat;
    flat.reserve(param_count());
    for (const auto& t : tensors()) {
        flat.insert(flat.end(), t.data, t.data + t.size);
    }
    return flat;
}

void ModelParams::from_flat(const Vec& flat) {
    size_t off = 0;
    for (auto& t : tensors()) {
        require(off + t.size <= flat.size(), "dimension-mismatch", "from_flat: size mismatch");
        std::memcpy(t.data, flat.data() + off, t.size * sizeof(double));
        off += t.size;
    }
    require(off == flat.size(), "dimension-mismatch", "from_flat: size mismatch");
}

ModelGrads ModelGrads::zeros(const ModelConfig& config) {
    ModelGrads g;
    g.config = config;
    g.embed = Matrix(config.vocab, config.dim);
    g.wq = Matrix(config.dim, config.dim);
    g.wk = Matrix(config.dim, config.dim);
    g.wv = Matrix(config.dim, config.dim);
    g.wo = Matrix(config.dim, config.dim);
    if (config.block == Block::full) {
        g.mlp_fc = Matrix(config.mlp_hidden(), config.dim);
        g.mlp_fc_b.assign(static_cast<size_t>(config.mlp_hidden()), 0.0);
        g.mlp_proj = Matrix(config.dim, config.mlp_hidden());
        g.mlp_proj_b.assign(static_cast<size_t>(config.dim), 0.0);
        g.ln1_g.assign(static_cast<size_t>(config.dim), 0.0);
        g.ln1_b.assign(static_cast<size_t>(config.dim), 0.0);
        g.ln2_g.assign(static_cast<size_t>(config.dim), 0.0);
        g.ln2_b.assign(static_cast<size_t>(config.dim), 0.0);
        g.lnf_g.assign(static_cast<size_t>(config.dim), 0.0);
        g.lnf_b.assign(static_cast<size_t>(config.dim), 0.0);
    }
    if (!config.tied_embeddings) {
        g.head = Matrix(config.vocab, config.dim);
    }
    return g;
}

void ModelGrads::zero() {
    for (auto& t : tensors()) {
        std::fill(t.data, t.data + t.size, 0.0);
    }
}

std::vector<TensorView> ModelGrads::tensors() { return collect_tensors(*this); }

Vec ModelGrads::to_flat() const {
    Vec flat;
    for (const auto& t : collect_tensors(*this)) {
        flat.insert(flat.end(), t.data, t.data + t.size);
    }
    return flat;
}

void ModelGrads::flatten_into(double* out) const {
    size_t off = 0;
    for (const auto& t : collect_tensors(*this)) {
        std::memcpy(out + off, t.data, t.size * sizeof(double));
        off += t.size;
    }
}

Batch make_mdm_batch(const std::vector<MaskedBatch>& examples) {
    require(!examples.empty(), "contract-violation", "make_mdm_batch: empty batch");
    const int length = static_cast<int>(examples[0].clean.size());
    const int batch = static_cast<int>(examples.size());
    Batch b;
    b.batch = batch;
    b.length = length;
    b.tokens.resize(static_cast<size_t>(batch) * length);
    b.targets.assign(static_cast<size_t>(batch) * length, 0);
    b.weights.assign(static_cast<size_t>(batch) * length, 0.0);
    const double inv_batch = 1.0 / batch;
    for (int e = 0; e < batch; ++e) {
        const MaskedBatch& ex = examples[e];
        require(static_cast<int>(ex.clean.size()) == length &&
                    ex.corrupted.size() == ex.clean.size(),
                "dimension-mismatch", "make_mdm_batch: ragged batch");
        require(!ex.mask_positions.empty(), "contract-violation",
                "make_mdm_batch: zero masked positions");
        for (int i = 0; i < length; ++i) {
            b.tokens[static_cast<size_t>(e) * length + i] = ex.corrupted[i];
        }
        for (int pos : ex.mask_positions) {
            const size_t r = static_cast<size_t>(e) * length + pos;
            b.targets[r] = ex.clean[pos];
            b.weights[r] = inv_batch / ex.t;
        }
    }
    return b;
}

Batch make_arm_batch(const std::vector<std::vector<int>>& sequences) {
    require(!sequences.empty(), "contract-violation", "make_arm_batch: empty batch");
    const int length = static_cast<int>(sequences[0].size());
    require(length >= 2, "contract-violation", "make_arm_batch: length must be >= 2");
    const int batch = static_cast<int>(sequences.size());
    Batch b;
    b.batch = batch;
    b.length = length;
    b.tokens.resize(static_cast<size_t>(batch) * length);
    b.targets.assign(static_cast<size_t>(batch) * length, 0);
    b.weights.assign(static_cast<size_t>(batch) * length, 0.0);
    const double inv_batch = 1.0 / batch;
    for (int e = 0; e < batch; ++e) {
        require(static_cast<int>(sequences[e].size()) == length, "dimension-mismatch",
                "make_arm_batch: ragged batch");
        for (int i = 0; i < length; ++i) {
            b.tokens[static_cast<size_t>(e) * length + i] = sequences[e][i];
        }
        // Row i predicts token i+1.
        for (int i = 0; i + 1 < length; ++i) {
            const size_t r = static_cast<size_t>(e) * length + i;
            b.targets[r] = sequences[e][i + 1];
            b.weights[r] = inv_batch;
        }
    }
    return b;
}

// ---------------------------------------------------------------------------
// Forward/backward internals.
// ---------------------------------------------------------------------------

struct Workspace {
    Matrix x0, n1, q, k, v, qr, kr, ctx, y, x1, n2, f1, gelu_out, f2, x2, nf, logits;
    Matrix attn_s, attn_w, attn_wd;  // (B*L) x L
    // Backward scratch: d_x carries the running gradient into the residual
    // stream, d_a/d_b are general R x D temporaries, d_kr/d_v hold the rotated
    // key and value gradients, d_hidden the MLP hidden gradient.
    Matrix d_x, d_a, d_b, d_kr, d_v, d_hidden;
    Matrix d_logits, d_s;
    Vec ln1_mu, ln1_rs, ln2_mu, ln2_rs, lnf_mu, lnf_rs;
    Vec attn_mask, mlp_mask;  // dropout scale factors, 0 or 1/(1-p)
    Vec row_loss;
};

Workspace* workspace_create() { return new Workspace(); }
void workspace_destroy(Workspace* ws) { delete ws; }

namespace {

void ensure(Matrix& m, int rows, int cols) {
    if (m.rows != rows || m.cols != cols) {
        m = Matrix(rows, cols);
    }
}

void ensure(Vec& v, size_t n) {
    if (v.size() != n) {
        v.assign(n, 0.0);
    }
}

// y = x W^T row-wise, optional bias.
void linear_fwd(Matrix& out, const Matrix& in, const Matrix& w, const Vec* bias) {
    gemm_nt(out, in, w, false);
    if (bias != nullptr) {
        const int n = out.cols;
#pragma omp parallel for schedule(static)
        for (int r = 0; r < out.rows; ++r) {
            double* row = out.row(r);
            for (int j = 0; j < n; ++j) {
                row[j] += (*bias)[j];
            }
        }
    }
}

// d_in (+)= d_out W ; d_w += d_out^T in ; d_bias += colsum(d_out)
void linear_bwd(Matrix& d_in, bool accumulate_d_in, Matrix& d_w, Vec* d_bias,
                const Matrix& d_out, const Matrix& in, const Matrix& w) {
    gemm_nn(d_in, d_out, w, accumulate_d_in);
    gemm_tn_acc(d_w, d_out, in);
    if (d_bias != nullptr) {
        const int n = d_out.cols;
#pragma omp parallel for schedule(static)
        for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (int r = 0; r < d_out.rows; ++r) {
                s += d_out.at(r, j);
            }
            (*d_bias)[j] += s;
        }
    }
}

void layernorm_fwd(Matrix& out, Vec& mu, Vec& rstd, const Matrix& in, const Vec& g,
                   const Vec& b) {
    const int n = in.cols;
    ensure(mu, static_cast<size_t>(in.rows));
    ensure(rstd, static_cast<size_t>(in.rows));
#pragma omp parallel for schedule(static)
    for (int r = 0; r < in.rows; ++r) {
        const double* x = in.row(r);
        double m = 0.0;
        for (int j = 0; j < n; ++j) {
            m += x[j];
        }
        m /= n;
        double var = 0.0;
        for (int j = 0; j < n; ++j) {
            const double d = x[j] - m;
            var += d * d;
        }
        var /= n;
        const double rs = 1.0 / std::sqrt(var + kLnEps);
        mu[r] = m;
        rstd[r] = rs;
        double* o = out.row(r);
        for (int j = 0; j < n; ++j) {
            o[j] = (x[j] - m) * rs * g[j] + b[j];
        }
    }
}

// d_in (+)= LN backward; d_g/d_b accumulated serially afterwards to keep the
// reduction order fixed.
void layernorm_bwd(Matrix& d_in, bool accumulate, Vec& d_g, Vec& d_b, const Matrix& d_out,
                   const Matrix& in, const Vec& mu, const Vec& rstd, const Vec& g) {
    const int n = in.cols;
#pragma omp parallel for schedule(static)
    for (int r = 0; r < in.rows; ++r) {
        const double* x = in.row(r);
        const double* dy = d_out.row(r);
        double* dx = d_in.row(r);
        const double m = mu[r];
        const double rs = rstd[r];
        double s1 = 0.0, s2 = 0.0;
        for (int j = 0; j < n; ++j) {
            const double xhat = (x[j] - m) * rs;
            const double dyg = dy[j] * g[j];
            s1 += dyg;
            s2 += dyg * xhat;
        }
        s1 /= n;
        s2 /= n;
        for (int j = 0; j < n; ++j) {
            const double xhat = (x[j] - m) * rs;
            const double dyg = dy[j] * g[j];
            const double v = (dyg - s1 - xhat * s2) * rs;
            dx[j] = accumulate ? dx[j] + v : v;
        }
    }
    for (int r = 0; r < in.rows; ++r) {
        const double* x = in.row(r);
        const double* dy = d_out.row(r);
        const double m = mu[r];
        const double rs = rstd[r];
        for (int j = 0; j < n; ++j) {
            d_g[j] += dy[j] * (x[j] - m) * rs;
            d_b[j] += dy[j];
        }
    }
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)

double gelu(double x) {
    const double u = kGeluC * (x + 0.044715 * x * x * x);
    return 0.5 * x * (1.0 + std::tanh(u));
}

double gelu_grad(double x) {
    const double x3 = 0.044715 * x * x * x;
    const double u = kGeluC * (x + x3);
    const double t = std::tanh(u);
    const double du = kGeluC * (1.0 + 3.0 * 0.044715 * x * x);
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

struct PassContext {
    const ModelParams* params;
    const Batch* batch;
    bool training = false;
    bool want_scores = false;
    AttnMode mode = AttnMode::full;
};

// Runs the forward pass into ws; returns the scalar loss (sum of weighted row
// losses) and fills ws.d_logits with its gradient.
double run_forward(const PassContext& c, Workspace& ws, RngStream* dropout_rng) {
    const ModelParams& p = *c.params;
    const ModelConfig& cfg = p.config;
    const Batch& batch = *c.batch;
    const int B = batch.batch, L = batch.length, D = cfg.dim, V = cfg.vocab;
    const int R = B * L;
    require(L <= cfg.max_len, "contract-violation", "sequence longer than max_len");
    for (int t : batch.tokens) {
        require(t >= 0 && t < V, "contract-violation", "invalid token id");
    }
    const bool full = cfg.block == Block::full;
    const bool causal = c.mode == AttnMode::causal;
    const double scale = 1.0 / std::sqrt(static_cast<double>(D));

    ensure(ws.x0, R, D);
    ensure(ws.q, R, D);
    ensure(ws.k, R, D);
    ensure(ws.v, R, D);
    ensure(ws.qr, R, D);
    ensure(ws.kr, R, D);
    ensure(ws.ctx, R, D);
    ensure(ws.y, R, D);
    ensure(ws.attn_s, R, L);
    ensure(ws.attn_w, R, L);
    ensure(ws.logits, R, V);
    ensure(ws.d_logits, R, V);
    ensure(ws.row_loss, static_cast<size_t>(R));
    if (full) {
        ensure(ws.n1, R, D);
        ensure(ws.x1, R, D);
        ensure(ws.n2, R, D);
        ensure(ws.f1, R, cfg.mlp_hidden());
        ensure(ws.gelu_out, R, cfg.mlp_hidden());
        ensure(ws.f2, R, D);
        ensure(ws.x2, R, D);
        ensure(ws.nf, R, D);
    }

    const bool use_dropout = c.training && cfg.dropout > 0.0;
    if (use_dropout) {
        require(dropout_rng != nullptr, "contract-violation", "training needs a dropout stream");
        const double keep = 1.0 - cfg.dropout;
        const double inv_keep = 1.0 / keep;
        ensure(ws.attn_mask, static_cast<size_t>(R) * L);
        for (double& m : ws.attn_mask) {
            m = dropout_rng->uniform() < keep ? inv_keep : 0.0;
        }
        if (full) {
            ensure(ws.mlp_mask, static_cast<size_t>(R) * D);
            for (double& m : ws.mlp_mask) {
                m = dropout_rng->uniform() < keep ? inv_keep : 0.0;
            }
        }
        ensure(ws.attn_wd, R, L);
    }

    // Embedding gather.
#pragma omp parallel for schedule(static)
    for (int r = 0; r < R; ++r) {
        std::memcpy(ws.x0.row(r), p.embed.row(batch.tokens[r]), sizeof(double) * D);
    }

    const Matrix& attn_in = full ? ws.n1 : ws.x0;
    if (full) {
        layernorm_fwd(ws.n1, ws.ln1_mu, ws.ln1_rs, ws.x0, p.ln1_g, p.ln1_b);
    }
    linear_fwd(ws.q, attn_in, p.wq, nullptr);
    linear_fwd(ws.k, attn_in, p.wk, nullptr);
    linear_fwd(ws.v, attn_in, p.wv, nullptr);

    // RoPE: rotate queries and keys by their own positions, so that
    // qr_i . kr_j = q_i^T R(j-i) k_j.
#pragma omp parallel for schedule(static)
    for (int r = 0; r < R; ++r) {
        const int pos = r % L;
        std::memcpy(ws.qr.row(r), ws.q.row(r), sizeof(double) * D);
        std::memcpy(ws.kr.row(r), ws.k.row(r), sizeof(double) * D);
        rotate_inplace(p.rope, static_cast<double>(pos), ws.qr.row(r));
        rotate_inplace(p.rope, static_cast<double>(pos), ws.kr.row(r));
    }

    // Attention per example.
#pragma omp parallel for schedule(static)
    for (int b = 0; b < B; ++b) {
        const int base = b * L;
        for (int i = 0; i < L; ++i) {
            const double* qi = ws.qr.row(base + i);
            double* srow = ws.attn_s.row(base + i);
            double* wrow = ws.attn_w.row(base + i);
            const int jmax = causal ? i + 1 : L;
            for (int j = 0; j < jmax; ++j) {
                srow[j] = dot(qi, ws.kr.row(base + j), static_cast<size_t>(D));
            }
            for (int j = jmax; j < L; ++j) {
                srow[j] = 0.0;
            }
            std::memcpy(wrow, srow, sizeof(double) * jmax);
            softmax_inplace(wrow, jmax, scale);
            for (int j = jmax; j < L; ++j) {
                wrow[j] = 0.0;
            }
            const double* use = wrow;
            if (use_dropout) {
                double* wd = ws.attn_wd.row(base + i);
                const double* mask = ws.attn_mask.data() + static_cast<size_t>(base + i) * L;
                for (int j = 0; j < L; ++j) {
                    wd[j] = wrow[j] * mask[j];
                }
                use = wd;
            }
            double* crow = ws.ctx.row(base + i);
            std::fill(crow, crow + D, 0.0);
            for (int j = 0; j < jmax; ++j) {
                const double w = use[j];
                if (w == 0.0) {
                    continue;
                }
                const double* vj = ws.v.row(base + j);
                for (int d = 0; d < D; ++d) {
                    crow[d] += w * vj[d];
                }
            }
        }
    }

    linear_fwd(ws.y, ws.ctx, p.wo, nullptr);

    const Matrix* pre_head = &ws.y;
    if (full) {
        // Residual 1.
#pragma omp parallel for schedule(static)
        for (int r = 0; r < R; ++r) {
            const double* a = ws.x0.row(r);
            const double* b = ws.y.row(r);
            double* o = ws.x1.row(r);
            for (int d = 0; d < D; ++d) {
                o[d] = a[d] + b[d];
            }
        }
        layernorm_fwd(ws.n2, ws.ln2_mu, ws.ln2_rs, ws.x1, p.ln2_g, p.ln2_b);
        linear_fwd(ws.f1, ws.n2, p.mlp_fc, &p.mlp_fc_b);
        const int H = cfg.mlp_hidden();
#pragma omp parallel for schedule(static)
        for (int r = 0; r < R; ++r) {
            const double* f = ws.f1.row(r);
            double* g = ws.gelu_out.row(r);
            for (int h = 0; h < H; ++h) {
                g[h] = gelu(f[h]);
            }
        }
        linear_fwd(ws.f2, ws.gelu_out, p.mlp_proj, &p.mlp_proj_b);
        if (use_dropout) {
#pragma omp parallel for schedule(static)
            for (int r = 0; r < R; ++r) {
                double* f = ws.f2.row(r);
                const double* mask = ws.mlp_mask.data() + static_cast<size_t>(r) * D;
                for (int d = 0; d < D; ++d) {
                    f[d] *= mask[d];
                }
            }
        }
        // Residual 2 + final norm.
#pragma omp parallel for schedule(static)
        for (int r = 0; r < R; ++r) {
            const double* a = ws.x1.row(r);
            const double* b = ws.f2.row(r);
            double* o = ws.x2.row(r);
            for (int d = 0; d < D; ++d) {
                o[d] = a[d] + b[d];
            }
        }
        layernorm_fwd(ws.nf, ws.lnf_mu, ws.lnf_rs, ws.x2, p.lnf_g, p.lnf_b);
        pre_head = &ws.nf;
    }

    linear_fwd(ws.logits, *pre_head, p.head_matrix(), nullptr);

    // Weighted cross-entropy rows; d_logits holds the gradient.
#pragma omp parallel for schedule(static)
    for (int r = 0; r < R; ++r) {
        const double w = batch.weights[r];
        double* drow = ws.d_logits.row(r);
        if (w == 0.0) {
            std::fill(drow, drow + V, 0.0);
            ws.row_loss[r] = 0.0;
            continue;
        }
        const double* lrow = ws.logits.row(r);
        std::memcpy(drow, lrow, sizeof(double) * V);
        softmax_inplace(drow, V, 1.0);
        const int target = batch.targets[r];
        ws.row_loss[r] = -w * std::log(std::max(drow[target], 1e-300));
        for (int t = 0; t < V; ++t) {
            drow[t] *= w;
        }
        drow[target] -= w;
    }
    double loss = 0.0;
    for (int r = 0; r < R; ++r) {
        loss += ws.row_loss[r];
    }
    return loss;
}

void run_backward(const PassContext& c, Workspace& ws, ModelGrads& grads) {
    const ModelParams& p = *c.params;
    const ModelConfig& cfg = p.config;
    const Batch& batch = *c.batch;
    const int B = batch.batch, L = batch.length, D = cfg.dim;
    const int R = B * L;
    const bool full = cfg.block == Block::full;
    const bool causal = c.mode == AttnMode::causal;
    const bool use_dropout = c.training && cfg.dropout > 0.0;
    const double scale = 1.0 / std::sqrt(static_cast<double>(D));

    ensure(ws.d_x, R, D);
    ensure(ws.d_a, R, D);
    ensure(ws.d_b, R, D);
    ensure(ws.d_kr, R, D);
    ensure(ws.d_v, R, D);
    ensure(ws.d_s, R, L);
    if (full) {
        ensure(ws.d_hidden, R, cfg.mlp_hidden());
    }

    // logits = pre_head * head^T
    const Matrix& pre_head = full ? ws.nf : ws.y;
    Matrix& d_head_mat = cfg.tied_embeddings ? grads.embed : grads.head;
    gemm_tn_acc(d_head_mat, ws.d_logits, pre_head);

    if (full) {
        gemm_nn(ws.d_a, ws.d_logits, p.head_matrix(), false);  // d_nf
        layernorm_bwd(ws.d_x, false, grads.lnf_g, grads.lnf_b, ws.d_a, ws.x2, ws.lnf_mu,
                      ws.lnf_rs, p.lnf_g);  // d_x = d_x2
        // x2 = x1 + dropout(f2): the MLP branch sees the masked gradient.
#pragma omp parallel for schedule(static)
        for (int r = 0; r < R; ++r) {
            const double* src = ws.d_x.row(r);
            double* df = ws.d_a.row(r);
            if (use_dropout) {
                const double* mask = ws.mlp_mask.data() + static_cast<size_t>(r) * D;
                for (int d = 0; d < D; ++d) {
                    df[d] = src[d] * mask[d];
                }
            } else {
                std::memcpy(df, src, sizeof(double) * D);
            }
        }
        // f2 = gelu(f1) * proj^T + b ; f1 = n2 * fc^T + b
        linear_bwd(ws.d_hidden, false, grads.mlp_proj, &grads.mlp_proj_b, ws.d_a, ws.gelu_out,
                   p.mlp_proj);
        const int H = cfg.mlp_hidden();
#pragma omp parallel for schedule(static)
        for (int r = 0; r < R; ++r) {
            double* dg = ws.d_hidden.row(r);
            const double* f = ws.f1.row(r);
            for (int h = 0; h < H; ++h) {
                dg[h] *= gelu_grad(f[h]);
            }
        }
        linear_bwd(ws.d_b, false, grads.mlp_fc, &grads.mlp_fc_b, ws.d_hidden, ws.n2, p.mlp_fc);
        // d_x1 = d_x2 + LN2_back(d_n2); d_x then carries both the residual
        // path into x0 and the gradient into y.
        layernorm_bwd(ws.d_x, true, grads.ln2_g, grads.ln2_b, ws.d_b, ws.x1, ws.ln2_mu,
                      ws.ln2_rs, p.ln2_g);
    } else {
        gemm_nn(ws.d_x, ws.d_logits, p.head_matrix(), false);  // d_y directly
    }

    // y = ctx * wo^T; d_x holds d_y here (for full, d_x1 = d_y by residual).
    linear_bwd(ws.d_a, false, grads.wo, nullptr, ws.d_x, ws.ctx, p.wo);  // d_a = d_ctx

    // Attention backward: d_a (d_ctx) -> d_b (d_qr), d_kr, d_v.
#pragma omp parallel for schedule(static)
    for (int b = 0; b < B; ++b) {
        const int base = b * L;
        for (int i = 0; i < L; ++i) {
            std::fill(ws.d_kr.row(base + i), ws.d_kr.row(base + i) + D, 0.0);
            std::fill(ws.d_v.row(base + i), ws.d_v.row(base + i) + D, 0.0);
        }
        for (int i = 0; i < L; ++i) {
            const int jmax = causal ? i + 1 : L;
            const double* dc = ws.d_a.row(base + i);
            const double* wrow = ws.attn_w.row(base + i);
            const double* mask = use_dropout
                                     ? ws.attn_mask.data() + static_cast<size_t>(base + i) * L
                                     : nullptr;
            double* ds = ws.d_s.row(base + i);
            double inner = 0.0;
            for (int j = 0; j < jmax; ++j) {
                const double* vj = ws.v.row(base + j);
                double dwd = dot(dc, vj, static_cast<size_t>(D));
                const double wd = mask != nullptr ? wrow[j] * mask[j] : wrow[j];
                if (wd != 0.0) {
                    double* dv = ws.d_v.row(base + j);
                    for (int d = 0; d < D; ++d) {
                        dv[d] += wd * dc[d];
                    }
                }
                if (mask != nullptr) {
                    dwd *= mask[j];
                }
                ds[j] = dwd;  // gradient w.r.t. the softmax output
                inner += wrow[j] * dwd;
            }
            for (int j = 0; j < jmax; ++j) {
                ds[j] = wrow[j] * (ds[j] - inner) * scale;
            }
            for (int j = jmax; j < L; ++j) {
                ds[j] = 0.0;
            }
        }
        for (int i = 0; i < L; ++i) {
            const double* ds = ws.d_s.row(base + i);
            double* dq = ws.d_b.row(base + i);
            std::fill(dq, dq + D, 0.0);
            const double* qri = ws.qr.row(base + i);
            const int jmax = causal ? i + 1 : L;
            for (int j = 0; j < jmax; ++j) {
                const double s = ds[j];
                if (s == 0.0) {
                    continue;
                }
                const double* krj = ws.kr.row(base + j);
                double* dkr = ws.d_kr.row(base + j);
                for (int d = 0; d < D; ++d) {
                    dq[d] += s * krj[d];
                    dkr[d] += s * qri[d];
                }
            }
        }
    }

    // Un-rotate.
#pragma omp parallel for schedule(static)
    for (int r = 0; r < R; ++r) {
        const int pos = r % L;
        rotate_inplace(p.rope, -static_cast<double>(pos), ws.d_b.row(r));
        rotate_inplace(p.rope, -static_cast<double>(pos), ws.d_kr.row(r));
    }

    // Projections: q/k/v = attn_in * w^T; d_a becomes d_attn_in.
    const Matrix& attn_in = full ? ws.n1 : ws.x0;
    linear_bwd(ws.d_a, false, grads.wq, nullptr, ws.d_b, attn_in, p.wq);
    gemm_nn(ws.d_a, ws.d_kr, p.wk, true);
    gemm_tn_acc(grads.wk, ws.d_kr, attn_in);
    gemm_nn(ws.d_a, ws.d_v, p.wv, true);
    gemm_tn_acc(grads.wv, ws.d_v, attn_in);

    const Matrix* d_x0 = &ws.d_a;
    if (full) {
        // d_x0 = d_x1 (residual, already in d_x) + LN1_back(d_attn_in).
        layernorm_bwd(ws.d_x, true, grads.ln1_g, grads.ln1_b, ws.d_a, ws.x0, ws.ln1_mu,
                      ws.ln1_rs, p.ln1_g);
        d_x0 = &ws.d_x;
    }

    // Embedding scatter (serial: fixed order).
    for (int r = 0; r < R; ++r) {
        double* dst = grads.embed.row(batch.tokens[r]);
        const double* src = d_x0->row(r);
        for (int d = 0; d < D; ++d) {
            dst[d] += src[d];
        }
    }
}

}  // namespace

double forward_backward(const ModelParams& params, const Batch& batch, bool training,
                        RngStream* dropout_rng, Workspace& ws, ModelGrads& grads) {
    PassContext c;
    c.params = &params;
    c.batch = &batch;
    c.training = training;
    c.mode = params.config.attn_mode();
    const double loss = run_forward(c, ws, dropout_rng);
    grads.zero();
    run_backward(c, ws, grads);
    return loss;
}

double batch_loss(const ModelParams& params, const Batch& batch, Workspace& ws) {
    PassContext c;
    c.params = &params;
    c.batch = &batch;
    c.training = false;
    c.mode = params.config.attn_mode();
    return run_forward(c, ws, nullptr);
}

ForwardResult forward(const ModelParams& params, const std::vector<int>& tokens, AttnMode mode) {
    require(mode == AttnMode::full || params.config.arch == Arch::arm, "contract-violation",
            "causal attention is only valid for the arm architecture");
    require(!(params.config.arch == Arch::arm) || mode == AttnMode::causal, "contract-violation",
            "the arm architecture requires causal attention");
    const int L = static_cast<int>(tokens.size());
    Batch b;
    b.batch = 1;
    b.length = L;
    b.tokens = tokens;
    b.targets.assign(tokens.size(), 0);
    b.weights.assign(tokens.size(), 0.0);

    WorkspaceHandle ws;
    PassContext c;
    c.params = &params;
    c.batch = &b;
    c.training = false;
    c.mode = mode;
    run_forward(c, *ws.ws, nullptr);

    ForwardResult out;
    out.logits = Matrix(L, params.config.vocab);
    out.scores = Matrix(L, L);
    out.weights = Matrix(L, L);
    std::memcpy(out.logits.data.data(), ws.ws->logits.data.data(),
                out.logits.data.size() * sizeof(double));
    std::memcpy(out.scores.data.data(), ws.ws->attn_s.data.data(),
                out.scores.data.size() * sizeof(double));
    std::memcpy(out.weights.data.data(), ws.ws->attn_w.data.data(),
                out.weights.data.size() * sizeof(double));
    return out;
}

ForwardResult forward(const ModelParams& params, const std::vector<int>& tokens) {
    return forward(params, tokens, params.config.attn_mode());
}

double loss_mdm(const ModelParams& params, const std::vector<int>& clean,
                const std::vector<int>& corrupted, double t) {
    require(params.config.arch == Arch::mdm, "contract-violation", "loss_mdm: arch must be mdm");
    require(t > 0.0 && t <= 1.0, "contract-violation", "loss_mdm: t in (0,1]");
    require(clean.size() == corrupted.size(), "dimension-mismatch", "loss_mdm: length mismatch");
    MaskedBatch mb;
    mb.clean = clean;
    mb.corrupted = corrupted;
    mb.t = t;
    for (size_t i = 0; i < clean.size(); ++i) {
        if (corrupted[i] == Vocab::mask && clean[i] != Vocab::mask) {
            mb.mask_positions.push_back(static_cast<int>(i));
        } else {
            require(corrupted[i] == clean[i], "contract-violation",
                    "loss_mdm: corrupted differs from clean outside masks");
        }
    }
    require(!mb.mask_positions.empty(), "contract-violation", "loss_mdm: no masked positions");
    const Batch b = make_mdm_batch({mb});
    WorkspaceHandle ws;
    return batch_loss(params, b, *ws.ws);
}

double loss_arm(const ModelParams& params, const std::vector<int>& tokens) {
    require(params.config.arch == Arch::arm, "contract-violation", "loss_arm: arch must be arm");
    require(tokens.size() >= 2, "contract-violation", "loss_arm: length must be >= 2");
    const Batch b = make_arm_batch({tokens});
    WorkspaceHandle ws;
    return batch_loss(params, b, *ws.ws);
}

namespace {

Batch single_prompt_batch(const ModelParams& params, const std::vector<int>& tokens,
                          int query_pos, int target) {
    Batch b;
    b.batch = 1;
    b.length = static_cast<int>(tokens.size());
    b.tokens = tokens;
    b.targets.assign(tokens.size(), 0);
    b.weights.assign(tokens.size(), 0.0);
    if (params.config.arch == Arch::mdm) {
        require(query_pos >= 0 && query_pos < static_cast<int>(tokens.size()),
                "contract-violation", "snapshot: query_pos out of range");
        require(tokens[query_pos] == Vocab::mask, "contract-violation",
                "snapshot: query position must hold the mask token");
        b.targets[query_pos] = target;
        b.weights[query_pos] = 1.0;
    } else {
        require(query_pos == static_cast<int>(tokens.size()), "contract-violation",
                "snapshot: arm prompt must be the bare prefix");
        require(!tokens.empty(), "contract-violation", "snapshot: empty arm prompt");
        b.targets[tokens.size() - 1] = target;
        b.weights[tokens.size() - 1] = 1.0;
    }
    return b;
}

}  // namespace

Vec snapshot_gradient(const ModelParams& params, const std::vector<int>& tokens, int query_pos,
                      int target) {
    const Batch b = single_prompt_batch(params, tokens, query_pos, target);
    WorkspaceHandle ws;
    ModelGrads grads = ModelGrads::zeros(params.config);
    forward_backward(params, b, false, nullptr, *ws.ws, grads);
    return grads.to_flat();
}

void snapshot_gradient_into(const ModelParams& params, const std::vector<int>& tokens,
                            int query_pos, int target, Workspace& ws, ModelGrads& grads,
                            double* out_flat) {
    const Batch b = single_prompt_batch(params, tokens, query_pos, target);
    forward_backward(params, b, false, nullptr, ws, grads);
    grads.flatten_into(out_flat);
}

double token_probability(const ModelParams& params, const std::vector<int>& tokens, int pos,
                         int target, Workspace& ws) {
    const int last = static_cast<int>(tokens.size()) - 1;
    int row = pos;
    if (params.config.arch == Arch::arm) {
        require(pos == static_cast<int>(tokens.size()), "contract-violation",
                "token_probability: arm prompt must be the bare prefix");
        row = last;
    }
    Batch b;
    b.batch = 1;
    b.length = static_cast<int>(tokens.size());
    b.tokens = tokens;
    b.targets.assign(tokens.size(), 0);
    b.weights.assign(tokens.size(), 0.0);
    PassContext c;
    c.params = &params;
    c.batch = &b;
    c.training = false;
    c.mode = params.config.attn_mode();
    run_forward(c, ws, nullptr);
    Vec lrow(ws.logits.row(row), ws.logits.row(row) + params.config.vocab);
    return softmax(lrow, 1.0)[target];
}

double token_probability(const ModelParams& params, const std::vector<int>& tokens, int pos,
                         int target) {
    WorkspaceHandle ws;
    return token_probability(params, tokens, pos, target, *ws.ws);
}

OptState OptState::init(const ModelParams& params) {
    OptState s;
    const size_t n = params.param_count();
    s.m.assign(n, 0.0);
    s.v.assign(n, 0.0);
    s.ema = params.to_flat();
    return s;
}

void adamw_step(ModelParams& params, OptState& opt, const Vec& grads, const Schedule& sched) {
    require(grads.size() == opt.m.size(), "dimension-mismatch", "adamw: gradient size");
    double norm2_acc = 0.0;
    for (double g : grads) {
        require(std::isfinite(g), "non-finite-gradient", "adamw: non-finite gradient");
        norm2_acc += g * g;
    }
    const double gnorm = std::sqrt(norm2_acc);
    const double gscale = gnorm > sched.clip ? sched.clip / gnorm : 1.0;

    opt.step += 1;
    const double s = static_cast<double>(opt.step);
    const double lr = sched.lr * std::min(1.0, s / sched.warmup);
    const double bc1 = 1.0 - std::pow(sched.beta1, s);
    const double bc2 = 1.0 - std::pow(sched.beta2, s);

    size_t off = 0;
    for (auto& t : params.tensors()) {
        double* w = t.data;
        for (size_t i = 0; i < t.size; ++i) {
            const size_t j = off + i;
            const double g = grads[j] * gscale;
            opt.m[j] = sched.beta1 * opt.m[j] + (1.0 - sched.beta1) * g;
            opt.v[j] = sched.beta2 * opt.v[j] + (1.0 - sched.beta2) * g * g;
            const double mhat = opt.m[j] / bc1;
            const double vhat = opt.v[j] / bc2;
            w[i] -= lr * (mhat / (std::sqrt(vhat) + sched.eps) + sched.weight_decay * w[i]);
            opt.ema[j] = sched.ema_decay * opt.ema[j] + (1.0 - sched.ema_decay) * w[i];
        }
        off += t.size;
    }
}

// ---------------------------------------------------------------------------
// Checkpoints.
// ---------------------------------------------------------------------------

std::string config_to_json_string(const ModelConfig& c) {
    nlohmann::json j;
    j["arch"] = to_string(c.arch);
    j["dim"] = c.dim;
    j["heads"] = c.heads;
    j["vocab"] = c.vocab;
    j["max_len"] = c.max_len;
    j["block"] = to_string(c.block);
    j["dropout"] = c.dropout;
    j["tied_embeddings"] = c.tied_embeddings;
    j["rope_base"] = c.rope_base;
    return j.dump();
}

ModelConfig config_from_json_string(const std::string& s) {
    const nlohmann::json j = nlohmann::json::parse(s);
    ModelConfig c;
    c.arch = arch_from_string(j.at("arch").get<std::string>());
    c.dim = j.at("dim").get<int>();
    c.heads = j.at("heads").get<int>();
    c.vocab = j.at("vocab").get<int>();
    c.max_len = j.at("max_len").get<int>();
    c.block = block_from_string(j.at("block").get<std::string>());
    c.dropout = j.at("dropout").get<double>();
    c.tied_embeddings = j.at("tied_embeddings").get<bool>();
    c.rope_base = j.at("rope_base").get<double>();
    return c;
}

namespace {

constexpr char kCheckpointMagic[8] = {'R', 'E', 'V', 'C', 'K', 'P', 'T', '\n'};

template <class T>
void write_pod(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
void read_pod(std::ifstream& in, T& v) {
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelParams& params, uint64_t seed,
                     int64_t step) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "io-error", "save_checkpoint: cannot open " + path);
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    nlohmann::json header;
    header["format_version"] = 1;
    header["arch"] = to_string(params.config.arch);
    header["config"] = nlohmann::json::parse(config_to_json_string(params.config));
    header["seed"] = seed;
    header["step"] = step;
    const std::string hs = header.dump();
    const uint64_t hlen = hs.size();
    write_pod(out, hlen);
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    const auto tensors = params.tensors();
    const uint64_t count = tensors.size();
    write_pod(out, count);
    for (const auto& t : tensors) {
        const uint64_t nlen = std::strlen(t.name);
        write_pod(out, nlen);
        out.write(t.name, static_cast<std::streamsize>(nlen));
        const uint64_t sz = t.size;
        write_pod(out, sz);
        out.write(reinterpret_cast<const char*>(t.data),
                  static_cast<std::streamsize>(sz * sizeof(double)));
    }
    require(out.good(), "io-error", "save_checkpoint: write failed");
}

ModelParams load_checkpoint(const std::string& path, uint64_t* seed, int64_t* step) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "io-error", "load_checkpoint: cannot open " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    require(in.good() && std::memcmp(magic, kCheckpointMagic, sizeof(magic)) == 0, "io-error",
            "load_checkpoint: bad magic");
    uint64_t hlen = 0;
    read_pod(in, hlen);
    std::string hs(hlen, '\0');
    in.read(hs.data(), static_cast<std::streamsize>(hlen));
    const nlohmann::json header = nlohmann::json::parse(hs);
    require(header.at("format_version").get<int>() == 1, "io-error",
            "load_checkpoint: unsupported format version");
    const ModelConfig config = config_from_json_string(header.at("config").dump());
    if (seed != nullptr) {
        *seed = header.at("seed").get<uint64_t>();
    }
    if (step != nullptr) {
        *step = header.at("step").get<int64_t>();
    }
    RngStream dummy(0);
    ModelParams params = ModelParams::init(config, dummy);
    uint64_t count = 0;
    read_pod(in, count);
    auto tensors = params.tensors();
    require(count == tensors.size(), "io-error", "load_checkpoint: tensor count mismatch");
    for (auto& t : tensors) {
        uint64_t nlen = 0;
        read_pod(in, nlen);
        std::string name(nlen, '\0');
        in.read(name.data(), static_cast<std::streamsize>(nlen));
        require(name == t.name, "io-error", "load_checkpoint: tensor order mismatch");
        uint64_t sz = 0;
        read_pod(in, sz);
        require(sz == t.size, "io-error", "load_checkpoint: tensor size mismatch");
        in.read(reinterpret_cast<char*>(t.data),
                static_cast<std::streamsize>(sz * sizeof(double)));
    }
    require(in.good(), "io-error", "load_checkpoint: truncated file");
    return params;
}

}  // namespace revlab
