#include "revlab/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>

#include "revlab/experiment.hpp"
#include "revlab/theory.hpp"

namespace fs = std::filesystem;

namespace revlab {

namespace {

// Appendix A.3 lower-bound table: rows delta in {10..50}, columns
// c in {0.05..0.30}, for m = 64 and m = 128.
constexpr double kTableM64[5][6] = {
    {0.981, 0.977, 0.972, 0.965, 0.956, 0.941},
    {0.967, 0.958, 0.947, 0.930, 0.903, 0.858},
    {0.958, 0.947, 0.930, 0.905, 0.863, 0.790},
    {0.955, 0.942, 0.923, 0.893, 0.843, 0.752},
    {0.965, 0.956, 0.942, 0.921, 0.887, 0.827},
};
constexpr double kTableM128[5][6] = {
    {0.990, 0.988, 0.986, 0.982, 0.977, 0.970},
    {0.985, 0.981, 0.976, 0.969, 0.957, 0.938},
    {0.981, 0.976, 0.969, 0.958, 0.939, 0.906},
    {0.979, 0.974, 0.965, 0.952, 0.928, 0.885},
    {0.979, 0.973, 0.963, 0.949, 0.923, 0.874},
};
constexpr int kTableDeltas[5] = {10, 20, 30, 40, 50};
constexpr double kTableThresholds[6] = {0.05, 0.10, 0.15, 0.20, 0.25, 0.30};

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

// --------------------------------------------------------------------------
// Criteria 1-3: theory.
// --------------------------------------------------------------------------

CriterionResult criterion_cantelli() {
    CriterionResult res{1, "cantelli-table", false, false, ""};
    double worst = 0.0;
    for (int mi = 0; mi < 2; ++mi) {
        const int m = mi == 0 ? 64 : 128;
        const RopeParams params = RopeParams::make(2 * m);
        for (int di = 0; di < 5; ++di) {
            for (int ci = 0; ci < 6; ++ci) {
                const double want =
                    mi == 0 ? kTableM64[di][ci] : kTableM128[di][ci];
                const CantelliRow row =
                    cantelli_row(params, kTableDeltas[di], kTableThresholds[ci]);
                worst = std::max(worst, std::abs(row.bound - want));
            }
        }
    }
    const double a1 = cantelli_row(RopeParams::make(256), 20, 0.30).bound;
    const double a2 = cantelli_row(RopeParams::make(128), 10, 0.05).bound;
    const double a3 = cantelli_row(RopeParams::make(128), 50, 0.30).bound;
    const bool anchors = std::abs(a1 - 0.938) <= 0.001 && std::abs(a2 - 0.981) <= 0.001 &&
                         std::abs(a3 - 0.827) <= 0.001;
    res.passed = worst <= 0.001 && anchors;
    res.detail = "60 entries, max |err| = " + fmt(worst) + "; anchors " + fmt(a1) + "/" +
                 fmt(a2) + "/" + fmt(a3);
    return res;
}

CriterionResult criterion_trace_integral() {
    CriterionResult res{2, "trace-vs-integral", false, false, ""};
    const RopeParams p = RopeParams::make(256);
    double min_ci = 2.0, max_gap = 0.0;
    for (int d = 1; d <= 100; ++d) {
        const double ci = ci_integral(p, d);
        min_ci = std::min(min_ci, ci);
        max_gap = std::max(max_gap, std::abs(trace_ratio(p, d) - ci));
    }
    res.passed = min_ci >= 0.435 && max_gap <= 0.05;
    res.detail = "min ci_integral = " + fmt(min_ci) + " (>= 0.435), max |trace - ci| = " +
                 fmt(max_gap) + " (<= 0.05)";
    return res;
}

CriterionResult criterion_theorem1_mc(VerifyProfile profile) {
    CriterionResult res{3, "theorem1-monte-carlo", false, false, ""};
    const int n_q = profile == VerifyProfile::full ? 10000 : 2000;
    const int n_keys = profile == VerifyProfile::full ? 100000 : 20000;
    const double mc_tol = profile == VerifyProfile::full ? 0.02 : 0.04;

    bool ok = true;
    std::ostringstream detail;
    double worst_margin = 1e9;
    for (int dim : {64, 128}) {
        for (int delta : {5, 10, 20, 50}) {
            RngStream rng(500 + delta, static_cast<uint64_t>(dim));
            AlignmentModel model = AlignmentModel::random(dim, delta, rng);
            const CorrBoundReport rep = expected_corr_bound_check(model, n_q, rng);
            const double margin = rep.mean_corr - (rep.bound - 3.0 * rep.std_err);
            worst_margin = std::min(worst_margin, margin);
            ok = ok && rep.holds();
        }
    }
    // Analytic vs Monte Carlo agreement on a random instance per dim.
    double worst_gap = 0.0;
    for (int dim : {64, 128}) {
        RngStream rng(900, static_cast<uint64_t>(dim));
        AlignmentModel model = AlignmentModel::random(dim, 20, rng);
        Vec q;
        while (true) {
            q = rng.gauss(dim, 1.0);
            bool good = true;
            for (int i = 0; i < dim / 2; ++i) {
                good = good && q[2 * i] * q[2 * i] + q[2 * i + 1] * q[2 * i + 1] > 1e-10;
            }
            if (good) {
                break;
            }
        }
        const double gap =
            std::abs(conditional_corr(model, q) - mc_conditional_corr(model, q, n_keys, rng));
        worst_gap = std::max(worst_gap, gap);
        ok = ok && gap <= mc_tol;
    }
    res.passed = ok;
    detail << "worst bound margin = " << fmt(worst_margin)
           << " (>= 0), analytic-vs-mc gap = " << fmt(worst_gap) << " (<= " << fmt(mc_tol)
           << ")";
    res.detail = detail.str();
    return res;
}

// --------------------------------------------------------------------------
// Criteria 4-6: minimal model.
// --------------------------------------------------------------------------

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

CriterionResult criterion_theorem_b1(VerifyProfile profile) {
    CriterionResult res{4, "theorem-b1-closed-forms", false, false, ""};
    const int instances = profile == VerifyProfile::full ? 20 : 5;
    double worst_rel = 0.0;
    RngStream rng(1234);
    for (int i = 0; i < instances; ++i) {
        const MinimalInstance inst =
            MinimalInstance::random(16, 8, 1 + rng.uniform_int(8), 1 + rng.uniform_int(8), rng);
        const double s0 = self_attention_score(inst);
        const Vec base = flatten_weights(inst);
        const auto loss_fwd = [&](const Vec& f) {
            return minimal_loss(with_weights(inst, f), Direction::fwd, s0);
        };
        const auto loss_rev = [&](const Vec& f) {
            return minimal_loss(with_weights(inst, f), Direction::rev, s0);
        };
        const Vec gf = finite_diff_grad(loss_fwd, base, 1e-5);
        const Vec gr = finite_diff_grad(loss_rev, base, 1e-5);

        const size_t nq = inst.wq.data.size(), nk = inst.wk.data.size(),
                     nv = inst.wv.data.size();
        auto block_inner = [&](size_t off, size_t n) {
            return dot(gf.data() + off, gr.data() + off, n);
        };
        const double fd[4] = {block_inner(nq + nk + nv, inst.wo.data.size()),
                              block_inner(nq + nk, nv), block_inner(0, nq),
                              block_inner(nq, nk)};
        const GradBlocks blocks = closed_form_blocks(inst);
        const double closed[4] = {blocks.i_wo, blocks.i_wv, blocks.i_wq, blocks.i_wk};
        for (int b = 0; b < 4; ++b) {
            const double rel =
                std::abs(closed[b] - fd[b]) / std::max(std::abs(fd[b]), 1e-6);
            worst_rel = std::max(worst_rel, rel);
        }
    }
    res.passed = worst_rel <= 1e-4;
    res.detail = std::to_string(instances) +
                 " instances, worst block relative error = " + fmt(worst_rel) + " (<= 1e-4)";
    return res;
}

CriterionResult criterion_corollary_b2(VerifyProfile profile) {
    CriterionResult res{5, "corollary-b2-positivity", false, false, ""};
    const int instances = profile == VerifyProfile::full ? 1000 : 200;
    RngStream rng(4321);
    int all_held = 0, violations = 0, transfers = 0, transfer_failures = 0;
    for (int i = 0; i < instances; ++i) {
        const MinimalInstance inst = MinimalInstance::random(
            16, 8, 1 + rng.uniform_int(12), 1 + rng.uniform_int(12), rng);
        const CorollaryReport rep = corollary_conditions(inst);
        if (rep.all_conditions()) {
            ++all_held;
            if (rep.blocks.total() <= 0.0) {
                ++violations;
            }
        }
        if (rep.blocks.total() > 0.0) {
            ++transfers;
            const TransferReport tr = first_order_transfer_check(inst);
            if (!tr.decreased) {
                ++transfer_failures;
            }
        }
    }
    res.passed = violations == 0 && transfer_failures == 0 && all_held > 0 && transfers > 0;
    res.detail = std::to_string(instances) + " instances, " + std::to_string(all_held) +
                 " satisfied all conditions (0 positivity violations required, saw " +
                 std::to_string(violations) + "); " + std::to_string(transfers) +
                 " transfer checks, " + std::to_string(transfer_failures) + " failures";
    return res;
}

CriterionResult criterion_appendix_b_properties(VerifyProfile profile) {
    CriterionResult res{6, "appendix-b-property-suite", false, false, ""};
    RngStream rng(777);

    // Lemma B.3 on random simplex pairs.
    const int pairs = profile == VerifyProfile::full ? 100000 : 20000;
    int b3_violations = 0;
    for (int i = 0; i < pairs; ++i) {
        const int n = 2 + rng.uniform_int(14);
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
        const Vec p = draw();
        const Vec q = draw();
        if (p[target] >= 1.0 || q[target] >= 1.0) {
            continue;
        }
        if (!error_alignment_check(p, q, target).ok) {
            ++b3_violations;
        }
    }

    // Proposition B.8 sign pattern on random nonsaturated instances.
    const int b8_instances = profile == VerifyProfile::full ? 1000 : 200;
    int b8_violations = 0;
    for (int i = 0; i < b8_instances; ++i) {
        const MinimalInstance inst = MinimalInstance::random(
            16, 8, 1 + rng.uniform_int(8), 1 + rng.uniform_int(8), rng);
        const MarginStepReport rep = margin_sgd_step_check(inst, 0.05);
        if (!(rep.d_c_target > 0.0 && rep.max_d_c_other < 0.0)) {
            ++b8_violations;
        }
    }

    // Lemma B.9 evenness of the RoPE quadratic form.
    const RopeParams rope = RopeParams::make(64);
    double b9_worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const Vec x = rng.gauss(64, 1.0);
        const int d = 1 + rng.uniform_int(100);
        b9_worst = std::max(
            b9_worst, std::abs(quadratic_form(rope, d, x) - quadratic_form(rope, -d, x)));
    }

    // Proposition B.6 positive fraction.
    const int b6_trials = profile == VerifyProfile::full ? 1000 : 200;
    const ProjectionReport proj =
        projection_preservation_check(512, 54, 1.0 / 32.0, b6_trials, rng);

    res.passed = b3_violations == 0 && b8_violations == 0 && b9_worst <= 1e-12 &&
                 proj.positive_fraction >= 0.99;
    res.detail = "B.3: " + std::to_string(b3_violations) + "/" + std::to_string(pairs) +
                 " violations; B.8: " + std::to_string(b8_violations) + "/" +
                 std::to_string(b8_instances) + "; B.9 max |asym| = " + fmt(b9_worst) +
                 "; B.6 positive fraction = " + fmt(proj.positive_fraction) + " (>= 0.99)";
    return res;
}

// --------------------------------------------------------------------------
// Criteria 7-9: toy training experiments.
// --------------------------------------------------------------------------

ModelConfig table5_config(Arch arch, Block block, int length) {
    ModelConfig cfg;
    cfg.arch = arch;
    cfg.dim = 256;
    cfg.heads = 1;
    cfg.vocab = Vocab::size;
    cfg.max_len = length;
    cfg.block = block;
    cfg.dropout = 0.02;
    return cfg;
}

// Trains (or reuses) a cached run under work_dir/name.
TrainRun cached_run(const std::string& work_dir, const std::string& name, Arch arch, Block block,
                    int length, uint64_t seed) {
    const fs::path dir = fs::path(work_dir) / name;
    if (fs::exists(dir / "manifest.json") && fs::exists(dir / "ckpt_final.bin")) {
        try {
            return load_run(dir.string());
        } catch (const std::exception&) {
            // fall through and retrain
        }
    }
    const ModelConfig cfg = table5_config(arch, block, length);
    TrainOptions opts;
    opts.steps = 3000;
    opts.batch_size = 256;
    opts.snapshot_every = 100;
    opts.seed = seed;
    opts.out_dir = dir.string();
    return train(cfg, length, gen_forward_corpus(length), opts);
}

CriterionResult criterion_table2(VerifyProfile profile, const std::string& work_dir) {
    CriterionResult res{7, "toy-table2", false, false, ""};
    if (profile == VerifyProfile::fast) {
        res.skipped = true;
        res.detail = "full training only (3 seeds x 2 archs, Table 5 hyperparameters)";
        return res;
    }
    const int length = 10;
    const std::vector<uint64_t> seeds = {1, 2, 3};
    double mdm_fwd = 0.0, mdm_rev = 0.0, arm_fwd = 0.0, arm_rev = 0.0;
    std::ostringstream detail;
    for (Arch arch : {Arch::mdm, Arch::arm}) {
        for (uint64_t seed : seeds) {
            const std::string name =
                std::string("table2_") + to_string(arch) + "_seed" + std::to_string(seed);
            const TrainRun run =
                cached_run(work_dir, name, arch, Block::full, length, seed);
            const ModelParams params = load_checkpoint(run.eval_params_path());
            EvalOptions eopts;
            eopts.seed = seed;
            const double fwd = evaluate_accuracy(params, length, Direction::fwd, eopts);
            const double rev = evaluate_accuracy(params, length, Direction::rev, eopts);
            detail << to_string(arch) << " seed " << seed << ": fwd " << fmt(fwd) << " rev "
                   << fmt(rev) << "; ";
            if (arch == Arch::mdm) {
                mdm_fwd += fwd / seeds.size();
                mdm_rev += rev / seeds.size();
            } else {
                arm_fwd += fwd / seeds.size();
                arm_rev += rev / seeds.size();
            }
        }
    }
    res.passed = mdm_fwd >= 95.0 && mdm_rev >= 20.0 && arm_fwd >= 99.0 && arm_rev <= 2.0;
    detail << "means: mdm " << fmt(mdm_fwd) << "/" << fmt(mdm_rev) << " (need >=95/>=20), arm "
           << fmt(arm_fwd) << "/" << fmt(arm_rev) << " (need >=99/<=2)";
    res.detail = detail.str();
    return res;
}

CriterionResult criterion_minimal_dynamics(VerifyProfile profile, const std::string& work_dir) {
    CriterionResult res{8, "minimal-setting-dynamics", false, false, ""};
    if (profile == VerifyProfile::fast) {
        res.skipped = true;
        res.detail = "full training only (L=2 attention-only encoder)";
        return res;
    }
    const TrainRun run = cached_run(work_dir, "dyn_minimal_seed1", Arch::mdm, Block::attn_only,
                                    2, 1);
    const auto track = gradient_alignment_track(run);
    double min_cos = 1.0;
    for (const auto& rec : track) {
        min_cos = std::min(min_cos, rec.cosine);
    }
    const ModelParams final_params = load_checkpoint(run.snapshots.back().second);
    const ProbPoint probs = probability_transfer_point(final_params, 2);
    res.passed = !track.empty() && min_cos >= 0.99 && probs.p_fwd > 0.9 && probs.p_rev > 0.9;
    res.detail = "min cosine over " + std::to_string(track.size()) + " snapshots = " +
                 fmt(min_cos) + " (>= 0.99); final p_fwd = " + fmt(probs.p_fwd) +
                 ", p_rev = " + fmt(probs.p_rev) + " (> 0.9)";
    return res;
}

CriterionResult criterion_full_dynamics(VerifyProfile profile, const std::string& work_dir) {
    CriterionResult res{9, "full-toy-dynamics", false, false, ""};
    if (profile == VerifyProfile::fast) {
        res.skipped = true;
        res.detail = "full training only (L=10 encoder dynamics)";
        return res;
    }
    const TrainRun run =
        cached_run(work_dir, "table2_mdm_seed1", Arch::mdm, Block::full, 10, 1);
    const auto track = gradient_alignment_track(run);
    Vec cosines;
    for (const auto& rec : track) {
        cosines.push_back(rec.cosine);
    }
    std::sort(cosines.begin(), cosines.end());
    const double median = cosines.empty()
                              ? 0.0
                              : (cosines.size() % 2 == 1
                                     ? cosines[cosines.size() / 2]
                                     : 0.5 * (cosines[cosines.size() / 2 - 1] +
                                              cosines[cosines.size() / 2]));

    const ModelParams eval_params = load_checkpoint(run.eval_params_path());
    const auto records = attention_correlation(eval_params, 10);
    const auto buckets = correlation_bucket_means(records);
    double min_bucket = 1.0;
    for (const auto& [dtotal, mean] : buckets) {
        min_bucket = std::min(min_bucket, mean);
    }
    res.passed = median >= 0.5 && !buckets.empty() && min_bucket > 0.0;
    res.detail = "median gradient cosine = " + fmt(median) + " (>= 0.5); " +
                 std::to_string(buckets.size()) +
                 " correlation buckets, min mean = " + fmt(min_bucket) + " (> 0)";
    return res;
}

CriterionResult criterion_scope() {
    CriterionResult res{10, "large-scale-scope", true, false,
                        "multi-billion-parameter fine-tuning and its attention/gradient "
                        "validation are out of scope at desk scale; criteria 7-9 carry the "
                        "paper's own toy-scale analogues"};
    return res;
}

}  // namespace

std::vector<CriterionResult> run_verification(VerifyProfile profile,
                                              const std::vector<int>& criteria,
                                              const std::string& work_dir) {
    fs::create_directories(work_dir);
    std::vector<CriterionResult> results;
    const auto wanted = [&](int id) {
        return criteria.empty() || std::find(criteria.begin(), criteria.end(), id) !=
                                       criteria.end();
    };
    if (wanted(1)) {
        results.push_back(criterion_cantelli());
    }
    if (wanted(2)) {
        results.push_back(criterion_trace_integral());
    }
    if (wanted(3)) {
        results.push_back(criterion_theorem1_mc(profile));
    }
    if (wanted(4)) {
        results.push_back(criterion_theorem_b1(profile));
    }
    if (wanted(5)) {
        results.push_back(criterion_corollary_b2(profile));
    }
    if (wanted(6)) {
        results.push_back(criterion_appendix_b_properties(profile));
    }
    if (wanted(7)) {
        results.push_back(criterion_table2(profile, work_dir));
    }
    if (wanted(8)) {
        results.push_back(criterion_minimal_dynamics(profile, work_dir));
    }
    if (wanted(9)) {
        results.push_back(criterion_full_dynamics(profile, work_dir));
    }
    if (wanted(10)) {
        results.push_back(criterion_scope());
    }
    for (const auto& r : results) {
        const char* status = r.skipped ? "SKIP" : (r.passed ? "PASS" : "FAIL");
        std::printf("%s criterion %d (%s): %s\n", status, r.id, r.name.c_str(),
                    r.detail.c_str());
        std::fflush(stdout);
    }
    return results;
}

bool all_passed(const std::vector<CriterionResult>& results) {
    for (const auto& r : results) {
        if (!r.skipped && !r.passed) {
            return false;
        }
    }
    return true;
}

}  // namespace revlab
