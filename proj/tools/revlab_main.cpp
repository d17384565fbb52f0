// Command-line laboratory: data generation, toy training, evaluation,
// attention/gradient analysis, and theory verification.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "CLI11.hpp"
#include "json.hpp"
#include "revlab/experiment.hpp"
#include "revlab/theory.hpp"
#include "revlab/verify.hpp"

namespace fs = std::filesystem;
using namespace revlab;

namespace {

std::string default_out_root() {
    const char* env = std::getenv("REVLAB_OUT");
    return env != nullptr && *env != '\0' ? env : "runs";
}

std::string resolve_out(const std::string& explicit_out, const std::string& name) {
    if (!explicit_out.empty()) {
        return explicit_out;
    }
    return (fs::path(default_out_root()) / name).string();
}

// Every run writes a manifest echoing the resolved command line, so any
// subcommand can be replayed from its manifest alone.
void write_manifest(const std::string& out_dir, const std::vector<std::string>& argv_like) {
    fs::create_directories(out_dir);
    nlohmann::json m;
    m["manifest_version"] = 1;
    m["kind"] = "cli";
    m["argv"] = argv_like;
    std::ofstream out(fs::path(out_dir) / "manifest.json", std::ios::binary);
    out << m.dump(2) << "\n";
}

std::ofstream open_csv(const std::string& out_dir, const std::string& name) {
    fs::create_directories(out_dir);
    std::ofstream out(fs::path(out_dir) / name, std::ios::binary);
    if (!out.good()) {
        throw ContractError("io-error", "cannot open " + name + " under " + out_dir);
    }
    return out;
}

std::string str(double v) { return format_double(v); }

int run(int argc, char** argv);

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const ContractError& e) {
        std::cerr << "error:" << e.category << ": " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error:internal: " << e.what() << "\n";
        return 1;
    }
}

namespace {

int run(int argc, char** argv) {
    CLI::App app{"Reversal-curse laboratory for one-layer masked-diffusion and "
                 "autoregressive toy models"};
    app.require_subcommand(0, 1);

    int threads = 0;
    app.add_option("--threads", threads, "Cap worker threads (does not change results)");
    std::string from_manifest;
    app.add_option("--from-manifest", from_manifest, "Replay a run from its manifest.json");

    // ---- data gen ----------------------------------------------------------
    auto* data_cmd = app.add_subcommand("data", "Synthetic corpus tools");
    auto* data_gen = data_cmd->add_subcommand("gen", "Generate the forward-only corpus");
    int gen_length = 10;
    uint64_t gen_seed = 1;
    std::string gen_out;
    data_gen->add_option("--length", gen_length, "Sequence length")->required();
    data_gen->add_option("--seed", gen_seed, "Recorded generator seed");
    data_gen->add_option("--out", gen_out, "Output directory");

    // ---- train --------------------------------------------------------------
    auto* train_cmd = app.add_subcommand("train", "Train a toy model");
    std::string train_arch = "mdm", train_block = "full", train_out;
    int train_length = 10, train_steps = 3000, train_batch = 256, train_snapshot = 100;
    uint64_t train_seed = 1;
    double train_dropout = 0.02, train_tmin = 1e-3;
    bool train_per_batch_t = false, train_tied = false;
    train_cmd->add_option("--arch", train_arch, "mdm or arm")->required();
    train_cmd->add_option("--length", train_length, "Sequence length")->required();
    train_cmd->add_option("--seed", train_seed, "Training seed");
    train_cmd->add_option("--steps", train_steps, "Optimization steps");
    train_cmd->add_option("--batch", train_batch, "Batch size");
    train_cmd->add_option("--block", train_block, "attn_only or full");
    train_cmd->add_option("--dropout", train_dropout, "Dropout rate");
    train_cmd->add_option("--snapshot-every", train_snapshot, "Checkpoint cadence in steps");
    train_cmd->add_option("--t-min", train_tmin, "Lower bound of the corruption level");
    train_cmd->add_flag("--per-batch-t", train_per_batch_t,
                        "Sample one corruption level per batch instead of per sequence");
    train_cmd->add_flag("--tied-embeddings", train_tied, "Tie the output head to the embedding");
    train_cmd->add_option("--out", train_out, "Run directory");

    // ---- eval ---------------------------------------------------------------
    auto* eval_cmd = app.add_subcommand("eval", "Forward/reverse generation accuracy");
    std::string eval_run, eval_direction = "both", eval_out;
    int eval_k = 3, eval_trials = 100;
    uint64_t eval_seed = 0;
    bool eval_iterative = false;
    eval_cmd->add_option("--run", eval_run, "Training run directory")->required();
    eval_cmd->add_option("--direction", eval_direction, "forward, reverse, or both");
    eval_cmd->add_option("--k", eval_k, "Top-k sampling cutoff");
    eval_cmd->add_option("--trials", eval_trials, "Trials per letter and direction");
    eval_cmd->add_option("--seed", eval_seed, "Sampling seed");
    eval_cmd->add_flag("--iterative", eval_iterative,
                       "Unmask one position at a time in random order");
    eval_cmd->add_option("--out", eval_out, "Output directory");

    // ---- analyze ------------------------------------------------------------
    auto* analyze_cmd = app.add_subcommand("analyze", "Measurement pipelines");
    auto* attn_corr = analyze_cmd->add_subcommand("attn-corr", "Attention-score correlation");
    auto* grad_align = analyze_cmd->add_subcommand("grad-align", "Gradient alignment dynamics");
    auto* prob_transfer =
        analyze_cmd->add_subcommand("prob-transfer", "Truth-probability dynamics");
    std::string ac_run, ac_out, ga_run, ga_out, pt_run, pt_out;
    attn_corr->add_option("--run", ac_run, "Training run directory")->required();
    attn_corr->add_option("--out", ac_out, "Output directory");
    grad_align->add_option("--run", ga_run, "Training run directory")->required();
    grad_align->add_option("--out", ga_out, "Output directory");
    prob_transfer->add_option("--run", pt_run, "Training run directory")->required();
    prob_transfer->add_option("--out", pt_out, "Output directory");

    // ---- theory ---------------------------------------------------------------
    auto* theory_cmd = app.add_subcommand("theory", "Closed-form theory checks");
    auto* trace_cmd = theory_cmd->add_subcommand("trace", "Trace ratio vs its Ci approximation");
    int trace_dim = 256, trace_dmin = 1, trace_dmax = 100;
    std::string trace_out;
    trace_cmd->add_option("--dim", trace_dim, "Head dimension D");
    trace_cmd->add_option("--delta-min", trace_dmin, "Smallest offset");
    trace_cmd->add_option("--delta-max", trace_dmax, "Largest offset");
    trace_cmd->add_option("--out", trace_out, "Output directory");

    auto* cant_cmd = theory_cmd->add_subcommand("cantelli", "One-sided tail-bound table");
    std::vector<int> cant_m = {64, 128};
    std::vector<int> cant_deltas = {10, 20, 30, 40, 50};
    std::vector<double> cant_c = {0.05, 0.10, 0.15, 0.20, 0.25, 0.30};
    std::string cant_out;
    cant_cmd->add_option("--m", cant_m, "Plane counts m = D/2")->delimiter(',');
    cant_cmd->add_option("--deltas", cant_deltas, "Relative offsets")->delimiter(',');
    cant_cmd->add_option("--thresholds", cant_c, "Correlation thresholds c")->delimiter(',');
    cant_cmd->add_option("--out", cant_out, "Output directory");

    auto* mc_cmd = theory_cmd->add_subcommand("corr-mc", "Expected-correlation Monte Carlo");
    std::vector<int> mc_dims = {64, 128};
    std::vector<int> mc_deltas = {5, 10, 20, 50};
    int mc_nq = 10000;
    uint64_t mc_seed = 0;
    std::string mc_out;
    mc_cmd->add_option("--dim", mc_dims, "Head dimensions")->delimiter(',');
    mc_cmd->add_option("--deltas", mc_deltas, "Relative offsets")->delimiter(',');
    mc_cmd->add_option("--n-q", mc_nq, "Query samples");
    mc_cmd->add_option("--seed", mc_seed, "Sampling seed");
    mc_cmd->add_option("--out", mc_out, "Output directory");

    // ---- minimal ---------------------------------------------------------------
    auto* minimal_cmd = app.add_subcommand("minimal", "Two-token probe checks");
    auto* grad_check = minimal_cmd->add_subcommand(
        "grad-check", "Closed-form gradient blocks vs finite differences");
    int gc_instances = 20;
    uint64_t gc_seed = 0;
    std::string gc_out;
    grad_check->add_option("--instances", gc_instances, "Random instances");
    grad_check->add_option("--seed", gc_seed, "Instance seed");
    grad_check->add_option("--out", gc_out, "Output directory");

    auto* cond_sweep = minimal_cmd->add_subcommand("conditions-sweep",
                                                   "Positivity-condition sweep");
    int cs_instances = 1000;
    uint64_t cs_seed = 0;
    std::string cs_out;
    cond_sweep->add_option("--instances", cs_instances, "Random instances");
    cond_sweep->add_option("--seed", cs_seed, "Instance seed");
    cond_sweep->add_option("--out", cs_out, "Output directory");

    auto* transfer_cmd = minimal_cmd->add_subcommand(
        "transfer-check", "Forward-step effect on the reverse loss");
    int tc_instances = 100;
    uint64_t tc_seed = 0;
    std::string tc_out;
    transfer_cmd->add_option("--instances", tc_instances, "Random instances");
    transfer_cmd->add_option("--seed", tc_seed, "Instance seed");
    transfer_cmd->add_option("--out", tc_out, "Output directory");

    // ---- verify-all ---------------------------------------------------------
    auto* verify_cmd = app.add_subcommand("verify-all", "Run the acceptance criteria");
    bool verify_fast = false, verify_full = false;
    std::vector<int> verify_criteria;
    std::string verify_out;
    verify_cmd->add_flag("--fast", verify_fast, "Reduced sample counts, skips training");
    verify_cmd->add_flag("--full", verify_full, "Paper tolerances (default)");
    verify_cmd->add_option("--criteria", verify_criteria, "Subset of criteria ids")
        ->delimiter(',');
    verify_cmd->add_option("--out", verify_out, "Working/cache directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            return app.exit(e);  // --help
        }
        app.exit(e);
        return 2;
    }

    if (threads > 0) {
#ifdef _OPENMP
        omp_set_num_threads(threads);
#endif
    }

    if (!from_manifest.empty()) {
        std::ifstream in(from_manifest, std::ios::binary);
        if (!in.good()) {
            throw ContractError("io-error", "cannot open manifest " + from_manifest);
        }
        nlohmann::json m;
        in >> m;
        const auto stored = m.at("argv").get<std::vector<std::string>>();
        std::vector<std::string> args = {argv[0]};
        args.insert(args.end(), stored.begin(), stored.end());
        std::vector<char*> raw;
        raw.reserve(args.size());
        for (auto& s : args) {
            raw.push_back(s.data());
        }
        return run(static_cast<int>(raw.size()), raw.data());
    }

    // ---- dispatch -----------------------------------------------------------

    if (data_gen->parsed()) {
        const std::string out =
            resolve_out(gen_out, "data-gen-L" + std::to_string(gen_length));
        fs::create_directories(out);
        const auto corpus = gen_forward_corpus(gen_length);
        write_corpus((fs::path(out) / "corpus.jsonl").string(), gen_length, corpus);
        nlohmann::json meta;
        meta["length"] = gen_length;
        meta["samples"] = corpus.size();
        meta["letters"] = 26;
        meta["seed"] = gen_seed;
        std::ofstream mf(fs::path(out) / "corpus_manifest.json", std::ios::binary);
        mf << meta.dump(2) << "\n";
        write_manifest(out, {"data", "gen", "--length", std::to_string(gen_length), "--seed",
                             std::to_string(gen_seed), "--out", out});
        std::cout << "wrote " << corpus.size() << " samples to " << out << "\n";
        return 0;
    }

    if (train_cmd->parsed()) {
        const std::string name = std::string("train-") + train_arch + "-L" +
                                 std::to_string(train_length) + "-seed" +
                                 std::to_string(train_seed);
        const std::string out = resolve_out(train_out, name);
        ModelConfig cfg;
        cfg.arch = arch_from_string(train_arch);
        cfg.block = block_from_string(train_block);
        cfg.dim = 256;
        cfg.vocab = Vocab::size;
        cfg.max_len = train_length;
        cfg.dropout = train_dropout;
        cfg.tied_embeddings = train_tied;
        TrainOptions opts;
        opts.steps = train_steps;
        opts.batch_size = train_batch;
        opts.snapshot_every = train_snapshot;
        opts.seed = train_seed;
        opts.t_min = train_tmin;
        opts.per_batch_t = train_per_batch_t;
        opts.out_dir = out;
        const TrainRun run = train(cfg, train_length, gen_forward_corpus(train_length), opts);
        write_manifest(out, {"train", "--arch", train_arch, "--length",
                             std::to_string(train_length), "--seed",
                             std::to_string(train_seed), "--steps",
                             std::to_string(train_steps), "--batch",
                             std::to_string(train_batch), "--block", train_block, "--dropout",
                             str(train_dropout), "--snapshot-every",
                             std::to_string(train_snapshot), "--t-min", str(train_tmin),
                             "--out", out});
        std::cout << "trained " << train_arch << " L=" << train_length << " -> "
                  << run.final_path << "\n";
        return 0;
    }

    if (eval_cmd->parsed()) {
        const TrainRun run = load_run(eval_run);
        const std::string out = resolve_out(eval_out, "");
        const std::string out_dir = eval_out.empty() ? eval_run : out;
        const ModelParams params = load_checkpoint(run.eval_params_path());
        EvalOptions opts;
        opts.top_k = eval_k;
        opts.n_trials = eval_trials;
        opts.iterative = eval_iterative;
        opts.seed = eval_seed;
        std::vector<std::tuple<Direction, int, double, int>> rows;
        const int n = 26 * eval_trials;
        if (eval_direction == "forward" || eval_direction == "both") {
            rows.emplace_back(Direction::fwd, eval_k,
                              evaluate_accuracy(params, run.length, Direction::fwd, opts), n);
        }
        if (eval_direction == "reverse" || eval_direction == "both") {
            rows.emplace_back(Direction::rev, eval_k,
                              evaluate_accuracy(params, run.length, Direction::rev, opts), n);
        }
        if (rows.empty()) {
            throw ContractError("contract-violation",
                                "direction must be forward, reverse, or both");
        }
        write_accuracy_csv((fs::path(out_dir) / "accuracy.csv").string(), run.config.arch,
                           run.length, rows);
        write_manifest(out_dir, {"eval", "--run", eval_run, "--direction", eval_direction,
                                 "--k", std::to_string(eval_k), "--trials",
                                 std::to_string(eval_trials), "--seed",
                                 std::to_string(eval_seed), "--out", out_dir});
        for (const auto& [dir, k, acc, count] : rows) {
            std::cout << to_string(dir) << " accuracy: " << acc << "% (k=" << k
                      << ", n=" << count << ")\n";
        }
        return 0;
    }

    if (attn_corr->parsed()) {
        const TrainRun run = load_run(ac_run);
        const std::string out_dir = ac_out.empty() ? ac_run : ac_out;
        const ModelParams params = load_checkpoint(run.eval_params_path());
        const auto records = attention_correlation(params, run.length);
        write_corr_csv((fs::path(out_dir) / "attn_corr.csv").string(), run.length, records);
        auto buckets = correlation_bucket_means(records);
        auto bf = open_csv(out_dir, "attn_corr_buckets.csv");
        bf << "dtotal,mean_r\n";
        for (const auto& [dtotal, mean] : buckets) {
            bf << dtotal << "," << str(mean) << "\n";
        }
        write_manifest(out_dir, {"analyze", "attn-corr", "--run", ac_run, "--out", out_dir});
        std::cout << "wrote " << records.size() << " correlation records, "
                  << buckets.size() << " buckets\n";
        return 0;
    }

    if (grad_align->parsed()) {
        const TrainRun run = load_run(ga_run);
        const std::string out_dir = ga_out.empty() ? ga_run : ga_out;
        const auto track = gradient_alignment_track(run);
        write_align_csv((fs::path(out_dir) / "grad_align.csv").string(), track);
        write_manifest(out_dir, {"analyze", "grad-align", "--run", ga_run, "--out", out_dir});
        std::cout << "wrote " << track.size() << " alignment records\n";
        return 0;
    }

    if (prob_transfer->parsed()) {
        const TrainRun run = load_run(pt_run);
        const std::string out_dir = pt_out.empty() ? pt_run : pt_out;
        const auto track = probability_transfer_track(run);
        write_prob_csv((fs::path(out_dir) / "prob_transfer.csv").string(), track);
        write_manifest(out_dir,
                       {"analyze", "prob-transfer", "--run", pt_run, "--out", out_dir});
        std::cout << "wrote " << track.size() << " probability records\n";
        return 0;
    }

    if (trace_cmd->parsed()) {
        const std::string out = resolve_out(trace_out, "theory-trace");
        auto csv = open_csv(out, "trace.csv");
        csv << "delta,trace_ratio,ci_integral,abs_gap\n";
        const RopeParams p = RopeParams::make(trace_dim);
        for (int d = trace_dmin; d <= trace_dmax; ++d) {
            const double tr = trace_ratio(p, d);
            const double ci = ci_integral(p, d);
            csv << d << "," << str(tr) << "," << str(ci) << "," << str(std::abs(tr - ci))
                << "\n";
        }
        write_manifest(out, {"theory", "trace", "--dim", std::to_string(trace_dim),
                             "--delta-min", std::to_string(trace_dmin), "--delta-max",
                             std::to_string(trace_dmax), "--out", out});
        std::cout << "wrote trace.csv for D=" << trace_dim << "\n";
        return 0;
    }

    if (cant_cmd->parsed()) {
        const std::string out = resolve_out(cant_out, "theory-cantelli");
        auto csv = open_csv(out, "cantelli.csv");
        csv << "delta,m,c,E,V,bound\n";
        for (const auto& row : cantelli_table(cant_m, cant_deltas, cant_c)) {
            csv << row.delta << "," << row.m << "," << str(row.c) << "," << str(row.mean)
                << "," << str(row.variance) << "," << str(row.bound) << "\n";
        }
        write_manifest(out, {"theory", "cantelli", "--out", out});
        std::cout << "wrote cantelli.csv (" << cant_m.size() * cant_deltas.size() * cant_c.size()
                  << " rows)\n";
        return 0;
    }

    if (mc_cmd->parsed()) {
        const std::string out = resolve_out(mc_out, "theory-corr-mc");
        auto csv = open_csv(out, "corr_mc.csv");
        csv << "D,delta,mean_corr,bound,std_err,n\n";
        for (int dim : mc_dims) {
            for (int delta : mc_deltas) {
                RngStream rng(mc_seed + 500 + delta, static_cast<uint64_t>(dim));
                AlignmentModel model = AlignmentModel::random(dim, delta, rng);
                const CorrBoundReport rep = expected_corr_bound_check(model, mc_nq, rng);
                csv << dim << "," << delta << "," << str(rep.mean_corr) << ","
                    << str(rep.bound) << "," << str(rep.std_err) << "," << rep.n << "\n";
            }
        }
        write_manifest(out, {"theory", "corr-mc", "--n-q", std::to_string(mc_nq), "--seed",
                             std::to_string(mc_seed), "--out", out});
        std::cout << "wrote corr_mc.csv\n";
        return 0;
    }

    if (grad_check->parsed()) {
        const std::string out = resolve_out(gc_out, "minimal-grad-check");
        auto csv = open_csv(out, "grad_check.csv");
        csv << "seed,idx,d1,d2,i_wo,i_wv,i_wq,i_wk,total,fd_i_wo,fd_i_wv,fd_i_wq,fd_i_wk,"
               "max_rel_err\n";
        RngStream rng(gc_seed);
        double worst = 0.0;
        for (int i = 0; i < gc_instances; ++i) {
            const MinimalInstance inst = MinimalInstance::random(
                16, 8, 1 + rng.uniform_int(8), 1 + rng.uniform_int(8), rng);
            const double s0 = self_attention_score(inst);
            Vec flat;
            for (const Matrix* m : {&inst.wq, &inst.wk, &inst.wv, &inst.wo}) {
                flat.insert(flat.end(), m->data.begin(), m->data.end());
            }
            auto loss_fn = [&](Direction dir) {
                return [&, dir](const Vec& f) {
                    MinimalInstance tmp = inst;
                    size_t off = 0;
                    for (Matrix* m : {&tmp.wq, &tmp.wk, &tmp.wv, &tmp.wo}) {
                        std::copy(f.begin() + off, f.begin() + off + m->data.size(),
                                  m->data.begin());
                        off += m->data.size();
                    }
                    return minimal_loss(tmp, dir, s0);
                };
            };
            const Vec gf = finite_diff_grad(loss_fn(Direction::fwd), flat, 1e-5);
            const Vec gr = finite_diff_grad(loss_fn(Direction::rev), flat, 1e-5);
            const size_t nq = inst.wq.data.size(), nk = inst.wk.data.size(),
                         nv = inst.wv.data.size();
            const double fd_wq = dot(gf.data(), gr.data(), nq);
            const double fd_wk = dot(gf.data() + nq, gr.data() + nq, nk);
            const double fd_wv = dot(gf.data() + nq + nk, gr.data() + nq + nk, nv);
            const double fd_wo = dot(gf.data() + nq + nk + nv, gr.data() + nq + nk + nv,
                                     inst.wo.data.size());
            const GradBlocks b = closed_form_blocks(inst);
            double rel = 0.0;
            for (auto [a, c] : {std::pair{b.i_wo, fd_wo}, std::pair{b.i_wv, fd_wv},
                                std::pair{b.i_wq, fd_wq}, std::pair{b.i_wk, fd_wk}}) {
                rel = std::max(rel, std::abs(a - c) / std::max(std::abs(c), 1e-6));
            }
            worst = std::max(worst, rel);
            csv << gc_seed << "," << i << "," << inst.delta1 << "," << inst.delta2 << ","
                << str(b.i_wo) << "," << str(b.i_wv) << "," << str(b.i_wq) << ","
                << str(b.i_wk) << "," << str(b.total()) << "," << str(fd_wo) << ","
                << str(fd_wv) << "," << str(fd_wq) << "," << str(fd_wk) << "," << str(rel)
                << "\n";
        }
        write_manifest(out, {"minimal", "grad-check", "--instances",
                             std::to_string(gc_instances), "--seed", std::to_string(gc_seed),
                             "--out", out});
        std::cout << "worst relative block error over " << gc_instances
                  << " instances: " << worst << "\n";
        return worst <= 1e-4 ? 0 : 1;
    }

    if (cond_sweep->parsed()) {
        const std::string out = resolve_out(cs_out, "minimal-conditions-sweep");
        auto csv = open_csv(out, "conditions.csv");
        csv << "seed,idx,d1,d2,i_wo,i_wv,i_wq,i_wk,total,nonsaturated,u_aligned,"
               "margins_same_sign,rope_forms_positive,all_conditions,total_positive\n";
        RngStream rng(cs_seed);
        int violations = 0;
        for (int i = 0; i < cs_instances; ++i) {
            const MinimalInstance inst = MinimalInstance::random(
                16, 8, 1 + rng.uniform_int(12), 1 + rng.uniform_int(12), rng);
            const CorollaryReport rep = corollary_conditions(inst);
            if (rep.all_conditions() && !rep.total_positive()) {
                ++violations;
            }
            csv << cs_seed << "," << i << "," << inst.delta1 << "," << inst.delta2 << ","
                << str(rep.blocks.i_wo) << "," << str(rep.blocks.i_wv) << ","
                << str(rep.blocks.i_wq) << "," << str(rep.blocks.i_wk) << ","
                << str(rep.blocks.total()) << "," << rep.nonsaturated << "," << rep.u_aligned
                << "," << rep.margins_same_sign << "," << rep.rope_forms_positive << ","
                << rep.all_conditions() << "," << rep.total_positive() << "\n";
        }
        write_manifest(out, {"minimal", "conditions-sweep", "--instances",
                             std::to_string(cs_instances), "--seed", std::to_string(cs_seed),
                             "--out", out});
        std::cout << violations << " positivity violations over " << cs_instances
                  << " instances\n";
        return violations == 0 ? 0 : 1;
    }

    if (transfer_cmd->parsed()) {
        const std::string out = resolve_out(tc_out, "minimal-transfer-check");
        auto csv = open_csv(out, "transfer.csv");
        csv << "seed,idx,d1,d2,total,eta,loss_before,loss_after,decrease,ratio,decreased,"
               "first_order_ok\n";
        RngStream rng(tc_seed);
        int failures = 0, applicable = 0;
        for (int i = 0; i < tc_instances; ++i) {
            const MinimalInstance inst = MinimalInstance::random(
                16, 8, 1 + rng.uniform_int(8), 1 + rng.uniform_int(8), rng);
            const GradBlocks b = closed_form_blocks(inst);
            if (b.total() <= 0.0) {
                continue;
            }
            ++applicable;
            const TransferReport rep = first_order_transfer_check(inst);
            if (!rep.decreased || !rep.first_order_ok) {
                ++failures;
            }
            csv << tc_seed << "," << i << "," << inst.delta1 << "," << inst.delta2 << ","
                << str(b.total()) << "," << str(rep.eta) << "," << str(rep.loss_before) << ","
                << str(rep.loss_after) << "," << str(rep.decrease) << "," << str(rep.ratio)
                << "," << rep.decreased << "," << rep.first_order_ok << "\n";
        }
        write_manifest(out, {"minimal", "transfer-check", "--instances",
                             std::to_string(tc_instances), "--seed", std::to_string(tc_seed),
                             "--out", out});
        std::cout << failures << " transfer failures over " << applicable
                  << " applicable instances\n";
        return failures == 0 && applicable > 0 ? 0 : 1;
    }

    if (verify_cmd->parsed()) {
        if (verify_fast && verify_full) {
            throw ContractError("contract-violation", "choose one of --fast/--full");
        }
        const VerifyProfile profile =
            verify_fast ? VerifyProfile::fast : VerifyProfile::full;
        const std::string out = resolve_out(verify_out, "verify-all");
        write_manifest(out, {"verify-all", verify_fast ? "--fast" : "--full", "--out", out});
        const auto results = run_verification(profile, verify_criteria, out);
        return all_passed(results) ? 0 : 1;
    }

    std::cout << app.help();
    return 0;
}

}  // namespace
