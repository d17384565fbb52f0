#include "revlab/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace fs = std::filesystem;

namespace revlab {

namespace {

uint64_t fnv1a_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "io-error", "hash: cannot open " + path);
    uint64_t h = 0xcbf29ce484222325ULL;
    char buf[65536];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        const std::streamsize n = in.gcount();
        for (std::streamsize i = 0; i < n; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
        if (!in.good()) {
            break;
        }
    }
    return h;
}

nlohmann::json schedule_to_json(const Schedule& s) {
    return {{"lr", s.lr},
            {"warmup", s.warmup},
            {"clip", s.clip},
            {"weight_decay", s.weight_decay},
            {"beta1", s.beta1},
            {"beta2", s.beta2},
            {"eps", s.eps},
            {"ema_decay", s.ema_decay}};
}

Schedule schedule_from_json(const nlohmann::json& j) {
    Schedule s;
    s.lr = j.at("lr").get<double>();
    s.warmup = j.at("warmup").get<int>();
    s.clip = j.at("clip").get<double>();
    s.weight_decay = j.at("weight_decay").get<double>();
    s.beta1 = j.at("beta1").get<double>();
    s.beta2 = j.at("beta2").get<double>();
    s.eps = j.at("eps").get<double>();
    s.ema_decay = j.at("ema_decay").get<double>();
    return s;
}

}  // namespace

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string TrainRun::eval_params_path() const {
    return config.arch == Arch::mdm ? ema_path : final_path;
}

TrainRun train(const ModelConfig& config, int length, const std::vector<SequenceSample>& corpus,
               const TrainOptions& options) {
    config.validate();
    require(!options.out_dir.empty(), "contract-violation", "train: out_dir required");
    require(!corpus.empty(), "contract-violation", "train: empty corpus");
    for (const auto& s : corpus) {
        require(s.lower_pos < s.upper_pos, "contract-violation",
                "train: corpus must be forward-only");
        require(static_cast<int>(s.tokens.size()) == length, "dimension-mismatch",
                "train: corpus length mismatch");
    }

    fs::create_directories(options.out_dir);
    TrainRun run;
    run.config = config;
    run.options = options;
    run.length = length;
    run.dir = options.out_dir;
    run.corpus_path = (fs::path(options.out_dir) / "corpus.jsonl").string();
    run.metrics_path = (fs::path(options.out_dir) / "metrics.csv").string();
    write_corpus(run.corpus_path, length, corpus);

    RngStream batch_rng(options.seed, 0);
    RngStream dropout_rng(options.seed, 1);
    RngStream init_rng(options.seed, 2);

    ModelParams params = ModelParams::init(config, init_rng);
    OptState opt = OptState::init(params);
    WorkspaceHandle ws;
    ModelGrads grads = ModelGrads::zeros(config);

    std::ofstream metrics(run.metrics_path, std::ios::binary);
    metrics << "step,loss,lr,grad_norm\n";

    auto ckpt_path = [&](const std::string& stem) {
        return (fs::path(options.out_dir) / (stem + ".bin")).string();
    };

    for (int step = 1; step <= options.steps; ++step) {
        Batch batch;
        if (config.arch == Arch::mdm) {
            std::vector<MaskedBatch> examples;
            examples.reserve(options.batch_size);
            const double shared_t =
                options.per_batch_t
                    ? options.t_min + (1.0 - options.t_min) * batch_rng.uniform()
                    : 0.0;
            for (int e = 0; e < options.batch_size; ++e) {
                const auto& s = corpus[batch_rng.uniform_int(static_cast<int>(corpus.size()))];
                examples.push_back(options.per_batch_t
                                       ? corrupt_with_t(s, shared_t, batch_rng)
                                       : corrupt(s, options.t_min, batch_rng));
            }
            batch = make_mdm_batch(examples);
        } else {
            std::vector<std::vector<int>> seqs;
            seqs.reserve(options.batch_size);
            for (int e = 0; e < options.batch_size; ++e) {
                seqs.push_back(
                    corpus[batch_rng.uniform_int(static_cast<int>(corpus.size()))].tokens);
            }
            batch = make_arm_batch(seqs);
        }

        const double loss = forward_backward(params, batch, true, &dropout_rng, *ws.ws, grads);
        if (!std::isfinite(loss)) {
            save_checkpoint(ckpt_path("ckpt_aborted"), params, options.seed, step - 1);
            throw ContractError("divergence", "train: non-finite loss at step " +
                                                  std::to_string(step) +
                                                  "; last good checkpoint saved");
        }
        const Vec flat = grads.to_flat();
        double gn2 = 0.0;
        for (double g : flat) {
            gn2 += g * g;
        }
        adamw_step(params, opt, flat, options.schedule);

        const double lr_now =
            options.schedule.lr *
            std::min(1.0, static_cast<double>(opt.step) / options.schedule.warmup);
        metrics << step << "," << format_double(loss) << "," << format_double(lr_now) << ","
                << format_double(std::sqrt(gn2)) << "\n";

        if (options.snapshot_every > 0 && step % options.snapshot_every == 0) {
            char stem[32];
            std::snprintf(stem, sizeof(stem), "ckpt_step%06d", step);
            const std::string path = ckpt_path(stem);
            save_checkpoint(path, params, options.seed, step);
            run.snapshots.emplace_back(step, path);
        }
    }
    metrics.close();

    run.final_path = ckpt_path("ckpt_final");
    save_checkpoint(run.final_path, params, options.seed, options.steps);
    ModelParams ema_params = params;
    ema_params.from_flat(opt.ema);
    run.ema_path = ckpt_path("ema_final");
    save_checkpoint(run.ema_path, ema_params, options.seed, options.steps);

    nlohmann::json manifest;
    manifest["manifest_version"] = 1;
    manifest["kind"] = "train";
    manifest["config"] = nlohmann::json::parse(config_to_json_string(config));
    manifest["length"] = length;
    manifest["options"] = {{"steps", options.steps},
                           {"batch_size", options.batch_size},
                           {"snapshot_every", options.snapshot_every},
                           {"seed", options.seed},
                           {"t_min", options.t_min},
                           {"per_batch_t", options.per_batch_t},
                           {"schedule", schedule_to_json(options.schedule)}};
    manifest["corpus"] = "corpus.jsonl";
    manifest["corpus_hash"] = fnv1a_file(run.corpus_path);
    manifest["metrics"] = "metrics.csv";
    nlohmann::json snaps = nlohmann::json::array();
    for (const auto& [step, path] : run.snapshots) {
        snaps.push_back({{"step", step}, {"path", fs::path(path).filename().string()}});
    }
    manifest["snapshots"] = snaps;
    manifest["final"] = "ckpt_final.bin";
    manifest["ema"] = "ema_final.bin";
    std::ofstream mf(fs::path(options.out_dir) / "manifest.json", std::ios::binary);
    mf << manifest.dump(2) << "\n";
    require(mf.good(), "io-error", "train: manifest write failed");
    return run;
}

TrainRun load_run(const std::string& dir) {
    std::ifstream mf(fs::path(dir) / "manifest.json", std::ios::binary);
    require(mf.good(), "io-error", "load_run: no manifest in " + dir);
    nlohmann::json manifest;
    mf >> manifest;
    require(manifest.at("kind").get<std::string>() == "train", "contract-violation",
            "load_run: not a training run");
    TrainRun run;
    run.config = config_from_json_string(manifest.at("config").dump());
    run.length = manifest.at("length").get<int>();
    run.dir = dir;
    const auto& o = manifest.at("options");
    run.options.steps = o.at("steps").get<int>();
    run.options.batch_size = o.at("batch_size").get<int>();
    run.options.snapshot_every = o.at("snapshot_every").get<int>();
    run.options.seed = o.at("seed").get<uint64_t>();
    run.options.t_min = o.at("t_min").get<double>();
    run.options.per_batch_t = o.at("per_batch_t").get<bool>();
    run.options.schedule = schedule_from_json(o.at("schedule"));
    run.options.out_dir = dir;
    for (const auto& s : manifest.at("snapshots")) {
        run.snapshots.emplace_back(s.at("step").get<int>(),
                                   (fs::path(dir) / s.at("path").get<std::string>()).string());
    }
    run.corpus_path = (fs::path(dir) / manifest.at("corpus").get<std::string>()).string();
    run.metrics_path = (fs::path(dir) / manifest.at("metrics").get<std::string>()).string();
    run.final_path = (fs::path(dir) / manifest.at("final").get<std::string>()).string();
    run.ema_path = (fs::path(dir) / manifest.at("ema").get<std::string>()).string();
    return run;
}

// ---------------------------------------------------------------------------
// Evaluation.
// ---------------------------------------------------------------------------

namespace {

// Top-k token ids of a probability row; ties at the cutoff go to the lowest
// token id.
std::vector<int> top_k_ids(const Vec& probs, int k) {
    std::vector<int> ids(probs.size());
    for (size_t i = 0; i < ids.size(); ++i) {
        ids[i] = static_cast<int>(i);
    }
    std::stable_sort(ids.begin(), ids.end(), [&](int a, int b) {
        if (probs[a] != probs[b]) {
            return probs[a] > probs[b];
        }
        return a < b;
    });
    ids.resize(std::min<size_t>(ids.size(), static_cast<size_t>(k)));
    return ids;
}

int sample_top_k(const Vec& probs, const std::vector<int>& ids, RngStream& rng) {
    double total = 0.0;
    for (int id : ids) {
        total += probs[id];
    }
    const double r = rng.uniform() * total;
    double c = 0.0;
    for (int id : ids) {
        c += probs[id];
        if (r < c) {
            return id;
        }
    }
    return ids.back();
}

Vec logits_row_probs(const Matrix& logits, int row) {
    Vec v(logits.row(row), logits.row(row) + logits.cols);
    return softmax(v, 1.0);
}

}  // namespace

double evaluate_accuracy(const ModelParams& params, int length, Direction dir,
                         const EvalOptions& opts) {
    require(opts.top_k >= 1 && opts.n_trials >= 1, "contract-violation", "eval: bad options");
    const Arch arch = params.config.arch;
    int successes = 0;
    const int total = 26 * opts.n_trials;

#pragma omp parallel for schedule(static) reduction(+ : successes)
    for (int letter = 0; letter < 26; ++letter) {
        const int cue = dir == Direction::fwd ? Vocab::lower(letter) : Vocab::upper(letter);
        const int target = Vocab::pair_of(cue);
        const std::vector<int> query = make_query(length, dir, letter, arch);

        if (arch == Arch::mdm && !opts.iterative) {
            // One parallel fill: every masked position samples from its own
            // renormalized top-k row of a single forward pass.
            const ForwardResult f = forward(params, query);
            std::vector<Vec> probs(query.size());
            std::vector<std::vector<int>> topk(query.size());
            for (size_t pos = 1; pos < query.size(); ++pos) {
                probs[pos] = logits_row_probs(f.logits, static_cast<int>(pos));
                topk[pos] = top_k_ids(probs[pos], opts.top_k);
            }
            for (int trial = 0; trial < opts.n_trials; ++trial) {
                RngStream rng(opts.seed, (static_cast<uint64_t>(letter) << 32) | trial);
                bool hit = false;
                for (size_t pos = 1; pos < query.size() && !hit; ++pos) {
                    hit = sample_top_k(probs[pos], topk[pos], rng) == target;
                }
                successes += hit ? 1 : 0;
            }
        } else if (arch == Arch::mdm) {
            // Iterative unmasking in a random position order.
            for (int trial = 0; trial < opts.n_trials; ++trial) {
                RngStream rng(opts.seed, (static_cast<uint64_t>(letter) << 32) | trial);
                std::vector<int> tokens = query;
                std::vector<int> order;
                for (size_t pos = 1; pos < tokens.size(); ++pos) {
                    order.push_back(static_cast<int>(pos));
                }
                for (size_t i = order.size(); i > 1; --i) {
                    std::swap(order[i - 1], order[rng.uniform_int(static_cast<int>(i))]);
                }
                bool hit = false;
                for (int pos : order) {
                    const ForwardResult f = forward(params, tokens);
                    const Vec probs = logits_row_probs(f.logits, pos);
                    tokens[pos] = sample_top_k(probs, top_k_ids(probs, opts.top_k), rng);
                    if (tokens[pos] == target) {
                        hit = true;
                        break;
                    }
                }
                successes += hit ? 1 : 0;
            }
        } else {
            // ARM: sequential top-k continuation of length-1 steps.
            for (int trial = 0; trial < opts.n_trials; ++trial) {
                RngStream rng(opts.seed, (static_cast<uint64_t>(letter) << 32) | trial);
                std::vector<int> tokens = query;
                bool hit = false;
                while (static_cast<int>(tokens.size()) < length && !hit) {
                    const ForwardResult f = forward(params, tokens);
                    const Vec probs =
                        logits_row_probs(f.logits, static_cast<int>(tokens.size()) - 1);
                    const int tok = sample_top_k(probs, top_k_ids(probs, opts.top_k), rng);
                    tokens.push_back(tok);
                    hit = tok == target;
                }
                successes += hit ? 1 : 0;
            }
        }
    }
    return 100.0 * static_cast<double>(successes) / total;
}

// ---------------------------------------------------------------------------
// Attention correlation.
// ---------------------------------------------------------------------------

ScoreTable collect_attention_scores(const ModelParams& params, int length) {
    require(params.config.arch == Arch::mdm, "contract-violation",
            "attention scores require the mdm encoder");
    ScoreTable table;
    table.fwd = forward_placements(length);
    table.rev = reverse_placements(length);
    table.fwd_scores = Matrix(static_cast<int>(table.fwd.size()), 26);
    table.rev_scores = Matrix(static_cast<int>(table.rev.size()), 26);

    auto fill = [&](const std::vector<PromptPlacement>& placements, Matrix& out) {
        const int n = static_cast<int>(placements.size());
#pragma omp parallel for schedule(static)
        for (int idx = 0; idx < n * 26; ++idx) {
            const int p = idx / 26;
            const int letter = idx % 26;
            const std::vector<int> prompt = placement_prompt(length, placements[p], letter);
            const ForwardResult f = forward(params, prompt);
            out.at(p, letter) = f.scores.at(placements[p].mask_pos, placements[p].upper_pos);
        }
    };
    fill(table.fwd, table.fwd_scores);
    fill(table.rev, table.rev_scores);
    return table;
}

std::vector<CorrRecord> attention_correlation_records(const ScoreTable& table) {
    std::vector<CorrRecord> records;
    records.reserve(table.fwd.size() * table.rev.size());
    for (size_t fi = 0; fi < table.fwd.size(); ++fi) {
        Vec sf(table.fwd_scores.row(static_cast<int>(fi)),
               table.fwd_scores.row(static_cast<int>(fi)) + 26);
        for (size_t ri = 0; ri < table.rev.size(); ++ri) {
            Vec sr(table.rev_scores.row(static_cast<int>(ri)),
                   table.rev_scores.row(static_cast<int>(ri)) + 26);
            CorrRecord rec;
            rec.delta1 = table.fwd[fi].distance();
            rec.delta2 = table.rev[ri].distance();
            rec.n_points = 26;
            try {
                rec.pearson_r = pearson(sf, sr);
            } catch (const ContractError&) {
                continue;  // degenerate variance: drop the pair
            }
            records.push_back(rec);
        }
    }
    return records;
}

std::vector<CorrRecord> attention_correlation(const ModelParams& params, int length) {
    return attention_correlation_records(collect_attention_scores(params, length));
}

std::map<int, double> correlation_bucket_means(const std::vector<CorrRecord>& records) {
    std::map<int, std::pair<double, int>> acc;
    for (const auto& r : records) {
        auto& [sum, n] = acc[r.delta_total()];
        sum += r.pearson_r;
        n += 1;
    }
    std::map<int, double> means;
    for (const auto& [k, v] : acc) {
        means[k] = v.first / v.second;
    }
    return means;
}

// ---------------------------------------------------------------------------
// Gradient alignment and probability transfer.
// ---------------------------------------------------------------------------

GradAlignRecord gradient_alignment_point(const ModelParams& params, int length) {
    require(params.config.arch == Arch::mdm, "contract-violation",
            "gradient alignment tracks the mdm encoder");
    const auto fwd = forward_placements(length);
    const auto rev = reverse_placements(length);
    const size_t p_count = params.param_count();

    // Per-direction gradient blocks small enough to keep two in memory.
    const size_t budget_rows =
        std::max<size_t>(1, (1500ULL << 20) / (p_count * sizeof(double)));
    const size_t nf = fwd.size(), nr = rev.size();

    double cos_sum = 0.0, inner_sum = 0.0;
    long long n_pairs = 0;
    double pf_sum = 0.0, pr_sum = 0.0;

    Matrix gf(static_cast<int>(std::min(budget_rows, nf)), static_cast<int>(p_count));
    Matrix gr(static_cast<int>(std::min(budget_rows, nr)), static_cast<int>(p_count));
    Vec nf_norm(nf), nr_norm(nr);
    Matrix dots(gf.rows, gr.rows);

    for (int letter = 0; letter < 26; ++letter) {
        for (size_t f0 = 0; f0 < nf; f0 += budget_rows) {
            const size_t f1 = std::min(nf, f0 + budget_rows);
#pragma omp parallel
            {
                WorkspaceHandle ws;
                ModelGrads grads = ModelGrads::zeros(params.config);
#pragma omp for schedule(static)
                for (int fi = static_cast<int>(f0); fi < static_cast<int>(f1); ++fi) {
                    const auto& p = fwd[fi];
                    const std::vector<int> prompt = placement_prompt(length, p, letter);
                    double* row = gf.row(fi - static_cast<int>(f0));
                    snapshot_gradient_into(params, prompt, p.mask_pos, Vocab::lower(letter),
                                           *ws.ws, grads, row);
                    nf_norm[fi] = std::sqrt(dot(row, row, p_count));
                }
            }
            for (size_t r0 = 0; r0 < nr; r0 += budget_rows) {
                const size_t r1 = std::min(nr, r0 + budget_rows);
#pragma omp parallel
                {
                    WorkspaceHandle ws;
                    ModelGrads grads = ModelGrads::zeros(params.config);
#pragma omp for schedule(static)
                    for (int ri = static_cast<int>(r0); ri < static_cast<int>(r1); ++ri) {
                        const auto& p = rev[ri];
                        const std::vector<int> prompt = placement_prompt(length, p, letter);
                        double* row = gr.row(ri - static_cast<int>(r0));
                        snapshot_gradient_into(params, prompt, p.mask_pos, Vocab::lower(letter),
                                               *ws.ws, grads, row);
                        nr_norm[ri] = std::sqrt(dot(row, row, p_count));
                    }
                }
                // Cross inner products for this block pair.
                const int bf = static_cast<int>(f1 - f0), br = static_cast<int>(r1 - r0);
#pragma omp parallel for schedule(static)
                for (int i = 0; i < bf; ++i) {
                    for (int j = 0; j < br; ++j) {
                        dots.at(i, j) = dot(gf.row(i), gr.row(j), p_count);
                    }
                }
                for (int i = 0; i < bf; ++i) {
                    for (int j = 0; j < br; ++j) {
                        const double ip = dots.at(i, j);
                        const double den = nf_norm[f0 + i] * nr_norm[r0 + j];
                        inner_sum += ip;
                        cos_sum += den > 0.0 ? ip / den : 0.0;
                        n_pairs += 1;
                    }
                }
            }
        }
        // Truth probabilities at the mask; summed in fixed placement order.
        Vec pf_vals(nf), pr_vals(nr);
#pragma omp parallel
        {
            WorkspaceHandle ws;
#pragma omp for schedule(static) nowait
            for (int fi = 0; fi < static_cast<int>(nf); ++fi) {
                const auto& p = fwd[fi];
                pf_vals[fi] = token_probability(params, placement_prompt(length, p, letter),
                                                p.mask_pos, Vocab::lower(letter), *ws.ws);
            }
#pragma omp for schedule(static)
            for (int ri = 0; ri < static_cast<int>(nr); ++ri) {
                const auto& p = rev[ri];
                pr_vals[ri] = token_probability(params, placement_prompt(length, p, letter),
                                                p.mask_pos, Vocab::lower(letter), *ws.ws);
            }
        }
        for (double v : pf_vals) {
            pf_sum += v;
        }
        for (double v : pr_vals) {
            pr_sum += v;
        }
    }

    GradAlignRecord rec;
    rec.cosine = cos_sum / static_cast<double>(n_pairs);
    rec.inner_product = inner_sum / static_cast<double>(n_pairs);
    rec.p_fwd_truth = pf_sum / static_cast<double>(26 * nf);
    rec.p_rev_truth = pr_sum / static_cast<double>(26 * nr);
    return rec;
}

std::vector<GradAlignRecord> gradient_alignment_track(const TrainRun& run) {
    std::vector<GradAlignRecord> out;
    for (const auto& [step, path] : run.snapshots) {
        const ModelParams params = load_checkpoint(path);
        GradAlignRecord rec = gradient_alignment_point(params, run.length);
        rec.step = step;
        out.push_back(rec);
    }
    return out;
}

ProbPoint probability_transfer_point(const ModelParams& params, int length) {
    const auto fwd = forward_placements(length);
    const auto rev = reverse_placements(length);
    const bool mdm = params.config.arch == Arch::mdm;
    Vec pf_vals(fwd.size() * 26), pr_vals(rev.size() * 26);

#pragma omp parallel
    {
        WorkspaceHandle ws;
#pragma omp for schedule(static) nowait
        for (int i = 0; i < static_cast<int>(fwd.size() * 26); ++i) {
            const auto& p = fwd[i / 26];
            const int letter = i % 26;
            if (mdm) {
                pf_vals[i] = token_probability(params, placement_prompt(length, p, letter),
                                               p.mask_pos, Vocab::lower(letter), *ws.ws);
            } else {
                // Forward mapping for the decoder: lowercase visible at its
                // slot, predict the uppercase at its position.
                std::vector<int> prefix(static_cast<size_t>(p.upper_pos), Vocab::pad);
                prefix[p.mask_pos] = Vocab::lower(letter);
                pf_vals[i] = token_probability(params, prefix, p.upper_pos,
                                               Vocab::upper(letter), *ws.ws);
            }
        }
#pragma omp for schedule(static)
        for (int i = 0; i < static_cast<int>(rev.size() * 26); ++i) {
            const auto& p = rev[i / 26];
            const int letter = i % 26;
            if (mdm) {
                pr_vals[i] = token_probability(params, placement_prompt(length, p, letter),
                                               p.mask_pos, Vocab::lower(letter), *ws.ws);
            } else {
                // Cropped prompt: uppercase at its slot, predict the lowercase.
                std::vector<int> prefix(static_cast<size_t>(p.mask_pos), Vocab::pad);
                prefix[p.upper_pos] = Vocab::upper(letter);
                pr_vals[i] = token_probability(params, prefix, p.mask_pos,
                                               Vocab::lower(letter), *ws.ws);
            }
        }
    }
    ProbPoint pt;
    double pf = 0.0, pr = 0.0;
    for (double v : pf_vals) {
        pf += v;
    }
    for (double v : pr_vals) {
        pr += v;
    }
    pt.p_fwd = pf / static_cast<double>(pf_vals.size());
    pt.p_rev = pr / static_cast<double>(pr_vals.size());
    return pt;
}

std::vector<ProbPoint> probability_transfer_track(const TrainRun& run) {
    std::vector<ProbPoint> out;
    for (const auto& [step, path] : run.snapshots) {
        const ModelParams params = load_checkpoint(path);
        ProbPoint pt = probability_transfer_point(params, run.length);
        pt.step = step;
        out.push_back(pt);
    }
    return out;
}

// ---------------------------------------------------------------------------
// CSV output.
// ---------------------------------------------------------------------------

void write_accuracy_csv(const std::string& path, Arch arch, int length,
                        const std::vector<std::tuple<Direction, int, double, int>>& rows) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "io-error", "csv: cannot open " + path);
    out << "arch,L,direction,k,acc,n\n";
    for (const auto& [dir, k, acc, n] : rows) {
        out << to_string(arch) << "," << length << "," << to_string(dir) << "," << k << ","
            << format_double(acc) << "," << n << "\n";
    }
}

void write_corr_csv(const std::string& path, int length,
                    const std::vector<CorrRecord>& records) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "io-error", "csv: cannot open " + path);
    out << "L,d1,d2,dtotal,r,n\n";
    for (const auto& r : records) {
        out << length << "," << r.delta1 << "," << r.delta2 << "," << r.delta_total() << ","
            << format_double(r.pearson_r) << "," << r.n_points << "\n";
    }
}

void write_align_csv(const std::string& path, const std::vector<GradAlignRecord>& records) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "io-error", "csv: cannot open " + path);
    out << "step,cosine,inner,p_fwd,p_rev\n";
    for (const auto& r : records) {
        out << r.step << "," << format_double(r.cosine) << "," << format_double(r.inner_product)
            << "," << format_double(r.p_fwd_truth) << "," << format_double(r.p_rev_truth) << "\n";
    }
}

void write_prob_csv(const std::string& path, const std::vector<ProbPoint>& points) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "io-error", "csv: cannot open " + path);
    out << "step,p_fwd,p_rev\n";
    for (const auto& p : points) {
        out << p.step << "," << format_double(p.p_fwd) << "," << format_double(p.p_rev) << "\n";
    }
}

}  // namespace revlab
