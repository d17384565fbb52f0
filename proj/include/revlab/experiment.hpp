#pragma once

#include <map>
#include <optional>

#include "revlab/model.hpp"

namespace revlab {

struct TrainOptions {
    int steps = 3000;
    int batch_size = 256;
    int snapshot_every = 100;
    uint64_t seed = 1;
    double t_min = 1e-3;
    bool per_batch_t = false;  // one corruption level per batch instead of per sequence
    Schedule schedule;
    std::string out_dir;
};

struct TrainRun {
    ModelConfig config;
    TrainOptions options;
    int length = 0;
    std::string dir;
    std::vector<std::pair<int, std::string>> snapshots;  // (step, checkpoint path)
    std::string final_path;
    std::string ema_path;
    std::string metrics_path;
    std::string corpus_path;

    // Raw final weights for ARM, EMA shadow for MDM.
    std::string eval_params_path() const;
};

// Batch AdamW training on the forward-only corpus; deterministic for a given
// seed and independent of the worker-thread count. Snapshots, metrics, corpus
// and a manifest land under options.out_dir.
TrainRun train(const ModelConfig& config, int length, const std::vector<SequenceSample>& corpus,
               const TrainOptions& options);

TrainRun load_run(const std::string& dir);

// Top-k sampled generation accuracy in percent: fraction of (letter, trial)
// pairs whose output contains the paired target token at any position. MDM
// fills all masked positions in one parallel step (or iteratively with
// `iterative`), ARM samples length-1 continuations.
struct EvalOptions {
    int top_k = 3;
    int n_trials = 100;
    bool iterative = false;
    uint64_t seed = 0;
};

double evaluate_accuracy(const ModelParams& params, int length, Direction dir,
                         const EvalOptions& opts);

// Raw mask->uppercase attention score for every placement x letter.
struct ScoreTable {
    std::vector<PromptPlacement> fwd;
    std::vector<PromptPlacement> rev;
    Matrix fwd_scores;  // |fwd| x 26
    Matrix rev_scores;  // |rev| x 26
};

ScoreTable collect_attention_scores(const ModelParams& params, int length);

struct CorrRecord {
    int delta1 = 0;
    int delta2 = 0;
    double pearson_r = 0.0;
    int n_points = 0;

    int delta_total() const { return delta1 + delta2; }
};

// Pearson across the 26 letters for every (forward, reverse) placement pair;
// degenerate-variance pairs are dropped.
std::vector<CorrRecord> attention_correlation_records(const ScoreTable& table);
std::vector<CorrRecord> attention_correlation(const ModelParams& params, int length);

// Mean r per delta1+delta2 bucket.
std::map<int, double> correlation_bucket_means(const std::vector<CorrRecord>& records);

struct GradAlignRecord {
    int step = 0;
    double cosine = 0.0;         // mean over placement pairs and letters
    double inner_product = 0.0;  // mean over placement pairs and letters
    double p_fwd_truth = 0.0;    // mean truth probability at the mask, forward prompts
    double p_rev_truth = 0.0;
};

// One measurement on a fixed parameter snapshot (dropout off), averaged over
// all permutation pairs and letters.
GradAlignRecord gradient_alignment_point(const ModelParams& params, int length);

// The same measurement across a run's snapshot series.
std::vector<GradAlignRecord> gradient_alignment_track(const TrainRun& run);

struct ProbPoint {
    int step = 0;
    double p_fwd = 0.0;
    double p_rev = 0.0;
};

// Permutation-averaged truth probability under forward/reverse prompts; MDM
// reads the masked position, ARM crops the prompt.
ProbPoint probability_transfer_point(const ModelParams& params, int length);
std::vector<ProbPoint> probability_transfer_track(const TrainRun& run);

// CSV writers (LF line endings, '.' decimal, header row).
void write_accuracy_csv(const std::string& path, Arch arch, int length,
                        const std::vector<std::tuple<Direction, int, double, int>>& rows);
void write_corr_csv(const std::string& path, int length, const std::vector<CorrRecord>& records);
void write_align_csv(const std::string& path, const std::vector<GradAlignRecord>& records);
void write_prob_csv(const std::string& path, const std::vector<ProbPoint>& points);

std::string format_double(double v);

}  // namespace revlab
