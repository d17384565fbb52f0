#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "revlab/experiment.hpp"
#include "revlab/theory.hpp"
#include "revlab/verify.hpp"

namespace py = pybind11;
using namespace revlab;

PYBIND11_MODULE(_core, m) {
    m.doc() = "Reversal-curse laboratory: RoPE theory checks, the two-token probe, "
              "and one-layer MDM/ARM toy experiments";

    py::register_exception<ContractError>(m, "ContractError");

    py::enum_<Direction>(m, "Direction")
        .value("fwd", Direction::fwd)
        .value("rev", Direction::rev);
    py::enum_<Arch>(m, "Arch").value("mdm", Arch::mdm).value("arm", Arch::arm);
    py::enum_<Block>(m, "Block")
        .value("attn_only", Block::attn_only)
        .value("full", Block::full);

    // ---- rope ---------------------------------------------------------------
    m.def(
        "trace_ratio",
        [](int dim, long long delta) { return trace_ratio(RopeParams::make(dim), delta); },
        py::arg("dim"), py::arg("delta"),
        "(1/D) Tr(R(delta)) for the default base-10000 frequencies");
    m.def(
        "ci_integral",
        [](int dim, long long delta) { return ci_integral(RopeParams::make(dim), delta); },
        py::arg("dim"), py::arg("delta"));
    m.def("cosine_integral", &cosine_integral, py::arg("x"));
    m.def(
        "apply_rotation",
        [](int dim, long long delta, const Vec& x) {
            return apply_rotation(RopeParams::make(dim), delta, x);
        },
        py::arg("dim"), py::arg("delta"), py::arg("x"));
    m.def(
        "quadratic_form",
        [](int dim, long long delta, const Vec& x) {
            return quadratic_form(RopeParams::make(dim), delta, x);
        },
        py::arg("dim"), py::arg("delta"), py::arg("x"));

    // ---- theory -------------------------------------------------------------
    py::class_<CantelliRow>(m, "CantelliRow")
        .def_readonly("delta", &CantelliRow::delta)
        .def_readonly("m", &CantelliRow::m)
        .def_readonly("c", &CantelliRow::c)
        .def_readonly("mean", &CantelliRow::mean)
        .def_readonly("variance", &CantelliRow::variance)
        .def_readonly("bound", &CantelliRow::bound);
    m.def(
        "cantelli_row",
        [](int m_planes, int delta, double c) {
            return cantelli_row(RopeParams::make(2 * m_planes), delta, c);
        },
        py::arg("m"), py::arg("delta"), py::arg("c"));
    m.def("cantelli_table", &cantelli_table, py::arg("ms"), py::arg("deltas"),
          py::arg("thresholds"));

    py::class_<AlignmentModel>(m, "AlignmentModel")
        .def_static(
            "random",
            [](int dim, int delta, uint64_t seed) {
                RngStream rng(seed);
                return AlignmentModel::random(dim, delta, rng);
            },
            py::arg("dim"), py::arg("delta"), py::arg("seed"))
        .def_readwrite("sigma", &AlignmentModel::sigma)
        .def_readwrite("tau", &AlignmentModel::tau)
        .def_readwrite("rho", &AlignmentModel::rho)
        .def_readwrite("delta", &AlignmentModel::delta);
    m.def("conditional_corr", &conditional_corr, py::arg("model"), py::arg("q"));
    m.def(
        "mc_conditional_corr",
        [](const AlignmentModel& model, const Vec& q, int n, uint64_t seed) {
            RngStream rng(seed);
            return mc_conditional_corr(model, q, n, rng);
        },
        py::arg("model"), py::arg("q"), py::arg("n_samples"), py::arg("seed"));
    py::class_<CorrBoundReport>(m, "CorrBoundReport")
        .def_readonly("mean_corr", &CorrBoundReport::mean_corr)
        .def_readonly("bound", &CorrBoundReport::bound)
        .def_readonly("std_err", &CorrBoundReport::std_err)
        .def_readonly("n", &CorrBoundReport::n)
        .def("holds", &CorrBoundReport::holds);
    m.def(
        "expected_corr_bound_check",
        [](const AlignmentModel& model, int n_q, uint64_t seed) {
            RngStream rng(seed);
            return expected_corr_bound_check(model, n_q, rng);
        },
        py::arg("model"), py::arg("n_q"), py::arg("seed"));

    // ---- minimal model --------------------------------------------------------
    py::class_<GradBlocks>(m, "GradBlocks")
        .def_readonly("i_wo", &GradBlocks::i_wo)
        .def_readonly("i_wv", &GradBlocks::i_wv)
        .def_readonly("i_wq", &GradBlocks::i_wq)
        .def_readonly("i_wk", &GradBlocks::i_wk)
        .def("total", &GradBlocks::total);
    py::class_<MinimalInstance>(m, "MinimalInstance")
        .def_static(
            "random",
            [](int dim, int vocab, int d1, int d2, uint64_t seed) {
                RngStream rng(seed);
                return MinimalInstance::random(dim, vocab, d1, d2, rng);
            },
            py::arg("dim"), py::arg("vocab"), py::arg("delta1"), py::arg("delta2"),
            py::arg("seed"))
        .def_readonly("dim", &MinimalInstance::dim)
        .def_readonly("vocab", &MinimalInstance::vocab)
        .def_readonly("target", &MinimalInstance::target);
    m.def("minimal_loss",
          py::overload_cast<const MinimalInstance&, Direction>(&minimal_loss),
          py::arg("instance"), py::arg("direction"));
    m.def("closed_form_blocks", &closed_form_blocks, py::arg("instance"));
    py::class_<CorollaryReport>(m, "CorollaryReport")
        .def_readonly("nonsaturated", &CorollaryReport::nonsaturated)
        .def_readonly("u_aligned", &CorollaryReport::u_aligned)
        .def_readonly("margins_same_sign", &CorollaryReport::margins_same_sign)
        .def_readonly("rope_forms_positive", &CorollaryReport::rope_forms_positive)
        .def_readonly("blocks", &CorollaryReport::blocks)
        .def("all_conditions", &CorollaryReport::all_conditions)
        .def("total_positive", &CorollaryReport::total_positive);
    m.def("corollary_conditions", &corollary_conditions, py::arg("instance"));
    py::class_<TransferReport>(m, "TransferReport")
        .def_readonly("eta", &TransferReport::eta)
        .def_readonly("loss_before", &TransferReport::loss_before)
        .def_readonly("loss_after", &TransferReport::loss_after)
        .def_readonly("decrease", &TransferReport::decrease)
        .def_readonly("predicted_inner", &TransferReport::predicted_inner)
        .def_readonly("ratio", &TransferReport::ratio)
        .def_readonly("decreased", &TransferReport::decreased)
        .def_readonly("first_order_ok", &TransferReport::first_order_ok);
    m.def("first_order_transfer_check", &first_order_transfer_check, py::arg("instance"),
          py::arg("eta0") = 1e-3);

    // ---- data ------------------------------------------------------------------
    py::class_<SequenceSample>(m, "SequenceSample")
        .def_readonly("tokens", &SequenceSample::tokens)
        .def_readonly("lower_pos", &SequenceSample::lower_pos)
        .def_readonly("upper_pos", &SequenceSample::upper_pos)
        .def_readonly("letter", &SequenceSample::letter);
    m.def("gen_forward_corpus", &gen_forward_corpus, py::arg("length"));
    m.def("make_query", &make_query, py::arg("length"), py::arg("direction"),
          py::arg("letter"), py::arg("arch"));
    m.attr("VOCAB_SIZE") = Vocab::size;
    m.attr("MASK_TOKEN") = Vocab::mask;
    m.attr("PAD_TOKEN") = Vocab::pad;

    // ---- experiments -------------------------------------------------------------
    py::class_<TrainRun>(m, "TrainRun")
        .def_readonly("dir", &TrainRun::dir)
        .def_readonly("length", &TrainRun::length)
        .def_readonly("final_path", &TrainRun::final_path)
        .def_readonly("ema_path", &TrainRun::ema_path)
        .def("eval_params_path", &TrainRun::eval_params_path);
    m.def(
        "train",
        [](const std::string& arch, const std::string& block, int length, int steps, int batch,
           uint64_t seed, const std::string& out_dir, double dropout, int dim) {
            ModelConfig cfg;
            cfg.arch = arch_from_string(arch);
            cfg.block = block_from_string(block);
            cfg.dim = dim;
            cfg.vocab = Vocab::size;
            cfg.max_len = length;
            cfg.dropout = dropout;
            TrainOptions opts;
            opts.steps = steps;
            opts.batch_size = batch;
            opts.seed = seed;
            opts.out_dir = out_dir;
            opts.snapshot_every = 100;
            return train(cfg, length, gen_forward_corpus(length), opts);
        },
        py::arg("arch"), py::arg("block"), py::arg("length"), py::arg("steps"),
        py::arg("batch"), py::arg("seed"), py::arg("out_dir"), py::arg("dropout") = 0.02,
        py::arg("dim") = 256, py::call_guard<py::gil_scoped_release>());
    m.def("load_run", &load_run, py::arg("dir"));
    m.def(
        "evaluate_accuracy",
        [](const TrainRun& run, Direction dir, int top_k, int n_trials, uint64_t seed,
           bool iterative) {
            const ModelParams params = load_checkpoint(run.eval_params_path());
            EvalOptions opts;
            opts.top_k = top_k;
            opts.n_trials = n_trials;
            opts.seed = seed;
            opts.iterative = iterative;
            return evaluate_accuracy(params, run.length, dir, opts);
        },
        py::arg("run"), py::arg("direction"), py::arg("top_k") = 3, py::arg("n_trials") = 100,
        py::arg("seed") = 0, py::arg("iterative") = false,
        py::call_guard<py::gil_scoped_release>());
    m.def(
        "attention_correlation_buckets",
        [](const TrainRun& run) {
            const ModelParams params = load_checkpoint(run.eval_params_path());
            return correlation_bucket_means(attention_correlation(params, run.length));
        },
        py::arg("run"), py::call_guard<py::gil_scoped_release>());
    py::class_<GradAlignRecord>(m, "GradAlignRecord")
        .def_readonly("step", &GradAlignRecord::step)
        .def_readonly("cosine", &GradAlignRecord::cosine)
        .def_readonly("inner_product", &GradAlignRecord::inner_product)
        .def_readonly("p_fwd_truth", &GradAlignRecord::p_fwd_truth)
        .def_readonly("p_rev_truth", &GradAlignRecord::p_rev_truth);
    m.def("gradient_alignment_track", &gradient_alignment_track, py::arg("run"),
          py::call_guard<py::gil_scoped_release>());
    py::class_<ProbPoint>(m, "ProbPoint")
        .def_readonly("step", &ProbPoint::step)
        .def_readonly("p_fwd", &ProbPoint::p_fwd)
        .def_readonly("p_rev", &ProbPoint::p_rev);
    m.def("probability_transfer_track", &probability_transfer_track, py::arg("run"),
          py::call_guard<py::gil_scoped_release>());

    // ---- verification --------------------------------------------------------
    py::class_<CriterionResult>(m, "CriterionResult")
        .def_readonly("id", &CriterionResult::id)
        .def_readonly("name", &CriterionResult::name)
        .def_readonly("passed", &CriterionResult::passed)
        .def_readonly("skipped", &CriterionResult::skipped)
        .def_readonly("detail", &CriterionResult::detail);
    m.def(
        "verify",
        [](bool fast, const std::vector<int>& criteria, const std::string& work_dir) {
            return run_verification(fast ? VerifyProfile::fast : VerifyProfile::full, criteria,
                                    work_dir);
        },
        py::arg("fast") = true, py::arg("criteria") = std::vector<int>{},
        py::arg("work_dir") = "verify_work", py::call_guard<py::gil_scoped_release>());
}
