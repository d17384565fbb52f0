"""Smoke tests for the python surface of the laboratory."""

import math
import tempfile

import pytest

import revlab


def test_cantelli_anchors():
    row = revlab.cantelli_row(m=128, delta=20, c=0.30)
    assert abs(row.bound - 0.938) <= 0.001
    row = revlab.cantelli_row(m=64, delta=10, c=0.05)
    assert abs(row.bound - 0.981) <= 0.001


def test_cantelli_table_shape():
    rows = revlab.cantelli_table([64, 128], [10, 20, 30, 40, 50],
                                 [0.05, 0.10, 0.15, 0.20, 0.25, 0.30])
    assert len(rows) == 60
    assert all(0.0 <= r.bound < 1.0 for r in rows)


def test_trace_ratio_vs_integral():
    for delta in (1, 20, 100):
        tr = revlab.trace_ratio(256, delta)
        ci = revlab.ci_integral(256, delta)
        assert ci >= 0.435
        assert abs(tr - ci) <= 0.05


def test_cosine_integral_decays():
    assert abs(revlab.cosine_integral(1e4)) <= 2e-4
    assert abs(revlab.cosine_integral(1.0) - 0.3374039229) <= 1e-8


def test_rotation_preserves_norm():
    x = [1.0, 2.0, 3.0, 4.0]
    y = revlab.apply_rotation(4, 17, x)
    assert math.isclose(sum(v * v for v in x), sum(v * v for v in y), rel_tol=1e-12)


def test_expected_corr_bound():
    model = revlab.AlignmentModel.random(64, 20, seed=5)
    report = revlab.expected_corr_bound_check(model, 2000, seed=6)
    assert report.holds()


def test_minimal_blocks_and_transfer():
    inst = revlab.MinimalInstance.random(16, 8, 2, 3, seed=9)
    blocks = revlab.closed_form_blocks(inst)
    report = revlab.corollary_conditions(inst)
    if report.all_conditions():
        assert blocks.total() > 0.0
    if blocks.total() > 0.0:
        transfer = revlab.first_order_transfer_check(inst)
        assert transfer.decreased


def test_corpus_is_forward_only():
    corpus = revlab.gen_forward_corpus(4)
    assert len(corpus) == 26 * 6
    assert all(s.lower_pos < s.upper_pos for s in corpus)


def test_tiny_training_smoke():
    with tempfile.TemporaryDirectory() as tmp:
        run = revlab.train("mdm", "attn_only", length=3, steps=40, batch=16, seed=1,
                           out_dir=tmp, dim=32)
        acc = revlab.evaluate_accuracy(run, revlab.Direction.fwd, n_trials=10, seed=2)
        assert 0.0 <= acc <= 100.0
        reloaded = revlab.load_run(tmp)
        assert reloaded.length == 3


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
