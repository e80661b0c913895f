"""Delimited report files, difference series and figure rendering."""

import json

import numpy as np
import pytest

from cdtrain import (
    DatasetSpec,
    ExperimentPlan,
    SyntheticSource,
    run_plan,
)
from cdtrain.network import NetworkSpec
from cdtrain.reports import (
    TRACE_COLUMNS,
    emit_reports,
    loss_difference_series,
    render_summary_table,
    sample_evolution_rows,
    trace_rows,
)

ALPHA_OK = 0.05
ALPHA_DIV = 50.0


@pytest.fixture(scope="module")
def result():
    # Single affine layer on 4 train samples: above the stability bound the
    # open-loop dynamics are exactly linear, so gd divergence is certain.
    plan = ExperimentPlan(
        dataset=DatasetSpec(
            source=SyntheticSource(
                kind="linear", n_samples=40, n_features=4, noise_std=0.05, seed=0
            ),
            subsample=16,
            normalize=True,
            split_train_fraction=0.25,
            seed=0,
        ),
        architectures=[NetworkSpec(input_dim=4, output_dim=1, hidden_widths=())],
        alphas=[ALPHA_OK, ALPHA_DIV],
        methods=("gd", "cdt"),
        n_seeds=2,
        steps=20,
        loss="mse",
        q_weight=1.0,
        p=0.1,
        decay_coeff=0.01,
        master_seed=11,
        dare_tol=1e-9,
        dare_max_iters=200000,
        out_dir="unused",
    )
    res = run_plan(plan)
    assert all(r.error is None for r in res.runs)
    assert all(r.diverged for r in res.runs if r.method == "gd" and r.alpha == ALPHA_DIV)
    assert not any(r.diverged for r in res.runs if r.method == "cdt")
    return res


def pick(result, alpha, method, seed_index):
    for r in result.runs:
        if r.alpha == alpha and r.method == method and r.seed_index == seed_index:
            return r
    raise AssertionError("run not found")


def test_trace_rows_converged(result):
    rec = pick(result, ALPHA_OK, "gd", 0)
    rows = trace_rows(rec)
    assert len(rows) == 21
    assert [r["step"] for r in rows] == list(range(21))
    for k, row in enumerate(rows):
        assert row["method"] == "gd"
        assert row["alpha0"] == ALPHA_OK
        assert row["seed"] == 0
        assert row["train_loss"] == rec.trace.train_loss[k]
        assert row["val_loss"] == rec.trace.val_loss[k]
        assert row["yu_norm"] == 0.0
        assert row["diverged"] == 0


def test_trace_rows_divergence_marker(result):
    rec = pick(result, ALPHA_DIV, "gd", 0)
    rows = trace_rows(rec)
    assert len(rows) == rec.trace.diverged_at + 1
    assert [r["diverged"] for r in rows] == [0] * (len(rows) - 1) + [1]


def test_loss_difference_series_converged(result):
    steps, values, marker = loss_difference_series(result, 0, ALPHA_OK)
    assert marker == ""
    assert list(steps) == list(range(21))
    expected = np.zeros(21)
    for s in (0, 1):
        gd = pick(result, ALPHA_OK, "gd", s).trace
        cdt = pick(result, ALPHA_OK, "cdt", s).trace
        expected += gd.val_loss - cdt.val_loss
    expected /= 2
    assert np.allclose(values, expected, rtol=1e-14)


def test_loss_difference_series_stops_at_first_divergence(result):
    first = min(
        r.trace.diverged_at for r in result.runs if r.alpha == ALPHA_DIV and r.method == "gd"
    )
    steps, values, marker = loss_difference_series(result, 0, ALPHA_DIV)
    assert marker == "gd_diverged"
    assert steps[-1] == first
    assert values.shape == (first + 1,)
    assert np.all(np.isfinite(values))


def test_loss_difference_series_missing_pairing(result):
    assert loss_difference_series(result, 0, 999.0) is None


def test_sample_evolution_rows_values(result):
    rows = sample_evolution_rows(result, 0, ALPHA_OK, 0, 4)
    gd = pick(result, ALPHA_OK, "gd", 0)
    cdt = pick(result, ALPHA_OK, "cdt", 0)
    assert len(rows) == 21 * 4
    for row in rows:
        k, i = row["step"], row["sample"]
        assert row["y_true"] == gd.targets[i]
        assert row["yhat_gd"] == gd.trace.snapshots[k][i]
        assert row["yhat_cdt"] == cdt.trace.snapshots[k][i]
        assert row["ybar_cdt"] == gd.targets[i] + cdt.trace.yu_snapshots[k][i]


def test_sample_evolution_count_clamped_to_batch(result):
    rows = sample_evolution_rows(result, 0, ALPHA_OK, 0, 100)
    assert {r["sample"] for r in rows} == {0, 1, 2, 3}


def test_sample_evolution_truncates_to_common_steps(result):
    div_at = pick(result, ALPHA_DIV, "gd", 0).trace.diverged_at
    rows = sample_evolution_rows(result, 0, ALPHA_DIV, 0, 2)
    assert {r["step"] for r in rows} == set(range(div_at + 1))


def test_sample_evolution_missing_run(result):
    assert sample_evolution_rows(result, 0, ALPHA_OK, 7, 4) == []


def test_render_summary_table(result):
    text = render_summary_table(result)
    assert "architecture 4-1 (mse loss, 2 seeds)" in text
    assert "Final val loss" in text
    assert "inf +- inf" in text
    lines = text.splitlines()
    assert any(set(line) == {"-"} for line in lines)
    # one line per summary row plus title, header and separator
    assert len([l for l in lines if l]) == len(result.summary) + 3


EXPECTED_CSV = {
    "summary.csv",
    "summary.txt",
    "traces_all.csv",
    "run_4-1_a0.05_gd_s0.csv",
    "run_4-1_a0.05_cdt_s0.csv",
    "run_4-1_a0.05_gd_s1.csv",
    "run_4-1_a0.05_cdt_s1.csv",
    "run_4-1_a50_gd_s0.csv",
    "run_4-1_a50_cdt_s0.csv",
    "run_4-1_a50_gd_s1.csv",
    "run_4-1_a50_cdt_s1.csv",
    "loss_diff_4-1_a0.05.csv",
    "loss_diff_4-1_a50.csv",
    "samples_4-1_a0.05_s0.csv",
    "samples_4-1_a50_s0.csv",
}


def test_emit_reports_csv_inventory(result, tmp_path):
    written = emit_reports(result, tmp_path, fmt="csv", figures=False)
    assert {p.name for p in written} == EXPECTED_CSV
    for p in written:
        assert p.parent == tmp_path
        assert p.stat().st_size > 0


def test_emit_reports_csv_contents(result, tmp_path):
    emit_reports(result, tmp_path, fmt="csv", figures=False)

    summary = (tmp_path / "summary.csv").read_text().splitlines()
    assert summary[0].split(",")[:3] == ["arch", "alpha", "method"]
    assert len(summary) == 1 + len(result.summary)

    run = (tmp_path / "run_4-1_a0.05_gd_s0.csv").read_text().splitlines()
    assert run[0] == ",".join(TRACE_COLUMNS)
    assert len(run) == 1 + 21
    first = run[1].split(",")
    assert first[:4] == ["0", "gd", "0.050000000000000003", "0"]

    merged = (tmp_path / "traces_all.csv").read_text().splitlines()
    per_run = sum(r.trace.train_loss.shape[0] for r in result.runs)
    assert len(merged) == 1 + per_run
    assert merged[0].startswith("arch,step,")

    diff = (tmp_path / "loss_diff_4-1_a50.csv").read_text().splitlines()
    assert diff[0] == "step,loss_diff_mean,marker"
    assert diff[-1].endswith(",gd_diverged")
    assert all(line.endswith(",") for line in diff[1:-1])


def test_emit_reports_json_lines(result, tmp_path):
    written = emit_reports(result, tmp_path, fmt="json-lines", figures=False)
    expected = {n[:-4] + ".jsonl" if n.endswith(".csv") else n for n in EXPECTED_CSV}
    assert {p.name for p in written} == expected
    with (tmp_path / "run_4-1_a50_gd_s0.jsonl").open() as fh:
        rows = [json.loads(line) for line in fh]
    assert all(list(r) == list(TRACE_COLUMNS) for r in rows)
    assert rows[-1]["diverged"] == 1
    assert rows[0]["train_loss"] == pick(result, ALPHA_DIV, "gd", 0).trace.train_loss[0]


def test_emit_reports_rejects_unknown_format(result, tmp_path):
    with pytest.raises(ValueError, match="unknown format"):
        emit_reports(result, tmp_path, fmt="tsv", figures=False)


def test_emit_reports_byte_deterministic(result, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    emit_reports(result, a, fmt="csv", figures=False)
    emit_reports(result, b, fmt="csv", figures=False)
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    for name in names:
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_emit_reports_renders_figures(result, tmp_path):
    written = emit_reports(result, tmp_path, fmt="csv", figures=True)
    pngs = {p.name for p in written if p.suffix == ".png"}
    assert pngs == {
        "fig_loss_diff_4-1.png",
        "fig_samples_4-1_a0.05_s0.png",
        "fig_samples_4-1_a50_s0.png",
        "fig_val_loss_4-1.png",
    }
    for p in written:
        assert p.stat().st_size > 0
