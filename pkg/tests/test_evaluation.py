from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from causalda.evaluation import (
    AGGREGATE_FIELDS,
    TRIAL_FIELDS,
    EvalConfig,
    TrialRecord,
    aggregate,
    cer,
    ncer,
    read_aggregate,
    read_trials,
    write_aggregate,
    write_trials,
)
from causalda.sem import SemSpec, sample_hard_do

finite = st.floats(-5, 5, allow_nan=False, allow_infinity=False)


def rec(value, method="ERM", trial=0, **coords):
    base = {"kappa": 1.0, "gamma": 1.0, "alpha": 1.0, "n": 100, "seed": trial}
    base.update(coords)
    return TrialRecord(base, method, value, value, trial)


def test_cer_examples():
    f = np.array([1.0, 2.0])
    assert cer(f, EvalConfig(f)) == 0.0
    assert cer([1.5], EvalConfig([1.0])) == pytest.approx(0.25)
    w = EvalConfig([0.0, 0.0], "weighted_by_cov_x", np.diag([1.0, 2.0]))
    assert cer([1.0, 1.0], w) == pytest.approx(3.0)


def test_weighted_requires_cov():
    with pytest.raises(ValueError):
        cer([1.0], EvalConfig([0.0], "weighted_by_cov_x"))
    with pytest.raises(ValueError):
        EvalConfig([0.0, 0.0], "weighted_by_cov_x", np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        EvalConfig([0.0], "manhattan")


def test_ncer_examples():
    f = np.array([1.0, -1.0])
    cfg = EvalConfig(f)
    assert ncer(f, np.zeros(2), cfg) == 0.0
    assert ncer([3.0, 3.0], [0.0, 0.0], EvalConfig([0.0, 0.0])) == 1.0
    assert ncer([1.5], [0.0], EvalConfig([1.0])) == pytest.approx(0.2)
    assert ncer([1.0], [1.0], EvalConfig([1.0])) == 0.0


@given(arrays(float, 3, elements=finite), arrays(float, 3, elements=finite),
       arrays(float, 3, elements=finite))
def test_ncer_bounds_and_half_at_null(h, f, h0):
    cfg = EvalConfig(f)
    assert 0.0 <= ncer(h, h0, cfg) <= 1.0
    if cer(h0, cfg) > 0:
        assert ncer(h0, h0, cfg) == pytest.approx(0.5)


@given(arrays(float, 3, elements=finite), arrays(float, 3, elements=finite),
       st.floats(1e-3, 1e3), st.integers(0, 2**31))
def test_ncer_weight_scale_invariance(h, f, c, seed):
    a = np.random.default_rng(seed).standard_normal((3, 3))
    sig = a @ a.T
    one = ncer(h, np.zeros(3), EvalConfig(f, "weighted_by_cov_x", sig))
    two = ncer(h, np.zeros(3), EvalConfig(f, "weighted_by_cov_x", c * sig))
    assert one == pytest.approx(two, rel=1e-9, abs=1e-12)


def test_euclidean_cer_is_causal_risk_gap():
    f = np.array([1.0, -0.5, 2.0])
    spec = SemSpec(np.zeros(3), f, np.zeros((3, 0)), np.ones((3, 2)), [1.0, -1.0], 0.5, 1.0)
    h = np.array([0.7, 0.1, 1.5])
    n = 100_000
    x = np.random.default_rng(0).standard_normal((n, 3))
    data = sample_hard_do(spec, x, 1)
    gap = (data.y - x @ h) ** 2 - (data.y - x @ f) ** 2
    se = gap.std(ddof=1) / np.sqrt(n)
    assert abs(gap.mean() - cer(h, EvalConfig(f))) < 3 * se


def test_aggregate_single_and_constant():
    res = aggregate([rec(0.3)])
    g = res.groups[0]
    assert g.mean_ncer == 0.3 and g.stderr == 0.0 and g.ci_low == g.ci_high == 0.3
    assert g.n_trials == 1
    res = aggregate([rec(0.25, trial=t) for t in range(25)])
    g = res.groups[0]
    assert g.mean_ncer == 0.25 and g.ci_low == 0.25 and g.ci_high == 0.25


def test_aggregate_binary_textbook():
    vals = [0.0] * 12 + [1.0] * 13
    g = aggregate([rec(v, trial=t) for t, v in enumerate(vals)]).groups[0]
    assert g.mean_ncer == pytest.approx(13 / 25)
    assert g.stderr == pytest.approx(np.std(vals, ddof=1) / 5)
    assert g.ci_high - g.mean_ncer == pytest.approx(1.96 * g.stderr)


@given(st.lists(st.floats(0, 1), min_size=2, max_size=30))
def test_duplicate_records(vals):
    recs = [rec(v, trial=t) for t, v in enumerate(vals)]
    a = aggregate(recs).groups[0]
    b = aggregate(recs + recs).groups[0]
    n = len(vals)
    assert b.mean_ncer == pytest.approx(a.mean_ncer, abs=1e-12)
    # ddof=1 makes the shrink factor sqrt((n - 1) / (2n - 1)), which tends to 1/sqrt(2)
    assert b.stderr == pytest.approx(a.stderr * np.sqrt((n - 1) / (2 * n - 1)), abs=1e-12)


def test_aggregate_groups_sorted_and_skips_failures():
    recs = [rec(0.1, "B", kappa=0.5), rec(0.2, "A", kappa=0.5), rec(0.3, "A", kappa=0.0)]
    recs.append(TrialRecord(dict(recs[0].coords), "A", np.nan, np.nan, 1, {"error": "boom"}))
    res = aggregate(recs)
    keys = [g.key for g in res.groups]
    assert keys == sorted(keys)
    assert res.lookup("A", kappa=0.5)[0].n_trials == 1
    xs, means, _ = res.series("A", "kappa")
    np.testing.assert_array_equal(xs, [0.0, 0.5])
    with pytest.raises(ValueError):
        aggregate([])


def test_record_rejects_out_of_range():
    with pytest.raises(ValueError):
        rec(1.5)


@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 10), st.integers(0, 2**63)), min_size=1,
                max_size=10))
def test_trial_csv_round_trip(tmp_path_factory, rows):
    path = tmp_path_factory.mktemp("csv") / "t.csv"
    recs = []
    for i, (v, k, seed) in enumerate(rows):
        extra = {"strategy": "CC", "chosen_alpha": 0.1 * (i + 1), "score": v} if i % 2 else {}
        recs.append(TrialRecord({"kappa": k, "gamma": 1.0, "alpha": 2.0, "n": 5, "seed": seed},
                                "DA_IVL(cc)", v * 3, v, i, extra))
    write_trials(path, recs)
    assert path.read_text().splitlines()[0] == ",".join(TRIAL_FIELDS)
    back = read_trials(path)
    assert back == recs


def test_aggregate_csv_round_trip(tmp_path):
    res = aggregate([rec(v, trial=t, kappa=k) for t, v in enumerate([0.1, 0.4, 0.3])
                     for k in (0.0, 1.0 / 3)])
    path = tmp_path / "a.csv"
    write_aggregate(path, res)
    assert path.read_text().splitlines()[0] == ",".join(AGGREGATE_FIELDS)
    back = read_aggregate(path)
    assert [g.key for g in back.groups] == [g.key for g in res.groups]
    assert [g.stderr for g in back.groups] == [g.stderr for g in res.groups]


def test_read_aggregate_schema_mismatch(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("kappa,method\n1,ERM\n")
    with pytest.raises(ValueError):
        read_aggregate(path)
