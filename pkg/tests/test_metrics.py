import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from metric_oracles import auroc_pairwise, auroc_trapezoid, average_precision_bruteforce, random_scores
from radar_ood.metrics import DegenerateDataError, aupr, auroc, evaluate, format_table, metric_row
from radar_ood.radar_sim import SceneLabel
from radar_ood.scoring import ScoreRecord

score_lists = st.lists(st.integers(-5, 5).map(float), min_size=1, max_size=30)


class TestAuroc:
    def test_examples(self):
        assert auroc([0.1, 0.2], [0.3, 0.4]) == 1.0
        assert auroc([1, 3], [2, 4]) == 0.75
        assert auroc([2.0] * 5, [2.0] * 3) == 0.5
        assert auroc([0.3, 0.4], [0.1, 0.2]) == 0.0

    def test_oracles(self):
        rng = np.random.default_rng(0)
        for k in range(100):
            a, b = random_scores(rng, int(rng.integers(1, 30)), int(rng.integers(1, 30)), tie_levels=6 if k % 2 else None)
            assert abs(auroc(a, b) - auroc_pairwise(a, b)) <= 1e-12
            assert abs(auroc(a, b) - auroc_trapezoid(a, b)) <= 1e-9

    def test_empty(self):
        with pytest.raises(DegenerateDataError):
            auroc([], [1.0])
        with pytest.raises(DegenerateDataError):
            auroc([1.0], [])

    @settings(max_examples=100, deadline=None)
    @given(a=score_lists, b=score_lists)
    def test_symmetry(self, a, b):
        assert auroc(a, b) == pytest.approx(1.0 - auroc(b, a), abs=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(a=score_lists, b=score_lists)
    def test_monotone_invariance(self, a, b):
        f = lambda v: np.exp(np.asarray(v) / 3.0) * 7 - 2  # noqa: E731
        assert auroc(f(a), f(b)) == pytest.approx(auroc(a, b), abs=1e-12)


class TestAupr:
    def test_examples(self):
        assert aupr([3.0, 4.0], [1.0, 2.0]) == 1.0
        assert aupr([2.0], [1.0, 3.0]) == 0.5

    def test_oracle(self):
        rng = np.random.default_rng(1)
        for k in range(100):
            a, b = random_scores(rng, 10, 10, tie_levels=5 if k % 3 == 0 else None)
            assert abs(aupr(b, a) - average_precision_bruteforce(b, a)) <= 1e-9
            assert abs(aupr(-a, -b) - average_precision_bruteforce(-a, -b)) <= 1e-9

    @settings(max_examples=50, deadline=None)
    @given(n_pos=st.integers(1, 20), n_neg=st.integers(1, 20), c=st.floats(-5, 5))
    def test_constant_scores_prevalence(self, n_pos, n_neg, c):
        assert aupr([c] * n_pos, [c] * n_neg) == pytest.approx(n_pos / (n_pos + n_neg), abs=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(pos=score_lists, neg=score_lists)
    def test_in_unit_interval(self, pos, neg):
        v = aupr(pos, neg)
        assert 0.0 <= v <= 1.0

    def test_empty(self):
        with pytest.raises(DegenerateDataError):
            aupr([], [1.0])


def records(id_scores, ood_scores):
    out = [ScoreRecord(i, SceneLabel.ID_WALK, s, 10 * s) for i, s in enumerate(id_scores)]
    labels = [SceneLabel.OOD_FAN, SceneLabel.OOD_TOY_CAR, SceneLabel.OOD_PENDULUM, SceneLabel.OOD_ROBOT_VACUUM]
    out += [ScoreRecord(len(out) + i, labels[i % 4], s, 10 * s) for i, s in enumerate(ood_scores)]
    return out


class TestEvaluate:
    def test_perfect(self):
        rep = evaluate(records([0.1, 0.2], [0.5, 0.9]), baseline=records([0.1], [0.2]))
        assert list(rep.rows) == ["PB-REC", "PB-LSE", "Baseline-REC"]
        for row in rep.rows.values():
            assert (row.auroc, row.aupr_in, row.aupr_out) == (1.0, 1.0, 1.0)
        table = format_table(rep)
        assert table.count("100.00") == 9

    def test_orientation(self):
        rng = np.random.default_rng(2)
        a, b = random_scores(rng, 40, 50)
        row = metric_row(a, b)
        assert row.auroc == auroc(a, b)
        assert row.aupr_out == aupr(b, a)
        assert row.aupr_in == aupr(-a, -b)

    def test_order_invariant(self):
        rng = np.random.default_rng(3)
        recs = records(*random_scores(rng, 30, 36, tie_levels=4))
        perm = [recs[i] for i in rng.permutation(len(recs))]
        assert evaluate(recs).to_dict() == evaluate(perm).to_dict()

    def test_counts(self):
        rng = np.random.default_rng(4)
        rep = evaluate(records(*random_scores(rng, 500, 600)), dataset_seed=0, weight_digest="abc")
        assert (rep.n_id, rep.n_ood) == (500, 600)
        d = json.loads(json.dumps(rep.to_dict()))
        assert d["n_id"] == 500 and d["weight_digest"] == "abc"
        assert set(d["metrics"]["PB-LSE"]) == {"auroc", "aupr_in", "aupr_out"}

    def test_single_class(self):
        with pytest.raises(DegenerateDataError):
            evaluate(records([0.1, 0.2], []))
        with pytest.raises(DegenerateDataError):
            evaluate(records([], [0.1]))

    def test_table_layout(self):
        rep = evaluate(records([0.0, 1.0], [0.5, 2.0]))
        lines = format_table(rep).splitlines()
        assert lines[0].split() == ["Method", "AUROC", "AUPR_IN", "AUPR_OUT"]
        assert lines[2].split()[0] == "PB-REC"
        assert lines[2].split()[1] == "75.00"
