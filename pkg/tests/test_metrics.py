import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.metrics import f1_score

from marktpp.events import EventSequence
from marktpp.likelihood import NLLBreakdown, dataset_nll
from marktpp.metrics import (
    REPORT_FIELDS,
    EvalReport,
    assemble_report,
    evaluate,
    expected_waiting_time,
    micro_f1,
    per_class_f1,
    weighted_f1,
)

from conftest import KINDS, random_sequence, set_constant_cp, tiny_model

label_pairs = st.integers(1, 60).flatmap(
    lambda n: st.tuples(
        st.lists(st.integers(0, 3), min_size=n, max_size=n), st.lists(st.integers(0, 3), min_size=n, max_size=n)
    )
)


class TestF1:
    def test_perfect(self):
        y = [0, 2, 1, 1, 2]
        assert micro_f1(y, y) == 100.0
        assert weighted_f1(y, y) == 100.0

    def test_three_of_four(self):
        assert micro_f1([0, 0, 1, 1], [0, 1, 1, 1]) == pytest.approx(75.0)

    def test_weighted_hand_value(self):
        assert weighted_f1([0, 0, 0, 1], [0, 0, 0, 0], 2) == pytest.approx(0.75 * 6 / 7 * 100)
        assert weighted_f1([0, 0, 0, 1], [0, 0, 0, 0], 2) == pytest.approx(64.29, abs=0.01)

    def test_zero_division_is_zero(self):
        f1, support = per_class_f1([0, 0], [0, 0], 3)
        np.testing.assert_array_equal(f1, [1.0, 0.0, 0.0])
        np.testing.assert_array_equal(support, [2, 0, 0])

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            micro_f1([0, 1], [0])
        with pytest.raises(ValueError, match="mismatch"):
            weighted_f1([0, 1], [0, 1, 1])

    @given(label_pairs)
    @settings(max_examples=100, deadline=None)
    def test_matches_sklearn(self, pair):
        y, p = pair
        assert micro_f1(y, p) == pytest.approx(100 * f1_score(y, p, average="micro"), abs=1e-9)
        ref = f1_score(y, p, average="weighted", labels=list(range(4)), zero_division=0)
        assert weighted_f1(y, p, 4) == pytest.approx(100 * ref, abs=1e-9)

    @given(label_pairs, st.randoms(use_true_random=False))
    @settings(max_examples=50, deadline=None)
    def test_permutation_invariance(self, pair, rnd):
        y, p = pair
        order = list(range(len(y)))
        rnd.shuffle(order)
        ys, ps = [y[i] for i in order], [p[i] for i in order]
        assert micro_f1(ys, ps) == micro_f1(y, p)
        assert weighted_f1(ys, ps, 4) == pytest.approx(weighted_f1(y, p, 4), abs=1e-12)

    @given(label_pairs)
    @settings(max_examples=50, deadline=None)
    def test_bounds_and_micro_is_accuracy(self, pair):
        y, p = pair
        assert 0.0 <= weighted_f1(y, p, 4) <= 100.0
        assert micro_f1(y, p) == pytest.approx(100.0 * np.mean(np.array(y) == np.array(p)))

    def test_symmetric_uniform_confusion(self):
        # each class has equal support and the confusion matrix is symmetric
        y = [0, 0, 0, 1, 1, 1, 2, 2, 2]
        p = [0, 0, 1, 1, 1, 0, 2, 2, 2]
        assert micro_f1(y, p) == pytest.approx(weighted_f1(y, p, 3))


def breakdown():
    return NLLBreakdown(
        total=30.0, time_nll=20.0, mark_nll=10.0, num_events=12, total_time=15.0,
        per_sequence=[10.0, 12.0, 8.0], per_sequence_time=[7.0, 8.0, 5.0], per_sequence_mark=[3.0, 4.0, 3.0],
    )


class TestReport:
    def test_round_trip(self):
        rep = assemble_report(breakdown(), {"micro_f1": 50.0, "weighted_f1": 40.0},
                              {"split": "test", "model": "lnm_dep", "config_hash": "abc"})
        back = EvalReport.from_dict(json.loads(rep.to_json()))
        assert back == rep
        for f in REPORT_FIELDS:
            assert f in rep.to_dict()

    def test_nll_per_time(self):
        rep = assemble_report(breakdown(), {"micro_f1": 1.0, "weighted_f1": 1.0},
                              {"split": "val", "model": "cp", "config_hash": ""})
        assert rep.nll_per_time == pytest.approx(rep.total_nll / 15.0, abs=1e-9)
        assert rep.mean_total_nll == pytest.approx(10.0)

    def test_missing_fields(self):
        with pytest.raises(ValueError, match="weighted_f1"):
            assemble_report(breakdown(), {"micro_f1": 1.0}, {"split": "t", "model": "cp", "config_hash": ""})
        with pytest.raises(ValueError, match="config_hash"):
            assemble_report(breakdown(), {"micro_f1": 1.0, "weighted_f1": 1.0}, {"split": "t", "model": "cp"})
        with pytest.raises(ValueError, match="missing"):
            EvalReport.from_dict({"split": "t"})


class TestEvaluate:
    @pytest.mark.parametrize("kind", KINDS)
    def test_consistent_with_dataset_nll(self, kind, rng):
        model = tiny_model(kind, num_marks=3)
        seqs = [random_sequence(rng, int(n), 3) for n in rng.integers(0, 7, 8)]
        rep = evaluate(model, seqs, "test", "h", batch_size=3)
        bd = dataset_nll(model, seqs)
        assert rep.total_nll == pytest.approx(bd.total, rel=1e-10)
        assert rep.num_events == sum(len(s) for s in seqs)
        assert rep.nll_per_time == pytest.approx(bd.total / sum(s.duration for s in seqs), rel=1e-10)
        assert 0.0 <= rep.weighted_f1 <= 100.0

    def test_poisson_predicts_largest_rate(self, rng):
        model = tiny_model("cp", num_marks=3)
        set_constant_cp(model, [0.2, 1.0, 0.5])
        seq = EventSequence([0.5, 1.0, 2.0, 3.0], [1, 1, 0, 2], 0.0, 4.0)
        rep = evaluate(model, [seq])
        assert rep.micro_f1 == pytest.approx(50.0)

    def test_deterministic(self, rng):
        model = tiny_model("rmtpp_dep", num_marks=2, compensator="mc", mc_samples=50)
        seqs = [random_sequence(rng, 5) for _ in range(4)]
        a = evaluate(model, seqs, mc_seed=3).to_json()
        b = evaluate(model, seqs, mc_seed=3).to_json()
        assert a == b

    def test_sampled_mean_mode(self, rng):
        model = tiny_model("lnm_dep", num_marks=2, seed=3)
        seqs = [random_sequence(rng, 4) for _ in range(3)]
        rep = evaluate(model, seqs, predict_at="sampled-mean", mc_seed=0)
        assert rep.total_nll == pytest.approx(evaluate(model, seqs).total_nll, rel=1e-12)
        with pytest.raises(ValueError):
            evaluate(model, seqs, predict_at="median")

    def test_expected_waiting_time(self):
        model = tiny_model("cp", num_marks=2)
        set_constant_cp(model, [0.5, 1.5])
        est = expected_waiting_time(model, np.zeros((1, 3)), 20_000, np.random.default_rng(0))
        assert est[0] == pytest.approx(0.5, rel=0.03)

    def test_empty_sequences_give_nan_f1(self):
        model = tiny_model("lnm", num_marks=2)
        rep = evaluate(model, [EventSequence([], [], 0.0, 3.0)])
        assert math.isnan(rep.micro_f1) and rep.num_events == 0
