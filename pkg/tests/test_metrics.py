import math
import time
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lim.metrics import (
    NOT_APPLICABLE,
    ClassTooSmall,
    EmptyTestSet,
    PeakRSS,
    UnknownLabel,
    balanced_subsample,
    benchmark_inference,
    confusion_matrix,
    evaluate,
    evaluate_predictions,
    measure_resources,
    report_from_confusion,
    stratified_split,
)

LABELS10 = [f"c{k}" for k in range(10)]


def test_always_class_zero_predictor():
    y_true = [lab for lab in LABELS10 for _ in range(10)]
    rep = evaluate_predictions(y_true, ["c0"] * 100, LABELS10)
    assert rep.accuracy == pytest.approx(0.1)
    assert rep.macro_recall == pytest.approx(0.1)
    # class 0: precision 10/100, everyone else predicted nothing -> 0
    assert rep.macro_precision == pytest.approx(0.01)
    f1_c0 = 2 * 0.1 * 1.0 / 1.1
    assert rep.macro_f1 == pytest.approx(f1_c0 / 10)


def test_perfect_predictor():
    y = [lab for lab in LABELS10 for _ in range(3)]
    rep = evaluate_predictions(y, y, LABELS10)
    assert (rep.accuracy, rep.macro_precision, rep.macro_recall, rep.macro_f1) == (1.0, 1.0, 1.0, 1.0)


def test_two_class_confusion_closed_form():
    rep = report_from_confusion(np.array([[3, 1], [2, 4]]), ["a", "b"])
    assert rep.accuracy == pytest.approx(0.7)
    assert [c.precision for c in rep.per_class] == pytest.approx([0.6, 0.8])
    assert [c.recall for c in rep.per_class] == pytest.approx([0.75, 2 / 3])
    f1 = [2 * Fraction(3, 5) * Fraction(3, 4) / (Fraction(3, 5) + Fraction(3, 4)),
          2 * Fraction(4, 5) * Fraction(2, 3) / (Fraction(4, 5) + Fraction(2, 3))]
    assert rep.macro_f1 == pytest.approx(float(sum(f1) / 2), abs=1e-12)
    assert rep.confusion == [[3, 1], [2, 4]]


def test_eval_via_predictions_matches_confusion():
    y_true = ["a"] * 4 + ["b"] * 6
    y_pred = ["a", "a", "a", "b", "a", "a", "b", "b", "b", "b"]
    rep = evaluate_predictions(y_true, y_pred, ["a", "b"])
    assert rep.confusion == [[3, 1], [2, 4]]


def test_evaluate_errors():
    class Stub:
        label_map = ["a", "b"]

        def predict(self, X):
            return ["a"] * len(X)

    with pytest.raises(UnknownLabel):
        evaluate(Stub(), np.zeros((1, 15)), ["zzz"])
    with pytest.raises(EmptyTestSet):
        evaluate(Stub(), np.zeros((0, 15)), [])
    rep = evaluate(Stub(), np.zeros((2, 15)), ["a", "b"])
    assert rep.accuracy == 0.5 and rep.per_class[1].f1 == 0.0


confusions = st.integers(2, 6).flatmap(
    lambda k: st.lists(st.lists(st.integers(0, 30), min_size=k, max_size=k), min_size=k, max_size=k)
).filter(lambda m: sum(map(sum, m)) > 0)


@settings(max_examples=100, deadline=None)
@given(confusions)
def test_micro_recall_is_accuracy(cm):
    cm = np.array(cm)
    rep = report_from_confusion(cm, [str(i) for i in range(len(cm))])
    micro_recall = np.trace(cm) / cm.sum()
    assert rep.accuracy == pytest.approx(micro_recall)
    assert sum(map(sum, rep.confusion)) == cm.sum()
    for value in (rep.macro_precision, rep.macro_recall, rep.macro_f1):
        assert 0.0 <= value <= 1.0 and math.isfinite(value)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 8), st.integers(2, 5))
def test_balanced_supports_macro_recall_equals_accuracy(per_class, k):
    rng = np.random.default_rng(per_class * 10 + k)
    labels = [str(i) for i in range(k)]
    y_true = [lab for lab in labels for _ in range(per_class)]
    y_pred = [labels[i] for i in rng.integers(0, k, len(y_true))]
    rep = evaluate_predictions(y_true, y_pred, labels)
    assert rep.macro_recall == pytest.approx(rep.accuracy)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_permuting_test_order_changes_nothing(seed):
    rng = np.random.default_rng(seed)
    labels = ["x", "y", "z"]
    y_true = [labels[i] for i in rng.integers(0, 3, 40)]
    y_pred = [labels[i] for i in rng.integers(0, 3, 40)]
    perm = rng.permutation(40)
    a = evaluate_predictions(y_true, y_pred, labels)
    b = evaluate_predictions([y_true[i] for i in perm], [y_pred[i] for i in perm], labels)
    assert a.to_dict() == b.to_dict()


def test_confusion_matrix_counts():
    cm = confusion_matrix([0, 0, 1, 2], [0, 1, 1, 0], 3)
    assert cm.tolist() == [[1, 1, 0], [0, 1, 0], [1, 0, 0]]


def test_split_sizes_per_class():
    y = [lab for lab in LABELS10 for _ in range(400)]
    train, test = stratified_split(y, 0.8, seed=42)
    assert len(set(train) & set(test)) == 0
    for lab in LABELS10:
        assert sum(y[i] == lab for i in train) == 320
        assert sum(y[i] == lab for i in test) == 80


def test_split_half_of_two():
    y = ["a", "a", "b", "b"]
    train, test = stratified_split(y, 0.5, seed=1)
    assert sorted(y[i] for i in train) == ["a", "b"]
    assert sorted(y[i] for i in test) == ["a", "b"]


def test_split_deterministic_and_seed_sensitive():
    y = [lab for lab in "abc" for _ in range(50)]
    a = stratified_split(y, 0.8, seed=42)
    b = stratified_split(y, 0.8, seed=42)
    c = stratified_split(y, 0.8, seed=43)
    assert all(np.array_equal(u, v) for u, v in zip(a, b))
    assert not np.array_equal(a[0], c[0])


def test_split_errors():
    with pytest.raises(ClassTooSmall):
        stratified_split(["a", "a", "b"], 0.5)
    with pytest.raises(ValueError):
        stratified_split(["a", "a"], 1.0)


def test_balanced_subsample():
    y = ["a"] * 10 + ["b"] * 3 + ["c"] * 7 + ["d"] * 5
    idx = balanced_subsample(y, per_class=5, n_classes=2, seed=3)
    picked = [y[i] for i in idx]
    assert len(idx) == 10 and len(set(idx)) == 10
    assert set(picked) <= {"a", "c", "d"} and len(set(picked)) == 2
    with pytest.raises(ClassTooSmall):
        balanced_subsample(y, per_class=8, n_classes=2)


def test_latency_definition_with_sleep():
    rep = measure_resources(lambda: time.sleep(1.0), None, train_count=1000)
    assert rep.train_latency_s_per_sample == pytest.approx(0.001, abs=0.1)
    assert rep.train_latency_s_per_sample >= 0.001
    assert rep.energy_watts == NOT_APPLICABLE


def test_throughput_definition():
    rep = measure_resources(None, lambda: time.sleep(0.05), infer_count=10_000)
    assert rep.inference_throughput_samples_per_s == pytest.approx(10_000 / rep.inference_seconds, rel=1e-3)
    assert rep.inference_throughput_samples_per_s < 10_000 / 0.05


def test_counts_must_be_positive():
    with pytest.raises(ValueError):
        measure_resources(lambda: None, None, train_count=0)
    with pytest.raises(ValueError):
        benchmark_inference(lambda: None, 10, repeat=0)


def test_peak_memory_sees_allocation():
    with PeakRSS() as before:
        pass
    with PeakRSS() as during:
        block = np.ones(64 * 2**20 // 8)
        time.sleep(0.05)
        del block
    assert isinstance(during.peak_mib, float)
    assert during.peak_mib >= before.peak_mib + 32


def test_memory_sampling_failure_degrades(monkeypatch):
    class Broken:
        def memory_info(self):
            raise OSError("no /proc")

    mem = PeakRSS()
    mem._proc = Broken()
    with mem:
        pass
    assert mem.peak_mib == "unavailable"


def test_benchmark_reports_median():
    rep = benchmark_inference(lambda: time.sleep(0.01), 100, repeat=3)
    assert rep.extra["repeat"] == 3 and len(rep.extra["throughput_runs"]) == 3
    assert rep.inference_throughput_samples_per_s == sorted(rep.extra["throughput_runs"])[1]
