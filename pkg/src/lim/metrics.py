"""Classification quality (accuracy, macro P/R/F1) and resource metrics."""

from __future__ import annotations

import statistics
import threading
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

try:
    import psutil
except ImportError:  # pragma: no cover
    psutil = None

NOT_APPLICABLE = "not-applicable"


class UnknownLabel(ValueError):
    pass


class EmptyTestSet(ValueError):
    pass


class ClassTooSmall(ValueError):
    pass


@dataclass
class ClassMetrics:
    label: str
    precision: float
    recall: float
    f1: float
    support: int


@dataclass
class EvalReport:
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    per_class: list[ClassMetrics]
    confusion: list[list[int]]  # rows = true class, columns = predicted
    label_map: list[str]

    def to_dict(self) -> dict:
        return asdict(self)

    def format_table(self) -> str:
        lines = [
            f"{'class':<24}{'precision':>10}{'recall':>10}{'f1':>10}{'support':>9}",
        ]
        for c in self.per_class:
            lines.append(f"{c.label:<24}{c.precision:>10.4f}{c.recall:>10.4f}{c.f1:>10.4f}{c.support:>9d}")
        lines.append("")
        lines.append(f"{'Accuracy':<12}{'Recall':>10}{'Precision':>11}{'F1':>10}")
        lines.append(
            f"{self.accuracy:<12.4f}{self.macro_recall:>10.4f}{self.macro_precision:>11.4f}{self.macro_f1:>10.4f}"
        )
        return "\n".join(lines)


def confusion_matrix(y_true: Sequence[int], y_pred: Sequence[int], n_classes: int) -> np.ndarray:
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(y_true, dtype=np.int64), np.asarray(y_pred, dtype=np.int64)), 1)
    return cm


def report_from_confusion(cm: np.ndarray, label_map: Sequence[str]) -> EvalReport:
    cm = np.asarray(cm, dtype=np.int64)
    total = int(cm.sum())
    if total == 0:
        raise EmptyTestSet("no examples evaluated")
    tp = np.diag(cm).astype(float)
    predicted = cm.sum(axis=0)
    support = cm.sum(axis=1)
    per_class = []
    for k, label in enumerate(label_map):
        p = tp[k] / predicted[k] if predicted[k] else 0.0
        r = tp[k] / support[k] if support[k] else 0.0
        f1 = 2 * p * r / (p + r) if p + r else 0.0
        per_class.append(ClassMetrics(str(label), float(p), float(r), float(f1), int(support[k])))
    return EvalReport(
        accuracy=float(tp.sum() / total),
        macro_precision=float(np.mean([c.precision for c in per_class])),
        macro_recall=float(np.mean([c.recall for c in per_class])),
        macro_f1=float(np.mean([c.f1 for c in per_class])),
        per_class=per_class,
        confusion=cm.tolist(),
        label_map=[str(lab) for lab in label_map],
    )


def evaluate_predictions(y_true: Sequence[str], y_pred: Sequence[str], label_map: Sequence[str]) -> EvalReport:
    if len(y_true) == 0:
        raise EmptyTestSet("test set is empty")
    index = {lab: i for i, lab in enumerate(label_map)}
    unknown = sorted(set(y_true) - index.keys())
    if unknown:
        raise UnknownLabel(f"labels not in the model's label map: {unknown}")
    cm = confusion_matrix([index[y] for y in y_true], [index[y] for y in y_pred], len(label_map))
    return report_from_confusion(cm, label_map)


def evaluate(model, X, y: Sequence[str]) -> EvalReport:
    """Score ``model`` (anything with ``label_map`` and ``predict``) on ``(X, y)``."""
    if len(y) == 0:
        raise EmptyTestSet("test set is empty")
    unknown = sorted(set(y) - set(model.label_map))
    if unknown:
        raise UnknownLabel(f"labels not in the model's label map: {unknown}")
    return evaluate_predictions(list(y), list(model.predict(X)), model.label_map)


def stratified_split(labels: Sequence[str], train_fraction: float = 0.8, seed: int = 42):
    """Per-class seeded shuffle, ``floor(fraction * n)`` of each class to train.

    Returns ``(train_idx, test_idx)`` as sorted index arrays into ``labels``.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must be in (0, 1)")
    labels = np.asarray(labels, dtype=object)
    rng = np.random.default_rng(seed)
    train, test = [], []
    for label in sorted(set(labels.tolist())):
        idx = np.flatnonzero(labels == label)
        if len(idx) < 2:
            raise ClassTooSmall(f"class {label!r} has {len(idx)} example(s); need at least 2")
        idx = rng.permutation(idx)
        cut = int(np.floor(train_fraction * len(idx)))
        train.append(idx[:cut])
        test.append(idx[cut:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def balanced_subsample(labels: Sequence[str], per_class: int, n_classes: int | None = None, seed: int = 42):
    """Pick ``n_classes`` random classes having at least ``per_class``
    examples and ``per_class`` random examples of each; sorted indices."""
    labels = np.asarray(labels, dtype=object)
    rng = np.random.default_rng(seed)
    eligible = [lab for lab in sorted(set(labels.tolist())) if np.sum(labels == lab) >= per_class]
    if n_classes is not None:
        if len(eligible) < n_classes:
            raise ClassTooSmall(f"only {len(eligible)} classes have >= {per_class} examples")
        eligible = sorted(rng.choice(eligible, size=n_classes, replace=False).tolist())
    picked = [rng.choice(np.flatnonzero(labels == lab), size=per_class, replace=False) for lab in eligible]
    return np.sort(np.concatenate(picked))


# -- resources -------------------------------------------------------------


@dataclass
class ResourceReport:
    train_latency_s_per_sample: float | None = None
    inference_throughput_samples_per_s: float | None = None
    peak_memory_mib: float | str | None = None
    energy_watts: str = NOT_APPLICABLE
    train_seconds: float | None = None
    train_samples: int | None = None
    inference_seconds: float | None = None
    inference_samples: int | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


class PeakRSS:
    """Samples resident set size on a background thread while active."""

    def __init__(self, interval: float = 0.005):
        self.interval = interval
        self.peak: int | None = None
        self._stop = threading.Event()
        self._thread = None
        self._proc = psutil.Process() if psutil else None

    def _sample(self):
        try:
            rss = self._proc.memory_info().rss
        except Exception:
            return
        self.peak = rss if self.peak is None else max(self.peak, rss)

    def _run(self):
        while not self._stop.wait(self.interval):
            self._sample()

    def __enter__(self):
        if self._proc is not None:
            self._sample()
            self._thread = threading.Thread(target=self._run, daemon=True)
            self._thread.start()
        return self

    def __exit__(self, *exc):
        if self._thread is not None:
            self._stop.set()
            self._thread.join()
            self._sample()
        return False

    @property
    def peak_mib(self) -> float | str:
        return round(self.peak / 2**20, 2) if self.peak is not None else "unavailable"


def timed(fn: Callable[[], object]) -> tuple[float, object]:
    t0 = time.perf_counter()
    out = fn()
    return time.perf_counter() - t0, out


def measure_resources(
    train_fn: Callable[[], object] | None,
    infer_fn: Callable[[], object] | None,
    train_count: int = 0,
    infer_count: int = 0,
) -> ResourceReport:
    """Time a training call and a batched inference call.

    Latency is training wall time divided by ``train_count``; throughput is
    ``infer_count`` divided by inference wall time. Peak RSS covers both
    regions. Energy is not measured (no accelerator in the path).
    """
    report = ResourceReport()
    with PeakRSS() as mem:
        if train_fn is not None:
            if train_count <= 0:
                raise ValueError("train_count must be > 0")
            secs, _ = timed(train_fn)
            report.train_seconds = round(secs, 6)
            report.train_samples = train_count
            report.train_latency_s_per_sample = secs / train_count
        if infer_fn is not None:
            if infer_count <= 0:
                raise ValueError("infer_count must be > 0")
            secs, _ = timed(infer_fn)
            report.inference_seconds = round(secs, 6)
            report.inference_samples = infer_count
            report.inference_throughput_samples_per_s = infer_count / secs if secs > 0 else float("inf")
    report.peak_memory_mib = mem.peak_mib
    return report


def benchmark_inference(infer_fn: Callable[[], object], infer_count: int, repeat: int = 5) -> ResourceReport:
    """Median throughput and peak memory over ``repeat`` inference runs."""
    if repeat < 1:
        raise ValueError("repeat must be >= 1")
    runs = [measure_resources(None, infer_fn, infer_count=infer_count) for _ in range(repeat)]
    thr = [r.inference_throughput_samples_per_s for r in runs]
    mems = [r.peak_memory_mib for r in runs if isinstance(r.peak_memory_mib, float)]
    med_secs = statistics.median(r.inference_seconds for r in runs)
    return ResourceReport(
        inference_throughput_samples_per_s=statistics.median(thr),
        inference_seconds=med_secs,
        inference_samples=infer_count,
        peak_memory_mib=statistics.median(mems) if mems else "unavailable",
        extra={"repeat": repeat, "throughput_runs": thr},
    )
