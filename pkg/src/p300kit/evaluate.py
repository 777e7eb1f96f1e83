"""Cross-validation protocols, ROC AUC, and result aggregation.

Within-subject: repeated stratified 5-fold cross-validation, training on
80% and scoring AUC on the held-out 20% (the same fold that drives early
stopping, which is how the protocol is defined; the optimistic bias of
that choice is documented in the README). Cross-subject: leave-two-out,
one subject for testing, the cyclically next one for validation, the rest
for training.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .arch import ArchitectureSpec
from .epochs import EpochSet, concat_epoch_sets
from .signal import standardize_channels
from .train import TrainConfig, loss_for_spec, train_model


def roc_auc(scores, labels) -> float:
    """Area under the ROC curve via the rank-sum statistic.

    Equals the Mann-Whitney pair count: the fraction of (positive,
    negative) pairs where the positive scores higher, ties counting 0.5.
    Midranks keep tie handling exact.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be 1-D and the same length")
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos + n_neg != labels.size:
        raise ValueError("labels must be 0 or 1")
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs at least one positive and one negative label")
    order = np.argsort(scores, kind="mergesort")
    s_sorted = scores[order]
    run_starts = np.concatenate([[0], np.flatnonzero(np.diff(s_sorted)) + 1])
    run_ends = np.concatenate([run_starts[1:], [scores.size]])
    midranks = (run_starts + run_ends + 1) / 2.0  # 1-based average rank
    ranks = np.empty(scores.size, dtype=np.float64)
    ranks[order] = np.repeat(midranks, run_ends - run_starts)
    pos_rank_sum = ranks[labels == 1].sum()
    return float((pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def stratified_kfold(labels, k: int, rng: np.random.Generator) -> list[np.ndarray]:
    """k disjoint index folds with per-class sizes differing by at most 1."""
    labels = np.asarray(labels)
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    folds: list[list[int]] = [[] for _ in range(k)]
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        if idx.size < k:
            raise ValueError(
                f"class {cls} has {idx.size} members, fewer than k={k}")
        idx = idx.copy()
        rng.shuffle(idx)
        base, extra = divmod(idx.size, k)
        start = 0
        for f in range(k):
            size = base + (1 if f < extra else 0)
            folds[f].extend(idx[start:start + size])
            start += size
    return [np.sort(np.asarray(f, dtype=np.int64)) for f in folds]


def plan_cross_subject(n_subjects: int) -> list[tuple[int, int, tuple[int, ...]]]:
    """Leave-two-out folds: (test, validation, training subjects) per subject.

    The validation subject is the cyclic successor of the test subject.
    """
    if n_subjects < 3:
        raise ValueError(
            f"cross-subject evaluation needs at least 3 subjects, got {n_subjects}")
    plan = []
    for test in range(n_subjects):
        val = (test + 1) % n_subjects
        train = tuple(i for i in range(n_subjects) if i not in (test, val))
        plan.append((test, val, train))
    return plan


@dataclass
class EvalRecord:
    subject: str
    repetition: int
    fold: int
    auc: float
    epochs_ran: int
    train_seconds: float
    inference_seconds: float
    val_subject: str | None = None


@dataclass
class EvalReport:
    protocol: str  # "within" | "cross"
    architecture: str
    records: list[EvalRecord] = field(default_factory=list)

    def aucs(self) -> np.ndarray:
        return np.asarray([r.auc for r in self.records], dtype=np.float64)

    def aggregate(self) -> tuple[float, float]:
        """Mean and population standard deviation of the AUC records."""
        a = self.aucs()
        return float(a.mean()), float(a.std())

    def summary(self) -> dict:
        mean_auc, std_auc = self.aggregate()
        return {
            "protocol": self.protocol,
            "architecture": self.architecture,
            "n_records": len(self.records),
            "mean_auc": mean_auc,
            "std_auc": std_auc,
            "mean_epochs": float(np.mean([r.epochs_ran for r in self.records])),
            "mean_train_seconds": float(np.mean([r.train_seconds for r in self.records])),
            "mean_inference_seconds": float(np.mean([r.inference_seconds for r in self.records])),
        }

    def to_csv(self, path) -> None:
        """Deterministic per-record CSV: wall-clock timing is excluded here
        (it lives in the JSON summary) so identical runs produce identical
        bytes."""
        lines = ["subject,repetition,fold,auc,epochs"]
        for r in self.records:
            lines.append(f"{r.subject},{r.repetition},{r.fold},{r.auc!r},{r.epochs_ran}")
        Path(path).write_text("\n".join(lines) + "\n")

    def to_json(self, path) -> None:
        payload = self.summary()
        payload["records"] = [
            {"subject": r.subject, "repetition": r.repetition, "fold": r.fold,
             "auc": r.auc, "epochs": r.epochs_ran,
             "train_seconds": r.train_seconds,
             "inference_seconds": r.inference_seconds,
             "val_subject": r.val_subject}
            for r in self.records
        ]
        Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def aggregate(report: EvalReport) -> tuple[float, float]:
    return report.aggregate()


def _resolve_model_source(spec_or_factory):
    if isinstance(spec_or_factory, ArchitectureSpec):
        return spec_or_factory, loss_for_spec(spec_or_factory)
    # duck-typed factory: called with a seed, returns a Model-like object
    return spec_or_factory, None


def _run_fold(spec_or_factory, train_std: EpochSet, val_std: EpochSet,
              score_std: EpochSet, config: TrainConfig, seed: int):
    source, loss = _resolve_model_source(spec_or_factory)
    if loss is None:
        model_or_spec = source(seed)
        cfg = config.replace(seed=seed)
        if getattr(model_or_spec, "output_dim", 1) == 2:
            cfg = cfg.replace(loss="categorical_cross_entropy")
    else:
        model_or_spec = source
        cfg = config.replace(seed=seed, loss=loss)
    t0 = time.perf_counter()
    model, history = train_model(model_or_spec, train_std, val_std, cfg)
    train_seconds = time.perf_counter() - t0
    t0 = time.perf_counter()
    scores = model.predict(score_std.epochs)
    inference_seconds = time.perf_counter() - t0
    auc = roc_auc(scores, score_std.labels)
    return auc, history.epochs_ran, train_seconds, inference_seconds


def _within_repetition(spec, subject: EpochSet, config: TrainConfig,
                       k: int, repetition: int) -> list[EvalRecord]:
    fold_rng = np.random.default_rng([config.seed, 11, repetition])
    folds = stratified_kfold(subject.labels, k, fold_rng)
    subject_name = subject.subject_id or "S00"
    records = []
    for f in range(k):
        val_idx = folds[f]
        train_idx = np.concatenate([folds[j] for j in range(k) if j != f])
        train_std, [val_std] = standardize_channels(
            subject.subset(train_idx), [subject.subset(val_idx)])
        seed = config.seed + f * 1000 + repetition
        auc, epochs_ran, t_train, t_inf = _run_fold(
            spec, train_std, val_std, val_std, config, seed)
        records.append(EvalRecord(subject_name, repetition, f, auc,
                                  epochs_ran, t_train, t_inf))
    return records


_POOL_PAYLOAD = None


def _init_pool(payload):
    global _POOL_PAYLOAD
    _POOL_PAYLOAD = payload


def _within_task(repetition: int) -> list[EvalRecord]:
    spec, subject, config, k = _POOL_PAYLOAD
    return _within_repetition(spec, subject, config, k, repetition)


def _cross_task(fold: int) -> EvalRecord:
    spec, subjects, config, plan = _POOL_PAYLOAD
    return _cross_fold(spec, subjects, config, plan[fold], fold)


def _cross_fold(spec, subjects: list[EpochSet], config: TrainConfig,
                assignment, fold: int) -> EvalRecord:
    test_i, val_i, train_is = assignment
    names = [s.subject_id or f"S{i:02d}" for i, s in enumerate(subjects)]
    train = concat_epoch_sets([subjects[i] for i in train_is])
    train_std, [val_std, test_std] = standardize_channels(
        train, [subjects[val_i], subjects[test_i]])
    seed = config.seed + fold * 1000
    auc, epochs_ran, t_train, t_inf = _run_fold(
        spec, train_std, val_std, test_std, config, seed)
    return EvalRecord(names[test_i], 0, fold, auc, epochs_ran, t_train, t_inf,
                      val_subject=names[val_i])


def _map_tasks(task_fn, payload, indices, jobs: int):
    if jobs <= 1 or len(indices) <= 1:
        _init_pool(payload)
        return [task_fn(i) for i in indices]
    try:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_init_pool,
                                 initargs=(payload,)) as pool:
            return list(pool.map(task_fn, indices))
    except (OSError, PermissionError):  # no subprocess support: run inline
        _init_pool(payload)
        return [task_fn(i) for i in indices]


def run_within_subject(spec, subject_data: EpochSet, config: TrainConfig,
                       repetitions: int = 10, k: int = 5, jobs: int = 1) -> EvalReport:
    """Repeated stratified k-fold evaluation on one subject.

    Produces repetitions*k AUC records; each fold trains on the other
    k-1 folds (standardized on the training split) and scores the held-out
    fold. `spec` may also be a seed->model factory (used for protocol
    tests with stub models).
    """
    payload = (spec, subject_data, config, k)
    results = _map_tasks(_within_task, payload, list(range(repetitions)), jobs)
    records = [rec for rep_records in results for rec in rep_records]
    records.sort(key=lambda r: (r.repetition, r.fold))
    name = spec.name if isinstance(spec, ArchitectureSpec) else "custom"
    return EvalReport("within", name, records)


def run_cross_subject(spec, per_subject: list[EpochSet], config: TrainConfig,
                      jobs: int = 1) -> EvalReport:
    """Leave-two-out evaluation: one fold (and one AUC) per held-out subject."""
    plan = plan_cross_subject(len(per_subject))
    payload = (spec, per_subject, config, plan)
    records = _map_tasks(_cross_task, payload, list(range(len(plan))), jobs)
    records.sort(key=lambda r: r.fold)
    name = spec.name if isinstance(spec, ArchitectureSpec) else "custom"
    return EvalReport("cross", name, records)
