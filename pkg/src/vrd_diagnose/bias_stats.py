"""Dataset bias audit: predicate predictability from subject/object labels and
super-category co-occurrence."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path


import numpy as np

from .ingestion import Dataset, Taxonomy

MODES = ("factored", "joint")


@dataclass(frozen=True, eq=False)
class BiasModel:
    """Count tables for predicate prediction.

    ``subject_counts[p, s]`` and ``object_counts[p, o]`` are raw counts over
    training relations; ``joint_counts`` maps ``(s, o)`` to a per-predicate
    count vector and is only consulted in ``"joint"`` mode.
    """

    predicates: tuple[str, ...]
    objects: tuple[str, ...]
    prior_counts: np.ndarray
    subject_counts: np.ndarray
    object_counts: np.ndarray
    joint_counts: dict
    alpha: float = 1.0
    mode: str = "factored"

    def prior(self) -> np.ndarray:
        n_p = len(self.predicates)
        return (self.prior_counts + self.alpha) / (self.prior_counts.sum() + self.alpha * n_p)

    def conditional(self, which: str) -> np.ndarray:
        """Smoothed ``P(label | predicate)`` with rows over predicates."""
        counts = self.subject_counts if which == "subject" else self.object_counts
        n_o = len(self.objects)
        denom = counts.sum(axis=1, keepdims=True) + self.alpha * n_o
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(denom > 0, (counts + self.alpha) / denom, 0.0)

    def scaled(self, k: float) -> "BiasModel":
        return BiasModel(self.predicates, self.objects, self.prior_counts * k, self.subject_counts * k,
                         self.object_counts * k, {key: v * k for key, v in self.joint_counts.items()},
                         self.alpha, self.mode)


def fit_bias_model(train: Dataset, alpha: float = 1.0, mode: str = "factored") -> BiasModel:
    if mode not in MODES:
        raise ValueError(f"unknown bias mode {mode!r}; expected one of {MODES}")
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    rels = [rel for _, rel in train.relations()]
    if not rels:
        raise ValueError("cannot fit a bias model on an empty training set")
    predicates = tuple(train.predicate_vocab)
    objects = tuple(train.object_vocab)
    p_idx = {p: i for i, p in enumerate(predicates)}
    o_idx = {o: i for i, o in enumerate(objects)}
    prior = np.zeros(len(predicates))
    subj = np.zeros((len(predicates), len(objects)))
    obj = np.zeros((len(predicates), len(objects)))
    joint: dict = {}
    for rel in rels:
        s, p, o = rel.triplet
        pi = p_idx[p]
        prior[pi] += 1
        subj[pi, o_idx[s]] += 1
        obj[pi, o_idx[o]] += 1
        joint.setdefault((s, o), np.zeros(len(predicates)))[pi] += 1
    return BiasModel(predicates, objects, prior, subj, obj, joint, float(alpha), mode)


def _log(x: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(x)


def predicate_scores(m: BiasModel, subject: str, object: str) -> np.ndarray:
    """Unnormalised log posterior over predicates (factored naive Bayes)."""
    scores = _log(m.prior())
    index = {o: i for i, o in enumerate(m.objects)}
    # unseen categories carry a uniform likelihood, which leaves the argmax alone
    if subject in index:
        scores = scores + _log(m.conditional("subject")[:, index[subject]])
    if object in index:
        scores = scores + _log(m.conditional("object")[:, index[object]])
    return scores


def predict_predicate(m: BiasModel, subject: str, object: str) -> str:
    if m.mode == "joint":
        counts = m.joint_counts.get((subject, object))
        if counts is not None and counts.sum() > 0:
            return m.predicates[int(np.argmax(counts))]
        return m.predicates[int(np.argmax(m.prior()))]
    scores = predicate_scores(m, subject, object)
    if not np.isfinite(scores).any():
        # every predicate has zero likelihood (alpha = 0 and an unseen pair)
        return m.predicates[int(np.argmax(m.prior()))]
    return m.predicates[int(np.argmax(scores))]


def bias_accuracy(m: BiasModel, eval_set: Dataset) -> dict:
    rels = [rel for _, rel in eval_set.relations()]
    if not rels:
        raise ValueError("cannot score a bias model on an empty evaluation set")
    cache: dict = {}
    correct = 0
    for rel in rels:
        s, p, o = rel.triplet
        if (s, o) not in cache:
            cache[(s, o)] = predict_predicate(m, s, o)
        correct += cache[(s, o)] == p
    return {"accuracy": correct / len(rels), "random_baseline": 1.0 / len(m.predicates),
            "n_eval": len(rels), "n_predicates": len(m.predicates), "mode": m.mode, "alpha": m.alpha}


@dataclass(frozen=True, eq=False)
class CooccurrenceMatrix:
    """``counts[k, i, j]``: relations of predicate kind ``kinds[k]`` between
    subject group ``groups[i]`` and object group ``groups[j]``."""

    groups: tuple[str, ...]
    kinds: tuple[str, ...]
    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def cell(self, subject_group: str, object_group: str, kind: str) -> int:
        return int(self.counts[self.kinds.index(kind), self.groups.index(subject_group),
                               self.groups.index(object_group)])

    def write_csv(self, directory, prefix: str = "cooccurrence") -> list[Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        written = []
        for k, kind in enumerate(self.kinds):
            path = directory / f"{prefix}_{kind}.csv"
            with open(path, "w", newline="", encoding="utf-8") as f:
                w = csv.writer(f, lineterminator="\n")
                w.writerow(["subject_group"] + list(self.groups))
                for i, g in enumerate(self.groups):
                    w.writerow([g] + [int(x) for x in self.counts[k, i]])
            written.append(path)
        return written


def cooccurrence(train: Dataset, tax: Taxonomy) -> CooccurrenceMatrix:
    groups = list(tax.groups)
    kinds = list(tax.kinds)
    rels = [rel for _, rel in train.relations()]
    resolved = []
    for rel in rels:
        s, p, o = rel.triplet
        sg, og, kind = tax.super_category(s), tax.super_category(o), tax.predicate_kind(p)
        for g in (sg, og):
            if g not in groups:
                groups.append(g)
        if kind not in kinds:
            kinds.append(kind)
        resolved.append((sg, og, kind))
    counts = np.zeros((len(kinds), len(groups), len(groups)), dtype=np.int64)
    g_idx = {g: i for i, g in enumerate(groups)}
    k_idx = {k: i for i, k in enumerate(kinds)}
    for sg, og, kind in resolved:
        counts[k_idx[kind], g_idx[sg], g_idx[og]] += 1
    return CooccurrenceMatrix(tuple(groups), tuple(kinds), counts)
