"""Score tables and the derived evaluation quantities.

Per-image raw scores (mixture log-density, KNN density, or classifier
average) are kept alongside an optional min-max normalized column.
From these we compute the set-level quality score (mean normalized
quality of generated samples), the diversity score (mean quality of
real samples under a scorer built on generated ones), pair-preference
accuracy, and score histograms.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DataError
from .features import FeatureMatrix


@dataclass(frozen=True)
class ScoreTable:
    """Per-image quality scores, in input order."""

    ids: tuple[str, ...]
    raw: np.ndarray
    normalized: np.ndarray | None = None
    scorer_kind: str = "gmm"  # gmm | knn | mbc
    # ids whose raw score was clamped after an exact reference match
    clamped_ids: frozenset[str] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "raw", np.asarray(self.raw, dtype=np.float64))
        object.__setattr__(self, "clamped_ids", frozenset(self.clamped_ids))
        if self.normalized is not None:
            object.__setattr__(
                self, "normalized", np.asarray(self.normalized, dtype=np.float64)
            )
        if len(set(self.ids)) != len(self.ids):
            raise DataError("duplicate ids in score table")
        if self.raw.shape != (len(self.ids),):
            raise DataError("one raw score per id required")
        if not np.isfinite(self.raw).all():
            raise DataError("raw scores must be finite")
        if self.scorer_kind not in ("gmm", "knn", "mbc"):
            raise DataError(f"unknown scorer kind {self.scorer_kind!r}")
        if self.normalized is not None:
            norm = self.normalized
            if norm.shape != self.raw.shape:
                raise DataError("normalized column length mismatch")
            if ((norm < 0) | (norm > 1)).any():
                raise DataError("normalized scores must lie in [0, 1]")
            order = np.argsort(self.raw, kind="stable")
            r, m = self.raw[order], norm[order]
            if (np.diff(m) < 0).any() or ((np.diff(r) == 0) & (np.diff(m) != 0)).any():
                raise DataError("normalized ordering disagrees with raw ordering")

    def __len__(self) -> int:
        return len(self.ids)

    def raw_of(self, image_id: str) -> float:
        return float(self.raw[self.ids.index(image_id)])

    def subset(self, keep_ids) -> "ScoreTable":
        keep = list(keep_ids)
        index = {i: k for k, i in enumerate(self.ids)}
        missing = [i for i in keep if i not in index]
        if missing:
            raise DataError(f"ids not in table: {missing}")
        rows = [index[i] for i in keep]
        return ScoreTable(
            ids=keep,
            raw=self.raw[rows],
            normalized=None if self.normalized is None else self.normalized[rows],
            scorer_kind=self.scorer_kind,
            clamped_ids=self.clamped_ids & set(keep),
        )


@dataclass(frozen=True)
class PairDataset:
    """Preference pairs: for each, which of the two images won."""

    pairs: tuple[tuple[str, str, str], ...]  # (id_a, id_b, "a" | "b")
    source_note: str = ""

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple(tuple(p) for p in self.pairs))
        for a, b, winner in self.pairs:
            if a == b:
                raise DataError(f"pair compares {a!r} with itself")
            if winner not in ("a", "b"):
                raise DataError(f"winner must be 'a' or 'b', got {winner!r}")

    def __len__(self) -> int:
        return len(self.pairs)


def normalize_scores(table: ScoreTable) -> ScoreTable:
    """Min-max map of raw scores onto [0, 1]; constant tables map to 0.5."""
    if len(table) == 0:
        raise DataError("cannot normalize an empty score table")
    lo, hi = float(table.raw.min()), float(table.raw.max())
    if hi == lo:
        norm = np.full(len(table), 0.5)
    else:
        norm = (table.raw - lo) / (hi - lo)
    return replace(table, normalized=norm)


def normalize_union(tables: list[ScoreTable]) -> list[ScoreTable]:
    """Normalize several tables against their joint min/max so the
    resulting quality scores are mutually comparable."""
    if not tables or any(len(t) == 0 for t in tables):
        raise DataError("cannot normalize empty score tables")
    lo = min(float(t.raw.min()) for t in tables)
    hi = max(float(t.raw.max()) for t in tables)
    out = []
    for t in tables:
        if hi == lo:
            norm = np.full(len(t), 0.5)
        else:
            norm = (t.raw - lo) / (hi - lo)
        out.append(replace(t, normalized=norm))
    return out


def quality_score(table: ScoreTable) -> float:
    """Mean normalized quality over the table."""
    if table.normalized is None:
        raise DataError("quality score needs normalized scores; normalize first")
    return float(table.normalized.mean())


def diversity_score(
    generated: FeatureMatrix,
    real: FeatureMatrix,
    scorer_kind: str = "gmm",
    **params,
) -> float:
    """Mean quality of real samples under a scorer built on generated ones.

    Role exchange: a mode-collapsed generator concentrates its density,
    so typical real samples score low and the result drops.

    params are forwarded to the scorer: for "gmm" the keyword arguments
    of :func:`giqa.gmm.fit_gmm` (n_components, covariance_type, config);
    for "knn" the neighbor count ``k``.
    """
    if generated.count == 0 or real.count == 0:
        raise DataError("diversity score needs non-empty generated and real sets")
    if generated.dim != real.dim:
        raise DataError("generated and real feature dims differ")
    if scorer_kind == "gmm":
        from . import gmm as gmm_mod

        model = gmm_mod.fit_gmm(generated, **params)
        table = gmm_mod.score_gmm(model, real)
    elif scorer_kind == "knn":
        from . import knn as knn_mod

        index = knn_mod.build_index(generated)
        table = knn_mod.score_knn(index, real, **params)
    else:
        raise DataError(f"diversity score supports gmm or knn, not {scorer_kind!r}")
    return quality_score(normalize_scores(table))


def pair_accuracy(table: ScoreTable, pairs: PairDataset) -> float:
    """Fraction of pairs where the raw scores agree with the recorded
    winner; exact ties count half."""
    if len(pairs) == 0:
        raise DataError("no pairs to evaluate")
    known = set(table.ids)
    missing = sorted(
        {i for a, b, _ in pairs.pairs for i in (a, b) if i not in known}
    )
    if missing:
        raise DataError(f"pair ids missing from score table: {missing}")
    hits = 0.0
    for a, b, winner in pairs.pairs:
        sa, sb = table.raw_of(a), table.raw_of(b)
        win_score, lose_score = (sa, sb) if winner == "a" else (sb, sa)
        if win_score > lose_score:
            hits += 1.0
        elif win_score == lose_score:
            hits += 0.5
    return hits / len(pairs)


def score_histogram(table: ScoreTable, bins: int) -> np.ndarray:
    """Counts over ``bins`` uniform bins on [0, 1]; the last bin includes 1."""
    if table.normalized is None:
        raise DataError("histogram needs normalized scores; normalize first")
    if bins < 1:
        raise ValueError("bins must be >= 1")
    counts, _ = np.histogram(table.normalized, bins=np.linspace(0.0, 1.0, bins + 1))
    return counts


def write_score_table(table: ScoreTable, destination) -> None:
    with open(destination, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["id", "raw", "normalized"])
        for k, image_id in enumerate(table.ids):
            norm = "" if table.normalized is None else repr(float(table.normalized[k]))
            writer.writerow([image_id, repr(float(table.raw[k])), norm])


def read_score_table(source, scorer_kind: str = "gmm") -> ScoreTable:
    with open(source, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["id", "raw"]:
            raise DataError(f"{source}: expected header id,raw,normalized")
        ids, raw, norm = [], [], []
        for row in reader:
            if not row:
                continue
            ids.append(row[0])
            raw.append(float(row[1]))
            norm.append(float(row[2]) if len(row) > 2 and row[2] != "" else None)
    has_norm = all(v is not None for v in norm) and bool(norm)
    return ScoreTable(
        ids=ids,
        raw=np.array(raw),
        normalized=np.array(norm) if has_norm else None,
        scorer_kind=scorer_kind,
    )


def write_pairs(pairs: PairDataset, destination) -> None:
    with open(destination, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["id_a", "id_b", "winner"])
        writer.writerows(pairs.pairs)


def read_pairs(source) -> PairDataset:
    with open(source, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["id_a", "id_b", "winner"]:
            raise DataError(f"{source}: expected header id_a,id_b,winner")
        pairs = [(row[0], row[1], row[2]) for row in reader if row]
    return PairDataset(pairs=pairs, source_note=str(source))


def write_histogram(counts: np.ndarray, destination) -> None:
    edges = np.linspace(0.0, 1.0, len(counts) + 1)
    with open(destination, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["bin_low", "bin_high", "count"])
        for k, c in enumerate(counts):
            writer.writerow([repr(float(edges[k])), repr(float(edges[k + 1])), int(c)])
