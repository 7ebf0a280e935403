"""Quality-ranked image selection and hard-example loss weights."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .metrics import ScoreTable


@dataclass(frozen=True)
class OhemConfig:
    t_q: float = 0.2  # quality threshold
    w_l: float = 2.0  # loss weight for low-quality samples

    def __post_init__(self):
        if not 0 < self.t_q < 1:
            raise ValueError("t_q must be in (0, 1)")
        if self.w_l <= 1:
            raise ValueError("w_l must exceed 1")


def rank_by_score(table: ScoreTable) -> list[str]:
    """Ids sorted by raw score descending; ties by id, so ranking is
    reproducible."""
    if len(table) == 0:
        raise DataError("cannot rank an empty score table")
    return [i for i, _ in sorted(zip(table.ids, table.raw), key=lambda p: (-p[1], p[0]))]


def pick_top(table: ScoreTable, remaining_rate: float) -> list[str]:
    """Keep the best ceil(rate * N) ids."""
    if not 0 < remaining_rate <= 1:
        raise ValueError("remaining_rate must be in (0, 1]")
    ranked = rank_by_score(table)
    return ranked[: math.ceil(remaining_rate * len(ranked))]


def ohem_weight(normalized_score: float, config: OhemConfig = OhemConfig()) -> float:
    """w_l below the quality threshold (strict), 1 otherwise."""
    if not 0 <= normalized_score <= 1:
        raise ValueError("normalized score must be in [0, 1]")
    return config.w_l if normalized_score < config.t_q else 1.0


def ohem_weights(table: ScoreTable, config: OhemConfig = OhemConfig()) -> np.ndarray:
    if table.normalized is None:
        raise DataError("loss weights need normalized scores; normalize first")
    return np.where(table.normalized < config.t_q, config.w_l, 1.0)
