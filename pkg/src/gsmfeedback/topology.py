"""
GSM antenna-group topology.

The ``n_t`` transmit antennas are split into ``n_g`` contiguous groups of
``n_k`` antennas.  A connector wires each of the ``n_rf`` RF chains to one
distinct group; the legal connectors are a power-of-two sized subset of all
``binomial(n_g, n_rf)`` candidates, picked greedily by Hamming distance of
their activation patterns.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, DimensionError

__all__ = [
    "GsmConfig",
    "Connector",
    "ConnectorSet",
    "count_legal",
    "enumerate_candidates",
    "hamming_distance",
    "activation_distance",
    "greedy_max_average",
    "select_legal",
    "legal_connectors",
]


@dataclass(frozen=True)
class GsmConfig:
    """Antenna/RF dimensions of a GSM hybrid beamforming transmitter."""

    n_t: int = 16
    n_r: int = 4
    n_g: int = 4
    n_k: int = 4
    n_rf: int = 2
    n_s: int = 2

    def __post_init__(self):
        for name in ("n_t", "n_r", "n_g", "n_k", "n_rf", "n_s"):
            if int(getattr(self, name)) < 1:
                raise ConfigurationError(f"{name} must be a positive integer")
        if self.n_t != self.n_g * self.n_k:
            raise ConfigurationError(
                f"n_t={self.n_t} must equal n_g*n_k={self.n_g * self.n_k}")
        if self.n_rf > self.n_g:
            raise ConfigurationError("n_rf cannot exceed the number of antenna groups")
        if self.n_s > self.n_rf:
            raise ConfigurationError("n_s cannot exceed the number of RF chains")

    @property
    def m_bar(self) -> int:
        return math.comb(self.n_g, self.n_rf)

    @property
    def m(self) -> int:
        return count_legal(self)[1]


@dataclass(frozen=True)
class Connector:
    """Binary ``n_t x n_rf`` antenna-connecting matrix and the groups it activates."""

    matrix: np.ndarray = field(repr=False)
    groups: tuple

    @property
    def pattern(self) -> np.ndarray:
        """Per-antenna activation vector (row sums of the matrix)."""
        return self.matrix.sum(axis=1)

    def __eq__(self, other):
        if not isinstance(other, Connector):
            return NotImplemented
        return self.groups == other.groups and np.array_equal(self.matrix, other.matrix)

    def __hash__(self):
        return hash(self.groups)


@dataclass(frozen=True)
class ConnectorSet:
    """The ``m`` legal connectors chosen out of ``m_bar`` candidates."""

    legal: tuple
    m_bar: int
    m: int

    def stacked(self) -> np.ndarray:
        """Connector matrices stacked into an ``(m, n_t, n_rf)`` float array."""
        return np.stack([c.matrix for c in self.legal]).astype(float)

    def patterns(self) -> np.ndarray:
        return np.stack([c.pattern for c in self.legal])

    def __len__(self):
        return len(self.legal)

    def __getitem__(self, i):
        return self.legal[i]


def count_legal(cfg: GsmConfig) -> tuple[int, int]:
    """Return ``(m_bar, m)`` with ``m`` the largest power of two not above ``m_bar``."""
    if not isinstance(cfg, GsmConfig):
        raise ConfigurationError("expected a GsmConfig")
    m_bar = math.comb(cfg.n_g, cfg.n_rf)
    # exact integer floor(log2) avoids float rounding for large m_bar
    m = 1 << (m_bar.bit_length() - 1)
    return m_bar, m


def _connector(groups: Sequence[int], cfg: GsmConfig) -> Connector:
    mat = np.zeros((cfg.n_t, cfg.n_rf), dtype=np.int8)
    for j, g in enumerate(groups):
        mat[g * cfg.n_k:(g + 1) * cfg.n_k, j] = 1
    return Connector(matrix=mat, groups=tuple(int(g) for g in groups))


def enumerate_candidates(cfg: GsmConfig) -> list[Connector]:
    """All ``binomial(n_g, n_rf)`` connectors in lexicographic group order.

    RF chain ``j`` is wired to the ``j``-th smallest selected group.
    """
    return [_connector(groups, cfg)
            for groups in itertools.combinations(range(cfg.n_g), cfg.n_rf)]


def activation_distance(p: np.ndarray, q: np.ndarray) -> int:
    """Hamming distance between two 0/1 activation vectors."""
    p = np.asarray(p)
    q = np.asarray(q)
    if p.shape != q.shape:
        raise DimensionError(f"pattern shapes differ: {p.shape} vs {q.shape}")
    return int(np.sum(np.logical_xor(p != 0, q != 0)))


def hamming_distance(p: Connector, q: Connector) -> int:
    """XOR of the row sums of two connectors, summed over antennas."""
    if p.matrix.shape != q.matrix.shape:
        raise DimensionError(
            f"connector shapes differ: {p.matrix.shape} vs {q.matrix.shape}")
    return activation_distance(p.pattern, q.pattern)


def greedy_max_average(dist: np.ndarray, count: int, seed_index: int = 0,
                       allow_repeat: bool = False) -> list[int]:
    """Greedy index selection by maximum average distance to the chosen set.

    ``dist`` is a symmetric pairwise distance matrix whose row order is also the
    tie-break order (lowest index wins).  Without ``allow_repeat`` no index is
    picked twice.  With it, the candidates are exhausted first and the greedy
    order is then cycled.
    """
    n = dist.shape[0]
    if not 0 <= seed_index < n:
        raise ConfigurationError(f"seed_index {seed_index} outside [0, {n})")
    limit = count if allow_repeat else min(count, n)
    if not allow_repeat and count > n:
        raise ConfigurationError(f"cannot pick {count} distinct items out of {n}")
    chosen = [seed_index]
    total = dist[seed_index].astype(float).copy()
    while len(chosen) < min(limit, n):
        avg = total / len(chosen)
        avg[chosen] = -np.inf
        nxt = int(np.argmax(avg))  # argmax returns the first maximum
        chosen.append(nxt)
        total += dist[nxt]
    order = list(chosen)
    while len(chosen) < limit:
        chosen.append(order[len(chosen) % len(order)])
    return chosen


def select_legal(candidates: Sequence[Connector], m: int, seed_index: int = 0) -> ConnectorSet:
    """Pick ``m`` connectors greedily, starting from ``candidates[seed_index]``."""
    if m < 1 or m > len(candidates):
        raise ConfigurationError(f"m={m} must lie in [1, {len(candidates)}]")
    # lexicographic tie-break relies on the candidate ordering
    order = sorted(range(len(candidates)), key=lambda i: candidates[i].groups)
    cands = [candidates[i] for i in order]
    seed = order.index(seed_index)
    pats = np.stack([c.pattern for c in cands])
    dist = np.array([[activation_distance(a, b) for b in pats] for a in pats])
    idx = greedy_max_average(dist, m, seed_index=seed)
    return ConnectorSet(legal=tuple(cands[i] for i in idx), m_bar=len(candidates), m=m)


def legal_connectors(cfg: GsmConfig, seed_index: int = 0) -> ConnectorSet:
    """Convenience wrapper: enumerate, count and select for ``cfg``."""
    m_bar, m = count_legal(cfg)
    return select_legal(enumerate_candidates(cfg), m, seed_index=seed_index)
