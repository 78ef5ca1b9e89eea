"""Flat FDMA reallocation and the pairwise orthogonalization test."""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .channel import ChannelSpec, Piece, SpectrumAllocation

FDMA_THRESHOLD = 0.5


@dataclass(frozen=True)
class FdmaDecision:
    """Pairs certified for orthogonalization, globally and per sub-channel."""

    pairs: frozenset
    per_subchannel: dict

    def to_json(self) -> dict:
        return {
            "pairs": sorted(list(p) for p in self.pairs),
            "per_subchannel": {str(m): sorted(list(p) for p in s)
                               for m, s in sorted(self.per_subchannel.items())},
        }


@dataclass(frozen=True)
class ReallocationResult:
    allocation: SpectrumAllocation
    rates_before: np.ndarray
    rates_after: np.ndarray


def flat_fdma_reallocate(P) -> SpectrumAllocation:
    """Move each user onto a disjoint sub-band of the unit band.

    User ``i`` gets width ``P_i / sum(P)`` at PSD ``sum(P)``; users with zero
    PSD get no sub-band.  Integrated power per user is unchanged.
    """
    P = np.asarray(P, dtype=float)
    if np.any(P < 0):
        raise ValueError("PSDs must be non-negative")
    total = P.sum()
    if not total > 0:
        raise ValueError("flat FDMA reallocation is undefined for all-zero power")
    K = P.size
    active = [i for i in range(K) if P[i] > 0]
    pieces, start = [], 0.0
    for n, i in enumerate(active):
        end = 1.0 if n == len(active) - 1 else start + P[i] / total
        psd = np.zeros(K)
        psd[i] = total
        pieces.append(Piece(start, end, tuple(psd)))
        start = end
    return SpectrumAllocation(tuple(pieces))


def pairwise_fdma_condition(spec: ChannelSpec, i: int, j: int, subchannels=None):
    """Whether users ``i`` and ``j`` satisfy ``alpha_ji >= 1/2 and alpha_ij >= 1/2``.

    Returns ``(certified, per_sub)`` where ``per_sub`` maps each examined
    sub-channel to its verdict.  Comparison is exact (closed condition).
    """
    if i == j:
        raise ValueError("pairwise condition needs two distinct users")
    ms = range(spec.M) if subchannels is None else subchannels
    per_sub = {m: bool(spec.alpha[m, j, i] >= FDMA_THRESHOLD
                       and spec.alpha[m, i, j] >= FDMA_THRESHOLD) for m in ms}
    return all(per_sub.values()), per_sub


def fdma_decision(spec: ChannelSpec) -> FdmaDecision:
    per = {m: set() for m in range(spec.M)}
    glob = set()
    for i, j in combinations(range(spec.K), 2):
        ok, per_sub = pairwise_fdma_condition(spec, i, j)
        if ok:
            glob.add((i, j))
        for m, v in per_sub.items():
            if v:
                per[m].add((i, j))
    return FdmaDecision(frozenset(glob), {m: frozenset(s) for m, s in per.items()})


def fdma_power_region_threshold(alpha: float) -> float:
    """Sum-PSD ``p_0`` above which flat FDMA beats flat sharing (symmetric pair).

    Non-positive for ``alpha >= 1/2``: FDMA then wins at every power.
    """
    if not alpha > 0:
        raise ValueError("cross gain must be positive")
    return 2.0 * (1.0 / (2.0 * alpha * alpha) - 1.0 / alpha)


def pair_sharing_margin(alpha, p1, p2):
    """``p1 p2 (alpha^2 (p1+p2) - (1 - 2 alpha))``, unit noise.

    Non-negative exactly when reallocating the pair to flat FDMA does not
    lower the sum-rate.
    """
    return p1 * p2 * (alpha * alpha * (p1 + p2) - (1.0 - 2.0 * alpha))


def sharing_rates(alpha, noise, P):
    """Rates of a flat sharing allocation on a unit-width flat band.

    ``alpha[j, i]`` is the gain from ``j`` into ``i``.  Batched over leading
    axes of ``P``.
    """
    alpha = np.array(alpha, dtype=float)
    np.fill_diagonal(alpha, 0.0)
    P = np.asarray(P, dtype=float)
    return np.log1p(P / (noise + P @ alpha))


def reallocation_gain(alpha, noise, P, group) -> ReallocationResult:
    """Rates of all users before and after flat-FDMA reallocating ``group``.

    Group members move onto disjoint sub-bands (ordered by user index) of
    width ``P_g / S`` at PSD ``S = sum_group P``; users outside the group keep
    their flat PSD over the whole band and, inside member ``g``'s sub-band,
    see interference only from ``g``.
    """
    alpha = np.array(alpha, dtype=float)
    K = alpha.shape[0]
    np.fill_diagonal(alpha, 0.0)
    noise = np.broadcast_to(np.asarray(noise, float), (K,))
    P = np.asarray(P, dtype=float)
    group = sorted(set(int(g) for g in group))
    if not group:
        raise ValueError("group must be non-empty")
    if np.any(P < 0):
        raise ValueError("PSDs must be non-negative")
    S = P[group].sum()
    if not S > 0:
        raise ValueError("group has zero power; reallocation undefined")
    before = sharing_rates(alpha, noise, P)

    outsiders = [k for k in range(K) if k not in group]
    pieces, start = [], 0.0
    active = [g for g in group if P[g] > 0]
    for n, g in enumerate(active):
        end = 1.0 if n == len(active) - 1 else start + P[g] / S
        psd = np.zeros(K)
        psd[outsiders] = P[outsiders]
        psd[g] = S
        pieces.append(Piece(start, end, tuple(psd)))
        start = end
    alloc = SpectrumAllocation(tuple(pieces))
    after = np.zeros(K)
    for piece in alloc.pieces:
        after += piece.width * sharing_rates(alpha, noise, np.asarray(piece.psd))
    return ReallocationResult(alloc, before, after)


def reallocated_rates(alpha, noise, P, group):
    """Vectorized post-reallocation rates for a batch of PSD vectors.

    Same semantics as :func:`reallocation_gain` but over ``P`` of shape
    ``(N, K)``; rows with zero group power are returned unchanged.
    """
    alpha = np.array(alpha, dtype=float)
    K = alpha.shape[0]
    np.fill_diagonal(alpha, 0.0)
    noise = np.broadcast_to(np.asarray(noise, float), (K,))
    P = np.atleast_2d(np.asarray(P, dtype=float))
    group = sorted(set(int(g) for g in group))
    mask = np.zeros(K, bool)
    mask[group] = True
    S = P[:, mask].sum(axis=1)
    safe = np.where(S > 0, S, 1.0)
    after = np.zeros_like(P)
    for g in group:
        psd = np.where(mask, 0.0, P)
        psd[:, g] = safe
        width = P[:, g] / safe
        after += width[:, None] * np.log1p(psd / (noise + psd @ alpha))
    return np.where((S > 0)[:, None], after, sharing_rates(alpha, noise, P))
