"""Interference-channel data model, rate densities and JSON ingestion.

Cross gains are stored as ``alpha[m, j, i]``: the gain from transmitter ``j``
into receiver ``i`` on sub-channel ``m``, already normalized by receiver
``i``'s direct gain.  The diagonal is ignored (kept at zero).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DEFAULT_NOISE_FLOOR = 1e-12
BANDWIDTH_SUM_TOL = 1e-12
JSON_BANDWIDTH_SUM_TOL = 1e-9


class SpecError(ValueError):
    """Raised for malformed or physically invalid channel descriptions."""


def _frozen(a, dtype=float):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ChannelSpec:
    """Normalized K-user, M-sub-channel piecewise-flat interference channel.

    Attributes
    ----------
    bandwidths : (M,) array
        Sub-channel widths, summing to one.
    alpha : (M, K, K) array
        ``alpha[m, j, i]`` is the normalized cross gain from user ``j`` to
        user ``i``.
    noise : (M, K) array
        Normalized noise PSD per sub-channel and user.
    weights, budgets : (K,) arrays
    """

    bandwidths: np.ndarray
    alpha: np.ndarray
    noise: np.ndarray
    weights: np.ndarray
    budgets: np.ndarray
    noise_floor: float = DEFAULT_NOISE_FLOOR

    def __post_init__(self):
        b = _frozen(self.bandwidths)
        alpha = np.array(self.alpha, dtype=float)
        noise = _frozen(self.noise)
        w = _frozen(self.weights)
        p = _frozen(self.budgets)
        if b.ndim != 1 or b.size < 1:
            raise SpecError("bandwidths must be a non-empty 1-D sequence")
        M = b.size
        if noise.ndim != 2 or noise.shape[0] != M:
            raise SpecError(f"noise must have shape (M, K) with M={M}, got {noise.shape}")
        K = noise.shape[1]
        if K < 1:
            raise SpecError("at least one user is required")
        if alpha.shape != (M, K, K):
            raise SpecError(f"alpha must have shape {(M, K, K)}, got {alpha.shape}")
        if w.shape != (K,) or p.shape != (K,):
            raise SpecError(f"weights and budgets must have length K={K}")
        if not (np.all(np.isfinite(b)) and np.all(np.isfinite(alpha))
                and np.all(np.isfinite(noise)) and np.all(np.isfinite(w))
                and np.all(np.isfinite(p))):
            raise SpecError("all channel parameters must be finite")
        if np.any(b <= 0):
            raise SpecError("bandwidths must be strictly positive")
        if abs(math.fsum(b) - 1.0) > BANDWIDTH_SUM_TOL:
            raise SpecError(f"bandwidths sum to {math.fsum(b)!r}, expected 1")
        idx = np.arange(K)
        alpha[:, idx, idx] = 0.0
        if np.any(alpha < 0):
            m, j, i = np.argwhere(alpha < 0)[0]
            raise SpecError(f"negative cross gain alpha[{j}->{i}] on sub-channel {m}")
        if not self.noise_floor > 0:
            raise SpecError("noise floor must be positive")
        if np.any(noise < self.noise_floor):
            m, i = np.argwhere(noise < self.noise_floor)[0]
            raise SpecError(
                f"noise n_{i}({m})={noise[m, i]!r} below floor {self.noise_floor!r}")
        if np.any(w < 0) or not np.any(w > 0):
            raise SpecError("weights must be non-negative with at least one positive")
        if np.any(p < 0):
            raise SpecError("power budgets must be non-negative")
        alpha.setflags(write=False)
        object.__setattr__(self, "bandwidths", b)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "noise", noise)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "budgets", p)

    @property
    def K(self) -> int:
        return self.noise.shape[1]

    @property
    def M(self) -> int:
        return self.bandwidths.size

    @property
    def edges(self) -> np.ndarray:
        """Sub-channel boundaries ``f_0 = 0 < ... < f_M = 1``."""
        e = np.concatenate([[0.0], np.cumsum(self.bandwidths)])
        e[-1] = 1.0
        return e

    def with_budgets(self, budgets) -> "ChannelSpec":
        return ChannelSpec(self.bandwidths, self.alpha, self.noise, self.weights,
                           budgets, self.noise_floor)

    def with_weights(self, weights) -> "ChannelSpec":
        return ChannelSpec(self.bandwidths, self.alpha, self.noise, weights,
                           self.budgets, self.noise_floor)

    def subchannel(self, m: int) -> "ChannelSpec":
        """Single flat sub-channel ``m`` stretched over the unit band."""
        return ChannelSpec([1.0], self.alpha[m:m + 1], self.noise[m:m + 1],
                           self.weights, self.budgets, self.noise_floor)

    def fingerprint(self) -> tuple:
        """Hashable key of the channel parameters (budgets excluded)."""
        return (self.alpha.tobytes(), self.noise.tobytes(), self.weights.tobytes(),
                self.bandwidths.tobytes())

    def to_json(self) -> dict:
        return {
            "users": self.K,
            "subchannels": [
                {"bandwidth": float(self.bandwidths[m]),
                 "alpha": self.alpha[m].tolist(),
                 "noise": self.noise[m].tolist()}
                for m in range(self.M)
            ],
            "weights": self.weights.tolist(),
            "budgets": self.budgets.tolist(),
        }


@dataclass(frozen=True, eq=False)
class RawChannelSpec:
    """Un-normalized channel: ``h2[m, j, i] = |H_ji(m)|^2`` including the diagonal."""

    bandwidths: np.ndarray
    h2: np.ndarray
    sigma: np.ndarray
    weights: np.ndarray
    budgets: np.ndarray

    def __post_init__(self):
        for name in ("bandwidths", "h2", "sigma", "weights", "budgets"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        M = self.bandwidths.size
        if self.sigma.ndim != 2 or self.sigma.shape[0] != M:
            raise SpecError("sigma must have shape (M, K)")
        K = self.sigma.shape[1]
        if self.h2.shape != (M, K, K):
            raise SpecError(f"H2 must have shape {(M, K, K)}, got {self.h2.shape}")
        if np.any(self.sigma <= 0):
            raise SpecError("noise PSD sigma must be positive")
        if np.any(self.h2 < 0):
            raise SpecError("power gains must be non-negative")


def normalize(raw: RawChannelSpec, noise_floor: float = DEFAULT_NOISE_FLOOR) -> ChannelSpec:
    """Divide cross gains and noise by the direct gain of each receiver."""
    K = raw.sigma.shape[1]
    idx = np.arange(K)
    direct = raw.h2[:, idx, idx]  # (M, K)
    bad = np.argwhere(direct <= 0)
    if bad.size:
        m, i = bad[0]
        raise SpecError(f"direct gain |H_{i}{i}|^2 is zero on sub-channel {m} (user {i})")
    alpha = raw.h2 / direct[:, None, :]
    noise = raw.sigma / direct
    return ChannelSpec(raw.bandwidths, alpha, noise, raw.weights, raw.budgets, noise_floor)


def rate_density(spec: ChannelSpec, m: int, P) -> np.ndarray:
    """Per-user rate density ``ln(1 + P_i / (n_i + sum_j P_j alpha_ji))``.

    ``P`` may carry leading batch dimensions; the last axis is the user axis.
    """
    P = np.asarray(P, dtype=float)
    if P.shape[-1] != spec.K:
        raise ValueError(f"PSD vector must have {spec.K} entries")
    if np.any(P < 0):
        raise ValueError("PSDs must be non-negative")
    return rate_density_raw(spec.alpha[m], spec.noise[m], P)


def rate_density_raw(alpha_m, noise_m, P) -> np.ndarray:
    interference = P @ alpha_m
    return np.log1p(P / (noise_m + interference))


def flat_channel(alpha, noise=None, weights=None, budgets=None) -> ChannelSpec:
    """Single-sub-channel spec from a K x K cross-gain matrix."""
    alpha = np.asarray(alpha, dtype=float)
    K = alpha.shape[0]
    noise = np.ones(K) if noise is None else np.asarray(noise, dtype=float)
    weights = np.ones(K) if weights is None else weights
    budgets = np.ones(K) if budgets is None else budgets
    return ChannelSpec([1.0], alpha[None], noise[None], weights, budgets)


def symmetric_two_user(alphas, bandwidths=None, noise=None, sum_power=1.0) -> ChannelSpec:
    """Two-user symmetric spec; budgets split equally from ``sum_power``."""
    alphas = np.atleast_1d(np.asarray(alphas, dtype=float))
    M = alphas.size
    b = np.full(M, 1.0 / M) if bandwidths is None else np.asarray(bandwidths, float)
    n = np.ones(M) if noise is None else np.broadcast_to(np.asarray(noise, float), (M,))
    A = np.zeros((M, 2, 2))
    A[:, 0, 1] = A[:, 1, 0] = alphas
    N = np.stack([n, n], axis=1)
    return ChannelSpec(b, A, N, [1.0, 1.0], [sum_power / 2, sum_power / 2])


# ---------------------------------------------------------------------------
# Allocations

@dataclass(frozen=True)
class Piece:
    start: float
    end: float
    psd: tuple

    @property
    def width(self) -> float:
        return self.end - self.start


@dataclass(frozen=True)
class SpectrumAllocation:
    """Piecewise-flat PSD vector function on ``[0, 1]``."""

    pieces: tuple = field(default_factory=tuple)

    def __post_init__(self):
        pieces = tuple(
            p if isinstance(p, Piece) else Piece(float(p[0]), float(p[1]),
                                                  tuple(float(x) for x in p[2]))
            for p in self.pieces)
        if not pieces:
            raise ValueError("allocation needs at least one piece")
        if abs(pieces[0].start) > 1e-12 or abs(pieces[-1].end - 1.0) > 1e-12:
            raise ValueError("allocation pieces must cover [0, 1]")
        K = len(pieces[0].psd)
        for a, b in zip(pieces, pieces[1:]):
            if abs(a.end - b.start) > 1e-12:
                raise ValueError(f"gap or overlap between pieces at {a.end} / {b.start}")
        for p in pieces:
            if not p.start < p.end:
                raise ValueError(f"empty piece [{p.start}, {p.end}]")
            if len(p.psd) != K:
                raise ValueError("inconsistent PSD vector lengths")
            if any(x < 0 or not math.isfinite(x) for x in p.psd):
                raise ValueError("PSDs must be finite and non-negative")
        object.__setattr__(self, "pieces", pieces)

    @property
    def K(self) -> int:
        return len(self.pieces[0].psd)

    @classmethod
    def flat(cls, psd) -> "SpectrumAllocation":
        return cls((Piece(0.0, 1.0, tuple(float(x) for x in psd)),))

    def powers(self) -> np.ndarray:
        """Integrated power per user."""
        tot = np.zeros(self.K)
        for p in self.pieces:
            tot += p.width * np.asarray(p.psd)
        return tot

    def split_at(self, cuts) -> "SpectrumAllocation":
        """Same PSD function, with pieces subdivided at ``cuts``."""
        cuts = sorted(float(c) for c in cuts)
        out = []
        for p in self.pieces:
            inner = [c for c in cuts if p.start < c < p.end]
            bounds = [p.start, *inner, p.end]
            out.extend(Piece(a, b, p.psd) for a, b in zip(bounds, bounds[1:]))
        return SpectrumAllocation(tuple(out))

    def is_feasible(self, budgets, rtol=1e-8) -> bool:
        budgets = np.asarray(budgets, float)
        return bool(np.all(self.powers() <= budgets + rtol * np.maximum(budgets, 1.0)))

    def to_json(self) -> list:
        return [{"start": p.start, "end": p.end, "psd": list(p.psd)} for p in self.pieces]


def locate_pieces(spec: ChannelSpec, alloc: SpectrumAllocation, tol: float = 1e-12) -> np.ndarray:
    """Sub-channel index of every piece; raises if a piece straddles a boundary."""
    edges = spec.edges
    idx = np.empty(len(alloc.pieces), dtype=int)
    for k, p in enumerate(alloc.pieces):
        mid = 0.5 * (p.start + p.end)
        m = int(np.clip(np.searchsorted(edges, mid, side="right") - 1, 0, spec.M - 1))
        if p.start < edges[m] - tol or p.end > edges[m + 1] + tol:
            raise ValueError(
                f"piece [{p.start}, {p.end}] straddles sub-channel boundary; refine first")
        idx[k] = m
    return idx


def total_rates(spec: ChannelSpec, alloc: SpectrumAllocation) -> np.ndarray:
    """Per-user rate (nats) of a piecewise-flat allocation."""
    if alloc.K != spec.K:
        raise ValueError(f"allocation has {alloc.K} users, spec has {spec.K}")
    where = locate_pieces(spec, alloc)
    R = np.zeros(spec.K)
    for m, p in zip(where, alloc.pieces):
        R += p.width * rate_density(spec, m, np.asarray(p.psd))
    return R


def weighted_rate(spec: ChannelSpec, alloc: SpectrumAllocation) -> float:
    return float(spec.weights @ total_rates(spec, alloc))


def refine(spec: ChannelSpec, cut_points) -> ChannelSpec:
    """Split sub-channels at the given frequencies; parameters are inherited."""
    cuts = sorted(set(float(c) for c in cut_points))
    if any(not 0.0 < c < 1.0 for c in cuts):
        raise SpecError("cut points must lie strictly inside (0, 1)")
    edges = spec.edges
    widths, src = [], []
    for m in range(spec.M):
        lo, hi = edges[m], edges[m + 1]
        inner = [c for c in cuts if lo < c < hi]
        if not inner:
            widths.append(spec.bandwidths[m])
            src.append(m)
            continue
        bounds = [lo, *inner, hi]
        parts = [b - a for a, b in zip(bounds, bounds[1:])]
        # last child absorbs rounding so children sum to the parent width
        parts[-1] = spec.bandwidths[m] - math.fsum(parts[:-1])
        widths.extend(parts)
        src.extend([m] * len(parts))
    src = np.asarray(src)
    return ChannelSpec(widths, spec.alpha[src], spec.noise[src], spec.weights,
                       spec.budgets, spec.noise_floor)


# ---------------------------------------------------------------------------
# JSON

def spec_from_json(doc: dict, noise_floor: float = DEFAULT_NOISE_FLOOR) -> ChannelSpec:
    """Build a spec from the JSON document layout (normalized or raw variant)."""
    try:
        K = int(doc["users"])
        subs = doc["subchannels"]
        weights = doc.get("weights", [1.0] * K)
        budgets = doc["budgets"]
    except (KeyError, TypeError) as exc:
        raise SpecError(f"missing field in channel spec: {exc}") from None
    if K < 1 or not subs:
        raise SpecError("spec needs users >= 1 and at least one sub-channel")
    b = np.array([s.get("bandwidth") for s in subs], dtype=float)
    total = math.fsum(b)
    if abs(total - 1.0) > JSON_BANDWIDTH_SUM_TOL:
        raise SpecError(f"bandwidths sum to {total!r}; must be 1 +/- {JSON_BANDWIDTH_SUM_TOL}")
    b = b / total
    raw = "H2" in subs[0]
    try:
        if raw:
            h2 = np.array([s["H2"] for s in subs], dtype=float)
            sigma = np.array([s["sigma"] for s in subs], dtype=float)
            if h2.shape != (len(subs), K, K) or sigma.shape != (len(subs), K):
                raise SpecError("H2 must be K x K and sigma length K per sub-channel")
            return normalize(RawChannelSpec(b, h2, sigma, weights, budgets), noise_floor)
        alpha = np.array([s["alpha"] for s in subs], dtype=float)
        noise = np.array([s["noise"] for s in subs], dtype=float)
    except KeyError as exc:
        raise SpecError(f"sub-channel entry missing {exc}") from None
    except ValueError as exc:
        if isinstance(exc, SpecError):
            raise
        raise SpecError(f"ragged or non-numeric sub-channel data: {exc}") from None
    if alpha.shape != (len(subs), K, K) or noise.shape != (len(subs), K):
        raise SpecError("alpha must be K x K and noise length K per sub-channel")
    return ChannelSpec(b, alpha, noise, weights, budgets, noise_floor)


def load_spec(path, noise_floor: float = DEFAULT_NOISE_FLOOR) -> ChannelSpec:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SpecError(f"{path}: invalid JSON ({exc})") from None
    return spec_from_json(doc, noise_floor)
