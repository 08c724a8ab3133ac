"""Rademacher complexity of a finite class on a recorded sample.

Two estimators over the same loss matrix: exact enumeration of all sign
vectors (small n, chunked so memory stays flat) and an unbiased Monte Carlo
average with a standard error. Both exist in a plain form, max over the
class of the signed mean, and a symmetrized form that takes the absolute
value inside the max; the plain form is what the deviation bounds consume,
the symmetrized one is a diagnostic for sign-asymmetric classes.

Closed-form ceilings for comparison: the finite-class growth bound
L_H * sqrt(2 log r / n) and the dimension bound
L_H * sqrt(2 d log(e n / d) / n).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InvalidInputError, SizeCapError
from .generators import Generator, Trajectory, sample_chain, sample_stationary_chain
from .hypotheses import HypothesisClass, LossEnv, window_loss_values
from .metric import SeedSpec, derive_stream, make_rng

EXACT_N_CAP = 20
_CHUNK = 1 << 13


@dataclass(frozen=True)
class LossMatrix:
    """Loss values arranged hypotheses-by-states, with the declared ceiling."""

    values: np.ndarray
    ell_H: float

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 2 or vals.shape[0] == 0 or vals.shape[1] == 0:
            raise InvalidInputError("loss matrix must be 2-d and non-empty")
        if not np.all(np.isfinite(vals)) or np.any(vals < 0):
            raise InvalidInputError("loss matrix entries must be finite and non-negative")
        if np.isfinite(self.ell_H) and float(vals.max()) > self.ell_H * (1.0 + 1e-12):
            raise InvalidInputError(
                f"loss matrix entry {float(vals.max())!r} exceeds ell_H = {self.ell_H!r}"
            )
        object.__setattr__(self, "values", vals)

    @property
    def num_hypotheses(self) -> int:
        return self.values.shape[0]

    @property
    def num_states(self) -> int:
        return self.values.shape[1]


def loss_matrix(
    cls: HypothesisClass, traj: Trajectory, env: LossEnv, window: Optional[tuple] = None
) -> LossMatrix:
    if window is None:
        window = (0, len(traj))
    start, stop = window
    if not (isinstance(start, int) and isinstance(stop, int) and 0 <= start < stop <= len(traj)):
        raise InvalidInputError(
            f"window {window!r} out of range for a length-{len(traj)} trajectory"
        )
    rows = window_loss_values(cls, traj.xs[start:stop], traj.ys[start:stop], env)
    return LossMatrix(values=rows, ell_H=env.ell_H)


@dataclass(frozen=True)
class RademacherEstimate:
    value: float
    se: float
    draws: int
    method: str
    symmetrized: bool


def _chunk_stats(values: np.ndarray, signs: np.ndarray, symmetrized: bool) -> np.ndarray:
    """Per-sign-vector statistic max_h (1/n) sum_t sigma_t L_h(t)."""
    n = values.shape[1]
    scores = signs @ values.T  # (chunk, H)
    if symmetrized:
        scores = np.abs(scores)
    return scores.max(axis=1) / n


def rademacher_exact(matrix: LossMatrix, symmetrized: bool = False) -> RademacherEstimate:
    """Average over every sign vector; only feasible for small samples."""
    n = matrix.num_states
    if n > EXACT_N_CAP:
        raise SizeCapError(
            f"exact enumeration covers 2^{n} sign vectors; capped at n = {EXACT_N_CAP}, "
            "use the Monte Carlo estimator instead"
        )
    total = 1 << n
    acc = 0.0
    bit_positions = np.arange(n, dtype=np.uint64)
    for lo in range(0, total, _CHUNK):
        ks = np.arange(lo, min(lo + _CHUNK, total), dtype=np.uint64)
        bits = (ks[:, None] >> bit_positions) & 1
        signs = 1.0 - 2.0 * bits
        acc += float(_chunk_stats(matrix.values, signs, symmetrized).sum())
    return RademacherEstimate(
        value=acc / total, se=0.0, draws=total, method="exact", symmetrized=symmetrized
    )


def rademacher_mc(
    matrix: LossMatrix,
    draws: int,
    seed: SeedSpec = SeedSpec(0),
    symmetrized: bool = False,
) -> RademacherEstimate:
    """Unbiased sign-sampling estimate with a standard error."""
    if not (isinstance(draws, int) and draws >= 2):
        raise InvalidInputError(f"need at least two Monte Carlo draws, got {draws!r}")
    rng = make_rng(seed)
    n = matrix.num_states
    stats = np.empty(draws)
    done = 0
    while done < draws:
        take = min(_CHUNK, draws - done)
        signs = 1.0 - 2.0 * rng.integers(0, 2, size=(take, n))
        stats[done : done + take] = _chunk_stats(matrix.values, signs, symmetrized)
        done += take
    return RademacherEstimate(
        value=float(stats.mean()),
        se=float(stats.std(ddof=1) / math.sqrt(draws)),
        draws=draws,
        method="mc",
        symmetrized=symmetrized,
    )


def rademacher_expected(
    cls: HypothesisClass,
    gen: Generator,
    env: LossEnv,
    n: int,
    outer: int = 32,
    start_mode: str = "stationary",
    tol: float = 1e-3,
    seed: SeedSpec = SeedSpec(0),
    mc_draws: int = 4096,
    symmetrized: bool = False,
) -> RademacherEstimate:
    """Complexity averaged over fresh chains, one conditional value per chain.

    ``start_mode`` picks the chain law: ``stationary`` burns in to within
    ``tol`` first, ``point`` starts every chain at the declared z0.
    """
    if start_mode not in ("stationary", "point"):
        raise InvalidInputError(f"start_mode must be 'stationary' or 'point', got {start_mode!r}")
    if not (isinstance(outer, int) and outer >= 2):
        raise InvalidInputError(f"need at least two outer chains, got {outer!r}")
    per_chain = np.empty(outer)
    exact_inner = n <= EXACT_N_CAP
    for i in range(outer):
        stream = derive_stream(seed, i)
        if start_mode == "stationary":
            traj = sample_stationary_chain(gen, n, tol, stream)
        else:
            traj = sample_chain(gen, None, n, stream)
        mat = loss_matrix(cls, traj, env)
        if exact_inner:
            est = rademacher_exact(mat, symmetrized=symmetrized)
        else:
            est = rademacher_mc(mat, mc_draws, derive_stream(stream, 1), symmetrized=symmetrized)
        per_chain[i] = est.value
    return RademacherEstimate(
        value=float(per_chain.mean()),
        se=float(per_chain.std(ddof=1) / math.sqrt(outer)),
        draws=outer,
        method=f"expected_{'exact' if exact_inner else 'mc'}_{start_mode}",
        symmetrized=symmetrized,
    )


def growth_bound(n: int, class_size: int, L_H: float) -> float:
    """Finite-class ceiling L_H * sqrt(2 log r / n); vacuous at r = 1."""
    if not (isinstance(n, int) and n >= 1):
        raise InvalidInputError(f"sample size must be a positive integer, got {n!r}")
    if not (isinstance(class_size, int) and class_size >= 1):
        raise InvalidInputError(f"class size must be a positive integer, got {class_size!r}")
    if not (np.isfinite(L_H) and L_H >= 0):
        raise InvalidInputError(f"L_H must be finite and non-negative, got {L_H!r}")
    return L_H * math.sqrt(2.0 * math.log(class_size) / n)


def vc_bound(n: int, dim: int, L_H: float) -> float:
    """Dimension ceiling L_H * sqrt(2 d log(e n / d) / n) for 1 <= d <= n."""
    if not (isinstance(n, int) and n >= 1):
        raise InvalidInputError(f"sample size must be a positive integer, got {n!r}")
    if not (isinstance(dim, int) and 1 <= dim <= n):
        raise InvalidInputError(f"dimension must be an integer in [1, {n}], got {dim!r}")
    if not (np.isfinite(L_H) and L_H >= 0):
        raise InvalidInputError(f"L_H must be finite and non-negative, got {L_H!r}")
    return L_H * math.sqrt(2.0 * dim * math.log(math.e * n / dim) / n)
