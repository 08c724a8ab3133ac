"""Empirical risk minimization over a finite class, with a slack knob.

The learner scans the class in declared order, so every selection is a pure
function of (class order, losses, epsilon, tie rule). Two tie rules exist:
``lowest_index`` returns the lowest-index member of the feasible set
{risk <= min + epsilon}, which is the canonical slack-respecting pick;
``first_found`` ignores the slack for selection and returns the first exact
minimizer, modelling an idealized learner whose slack is bookkeeping only.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InvalidInputError
from .generators import (
    Generator,
    Trajectory,
    analytic_lip_factor,
    burn_in_steps,
    exact_fixed_point,
    sample_stationary_chain,
)
from .hypotheses import Hypothesis, HypothesisClass, LossEnv, loss_at, window_loss_values
from .metric import SeedSpec, derive_stream

TIE_RULES = ("lowest_index", "first_found")


def _window_arrays(traj: Trajectory, window: Optional[tuple]) -> tuple[np.ndarray, np.ndarray, tuple]:
    if window is None:
        window = (0, len(traj))
    start, stop = window
    if not (isinstance(start, int) and isinstance(stop, int) and 0 <= start < stop <= len(traj)):
        raise InvalidInputError(
            f"window {window!r} out of range for a length-{len(traj)} trajectory"
        )
    return traj.xs[start:stop], traj.ys[start:stop], (start, stop)


def empirical_risks(
    cls: HypothesisClass, traj: Trajectory, env: LossEnv, window: Optional[tuple] = None
) -> np.ndarray:
    """Per-hypothesis mean loss over the trajectory window."""
    xs, ys, _ = _window_arrays(traj, window)
    return window_loss_values(cls, xs, ys, env).mean(axis=1)


def empirical_risk(
    h: Hypothesis, traj: Trajectory, env: LossEnv, window: Optional[tuple] = None
) -> float:
    xs, ys, _ = _window_arrays(traj, window)
    return float(window_loss_values(HypothesisClass((h,)), xs, ys, env).mean())


@dataclass(frozen=True)
class RiskReport:
    """Everything needed to audit one selection after the fact."""

    hypothesis_id: str
    hypothesis_index: int
    empirical_risk: float
    min_risk: float
    achieved_gap: float
    epsilon: float
    tie_break: str
    window: tuple
    risk_table: tuple  # ((hid, risk), ...) in class order


def erm(
    cls: HypothesisClass,
    traj: Trajectory,
    env: LossEnv,
    epsilon: float = 0.0,
    tie_break: str = "lowest_index",
    window: Optional[tuple] = None,
) -> RiskReport:
    """Exhaustive slack-aware minimization; deterministic given the class order."""
    if tie_break not in TIE_RULES:
        raise InvalidInputError(f"tie_break must be one of {TIE_RULES}, got {tie_break!r}")
    if not (np.isfinite(epsilon) and epsilon >= 0):
        raise InvalidInputError(f"epsilon must be finite and non-negative, got {epsilon!r}")
    xs, ys, win = _window_arrays(traj, window)
    risks = window_loss_values(cls, xs, ys, env).mean(axis=1)
    min_risk = float(risks.min())
    if tie_break == "first_found":
        chosen = int(np.flatnonzero(risks == min_risk)[0])
    else:
        chosen = int(np.flatnonzero(risks <= min_risk + epsilon)[0])
    risk = float(risks[chosen])
    return RiskReport(
        hypothesis_id=cls.members[chosen].hid,
        hypothesis_index=chosen,
        empirical_risk=risk,
        min_risk=min_risk,
        achieved_gap=risk - min_risk,
        epsilon=float(epsilon),
        tie_break=tie_break,
        window=win,
        risk_table=tuple((h.hid, float(r)) for h, r in zip(cls.members, risks)),
    )


@dataclass(frozen=True)
class RiskEstimate:
    """Risk under the invariant law with its uncertainty; closed forms carry
    zero se. ``bias_bound`` covers the systematic burn-in error of ergodic
    estimates: every recorded state's law sits within the burn-in tolerance
    of the invariant one, so the mean loss is off by at most ell_H times it."""

    value: float
    se: float
    method: str
    bias_bound: float = 0.0


RISK_MODES = ("auto", "exact", "ergodic")


def _resolve_mode(mode: str, gen: Generator) -> str:
    if mode not in RISK_MODES:
        raise InvalidInputError(f"mode must be one of {RISK_MODES}, got {mode!r}")
    has_closed_form = gen.variant in ("iid", "deterministic_map")
    if mode == "auto":
        return "exact" if has_closed_form else "ergodic"
    if mode == "exact" and not has_closed_form:
        raise InvalidInputError(
            f"variant {gen.variant!r} has no closed-form invariant law; use ergodic mode"
        )
    return mode


def true_risk_table(
    cls: HypothesisClass,
    gen: Generator,
    env: LossEnv,
    mode: str = "auto",
    replicas: int = 32,
    run_length: int = 256,
    tol: float = 1e-3,
    seed: SeedSpec = SeedSpec(0),
) -> tuple[RiskEstimate, ...]:
    """Invariant-law risk of every class member, in class order.

    Ergodic estimates share the same replica chains across the class, so
    differences between members are not polluted by sampling noise.
    """
    resolved = _resolve_mode(mode, gen)
    if resolved == "exact":
        if gen.variant == "iid":
            xs = np.stack([a.x for a in gen.theta.atoms])
            ys = np.stack([a.y for a in gen.theta.atoms])
            rows = window_loss_values(cls, xs, ys, env)
            return tuple(
                RiskEstimate(value=float(r @ gen.theta.weights), se=0.0, method="atom_expectation")
                for r in rows
            )
        z_star = exact_fixed_point(gen)
        return tuple(
            RiskEstimate(value=loss_at(env, h, z_star), se=0.0, method="fixed_point")
            for h in cls.members
        )
    if not np.isfinite(env.ell_H):
        raise InvalidInputError("ergodic risk needs a finalized loss environment")
    means = _replica_means(cls, gen, env, replicas, run_length, tol, seed)
    bias = env.ell_H * analytic_lip_factor(gen) ** burn_in_steps(gen, tol)
    return tuple(
        RiskEstimate(
            value=float(m.mean()),
            se=float(m.std(ddof=1) / np.sqrt(replicas)),
            method="ergodic_mc",
            bias_bound=bias,
        )
        for m in means
    )


def true_risk(
    h: Hypothesis,
    gen: Generator,
    env: LossEnv,
    mode: str = "auto",
    replicas: int = 32,
    run_length: int = 256,
    tol: float = 1e-3,
    seed: SeedSpec = SeedSpec(0),
) -> RiskEstimate:
    return true_risk_table(
        HypothesisClass((h,)), gen, env, mode, replicas, run_length, tol, seed
    )[0]


def _replica_means(
    cls: HypothesisClass, gen: Generator, env: LossEnv,
    replicas: int, run_length: int, tol: float, seed: SeedSpec,
) -> np.ndarray:
    """Per-replica mean losses, shaped (class size, replicas); chains are shared
    across the class so comparisons see the same randomness."""
    if not (isinstance(replicas, int) and replicas >= 2):
        raise InvalidInputError(f"need at least two replicas, got {replicas!r}")
    if not (isinstance(run_length, int) and run_length >= 1):
        raise InvalidInputError(f"run_length must be a positive integer, got {run_length!r}")
    out = np.empty((len(cls), replicas))
    for r in range(replicas):
        traj = sample_stationary_chain(gen, run_length, tol, derive_stream(seed, r))
        out[:, r] = window_loss_values(cls, traj.xs, traj.ys, env).mean(axis=1)
    return out


def opt_risk(
    cls: HypothesisClass,
    gen: Generator,
    env: LossEnv,
    mode: str = "auto",
    replicas: int = 32,
    run_length: int = 256,
    tol: float = 1e-3,
    seed: SeedSpec = SeedSpec(0),
) -> tuple[str, RiskEstimate]:
    """Best invariant-law risk over the class, lowest index on ties."""
    table = true_risk_table(cls, gen, env, mode, replicas, run_length, tol, seed)
    values = np.array([e.value for e in table])
    best = int(np.flatnonzero(values == values.min())[0])
    return cls.members[best].hid, table[best]
