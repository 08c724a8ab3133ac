"""Exact transport distance between finite state measures.

The order-1 transport cost between two atom lists is solved exactly: equal
atom counts with uniform weights reduce to an assignment problem, anything
else to the transportation linear program. A permutation brute force is kept
as an independent oracle for tiny instances, and a Kantorovich-Rubinstein
dual evaluator gives certified lower bounds from 1-Lipschitz probe functions.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment, linprog
from scipy.sparse import coo_matrix

from .errors import InvalidInputError, SizeCapError
from .metric import MetricSpec, SeedSpec, ZPoint, dist, pairwise_dist

ATOM_CAP = 2000
_MARGINAL_TOL = 1e-9
_LIP_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    """Finitely supported measure: atoms with positive weights summing to one."""

    atoms: tuple
    weights: np.ndarray
    metric: MetricSpec

    def __post_init__(self):
        atoms = tuple(self.atoms)
        if not atoms:
            raise InvalidInputError("empirical measure needs at least one atom")
        for a in atoms:
            if not isinstance(a, ZPoint):
                raise InvalidInputError("empirical measure atoms must be ZPoint values")
            self.metric.check_point(a)
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if w.shape[0] != len(atoms):
            raise InvalidInputError("empirical measure needs one weight per atom")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise InvalidInputError("empirical measure weights must be finite and positive")
        if abs(float(w.sum()) - 1.0) > 1e-12:
            raise InvalidInputError(
                f"empirical measure weights must sum to 1 within 1e-12, got {float(w.sum())!r}"
            )
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, atoms: Sequence[ZPoint], metric: MetricSpec) -> "EmpiricalMeasure":
        k = len(atoms)
        return cls(tuple(atoms), np.full(k, 1.0 / k), metric)

    def __len__(self) -> int:
        return len(self.atoms)

    def stacked(self) -> tuple[np.ndarray, np.ndarray]:
        xs = np.stack([a.x for a in self.atoms])
        ys = np.stack([a.y for a in self.atoms])
        return xs, ys

    def integrate(self, fn: Callable[[ZPoint], float]) -> float:
        return float(sum(w * fn(a) for w, a in zip(self.weights, self.atoms)))

    def is_uniform(self) -> bool:
        return bool(np.all(np.abs(self.weights - 1.0 / len(self)) <= 1e-12))


@dataclass(frozen=True)
class TransportPlan:
    """Sparse coupling: (source index, target index, mass) triples plus cost."""

    entries: tuple
    cost: float

    def masses(self, n1: int, n2: int) -> np.ndarray:
        mat = np.zeros((n1, n2))
        for i, j, m in self.entries:
            mat[i, j] += m
        return mat

    def transpose(self) -> "TransportPlan":
        return TransportPlan(tuple((j, i, m) for i, j, m in self.entries), self.cost)


def _cost_matrix(mu1: EmpiricalMeasure, mu2: EmpiricalMeasure) -> np.ndarray:
    if mu1.metric != mu2.metric:
        raise InvalidInputError("transport needs both measures on the same declared metric")
    xs1, ys1 = mu1.stacked()
    xs2, ys2 = mu2.stacked()
    return pairwise_dist(xs1, ys1, xs2, ys2, mu1.metric)


def _canonical_key(mu: EmpiricalMeasure) -> tuple:
    xs, ys = mu.stacked()
    return (len(mu), xs.tobytes(), ys.tobytes(), mu.weights.tobytes())


def _validate_plan(plan: TransportPlan, mu1, mu2, cost_mat) -> None:
    mat = plan.masses(len(mu1), len(mu2))
    if np.max(np.abs(mat.sum(axis=1) - mu1.weights)) > _MARGINAL_TOL:
        raise InvalidInputError("transport plan violates the source marginal beyond 1e-9")
    if np.max(np.abs(mat.sum(axis=0) - mu2.weights)) > _MARGINAL_TOL:
        raise InvalidInputError("transport plan violates the target marginal beyond 1e-9")
    recomputed = float(np.sum(mat * cost_mat))
    if abs(recomputed - plan.cost) > _MARGINAL_TOL:
        raise InvalidInputError("transport plan cost disagrees with its entries beyond 1e-9")


def _solve_assignment(cost: np.ndarray) -> TransportPlan:
    n = cost.shape[0]
    rows, cols = linear_sum_assignment(cost)
    total = float(cost[rows, cols].sum()) / n
    entries = tuple((int(i), int(j), 1.0 / n) for i, j in zip(rows, cols))
    return TransportPlan(entries, total)


def _solve_lp(cost: np.ndarray, w1: np.ndarray, w2: np.ndarray) -> TransportPlan:
    n1, n2 = cost.shape
    # transportation LP: row sums w1, column sums w2 (last column dropped as redundant)
    row_idx = np.repeat(np.arange(n1), n2)
    col_idx = np.tile(np.arange(n2), n1)
    var = np.arange(n1 * n2)
    rows = np.concatenate([row_idx, n1 + col_idx])
    cols = np.concatenate([var, var])
    data = np.ones(2 * n1 * n2)
    keep = rows < n1 + n2 - 1
    a_eq = coo_matrix((data[keep], (rows[keep], cols[keep])), shape=(n1 + n2 - 1, n1 * n2))
    b_eq = np.concatenate([w1, w2[:-1]])
    res = linprog(
        cost.ravel(),
        A_eq=a_eq.tocsr(),
        b_eq=b_eq,
        bounds=(0, None),
        method="highs",
        options={
            "primal_feasibility_tolerance": 1e-10,
            "dual_feasibility_tolerance": 1e-10,
        },
    )
    if res.status != 0:
        raise InvalidInputError(f"transport LP did not solve cleanly: {res.message}")
    flow = res.x.reshape(n1, n2)
    entries = tuple(
        (int(i), int(j), float(flow[i, j]))
        for i, j in zip(*np.nonzero(flow > 1e-14))
    )
    return TransportPlan(entries, max(float(res.fun), 0.0))


def w1_exact(
    mu1: EmpiricalMeasure, mu2: EmpiricalMeasure, atom_cap: int = ATOM_CAP
) -> tuple[float, TransportPlan]:
    """Exact order-1 transport cost and an optimal plan.

    Arguments are first put in a canonical order (by a deterministic byte key)
    so the returned cost is exactly symmetric in the two measures.
    """
    if len(mu1) + len(mu2) > atom_cap:
        raise SizeCapError(
            f"combined atom count {len(mu1) + len(mu2)} exceeds the exact-solve cap "
            f"{atom_cap}; thin the measures first"
        )
    if _canonical_key(mu2) < _canonical_key(mu1):
        cost, plan = w1_exact(mu2, mu1, atom_cap)
        return cost, plan.transpose()
    cost_mat = _cost_matrix(mu1, mu2)
    if len(mu1) == len(mu2) and mu1.is_uniform() and mu2.is_uniform():
        plan = _solve_assignment(cost_mat)
    else:
        plan = _solve_lp(cost_mat, mu1.weights, mu2.weights)
    _validate_plan(plan, mu1, mu2, cost_mat)
    return plan.cost, plan


def w1_bruteforce(mu1: EmpiricalMeasure, mu2: EmpiricalMeasure) -> float:
    """Permutation-enumeration oracle for equal-size uniform measures (n <= 8)."""
    n = len(mu1)
    if len(mu2) != n:
        raise InvalidInputError("brute force needs equal atom counts")
    if n > 8:
        raise SizeCapError("brute force enumerates n! matchings; n must be at most 8")
    if not (mu1.is_uniform() and mu2.is_uniform()):
        raise InvalidInputError("brute force needs uniform weights on both sides")
    cost = _cost_matrix(mu1, mu2)
    perms = np.array(list(itertools.permutations(range(n))))
    totals = cost[np.arange(n)[None, :], perms].sum(axis=1)
    return float(totals.min()) / n


def kr_dual_lower_bound(
    mu1: EmpiricalMeasure,
    mu2: EmpiricalMeasure,
    probe_functions: Sequence[Callable[[ZPoint], float]],
    spec: MetricSpec | None = None,
    max_check_pairs: int = 4096,
) -> float:
    """Duality lower bound max_f |mu1(f) - mu2(f)| over 1-Lipschitz probes.

    Each probe is spot-verified on a deterministic subsample of atom pairs;
    a violation beyond 1e-9 rejects the probe rather than returning a bogus
    bound. By weak duality the result never exceeds the exact cost.
    """
    spec = spec if spec is not None else mu1.metric
    atoms = list(mu1.atoms) + list(mu2.atoms)
    pairs = [(i, j) for i in range(len(atoms)) for j in range(i + 1, len(atoms))]
    if len(pairs) > max_check_pairs:
        stride = len(pairs) // max_check_pairs + 1
        pairs = pairs[::stride]
    best = 0.0
    for k, fn in enumerate(probe_functions):
        vals = [float(fn(a)) for a in atoms]
        if not all(np.isfinite(vals)):
            raise InvalidInputError(f"probe {k} returned a non-finite value")
        for i, j in pairs:
            gap = abs(vals[i] - vals[j])
            allowed = dist(atoms[i], atoms[j], spec) * (1.0 + _LIP_TOL) + _LIP_TOL
            if gap > allowed:
                raise InvalidInputError(
                    f"probe {k} is not 1-Lipschitz: |f(z)-f(zbar)| = {gap!r} exceeds "
                    f"the distance at atom pair ({i}, {j})"
                )
        m1 = mu1.integrate(fn)
        m2 = mu2.integrate(fn)
        best = max(best, abs(m1 - m2))
    return best


def distance_probes(anchors: Sequence[ZPoint], spec: MetricSpec) -> list:
    """Distance-to-anchor probes f = d(., a); 1-Lipschitz by the triangle inequality."""

    def make(a: ZPoint):
        return lambda z: dist(z, a, spec)

    return [make(a) for a in anchors]


def contraction_curve(
    gen,
    mu0_atoms: Sequence[ZPoint],
    n_max: int,
    atoms_per_step: int = 128,
    pi_tol: float = 1e-3,
    seed: SeedSpec = SeedSpec(0),
) -> list[tuple[int, float]]:
    """Transport distance to a frozen plug-in invariant measure after n steps.

    A reference measure is built from ``atoms_per_step`` independent chains
    run past the burn-in horizon. The pushed cloud for curve point n replays
    the final n draws of its paired reference chain (common random numbers):
    each pushed atom is still an honest n-step chain sample from mu0, while
    the pairing realizes the pathwise contraction, so the curve tracks the
    geometric rate instead of the finite-atom sampling floor.
    """
    from .generators import _chain_bundle, burn_in_steps

    if not (isinstance(n_max, int) and n_max >= 0):
        raise InvalidInputError(f"n_max must be a non-negative integer, got {n_max!r}")
    if not mu0_atoms:
        raise InvalidInputError("contraction curve needs at least one start atom")
    for a in mu0_atoms:
        gen.metric.check_point(a)
    horizon = max(burn_in_steps(gen, pi_tol), n_max)
    _, draw_idx, finals = _chain_bundle(gen, horizon, atoms_per_step, seed)
    pi_hat = EmpiricalMeasure.uniform(finals, gen.metric)
    starts = [mu0_atoms[i % len(mu0_atoms)] for i in range(atoms_per_step)]
    curve = []
    for n in range(n_max + 1):
        pushed = []
        for i, start in enumerate(starts):
            x, y = start.x, start.y
            for t in range(horizon - n, horizon):
                x, y = gen._apply(x, int(draw_idx[i, t]))
            pushed.append(ZPoint(x, y))
        value, _ = w1_exact(EmpiricalMeasure.uniform(pushed, gen.metric), pi_hat)
        curve.append((n, value))
    return curve
