"""Primal-dual solver for the pair seminorm plus quadratic fidelity.

Saddle form: min_u max_{|z|<=1} sum_p w_p z_p (u_j - u_i) + fidelity(u).
The dual variable z lives on the ordered pair list (i < j); its value on
the reversed pair is -z_p. Optimal z aligns with sign(u_j - u_i) on pairs
with distinct values, and its weighted divergence matches the fidelity
gradient cell by cell, which is the certificate this module checks.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .energy import total_energy
from .grid import ScalarField
from .kernel import PairWeights

__all__ = [
    "SolverOptions",
    "DualField",
    "SolveResult",
    "CertificateReport",
    "EnumerationResult",
    "minimize",
    "certificate_check",
    "enumerate_minimizer",
    "comparison_experiment",
]

_POWER_SEED = 12345


@dataclass(frozen=True)
class SolverOptions:
    max_iters: int = 50000
    gap_tol: float = 1e-10
    step_ratio: float = 0.99
    overrelax: float = 1.0
    accel: bool = False
    init: str = "datum"
    stat_tol: float | None = None
    log_every: int = 0
    log_path: str | None = None
    check_every: int = 10

    def __post_init__(self):
        if not 0.0 < self.gap_tol < 1.0:
            raise ValueError(f"gap_tol must lie in (0, 1), got {self.gap_tol}")
        if not 0.0 < self.step_ratio <= 1.0:
            raise ValueError(f"step_ratio must lie in (0, 1], got {self.step_ratio}")
        if not 1.0 <= self.overrelax < 2.0:
            raise ValueError(f"overrelax must lie in [1, 2), got {self.overrelax}")
        if self.overrelax != 1.0 and self.accel:
            raise ValueError("overrelaxation requires accel=False")
        if self.init not in ("datum", "zero"):
            raise ValueError(f"init must be 'datum' or 'zero', got {self.init!r}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")


@dataclass(frozen=True)
class DualField:
    """Dual certificate on the pair list; antisymmetric by construction."""

    pw: PairWeights
    z: np.ndarray = field(repr=False)

    def divergence(self) -> np.ndarray:
        """Weighted net outflow per cell: sum_j w_ij z_ij."""
        pw = self.pw
        wz = pw.w * self.z
        n = pw.grid.n_cells
        return (np.bincount(pw.i, weights=wz, minlength=n)
                - np.bincount(pw.j, weights=wz, minlength=n))


@dataclass(frozen=True)
class SolveResult:
    u: ScalarField
    z: DualField
    f: ScalarField
    iterations: int
    converged: bool
    primal: float
    dual: float
    gap: float
    stationarity: float
    history: list = field(repr=False, default_factory=list)

    def sup_error_bound(self) -> float:
        """A posteriori bound on |u - minimizer|_inf from the gap."""
        return math.sqrt(max(2.0 * self.gap / self.u.grid.cell_volume, 0.0))


@dataclass(frozen=True)
class CertificateReport:
    max_abs_z: float
    alignment_err: float
    active_pairs: int
    stationarity_err: float
    gap: float

    def bounded(self) -> bool:
        return self.max_abs_z <= 1.0


def operator_norm(pw: PairWeights, n_iters: int = 80) -> float:
    """Norm of the weighted difference map, by seeded power iteration."""
    rng = np.random.default_rng(_POWER_SEED)
    n = pw.grid.n_cells
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(n_iters):
        q = pw.w * (v[pw.j] - v[pw.i])
        wq = pw.w * q
        av = (np.bincount(pw.j, weights=wq, minlength=n)
              - np.bincount(pw.i, weights=wq, minlength=n))
        lam = float(np.linalg.norm(av))
        if lam == 0.0:
            return 1.0
        v = av / lam
    # slight inflation keeps tau*sigma*L^2 strictly under 1
    return math.sqrt(lam) * 1.01


def _primal_value(u, fv, w, i, j, hd) -> float:
    du = u[j] - u[i]
    diff = u - fv
    return float(np.sum(w * np.abs(du)) + 0.5 * hd * np.dot(diff, diff))


def _dual_value(div, fv, hd) -> float:
    return float(-np.dot(div, fv) - 0.5 * np.dot(div, div) / hd)


def minimize(f: ScalarField, pw: PairWeights,
             opts: SolverOptions = SolverOptions()) -> SolveResult:
    """Run the primal-dual iteration until the duality gap closes.

    Stops when gap <= gap_tol * (1 + |primal|), and additionally (when
    stat_tol is set) when the cell-wise stationarity residual
    |div(z) - (u - f) h^d|_inf falls under stat_tol.
    """
    if f.grid != pw.grid:
        raise ValueError("grid mismatch between datum and pair weights")
    grid = f.grid
    n = grid.n_cells
    hd = grid.cell_volume
    fv = f.values
    i_, j_, w_ = pw.i, pw.j, pw.w

    L = operator_norm(pw)
    tau = opts.step_ratio / L
    sigma = opts.step_ratio / L
    rho = opts.overrelax
    gamma = hd

    u = fv.copy() if opts.init == "datum" else np.zeros(n)
    z = np.zeros(pw.n_pairs)
    ubar = u.copy()

    log_fh = open(opts.log_path, "w") if opts.log_path else None
    history: list = []
    converged = False
    it = 0
    primal = dual = gap = stat = math.nan
    try:
        while it < opts.max_iters:
            it += 1
            if opts.accel:
                z = np.clip(z + sigma * w_ * (ubar[j_] - ubar[i_]), -1.0, 1.0)
                wz = w_ * z
                div = (np.bincount(i_, weights=wz, minlength=n)
                       - np.bincount(j_, weights=wz, minlength=n))
                u_new = (u + tau * div + tau * hd * fv) / (1.0 + tau * hd)
                theta = 1.0 / math.sqrt(1.0 + 2.0 * gamma * tau)
                tau *= theta
                sigma /= theta
                ubar = u_new + theta * (u_new - u)
                u = u_new
            else:
                wz = w_ * z
                div = (np.bincount(i_, weights=wz, minlength=n)
                       - np.bincount(j_, weights=wz, minlength=n))
                u_hat = (u + tau * div + tau * hd * fv) / (1.0 + tau * hd)
                v = 2.0 * u_hat - u
                z_hat = np.clip(z + sigma * w_ * (v[j_] - v[i_]), -1.0, 1.0)
                u = u + rho * (u_hat - u)
                z = z + rho * (z_hat - z)

            if it % opts.check_every == 0 or it == opts.max_iters:
                wz = w_ * z
                div = (np.bincount(i_, weights=wz, minlength=n)
                       - np.bincount(j_, weights=wz, minlength=n))
                primal = _primal_value(u, fv, w_, i_, j_, hd)
                dual = _dual_value(div, fv, hd)
                gap = primal - dual
                stat = float(np.max(np.abs(div - hd * (u - fv))))
                entry = {"iter": it, "primal": primal, "dual": dual,
                         "gap": gap, "stationarity": stat}
                if opts.log_every and (it % opts.log_every == 0
                                       or it == opts.max_iters):
                    history.append(entry)
                    if log_fh:
                        log_fh.write(json.dumps(entry) + "\n")
                if gap <= opts.gap_tol * (1.0 + abs(primal)) and (
                        opts.stat_tol is None or stat <= opts.stat_tol):
                    converged = True
                    if not history or history[-1]["iter"] != it:
                        history.append(entry)
                        if log_fh and opts.log_every:
                            log_fh.write(json.dumps(entry) + "\n")
                    break
    finally:
        if log_fh:
            log_fh.close()

    return SolveResult(
        u=ScalarField(grid, u),
        z=DualField(pw, z),
        f=f,
        iterations=it,
        converged=converged,
        primal=primal,
        dual=dual,
        gap=gap,
        stationarity=stat,
        history=history,
    )


def certificate_check(result: SolveResult,
                      active_rtol: float = 1e-9) -> CertificateReport:
    """Optimality certificate of a solve from the dual variable.

    Alignment is checked on active pairs only: |u_i - u_j| above
    active_rtol * max(1, |u|_inf).
    """
    pw = result.z.pw
    u = result.u.values
    z = result.z.z
    du = u[pw.j] - u[pw.i]
    thresh = active_rtol * max(1.0, float(np.max(np.abs(u))))
    active = np.abs(du) > thresh
    if np.any(active):
        align = float(np.max(np.abs(z[active] - np.sign(du[active]))))
    else:
        align = 0.0
    div = result.z.divergence()
    hd = result.u.grid.cell_volume
    stat = float(np.max(np.abs(div - hd * (u - result.f.values))))
    return CertificateReport(
        max_abs_z=float(np.max(np.abs(z))) if z.size else 0.0,
        alignment_err=align,
        active_pairs=int(np.sum(active)),
        stationarity_err=stat,
        gap=result.gap,
    )


@dataclass(frozen=True)
class EnumerationResult:
    u: ScalarField
    energy: float
    certified: bool


def _set_partitions(items: list):
    """All partitions of a list into nonempty blocks."""
    if len(items) == 1:
        yield [items]
        return
    first, rest = items[0], items[1:]
    for smaller in _set_partitions(rest):
        for k in range(len(smaller)):
            yield smaller[:k] + [[first] + smaller[k]] + smaller[k + 1:]
        yield [[first]] + smaller


def enumerate_minimizer(f: ScalarField, pw: PairWeights,
                        max_cells: int = 7) -> EnumerationResult:
    """Exact minimizer on tiny grids by exhausting level-group patterns.

    Every minimizer groups cells by shared value; for a fixed ordered
    grouping the optimal group values solve a linear stationarity relation
    in closed form. The minimum over all order-consistent groupings is the
    global minimizer; a linear feasibility problem for the within-group
    dual entries certifies it.
    """
    if f.grid != pw.grid:
        raise ValueError("grid mismatch between datum and pair weights")
    n = f.grid.n_cells
    if n > max_cells:
        raise ValueError(f"enumeration supports up to {max_cells} cells, got {n}")
    hd = f.grid.cell_volume
    fv = f.values
    i_, j_, w_ = pw.i, pw.j, pw.w

    best_energy = math.inf
    best_u = None
    best_labels = None
    for blocks in _set_partitions(list(range(n))):
        m = len(blocks)
        sizes = np.array([len(b) for b in blocks], dtype=float)
        means = np.array([fv[b].mean() for b in blocks])
        base = np.empty(n, dtype=np.int64)
        for g, b in enumerate(blocks):
            base[b] = g
        for order in itertools.permutations(range(m)):
            # rank[g] = position of block g from lowest value to highest
            rank = np.empty(m, dtype=np.int64)
            for pos, g in enumerate(order):
                rank[g] = pos
            lab = rank[base]
            li, lj = lab[i_], lab[j_]
            cross = li != lj
            # weight into higher/lower groups, per position
            w_above = np.bincount(
                np.concatenate([li[cross & (li < lj)], lj[cross & (lj < li)]]),
                weights=np.concatenate([w_[cross & (li < lj)],
                                        w_[cross & (lj < li)]]),
                minlength=m)
            w_below = np.bincount(
                np.concatenate([li[cross & (li > lj)], lj[cross & (lj > li)]]),
                weights=np.concatenate([w_[cross & (li > lj)],
                                        w_[cross & (lj > li)]]),
                minlength=m)
            sizes_pos = np.bincount(rank, weights=sizes, minlength=m)
            means_pos = np.zeros(m)
            means_pos[rank] = means
            v = means_pos + (w_above - w_below) / (hd * sizes_pos)
            if np.any(np.diff(v) <= 0.0):
                continue
            u = v[lab]
            du = u[j_] - u[i_]
            diff = u - fv
            energy = float(np.sum(w_ * np.abs(du))
                           + 0.5 * hd * np.dot(diff, diff))
            if energy < best_energy:
                best_energy = energy
                best_u = u
                best_labels = lab.copy()

    if best_u is None:
        raise RuntimeError("no value-ordered grouping found")
    certified = _certify_grouping(best_u, best_labels, fv, pw, hd)
    return EnumerationResult(
        u=ScalarField(f.grid, best_u),
        energy=best_energy,
        certified=certified,
    )


def _certify_grouping(u, lab, fv, pw, hd) -> bool:
    """Feasibility of within-group dual entries for the stationarity relation."""
    i_, j_, w_ = pw.i, pw.j, pw.w
    n = u.size
    du = u[j_] - u[i_]
    within = lab[i_] == lab[j_]
    signed = np.where(within, 0.0, np.sign(du)) * w_
    cross_sum = (np.bincount(i_, weights=signed, minlength=n)
                 - np.bincount(j_, weights=signed, minlength=n))
    b = hd * (u - fv) - cross_sum
    cols = np.flatnonzero(within)
    if cols.size == 0:
        return bool(np.max(np.abs(b)) <= 1e-9)
    A = np.zeros((n, cols.size))
    A[i_[cols], np.arange(cols.size)] = w_[cols]
    A[j_[cols], np.arange(cols.size)] = -w_[cols]
    res = linprog(c=np.zeros(cols.size), A_eq=A, b_eq=b,
                  bounds=[(-1.0, 1.0)] * cols.size, method="highs")
    return bool(res.status == 0)


def comparison_experiment(f: ScalarField, pw: PairWeights,
                          opts: SolverOptions = SolverOptions()) -> dict:
    """Solve and cross-check against the enumeration minimizer."""
    result = minimize(f, pw, opts)
    oracle = enumerate_minimizer(f, pw)
    sup_diff = float(np.max(np.abs(result.u.values - oracle.u.values)))
    solver_energy = total_energy(result.u, f, pw).total
    return {
        "solver": result,
        "oracle": oracle,
        "sup_diff": sup_diff,
        "solver_energy": solver_energy,
        "oracle_energy": oracle.energy,
        "energy_diff": solver_energy - oracle.energy,
    }
