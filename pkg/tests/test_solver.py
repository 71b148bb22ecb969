import numpy as np
import pytest
from scipy import optimize

from fractv.energy import total_energy
from fractv.grid import Grid, ScalarField
from fractv.kernel import KernelSpec, build_pair_weights
from fractv.solver import (
    SolverOptions,
    certificate_check,
    comparison_experiment,
    enumerate_minimizer,
    minimize,
)


def smoothed_minimum_oracle(f, pw, eps=1e-9):
    """Minimize with |t| replaced by sqrt(t^2 + eps^2) via BFGS.

    Independent of both the primal-dual loop and the enumeration; accurate
    to roughly sqrt(eps) in the values.
    """
    hd = f.grid.cell_volume
    fv = f.values
    i, j, w = pw.i, pw.j, pw.w

    def fun(u):
        du = u[j] - u[i]
        sm = np.sqrt(du * du + eps * eps)
        g = np.zeros_like(u)
        slope = w * du / sm
        np.add.at(g, j, slope)
        np.add.at(g, i, -slope)
        g += hd * (u - fv)
        return float(np.sum(w * sm) + 0.5 * hd * np.dot(u - fv, u - fv)), g

    res = optimize.minimize(fun, fv.copy(), jac=True, method="L-BFGS-B",
                            options={"maxiter": 5000, "ftol": 1e-16,
                                     "gtol": 1e-12})
    return res.x


def small_problem(n=5, seed=0, s=0.5):
    g = Grid(shape=(n,), spacing=1.0)
    rng = np.random.default_rng(seed)
    f = ScalarField(g, rng.uniform(-1.0, 1.0, n))
    pw = build_pair_weights(g, KernelSpec(s=s, dim=1, trunc_radius=np.inf))
    return f, pw


def test_two_cell_pinned_example():
    g = Grid(shape=(2,), spacing=1.0)
    f = ScalarField(g, np.array([0.0, 10.0]))
    pw = build_pair_weights(g, KernelSpec(s=0.5, dim=1, trunc_radius=np.inf,
                                          near_field_rule="midpoint"))
    assert pw.n_pairs == 1 and pw.w[0] == 1.0
    res = minimize(f, pw, SolverOptions(gap_tol=1e-14, max_iters=100000,
                                        stat_tol=1e-10))
    np.testing.assert_allclose(res.u.values, [1.0, 9.0], atol=1e-9)
    en = enumerate_minimizer(f, pw)
    np.testing.assert_allclose(en.u.values, [1.0, 9.0], atol=1e-12)
    assert en.certified


def test_enumeration_matches_smoothed_descent():
    for seed in range(4):
        f, pw = small_problem(n=4, seed=seed)
        en = enumerate_minimizer(f, pw)
        ux = smoothed_minimum_oracle(f, pw)
        np.testing.assert_allclose(en.u.values, ux, atol=2e-4)
        assert en.certified


def test_enumeration_rejects_large_grids():
    f, pw = small_problem(n=5)
    with pytest.raises(ValueError):
        enumerate_minimizer(f, pw, max_cells=4)


def test_solver_reaches_enumeration_minimum():
    opts = SolverOptions(gap_tol=1e-14, max_iters=200000, stat_tol=1e-10)
    for seed in range(6):
        f, pw = small_problem(n=5, seed=seed, s=0.3 + 0.2 * (seed % 3))
        out = comparison_experiment(f, pw, opts)
        assert out["sup_diff"] <= 1e-8
        assert out["energy_diff"] >= -1e-12


def test_certificate_on_converged_solve():
    f, pw = small_problem(n=24, seed=3)
    res = minimize(f, pw, SolverOptions(gap_tol=1e-13, max_iters=300000,
                                        stat_tol=1e-9))
    assert res.converged
    rep = certificate_check(res)
    assert rep.max_abs_z <= 1.0
    assert rep.alignment_err <= 1e-6
    assert rep.stationarity_err <= 1e-8
    assert rep.gap <= 1e-12 * (1.0 + abs(res.primal))


def test_plain_and_overrelaxed_agree_with_accel():
    f, pw = small_problem(n=12, seed=1)
    ref = minimize(f, pw, SolverOptions(gap_tol=1e-13, max_iters=400000))
    plain = minimize(f, pw, SolverOptions(gap_tol=1e-13, max_iters=400000,
                                          accel=False))
    relaxed = minimize(f, pw, SolverOptions(gap_tol=1e-13, max_iters=400000,
                                            accel=False, overrelax=1.8))
    np.testing.assert_allclose(plain.u.values, ref.u.values, atol=1e-6)
    np.testing.assert_allclose(relaxed.u.values, ref.u.values, atol=1e-6)
    assert relaxed.iterations <= plain.iterations


def test_solve_2d_small():
    g = Grid(shape=(8, 8), spacing=0.25)
    rng = np.random.default_rng(9)
    f = ScalarField(g, rng.uniform(0.0, 1.0, 64))
    pw = build_pair_weights(g, KernelSpec(s=0.5, dim=2, trunc_radius=1.0))
    res = minimize(f, pw, SolverOptions(gap_tol=1e-12, max_iters=200000))
    assert res.converged
    # maximum principle and positivity
    assert np.max(res.u.values) <= np.max(f.values) + 1e-6
    assert np.min(res.u.values) >= -1e-6
    rep = certificate_check(res)
    assert rep.max_abs_z <= 1.0
    assert rep.alignment_err <= 1e-5


def test_order_preservation_small():
    g = Grid(shape=(16,), spacing=0.5)
    rng = np.random.default_rng(4)
    pw = build_pair_weights(g, KernelSpec(s=0.5, dim=1, trunc_radius=2.0))
    base = rng.uniform(-1.0, 1.0, 16)
    bump = rng.uniform(0.0, 0.5, 16)
    f1 = ScalarField(g, base)
    f2 = ScalarField(g, base + bump)
    opts = SolverOptions(gap_tol=1e-13, max_iters=300000)
    u1 = minimize(f1, pw, opts).u.values
    u2 = minimize(f2, pw, opts).u.values
    assert np.all(u1 <= u2 + 1e-6)


def test_deterministic_runs():
    f, pw = small_problem(n=16, seed=8)
    opts = SolverOptions(gap_tol=1e-12, max_iters=100000)
    a = minimize(f, pw, opts)
    b = minimize(f, pw, opts)
    np.testing.assert_array_equal(a.u.values, b.u.values)
    np.testing.assert_array_equal(a.z.z, b.z.z)
    assert a.iterations == b.iterations


def test_solver_options_validation():
    with pytest.raises(ValueError):
        SolverOptions(gap_tol=0.0)
    with pytest.raises(ValueError):
        SolverOptions(step_ratio=1.5)
    with pytest.raises(ValueError):
        SolverOptions(overrelax=2.0)
    with pytest.raises(ValueError):
        SolverOptions(overrelax=1.5, accel=True)
    with pytest.raises(ValueError):
        SolverOptions(init="warm")


def test_nonconvergence_reports_best_iterate():
    f, pw = small_problem(n=20, seed=2)
    res = minimize(f, pw, SolverOptions(gap_tol=1e-14, max_iters=15))
    assert not res.converged
    assert res.iterations == 15
    assert np.all(np.isfinite(res.u.values))
    assert np.isfinite(res.gap)


def test_jsonl_log(tmp_path):
    import json
    f, pw = small_problem(n=10, seed=5)
    p = tmp_path / "trace.jsonl"
    res = minimize(f, pw, SolverOptions(gap_tol=1e-11, max_iters=100000,
                                        log_every=50, log_path=str(p)))
    lines = [json.loads(x) for x in p.read_text().strip().splitlines()]
    assert len(lines) >= 1
    assert {"iter", "primal", "dual", "gap", "stationarity"} <= set(lines[0])
    gaps = [e["gap"] for e in lines]
    assert gaps[-1] <= gaps[0]
    assert res.history[-1]["gap"] == gaps[-1]
