"""Acceptance checks, one test per criterion.

Each test records a PASS/FAIL line (printed in the terminal summary) before
asserting. The long transients run once per module and are shared.
"""

import time

import numpy as np
import pytest

from spindd import diagnostics as dg
from spindd import grid_solver as gs
from spindd import kernels, pauli
from spindd.device import build_model, paper_device
from spindd.formulations import coercivity_eigenvalues, coercivity_matrix, decompose, to_updown


def _unit_vectors(rng, n):
    m = rng.normal(size=(n, 3))
    return m / np.linalg.norm(m, axis=1)[:, None]


def _steady(p, mode, grid_points=180):
    model = build_model(paper_device(p).with_(grid_points=grid_points))
    s = gs.SolverSettings()
    state, V = gs.solve_steady(model, s, gs.LINEAR_POTENTIAL)
    if mode == gs.SELF_CONSISTENT:
        state, V = gs.solve_steady(model, s, gs.SELF_CONSISTENT, state_guess=state)
    return model, state, V


@pytest.fixture(scope="module")
def paper_transient():
    """Paper-default biased self-consistent transient, run to steady state."""
    model = build_model(paper_device())
    axis = model.axis
    track = {"min": np.inf, "max": -np.inf, "n12": 0.0, "perp": 0.0}

    def hook(step, state, potential, rec):
        ud = to_updown(state, axis)
        track["min"] = min(track["min"], ud.n_plus.min(), ud.n_minus.min())
        track["max"] = max(track["max"], ud.n_plus.max(), ud.n_minus.max())
        track["n12"] = max(track["n12"], np.abs(state.n_vec[:, :2]).max())
        track["perp"] = max(track["perp"], np.linalg.norm(decompose(state, axis).n_perp, axis=-1).max())

    t0 = time.perf_counter()
    tr = gs.run_transient(model, gs.SolverSettings(), hooks=(hook,), sample_j1=False, record_every=1000)
    track["seconds"] = time.perf_counter() - t0
    return tr, track


@pytest.fixture(scope="module")
def entropy_transient():
    """Zero bias, n0 = 1, n_vec = 0, V = 0 initially; up to 500 ps."""
    model = build_model(paper_device().with_(U=0.0))
    settings = gs.SolverSettings(max_time=500e-12 / model.config.tau)
    t0 = time.perf_counter()
    tr = gs.run_transient(
        model, settings, V0=np.zeros(model.n_nodes), initial_potential_kind="zero", sample_j1=False
    )
    return tr, time.perf_counter() - t0


def test_criterion_01_pauli_product(report):
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    err = 0.0
    for _ in range(1000):
        b = pauli.PauliCoeffs(rng.normal() + 1j * rng.normal(), rng.normal(size=3) + 1j * rng.normal(size=3))
        c = pauli.PauliCoeffs(rng.normal() + 1j * rng.normal(), rng.normal(size=3) + 1j * rng.normal(size=3))
        dense = pauli.assemble(b) @ pauli.assemble(c)
        err = max(err, np.abs(pauli.assemble(pauli.pauli_product(b, c)) - dense).max())
    dt = time.perf_counter() - t0
    ok = report(1, err <= 1e-12 and dt < 1.0, f"Pauli product: max entry error {err:.2e}, {dt:.3f} s")
    assert ok


def test_criterion_02_eigenvalues(report):
    rng = np.random.default_rng(102)
    n0 = rng.uniform(-3, 3, 1000)
    nv = rng.normal(size=(1000, 3))
    lp, lm = pauli.eigenvalues(n0, nv)
    err = 0.0
    for k in range(1000):
        N = 0.5 * n0[k] * pauli.SIGMA0 + np.tensordot(nv[k], pauli.SIGMA, axes=1)
        ref = np.linalg.eigvalsh(N)
        err = max(err, abs(ref[0] - lm[k]), abs(ref[1] - lp[k]))
    ok = report(2, err <= 1e-12, f"spectral oracle: max eigenvalue error {err:.2e} over 1000 states")
    assert ok


def test_criterion_03_p_inv_sqrt(report):
    rng = np.random.default_rng(103)
    err = 0.0
    for p, m in zip(rng.uniform(0, 0.99, 100), _unit_vectors(rng, 100)):
        c = pauli.p_inv_sqrt(p, m)
        R = c.p_plus * pauli.SIGMA0 - c.p_minus * np.tensordot(m, pauli.SIGMA, axes=1)
        Pinv = np.linalg.inv(pauli.polarization_matrix(p, m))
        err = max(err, np.abs(R @ R - Pinv).max())
    ok = report(3, err <= 1e-12, f"P^(-1/2) squared vs P^(-1): max entry error {err:.2e}")
    assert ok


def test_criterion_04_coercivity(report):
    err, lam_min = 0.0, np.inf
    for eta in np.round(np.arange(0.05, 1.0001, 0.05), 10):
        lp, lm = coercivity_eigenvalues(eta)
        ref = np.linalg.eigvalsh(coercivity_matrix(eta))
        err = max(err, abs(ref[0] - lm), abs(ref[1] - lp))
        lam_min = min(lam_min, lm)
    ok = report(4, err <= 1e-13 and lam_min > 0, f"coercivity: max error {err:.2e}, min lambda_- {lam_min:.3e}")
    assert ok


def test_criterion_05_full_vs_reduced(report):
    model = build_model(paper_device())
    s = gs.SolverSettings()
    t0 = time.perf_counter()
    tr = gs.run_transient(model, s, max_steps=2000, stop_at_steady=False, sample_j1=False, record_every=2000)
    red = gs.run_reduced_updown(model, s, n_steps=2000, keep_every=2000)
    dt = time.perf_counter() - t0
    ud = to_updown(tr.state, model.axis)
    err = max(np.abs(ud.n_plus - red.fields[-1].n_plus).max(), np.abs(ud.n_minus - red.fields[-1].n_minus).max())
    ok = report(5, err <= 1e-8 and dt < 60.0, f"full vs reduced after 2000 steps: sup diff {err:.2e}, {dt:.1f} s")
    assert ok


def test_criterion_06_positivity_and_bound(report, paper_transient):
    tr, track = paper_transient
    cap = tr.M_bound * (1 + 1e-8)
    ok = report(
        6,
        track["min"] >= -1e-10 and track["max"] <= cap and tr.steady,
        f"{tr.steps} steps to steady state: min n_pm {track['min']:.4f}, max n_pm {track['max']:.4f}, "
        f"M_bound {tr.M_bound:g} ({track['seconds']:.0f} s)",
    )
    assert ok


def test_criterion_07_confinement(report, paper_transient):
    tr, track = paper_transient
    ok = report(7, track["n12"] <= 1e-12, f"max |n1|, |n2| over the run {track['n12']:.1e} (|n_perp| {track['perp']:.1e})")
    assert ok


def test_criterion_08_entropy_decay(report, entropy_transient):
    tr, seconds = entropy_transient
    t = np.array([r.t for r in tr.records]) * tr.model.config.tau * 1e12  # ps
    H = np.array([r.H0 for r in tr.records])
    H0 = H[0]
    worst_increase = np.max(np.diff(H)) / H0
    window = (H <= 0.5 * H0) & (H >= 1e-12 * H0)
    first = np.argmax(window)
    last = first + np.argmin(window[first:]) if not window[first:].all() else len(H)
    tw, lw = t[first:last], np.log(H[first:last])
    coef = np.polyfit(tw, lw, 1)
    fit = np.polyval(coef, tw)
    r2 = 1 - np.sum((lw - fit) ** 2) / np.sum((lw - lw.mean()) ** 2)
    reached = t[np.argmax(H <= 1e-12 * H0)] if np.any(H <= 1e-12 * H0) else np.inf
    floor = np.min(H[t >= reached]) / H0 if np.isfinite(reached) else np.inf
    ok = report(
        8,
        worst_increase <= 1e-12 and r2 >= 0.99 and reached <= 500.0 and floor <= 1e-15,
        f"H0 max increment {worst_increase:.1e} H0(0), R^2 {r2:.4f}, rate {-coef[0]:.4f}/ps, "
        f"1e-12 reached at {reached:.0f} ps, floor {floor:.1e} ({seconds:.0f} s)",
    )
    assert ok


def test_criterion_09_qualitative_profiles(report):
    model, lin, _ = _steady(0.5, gs.LINEAR_POTENTIAL)
    _, lin0, _ = _steady(0.0, gs.LINEAR_POTENTIAL)
    _, sc, _ = _steady(0.5, gs.SELF_CONSISTENT)
    i1, i2 = model.grid.interface_nodes
    n3 = lin.n_vec[:, 2]
    near1 = n3[i1 - 5:i1 + 6]
    near2 = n3[i2 - 5:i2 + 6]
    peak1 = near1[np.argmax(np.abs(near1))]
    peak2 = near2[np.argmax(np.abs(near2))]
    global_peak = np.abs(n3).max()
    mid = abs(n3[(i1 + i2) // 2])
    checks = {
        "opposite signs": peak1 * peak2 < 0,
        "peaks at interfaces": max(abs(peak1), abs(peak2)) == global_peak and mid < 0.1 * global_peak,
        "n0 lowered in ferromagnet": lin.n0[i1 + 1:i2].mean() < lin0.n0[i1 + 1:i2].mean(),
        "self-consistent peaks reduced": np.abs(sc.n_vec[:, 2]).max() < global_peak,
    }
    ok = report(
        9,
        all(checks.values()),
        f"n3 peaks {peak1:+.4f} / {peak2:+.4f}, mid {mid:.1e}; self-consistent peak "
        f"{np.abs(sc.n_vec[:, 2]).max():.4f}; failed: {[k for k, v in checks.items() if not v] or 'none'}",
    )
    assert ok


def test_criterion_10_grid_refinement(report):
    worst = 0.0
    for mode in gs.MODES:
        _, a, _ = _steady(0.5, mode, 180)
        _, b, _ = _steady(0.5, mode, 360)
        worst = max(worst, np.abs(b.n0[::2] - a.n0).max() / np.abs(a.n0).max())
    ok = report(10, worst <= 0.01, f"M=180 vs M=360 steady n0: relative sup change {worst:.2e}")
    assert ok


def test_criterion_11_remark3(report):
    rng = np.random.default_rng(111)
    n = 10_000
    n0 = rng.uniform(0.05, 5.0, n)
    d = _unit_vectors(rng, n)
    nv = d * (0.5 * n0 * rng.uniform(0, 0.9999, n))[:, None]
    a0, a1, a2, beta = dg.remark3_coefficients(
        n0, nv, rng.normal(size=n), rng.normal(size=(n, 3)), rng.normal(size=n))
    terms = dg.remark3_trace_terms(n0, nv, a0, a1, a2, rng.uniform(0, 0.99, n), _unit_vectors(rng, n), beta)
    J1_min = terms.J1.min()
    # counterexample: n parallel to c, a2 parallel to m, c0 = 0, large n0 and |a2|
    m = np.array([0.0, 0.0, 1.0])
    s = 1e-6
    ce = dg.remark3_trace_terms(50.0, np.array([1.0, 0.0, 0.0]), 0.0, np.array([s, 0.0, 0.0]),
                                np.array([0.0, 0.0, 10.0]), 0.5, m)
    ok = report(
        11,
        J1_min >= -1e-12 and ce.J2 < 0 and ce.J1 <= 1e-6 * abs(ce.J2),
        f"min J1 over 1e4 states {J1_min:.3e}; counterexample J1 {float(ce.J1):.2e}, J2 {float(ce.J2):.3e}",
    )
    assert ok


def test_criterion_12_newton(report):
    model = build_model(paper_device().with_(U=0.0))
    N = model.n_nodes
    c = model.lambda_D2 / model.grid.dx**2
    ratios, histories, floors = [], [], []
    # equilibrium Poisson-Boltzmann problem from the paper's V = 0 start and two far-off starts
    for start in (0.0, -3.0, 5.0):
        res = []
        sol = gs.newton_poisson(np.ones(N), np.full(N, start), model.profiles.C_node, model.lambda_D2, (0.0, 0.0),
                                model.grid.dx, tol=1e-12, max_iter=50, residuals=res)
        r = np.array(res)
        # residuals below the rounding level of evaluating the discrete operator cannot keep squaring
        floor = 16 * np.finfo(float).eps * (
            4 * c * np.abs(sol.V).max() + np.exp(-sol.V).max() + model.profiles.C_node.max())
        small = r[r < 1e-2]
        pair_ratios = [np.log(b) / np.log(a) for a, b in zip(small[:-1], small[1:]) if b > floor]
        ratios.append(pair_ratios)
        histories.append(r)
        floors.append(floor)
    flat = [x for rs in ratios for x in rs]
    C = np.linspace(0.2, 1.0, N)
    V, iters, _, status = kernels.newton_poisson(np.zeros(N), C.copy(), C, model.lambda_D2, model.grid.dx,
                                                 1e-12, 20, 2.0)
    exact_zero = status == kernels.NEWTON_OK and np.array_equal(V, np.zeros(N))
    ok = report(
        12,
        all(len(rs) >= 1 for rs in ratios) and min(flat) >= 1.7 and exact_zero,
        f"V=0 start residuals {', '.join(f'{x:.1e}' for x in histories[0])} (rounding floor {floors[0]:.1e}); "
        f"min log-ratio {min(flat):.2f} over {len(flat)} pairs from 3 starts; C = rho gives V = 0: {exact_zero}",
    )
    assert ok
