from types import SimpleNamespace

import numpy as np
import pytest

from spindd import diagnostics as dg
from spindd import pauli
from spindd.device import build_model, paper_device
from spindd.errors import DomainError
from spindd.formulations import StateField, UpDownField, decompose, to_updown

GRID = SimpleNamespace(dx=0.01)
N = 101


def _ref(n_D=1.0, V_D=None):
    return dg.EntropyReference(np.full(N, n_D), np.zeros(N) if V_D is None else V_D)


def _admissible(rng, size):
    n0 = rng.uniform(0.2, 3.0, size)
    d = rng.normal(size=(size, 3))
    d /= np.linalg.norm(d, axis=-1)[:, None]
    nv = d * (0.5 * n0 * rng.uniform(0, 0.999, size))[:, None]
    return n0, nv


def _hmat(s, v):
    return s * pauli.SIGMA0 + np.tensordot(np.asarray(v, dtype=complex), pauli.SIGMA, axes=1)


def test_h_density_closed_form():
    n_D = 2.0
    s = np.linspace(0.01, 3.0, 7)
    # int_{n_D/2}^{s} log(t / (n_D/2)) dt, by quadrature
    for val in s:
        t = np.linspace(n_D / 2, val, 20001)
        f = np.log(t / (n_D / 2))
        quad = np.sum(0.5 * (f[1:] + f[:-1]) * np.diff(t))
        assert dg.h_density(val, n_D) == pytest.approx(quad, rel=1e-6, abs=1e-9)
    assert dg.h_density(0.0, n_D) == n_D / 2


def test_H0_zero_at_reference():
    ud = UpDownField(np.full(N, 0.5), np.full(N, 0.5))
    assert dg.entropy_H0(ud, np.zeros(N), _ref(), GRID, 0.1) == pytest.approx(0.0, abs=1e-15)


def test_H0_hand_value():
    n_D = 1.0
    ud = UpDownField(np.full(N, np.e * n_D / 2), np.full(N, n_D / 2))
    # |Omega| = 1, h(e n_D/2) = (n_D/2)(e - e + 1)
    assert dg.entropy_H0(ud, np.zeros(N), _ref(n_D), GRID, 0.1) == pytest.approx(0.5, rel=1e-14)


def test_H0_electric_part():
    x = np.linspace(0, 1, N)
    ud = UpDownField(np.full(N, 0.5), np.full(N, 0.5))
    val = dg.entropy_H0(ud, 2.0 * x, _ref(), GRID, 0.3)
    assert val == pytest.approx(0.5 * 0.3 * 4.0, rel=1e-12)


def test_H0_negative_flag():
    ud = UpDownField(np.full(N, 0.5), np.full(N, 0.5))
    ud.n_minus[7] = -1e-3
    val, neg = dg.entropy_H0(ud, np.zeros(N), _ref(), GRID, 0.1, return_flag=True)
    assert list(neg) == [7]
    assert np.isfinite(val)


def test_HQ_equals_H0_axial():
    rng = np.random.default_rng(20)
    for _ in range(20):
        n0 = rng.uniform(0.2, 2.0, N)
        nv = np.zeros((N, 3))
        nv[:, 2] = 0.5 * n0 * rng.uniform(-0.99, 0.99, N)
        st = StateField(n0, nv)
        V = rng.normal(size=N)
        ref = dg.EntropyReference(rng.uniform(0.5, 1.5, N), rng.normal(size=N))
        h0 = dg.entropy_H0(to_updown(st, (0, 0, 1)), V, ref, GRID, 0.05)
        hq = dg.entropy_HQ(st, V, ref, GRID, 0.05)
        assert hq == pytest.approx(h0, rel=1e-12, abs=1e-12)


def test_HQ_scalar_case():
    st = StateField(np.linspace(0.5, 1.5, N), np.zeros((N, 3)))
    ref = _ref()
    h0 = dg.entropy_H0(to_updown(st, (1, 0, 0)), np.zeros(N), ref, GRID, 0.1)
    assert dg.entropy_HQ(st, np.zeros(N), ref, GRID, 0.1) == pytest.approx(h0, rel=1e-13)


def test_HQ_absent_on_gap_violation():
    nv = np.zeros((N, 3))
    nv[12] = [0.3, 0.0, 0.4]  # |n| = 0.5 = n0/2
    st = StateField(np.ones(N), nv)
    assert dg.entropy_HQ(st, np.zeros(N), _ref(), GRID, 0.1) is None
    val, nodes = dg.entropy_HQ(st, np.zeros(N), _ref(), GRID, 0.1, return_nodes=True)
    assert val is None and list(nodes) == [12]


def test_relaxation_integrand():
    assert dg.dHQ_relaxation_integrand(2.0, np.array([0.0, 0.5, 0.0])) == pytest.approx(0.5 * np.log(3.0))
    assert dg.dHQ_relaxation_integrand(1.0, np.zeros(3)) == 0.0
    r = np.linspace(0, 0.49, 50)
    vals = dg.dHQ_relaxation_integrand(np.ones(50), np.column_stack([r, 0 * r, 0 * r]))
    assert np.all(np.diff(vals) > 0)
    with pytest.raises(DomainError):
        dg.dHQ_relaxation_integrand(1.0, np.array([0.5, 0.0, 0.0]))


def test_remark3_matches_dense_trace():
    rng = np.random.default_rng(21)
    for _ in range(200):
        n0, nv = _admissible(rng, 1)
        n0, nv = n0[0], nv[0]
        dn0, dn, dV = rng.normal(), rng.normal(size=3), rng.normal()
        p = rng.uniform(0, 0.95)
        m = rng.normal(size=3)
        m /= np.linalg.norm(m)
        a0, a1, a2, beta = dg.remark3_coefficients(n0, nv, dn0, dn, dV)
        terms = dg.remark3_trace_terms(n0, nv, a0, a1, a2, p, m, beta)
        Nm = _hmat(0.5 * n0, nv)
        A = np.linalg.solve(Nm, _hmat(0.5 * dn0, dn)) + dV * np.eye(2)
        assert np.allclose(A, _hmat(a0, a1 + 1j * a2), atol=1e-10)
        w, U = np.linalg.eigh(pauli.polarization_matrix(p, m))
        Pis = U @ np.diag(w**-0.5) @ U.conj().T
        B = A @ Pis
        tr = np.trace(Nm @ B @ B).real
        assert terms.J1 + terms.J2 == pytest.approx(tr, rel=1e-9, abs=1e-9)
        assert terms.J1 == pytest.approx(terms.J1_square, rel=1e-11, abs=1e-11)


def test_remark3_vanishing_spin():
    a0, a1, a2, _ = dg.remark3_coefficients(1.0, np.zeros(3), 0.3, np.zeros(3), 0.2)
    assert not np.any(a2) and not np.any(a1)
    a1 = np.array([0.4, -0.2, 0.7])
    m = np.array([0.0, 0.6, 0.8])
    t = dg.remark3_trace_terms(1.3, np.zeros(3), a0, a1, np.zeros(3), 0.5, m)
    pm = pauli.p_inv_sqrt(0.5, m).p_minus
    assert t.J2 == pytest.approx(-1.3 * pm**2 * np.sum(np.cross(a1, m) ** 2))


def test_remark3_gap_violation():
    with pytest.raises(DomainError):
        dg.remark3_coefficients(1.0, np.array([0.5, 0, 0]), 0.0, np.zeros(3), 0.0)


def test_remark3_terms_on_grid():
    rng = np.random.default_rng(22)
    n0, nv = _admissible(rng, N)
    st = StateField(n0, nv)
    V = rng.normal(size=N)
    t = dg.remark3_terms(st, V, GRID, 0.4, (0, 0, 1), 10)
    h2 = 2 * GRID.dx
    a0, *_ = dg.remark3_coefficients(n0[10], nv[10], (n0[11] - n0[9]) / h2, (nv[11] - nv[9]) / h2,
                                     (V[11] - V[9]) / h2)
    assert t.a0 == pytest.approx(a0)
    with pytest.raises(ValueError):
        dg.remark3_terms(st, V, GRID, 0.4, (0, 0, 1), 0)


def test_monitor_flags_injected_fault():
    n0 = np.ones(N)
    nv = np.zeros((N, 3))
    st = StateField(n0, nv)
    ud = to_updown(st, (0, 0, 1))
    rep = dg.monitor(st, ud, decompose(st, (0, 0, 1)), 1.0)
    assert rep.ok and rep.perp_norm == 0.0
    nv[33, 2] = 0.6  # n_minus = -0.1 there
    nv[50, 2] = -0.6
    bad = StateField(n0, nv)
    rep = dg.monitor(bad, to_updown(bad, (0, 0, 1)), decompose(bad, (0, 0, 1)), 1.0)
    assert not rep.ok
    assert set(rep.negative_nodes) == {33, 50}
    over = StateField(2.5 * n0, np.zeros((N, 3)))
    rep = dg.monitor(over, to_updown(over, (0, 0, 1)), None, 1.0)
    assert len(rep.over_nodes) == N


def test_monitor_envelope():
    nv = np.zeros((N, 3))
    nv[5] = [0.1, 0.0, 0.0]
    st = StateField(np.ones(N), nv)
    rep = dg.monitor(st, to_updown(st, (0, 0, 1)), decompose(st, (0, 0, 1)), 1.0, t=1.0, perp0=0.1, K=0.5)
    assert rep.perp_envelope == pytest.approx(0.1 * np.e)
    assert rep.within_envelope


def test_make_record():
    m = build_model(paper_device())
    st = m.initial_state()
    ref = dg.EntropyReference(np.ones(m.n_nodes), m.linear_potential())
    rec = dg.make_record(st, m.linear_potential(), m, ref, 3)
    assert rec.H0 == pytest.approx(0.0, abs=1e-14)
    assert rec.HQ == pytest.approx(0.0, abs=1e-14)
    assert rec.mass == pytest.approx(1.0)
    assert rec.bounds == (0.5, 0.5, 0.5, 0.5)
    assert rec.gummel_iters == 3
    assert rec.J1_min is not None and rec.J1_min >= 0
