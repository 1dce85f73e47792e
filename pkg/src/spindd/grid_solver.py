"""Node-centred finite volumes, implicit Euler and Gummel iteration.

Per time step the Gummel loop alternates

1. a nonlinear Poisson solve ``-lambda_D^2 V'' = rho exp(-V) - C`` with the
   quasi-Fermi factor ``rho = n0 exp(V)`` frozen at the previous iterate
   (Newton's method on the central-difference discretisation), and
2. the linear implicit-Euler system for ``(n0, n_vec)`` with the potential
   held fixed, a 4x4 block-tridiagonal solve.

Primitive edge fluxes use the centred average
``J = ((n[i+1] - n[i]) + (n[i+1] + n[i]) (V[i+1] - V[i]) / 2) / dx``.

The reduced solver advances ``(n_plus, n_minus)`` with the same scheme; its
edge diffusivities ``D / (1 +- p)`` are what the four-component fluxes
reduce to along a constant axis.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .device import DeviceConfig, DeviceModel, build_model
from .diagnostics import EntropyReference, make_record
from .errors import ConvergenceError, LinearSolverError, StepFailure
from .formulations import PotentialField, StateField, UpDownField, physical_fluxes, to_updown

log = logging.getLogger(__name__)

SELF_CONSISTENT = "self-consistent"
LINEAR_POTENTIAL = "linear-potential"
MODES = (SELF_CONSISTENT, LINEAR_POTENTIAL)


@dataclass(frozen=True)
class SolverSettings:
    dt: float = 0.005  # scaled by tau
    gummel_tol: float = 1e-10
    gummel_max_iter: int = 200
    newton_tol: float = 1e-9
    newton_max_iter: int = 100
    newton_max_step: float = 2.0
    steady_tol: float = 1e-10
    max_time: float = 2000.0

    def __post_init__(self):
        for name in ("dt", "gummel_tol", "newton_tol", "newton_max_step", "steady_tol", "max_time"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)!r}")
        for name in ("gummel_max_iter", "newton_max_iter"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be at least 1")


@dataclass(frozen=True)
class EdgeFluxes:
    J0_edge: np.ndarray
    Jvec_edge: np.ndarray
    j0_edge: np.ndarray
    jvec_edge: np.ndarray


@dataclass(frozen=True)
class BlockTridiagonalSystem:
    sub: np.ndarray
    diag: np.ndarray
    super: np.ndarray
    rhs: np.ndarray

    @property
    def block_size(self):
        return self.rhs.shape[1]

    def dense(self):
        """Assemble the full matrix (for tests and small debugging cases)."""
        n, b = self.rhs.shape
        A = np.zeros((n * b, n * b))
        for i in range(n):
            A[i * b:(i + 1) * b, i * b:(i + 1) * b] = self.diag[i]
            if i > 0:
                A[i * b:(i + 1) * b, (i - 1) * b:i * b] = self.sub[i]
            if i < n - 1:
                A[i * b:(i + 1) * b, (i + 1) * b:(i + 2) * b] = self.super[i]
        return A


@dataclass
class StepInfo:
    gummel_iters: int
    newton_iters: list = field(default_factory=list)
    updates: list = field(default_factory=list)


def edge_flux(n_left, n_right, V_left, V_right, dx):
    """Centred-average primitive flux between two neighbouring nodes."""
    n_left = np.asarray(n_left, dtype=float)
    n_right = np.asarray(n_right, dtype=float)
    dV = np.asarray(V_right, dtype=float) - np.asarray(V_left, dtype=float)
    if np.ndim(dV) and np.ndim(n_left) > np.ndim(dV):
        dV = dV[..., None]
    return ((n_right - n_left) + 0.5 * (n_right + n_left) * dV) / dx


def edge_fluxes(state, V, model):
    """Primitive and physical currents at every cell centre."""
    Vv = V.V if isinstance(V, PotentialField) else np.asarray(V, dtype=float)
    n = state.as_array()
    J = edge_flux(n[:-1], n[1:], Vv[:-1], Vv[1:], model.grid.dx)
    pr = model.profiles
    j0, jvec = physical_fluxes(J[:, 0], J[:, 1:], pr.p_mid, pr.eta_mid, pr.m_mid, pr.D_mid)
    return EdgeFluxes(J[:, 0], J[:, 1:], j0, jvec)


def _dt_inv(dt):
    return 0.0 if dt is None or np.isinf(dt) else 1.0 / dt


def assemble_density_system(state_prev, V, model, settings=None, dt=None):
    """Implicit-Euler system for the four-component density at fixed potential.

    ``dt=np.inf`` drops the time derivative (steady equations).
    """
    if dt is None:
        dt = (settings or SolverSettings()).dt
    Vv = V.V if isinstance(V, PotentialField) else np.asarray(V, dtype=float)
    pr = model.profiles
    sub, diag, sup, rhs = kernels.assemble_density(
        state_prev.as_array(), Vv, model.n_left, model.n_right, model.grid.dx, _dt_inv(dt),
        pr.D_mid, pr.p_mid, pr.eta_mid, pr.m_mid, pr.m_node, model.relax_rate, model.precession,
    )
    return BlockTridiagonalSystem(sub, diag, sup, rhs)


def assemble_updown_system(updown_prev, V, model, settings=None, dt=None):
    if dt is None:
        dt = (settings or SolverSettings()).dt
    Vv = V.V if isinstance(V, PotentialField) else np.asarray(V, dtype=float)
    pr = model.profiles
    half = 0.5 * model.n_left[0], 0.5 * model.n_right[0]
    sub, diag, sup, rhs = kernels.assemble_updown(
        updown_prev.as_array(), Vv, np.array([half[0], half[0]]), np.array([half[1], half[1]]),
        model.grid.dx, _dt_inv(dt), pr.D_mid, pr.p_mid, model.relax_rate,
    )
    return BlockTridiagonalSystem(sub, diag, sup, rhs)


def block_thomas_solve(system, return_ops=False):
    """Solve a block-tridiagonal system by block LU; raises :class:`LinearSolverError` on a singular pivot."""
    x, failed, ops = kernels.block_thomas(system.sub, system.diag, system.super, system.rhs)
    if failed >= 0:
        raise LinearSolverError(failed)
    return (x, ops) if return_ops else x


def newton_poisson(rho, V_init, C_node, lambda_D2, bc, dx, tol=1e-9, max_iter=100, max_step=2.0, residuals=None):
    """Solve ``-lambda_D2 (V[i+1] - 2V[i] + V[i-1]) / dx^2 = rho[i] exp(-V[i]) - C[i]``.

    Newton steps whose largest component exceeds ``max_step`` are scaled
    down to that size. If ``residuals`` is a list, the sup-norm residual of
    every iterate is appended to it.
    """
    V0 = np.array(V_init, dtype=float)
    V0[0], V0[-1] = bc
    V, iters, hist, status = kernels.newton_poisson(V0, rho, C_node, lambda_D2, dx, tol, max_iter, max_step)
    if residuals is not None:
        residuals.extend(float(r) for r in hist[: iters + 1])
    if status != kernels.NEWTON_OK:
        last = hist[min(iters, hist.size - 1)]
        reason = "non-finite residual" if status == kernels.NEWTON_NONFINITE else f"no convergence in {max_iter} iterations"
        raise ConvergenceError(f"Newton-Poisson: {reason} (last residual {last:.3e})", last_norm=float(last), iterations=iters)
    return PotentialField(V, bc[0], bc[1])


def density_solve(state_prev, V, model, dt):
    x = block_thomas_solve(assemble_density_system(state_prev, V, model, dt=dt))
    n = np.empty((model.n_nodes, 4))
    n[0], n[-1] = model.n_left, model.n_right
    n[1:-1] = x
    return n


def updown_solve(updown_prev, V, model, dt):
    x = block_thomas_solve(assemble_updown_system(updown_prev, V, model, dt=dt))
    u = np.empty((model.n_nodes, 2))
    u[0] = 0.5 * model.n_left[0]
    u[-1] = 0.5 * model.n_right[0]
    u[1:-1] = x
    return u


def _gummel(n0_prev_iterate, V_prev, model, settings, solve_density):
    """Shared Gummel loop; ``solve_density(V)`` returns the new density array and its n0 column."""
    V = np.array(V_prev, dtype=float)
    n0 = n0_prev_iterate
    info = StepInfo(0)
    bc = (model.V_left, model.V_right)
    for it in range(1, settings.gummel_max_iter + 1):
        rho = n0 * np.exp(V)
        res = []
        V_new = newton_poisson(
            rho, V, model.profiles.C_node, model.lambda_D2, bc, model.grid.dx,
            settings.newton_tol, settings.newton_max_iter, settings.newton_max_step, residuals=res,
        ).V
        update = float(np.max(np.abs(V_new - V)))
        info.newton_iters.append(len(res) - 1)
        info.updates.append(update)
        dens, n0 = solve_density(V_new)
        V = V_new
        # the first Poisson solve still sees the old density, so it cannot certify a fixed point
        if it > 1 and update <= settings.gummel_tol:
            info.gummel_iters = it
            return dens, V, info
    raise ConvergenceError(
        f"Gummel iteration did not converge in {settings.gummel_max_iter} iterations "
        f"(last update {info.updates[-1]:.3e})",
        last_norm=info.updates[-1],
        iterations=settings.gummel_max_iter,
    )


def gummel_step(state_prev, V_prev, model, settings, mode=SELF_CONSISTENT, dt=None):
    """Advance one implicit-Euler step. Returns ``(state_next, V_next, iterations)``."""
    if dt is None:
        dt = settings.dt
    Vp = V_prev.V if isinstance(V_prev, PotentialField) else np.asarray(V_prev, dtype=float)
    t_next = np.inf if np.isinf(dt) else state_prev.time + dt
    if mode == LINEAR_POTENTIAL:
        n = density_solve(state_prev, Vp, model, dt)
        return StateField.from_array(n, t_next), PotentialField(Vp, model.V_left, model.V_right), 1
    if mode != SELF_CONSISTENT:
        raise ValueError(f"unknown mode {mode!r}")

    def solve(V):
        n = density_solve(state_prev, V, model, dt)
        return n, n[:, 0]

    n, V, info = _gummel(state_prev.n0, Vp, model, settings, solve)
    return StateField.from_array(n, t_next), PotentialField(V, model.V_left, model.V_right), info.gummel_iters


def updown_step(updown_prev, V_prev, model, settings, mode=SELF_CONSISTENT, dt=None):
    """Reduced-model counterpart of :func:`gummel_step`."""
    if dt is None:
        dt = settings.dt
    Vp = V_prev.V if isinstance(V_prev, PotentialField) else np.asarray(V_prev, dtype=float)
    if mode == LINEAR_POTENTIAL:
        u = updown_solve(updown_prev, Vp, model, dt)
        return UpDownField(u[:, 0], u[:, 1]), PotentialField(Vp, model.V_left, model.V_right), 1

    def solve(V):
        u = updown_solve(updown_prev, V, model, dt)
        return u, u[:, 0] + u[:, 1]

    u, V, info = _gummel(updown_prev.n0, Vp, model, settings, solve)
    return UpDownField(u[:, 0], u[:, 1]), PotentialField(V, model.V_left, model.V_right), info.gummel_iters


def initial_potential(model, mode, kind=None):
    """``"linear"`` (U x / L) or ``"zero"``; defaults to linear."""
    if kind in (None, "linear"):
        return model.linear_potential()
    if kind == "zero":
        V = np.zeros(model.n_nodes)
        V[0], V[-1] = model.V_left, model.V_right
        return V
    raise ValueError(f"unknown initial potential {kind!r}")


def poisson_potential(model, n0):
    """Potential of a given charge density: ``-lambda_D^2 V'' = n0 - C`` with the contact data.

    The potential carries no dynamics of its own, so in self-consistent runs
    the state at ``t = 0`` pairs the initial density with this potential.
    """
    dx = model.grid.dx
    N = model.n_nodes
    c = model.lambda_D2 / dx**2
    rhs = (np.asarray(n0, dtype=float) - model.profiles.C_node)[1:-1] / c
    rhs[0] += model.V_left
    rhs[-1] += model.V_right
    off = -np.ones(N - 2)
    V = np.empty(N)
    V[0], V[-1] = model.V_left, model.V_right
    V[1:-1] = kernels.thomas(off, np.full(N - 2, 2.0), off, rhs)
    return V


def solve_steady(model, settings, mode=SELF_CONSISTENT, state_guess=None, V_guess=None):
    """Steady discrete equations (no time derivative) solved by Gummel iteration."""
    state = state_guess if state_guess is not None else model.initial_state()
    V = V_guess if V_guess is not None else initial_potential(model, mode)
    state, V, _ = gummel_step(state, V, model, settings, mode, dt=np.inf)
    return state, V


def entropy_reference(model, settings, mode=SELF_CONSISTENT):
    """Reference ``(n_D, V_D)`` for the free energy.

    With equal contact potentials the reference is the discrete equilibrium
    of the scheme itself, so the free energy decays to rounding level. Under
    bias there is no equilibrium; the reference is then the contact density
    with the linear potential.
    """
    if model.V_left == model.V_right:
        state, V = solve_steady(model, settings, mode, V_guess=initial_potential(model, mode, "zero"))
        return EntropyReference(state.n0.copy(), V.V.copy())
    return EntropyReference(np.full(model.n_nodes, model.n_left[0]), model.linear_potential())


@dataclass
class Trajectory:
    model: DeviceModel
    mode: str
    records: list
    state: StateField
    potential: PotentialField
    steps: int
    steady: bool
    reference: EntropyReference
    M_bound: float


def _as_model(config_or_model):
    if isinstance(config_or_model, DeviceModel):
        return config_or_model
    if isinstance(config_or_model, DeviceConfig):
        return build_model(config_or_model)
    raise TypeError(f"expected DeviceConfig or DeviceModel, got {type(config_or_model).__name__}")


def iter_transient(config, settings, mode=SELF_CONSISTENT, state0=None, V0=None, initial_potential_kind=None):
    """Generator over ``(step, state, potential, gummel_iters)``; step 0 is the initial data."""
    model = _as_model(config)
    state = state0 if state0 is not None else model.initial_state()
    V = np.asarray(V0, dtype=float) if V0 is not None else initial_potential(model, mode, initial_potential_kind)
    if mode == SELF_CONSISTENT:
        V = poisson_potential(model, state.n0)
    potential = PotentialField(V, model.V_left, model.V_right)
    yield 0, state, potential, 0
    step = 0
    while True:
        try:
            state, potential, iters = gummel_step(state, potential, model, settings, mode)
        except (ConvergenceError, LinearSolverError) as exc:
            raise StepFailure(step + 1, state.time + settings.dt, exc) from exc
        step += 1
        yield step, state, potential, iters


def run_transient(
    config,
    settings,
    mode=SELF_CONSISTENT,
    hooks=(),
    state0=None,
    V0=None,
    initial_potential_kind=None,
    reference=None,
    max_steps=None,
    stop_at_steady=True,
    sample_j1=True,
    record_every=1,
):
    """Time-march to ``settings.max_time`` or until the density rate falls below ``steady_tol``.

    ``hooks`` are called as ``hook(step, state, potential, record)`` after
    every recorded step (``record`` is ``None`` on unrecorded steps).
    """
    model = _as_model(config)
    if reference is None:
        reference = entropy_reference(model, settings, mode)
    records = []
    prev = None
    M_bound = None
    steady = False
    n_max = int(np.ceil(settings.max_time / settings.dt - 1e-9))
    if max_steps is not None:
        n_max = min(n_max, int(max_steps))
    for step, state, potential, iters in iter_transient(model, settings, mode, state0, V0, initial_potential_kind):
        if M_bound is None:
            M_bound = model.bound_M(state)
        last = step >= n_max
        rate = np.inf
        if prev is not None:
            rate = float(np.max(np.abs(state.n0 - prev.n0)) + 0.0)
            rate = max(rate, float(np.max(np.abs(state.n_vec - prev.n_vec)))) / settings.dt
            steady = stop_at_steady and rate <= settings.steady_tol
        rec = None
        if step % record_every == 0 or last or steady:
            rec = make_record(state, potential, model, reference, iters, sample_j1=sample_j1)
            records.append(rec)
        for hook in hooks:
            hook(step, state, potential, rec)
        prev = state
        if last or steady:
            break
    log.info("transient finished after %d steps (t=%.4g, steady=%s)", step, state.time, steady)
    return Trajectory(model, mode, records, state, potential, step, steady, reference, M_bound)


@dataclass
class ReducedTrajectory:
    model: DeviceModel
    fields: list
    potentials: list
    gummel_iters: list


def run_reduced_updown(config, settings, mode=SELF_CONSISTENT, n_steps=None, initial_potential_kind=None, keep_every=1):
    """Advance the two-component ``(n_plus, n_minus)`` model with the same grid and step.

    The initial data ``n_pm = n0/2 +- n_vec . m`` is projected from the full
    model's initial state along ``model.axis``.
    """
    model = _as_model(config)
    if n_steps is None:
        n_steps = int(np.ceil(settings.max_time / settings.dt - 1e-9))
    state0 = model.initial_state()
    updown = to_updown(state0, model.axis)
    V = initial_potential(model, mode, initial_potential_kind)
    if mode == SELF_CONSISTENT:
        V = poisson_potential(model, state0.n0)
    V = PotentialField(V, model.V_left, model.V_right)
    fields, pots, iters = [updown], [V], [0]
    for k in range(1, n_steps + 1):
        try:
            updown, V, it = updown_step(updown, V, model, settings, mode)
        except (ConvergenceError, LinearSolverError) as exc:
            raise StepFailure(k, k * settings.dt, exc) from exc
        if k % keep_every == 0 or k == n_steps:
            fields.append(updown)
            pots.append(V)
            iters.append(it)
    return ReducedTrajectory(model, fields, pots, iters)
