"""Device geometry, material profiles, constants and nondimensionalisation.

Configuration objects hold SI quantities. Everything handed to the solver is
scaled: densities by ``density_scale`` (the highest doping), potentials by
the thermal voltage, lengths by the device length and times by the spin-flip
relaxation time.

Grid convention: ``grid_points`` counts *cells*. A device with
``grid_points = M`` has ``M + 1`` nodes ``x_i = i*dx`` (``i = 0..M``) and
``M`` cell centres. Layer interfaces must fall on nodes.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigurationError

HBAR = 1.054571817e-34  # J s
EPS0 = 8.8541878128e-12  # F/m
Q_E = 1.602176634e-19  # C
SILICON_REL_PERMITTIVITY = 11.7

PAPER_D = 1e-3  # m^2/s
PAPER_TAU = 1e-12  # s
PAPER_VTH = 0.0259  # V
PAPER_U = 1.0  # V
PAPER_C_MAX = 1e21  # m^-3
PAPER_C_MIN = 0.4e19  # m^-3
PAPER_LAYER = 0.4e-6  # m
PAPER_GRID_POINTS = 180
PAPER_DT_OVER_TAU = 0.005
DEFAULT_P = 0.5


@dataclass(frozen=True)
class Layer:
    """One homogeneous layer ``[x_start, x_end]`` (metres)."""

    x_start: float
    x_end: float
    p: float = 0.0
    m: tuple = (0.0, 0.0, 0.0)
    doping: float = PAPER_C_MAX  # m^-3
    D: float | None = None  # m^2/s; falls back to DeviceConfig.D

    def __post_init__(self):
        m = tuple(float(c) for c in self.m)
        if len(m) != 3:
            raise ConfigurationError(f"layer magnetization must have 3 components, got {self.m!r}")
        object.__setattr__(self, "m", m)
        if not self.x_start < self.x_end:
            raise ConfigurationError(f"layer must satisfy x_start < x_end, got [{self.x_start}, {self.x_end}]")
        if not 0.0 <= self.p < 1.0:
            raise ConfigurationError(f"layer polarization must lie in [0, 1), got p={self.p}")
        norm = float(np.linalg.norm(m))
        if norm != 0.0 and abs(norm - 1.0) > 1e-12:
            raise ConfigurationError(f"layer magnetization must be zero or a unit vector, |m|={norm}")
        if self.D is not None and self.D <= 0:
            raise ConfigurationError(f"layer diffusion coefficient must be positive, got {self.D}")

    @property
    def magnetic(self):
        return any(self.m)


@dataclass(frozen=True)
class DeviceConfig:
    """Physical description of a layered 1D device plus grid resolution.

    ``gamma`` defaults to ``2*hbar/tau``; ``precession_rate`` (1/s) defaults
    to ``2*gamma/hbar``, i.e. ``4/tau`` for the default ``gamma``.
    ``lambda_D2`` is the squared *scaled* Debye length; when omitted it is
    derived as ``eps_r*eps0*V_th / (q*density_scale*L^2)``.
    ``n_bc`` is the scaled contact charge density.
    """

    layers: tuple
    D: float = PAPER_D
    tau: float = PAPER_TAU
    gamma: float | None = None
    precession_rate: float | None = None
    lambda_D2: float | None = None
    V_th: float = PAPER_VTH
    U: float = PAPER_U
    n_bc: float = 1.0
    grid_points: int = PAPER_GRID_POINTS
    rel_permittivity: float = SILICON_REL_PERMITTIVITY
    density_scale: float | None = None

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise ConfigurationError("device needs at least one layer")
        object.__setattr__(self, "layers", layers)
        for name in ("D", "tau", "V_th", "rel_permittivity"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive, got {getattr(self, name)!r}")
        if abs(layers[0].x_start) > 1e-15:
            raise ConfigurationError(f"first layer must start at 0, got {layers[0].x_start}")
        for a, b in zip(layers, layers[1:]):
            if abs(a.x_end - b.x_start) > 1e-12 * self.length:
                raise ConfigurationError(
                    f"layers must tile the device: gap/overlap between {a.x_end} and {b.x_start}"
                )
        if self.gamma is None:
            object.__setattr__(self, "gamma", 2.0 * HBAR / self.tau)
        if self.precession_rate is None:
            object.__setattr__(self, "precession_rate", 2.0 * self.gamma / HBAR)
        if self.density_scale is None:
            object.__setattr__(self, "density_scale", max(layer.doping for layer in layers))
        if not self.density_scale > 0:
            raise ConfigurationError(f"density_scale must be positive, got {self.density_scale}")
        if self.lambda_D2 is None:
            lam2 = self.rel_permittivity * EPS0 * self.V_th / (Q_E * self.density_scale * self.length**2)
            object.__setattr__(self, "lambda_D2", lam2)
        if not self.lambda_D2 > 0:
            raise ConfigurationError(f"lambda_D2 must be positive, got {self.lambda_D2}")
        if int(self.grid_points) != self.grid_points or self.grid_points < 1:
            raise ConfigurationError(f"grid_points must be a positive integer, got {self.grid_points!r}")
        if not self.n_bc >= 0:
            raise ConfigurationError(f"n_bc must be nonnegative, got {self.n_bc}")

    @property
    def length(self):
        return self.layers[-1].x_end

    @property
    def spin_axis(self):
        """Magnetization direction used for the up/down projections (first magnetic layer)."""
        for layer in self.layers:
            if layer.magnetic:
                return np.array(layer.m)
        return np.array([0.0, 0.0, 1.0])

    def with_(self, **changes):
        return replace(self, **changes)


def three_layer_device(
    p=DEFAULT_P,
    layer_length=PAPER_LAYER,
    C_max=PAPER_C_MAX,
    C_min=PAPER_C_MIN,
    m=(0.0, 0.0, 1.0),
    **kwargs,
):
    """Nonmagnetic / ferromagnetic / nonmagnetic stack with equal layer lengths."""
    l1, l2, L = layer_length, 2 * layer_length, 3 * layer_length
    layers = (
        Layer(0.0, l1, p=0.0, m=(0.0, 0.0, 0.0), doping=C_max),
        Layer(l1, l2, p=p, m=m, doping=C_min),
        Layer(l2, L, p=0.0, m=(0.0, 0.0, 0.0), doping=C_max),
    )
    kwargs.setdefault("density_scale", C_max)
    return DeviceConfig(layers=layers, **kwargs)


def paper_device(p=DEFAULT_P, **kwargs):
    """The 1.2 um diode with the default physical parameters."""
    return three_layer_device(p=p, **kwargs)


def small_device(p=DEFAULT_P, **kwargs):
    """0.4 um variant with ninefold doping (same scaled Debye length)."""
    return three_layer_device(
        p=p, layer_length=PAPER_LAYER / 3, C_max=9 * PAPER_C_MAX, C_min=9 * PAPER_C_MIN, **kwargs
    )


@dataclass(frozen=True)
class Grid:
    """Uniform node-centred grid on the scaled interval [0, 1]."""

    x: np.ndarray  # nodes, scaled
    x_mid: np.ndarray  # cell centres, scaled
    dx: float
    interface_nodes: tuple
    length: float  # metres

    @property
    def n_nodes(self):
        return self.x.size

    @property
    def n_cells(self):
        return self.x_mid.size


@dataclass(frozen=True)
class Profiles:
    """Scaled, piecewise-constant material coefficients on the grid."""

    p_mid: np.ndarray
    eta_mid: np.ndarray
    m_mid: np.ndarray  # (cells, 3)
    D_mid: np.ndarray  # scaled D*tau/L^2
    C_node: np.ndarray
    m_node: np.ndarray  # (nodes, 3)
    p_node: np.ndarray
    D_node: np.ndarray


@dataclass(frozen=True)
class ScalingSet:
    density: float  # m^-3
    potential: float  # V
    length: float  # m
    time: float  # s
    D_hat: tuple = field(default=())  # per layer, D*tau/L^2
    lambda_D2: float = 0.0

    def scale_density(self, n):
        return np.asarray(n) / self.density

    def unscale_density(self, n):
        return np.asarray(n) * self.density

    def scale_potential(self, V):
        return np.asarray(V) / self.potential

    def unscale_potential(self, V):
        return np.asarray(V) * self.potential

    def scale_length(self, x):
        return np.asarray(x) / self.length

    def unscale_length(self, x):
        return np.asarray(x) * self.length

    def scale_time(self, t):
        return np.asarray(t) / self.time

    def unscale_time(self, t):
        return np.asarray(t) * self.time

    def as_dict(self):
        return {
            "density_m3": self.density,
            "potential_V": self.potential,
            "length_m": self.length,
            "time_s": self.time,
            "D_hat": list(self.D_hat),
            "lambda_D2": self.lambda_D2,
        }


def scaling(config):
    """Scaling set of ``config``; raises on nonpositive constants."""
    for name, value in (
        ("density_scale", config.density_scale),
        ("V_th", config.V_th),
        ("length", config.length),
        ("tau", config.tau),
        ("lambda_D2", config.lambda_D2),
    ):
        if not value > 0:
            raise ConfigurationError(f"{name} must be positive, got {value!r}")
    L, tau = config.length, config.tau
    D_hat = tuple((layer.D if layer.D is not None else config.D) * tau / L**2 for layer in config.layers)
    return ScalingSet(config.density_scale, config.V_th, L, tau, D_hat, config.lambda_D2)


def build_grid(config):
    """Uniform grid with ``config.grid_points`` cells whose nodes contain every interface."""
    M = int(config.grid_points)
    if M < 1:
        raise ConfigurationError(f"need at least one cell, got grid_points={M}")
    L = config.length
    dx = 1.0 / M
    x = np.arange(M + 1) * dx
    x[-1] = 1.0
    interfaces = []
    for k, layer in enumerate(config.layers[:-1]):
        pos = layer.x_end / L * M
        idx = int(round(pos))
        if abs(pos - idx) > 1e-9 or abs(idx * dx - layer.x_end / L) > 1e-12:
            raise ConfigurationError(
                f"interface {k + 1} at x={layer.x_end:.6g} m does not fall on a grid node "
                f"(position {pos:.6f} cells with grid_points={M})"
            )
        interfaces.append(idx)
    x_mid = (np.arange(M) + 0.5) * dx
    return Grid(x=x, x_mid=x_mid, dx=dx, interface_nodes=tuple(interfaces), length=L)


def _layer_index(config, x_scaled, *, interface_left):
    """Index of the layer owning each scaled position; interface points go to the left layer."""
    ends = np.array([layer.x_end for layer in config.layers]) / config.length
    side = "left" if interface_left else "right"
    idx = np.searchsorted(ends, x_scaled, side=side)
    # snap values that sit on an interface within rounding
    for k, e in enumerate(ends[:-1]):
        on = np.isclose(x_scaled, e, rtol=0, atol=1e-12)
        idx[on] = k if interface_left else k + 1
    return np.clip(idx, 0, len(config.layers) - 1)


def build_profiles(config, grid):
    """Cell-centre coefficients and node doping/magnetization for ``grid``."""
    sc = scaling(config)
    p = np.array([layer.p for layer in config.layers])
    m = np.array([layer.m for layer in config.layers], dtype=float)
    C = np.array([layer.doping for layer in config.layers]) / config.density_scale
    D_hat = np.array(sc.D_hat)

    cell_layer = _layer_index(config, grid.x_mid, interface_left=True)
    node_layer = _layer_index(config, grid.x, interface_left=True)
    p_mid = p[cell_layer]
    return Profiles(
        p_mid=p_mid,
        eta_mid=np.sqrt(1.0 - p_mid**2),
        m_mid=m[cell_layer],
        D_mid=D_hat[cell_layer],
        C_node=C[node_layer],
        m_node=m[node_layer],
        p_node=p[node_layer],
        D_node=D_hat[node_layer],
    )


@dataclass(frozen=True)
class DeviceModel:
    """Everything the solver needs, in scaled units, for one configuration."""

    config: DeviceConfig
    grid: Grid
    profiles: Profiles
    scale: ScalingSet
    relax_rate: float  # 1/tau in scaled time, i.e. 1
    precession: float  # 2 gamma / hbar in scaled time
    lambda_D2: float
    n_left: np.ndarray  # Dirichlet (n0, n1, n2, n3) at x = 0
    n_right: np.ndarray
    V_left: float
    V_right: float
    axis: np.ndarray  # constant magnetization axis for up/down projections

    @property
    def n_nodes(self):
        return self.grid.n_nodes

    def linear_potential(self):
        """Straight line between the contact potentials, ``U x / L`` for the default data."""
        return self.V_left + (self.V_right - self.V_left) * self.grid.x

    def initial_state(self, n0=None):
        """Uniform charge density (default: the contact density) and zero spin density."""
        from .formulations import StateField

        N = self.n_nodes
        n = np.zeros((N, 4))
        n[:, 0] = self.config.n_bc if n0 is None else n0
        n[0], n[-1] = self.n_left, self.n_right
        return StateField.from_array(n, 0.0)

    def bound_M(self, state0):
        """Truncation level ``max(sup n_D, sup(n0/2 + |n_vec . m|), sup C)`` from the initial data."""
        proj = np.abs(state0.n_vec @ self.axis)
        return float(max(self.n_left[0], self.n_right[0], np.max(0.5 * state0.n0 + proj), np.max(self.profiles.C_node)))

    def perp_growth_rate(self):
        """``K = sup D / (eta lambda_D^2) * sup |C|`` (scaled), used in the n_perp envelope ``exp(2 K t)``."""
        coef = np.max(self.profiles.D_mid / self.profiles.eta_mid)
        return float(coef / self.lambda_D2 * np.max(np.abs(self.profiles.C_node)))


def build_model(config, V_left=0.0):
    """Scaled model with contact data ``n0 = n_bc``, ``n_vec = 0``, ``V = (0, U/V_th)``."""
    grid = build_grid(config)
    profiles = build_profiles(config, grid)
    sc = scaling(config)
    n_bc = np.array([config.n_bc, 0.0, 0.0, 0.0])
    return DeviceModel(
        config=config,
        grid=grid,
        profiles=profiles,
        scale=sc,
        relax_rate=1.0,
        precession=config.precession_rate * config.tau,
        lambda_D2=config.lambda_D2,
        n_left=n_bc.copy(),
        n_right=n_bc.copy(),
        V_left=float(V_left),
        V_right=float(V_left + config.U / config.V_th),
        axis=config.spin_axis,
    )
