"""Command-line driver: JSON configuration, experiment presets and CSV output.

Presets
-------
steady
    Steady state of the biased three-layer diode, solved directly from the
    time-independent discrete equations.
transient-entropy
    Zero bias, ``n0 = 1``, ``n_vec = 0``, ``V = 0`` initially; time-marched
    with a free-energy time series.
small-device
    The steady experiment on the 0.4 um device with ninefold doping.
sweep
    The steady experiment for several polarizations, one subdirectory each.

Output densities are in m^-3, potentials in volts, positions in um and
times in ps. ``H0``, ``HQ`` and ``mass`` in ``series.csv`` are the scaled
(dimensionless) values; the scaling set is written to ``manifest.txt``.
"""

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import grid_solver as gs
from .device import (
    PAPER_C_MAX,
    PAPER_C_MIN,
    PAPER_D,
    PAPER_DT_OVER_TAU,
    PAPER_GRID_POINTS,
    PAPER_LAYER,
    PAPER_TAU,
    PAPER_U,
    PAPER_VTH,
    build_model,
    three_layer_device,
)
from .errors import ConfigurationError, SpinDDError
from .formulations import to_updown

log = logging.getLogger(__name__)

PRESETS = ("steady", "transient-entropy", "small-device", "sweep")
DEFAULT_SWEEP = (0.0, 0.4, 0.8)

_num = (int, float)


def _positive(v):
    return v > 0


def _unit_interval(v):
    return 0.0 <= v < 1.0


# key -> (accepted types, predicate or None, constraint text, default)
SCHEMA = {
    "p": (_num, _unit_interval, "a number in [0, 1)", 0.5),
    "p_values": (list, None, "a list of numbers in [0, 1)", None),
    "m": (list, None, "a unit 3-vector", [0.0, 0.0, 1.0]),
    "layer_length_um": (_num, _positive, "a positive number", PAPER_LAYER * 1e6),
    "C_max": (_num, _positive, "a positive number", PAPER_C_MAX),
    "C_min": (_num, _positive, "a positive number", PAPER_C_MIN),
    "D": (_num, _positive, "a positive number", PAPER_D),
    "tau": (_num, _positive, "a positive number", PAPER_TAU),
    "gamma": (_num, _positive, "a positive number", None),
    "V_th": (_num, _positive, "a positive number", PAPER_VTH),
    "U": (_num, None, "a number", PAPER_U),
    "n_bc": (_num, lambda v: v >= 0, "a nonnegative number", 1.0),
    "grid_points": (int, _positive, "a positive integer", PAPER_GRID_POINTS),
    "dt_over_tau": (_num, _positive, "a positive number", PAPER_DT_OVER_TAU),
    "max_time_ps": (_num, _positive, "a positive number", 500.0),
    "gummel_tol": (_num, _positive, "a positive number", 1e-10),
    "gummel_max_iter": (int, _positive, "a positive integer", 200),
    "newton_tol": (_num, _positive, "a positive number", 1e-9),
    "newton_max_iter": (int, _positive, "a positive integer", 100),
    "newton_max_step": (_num, _positive, "a positive number", 2.0),
    "steady_tol": (_num, _positive, "a positive number", 1e-10),
    "mode": (str, lambda v: v in gs.MODES, f"one of {', '.join(gs.MODES)}", gs.SELF_CONSISTENT),
    "preset": (str, lambda v: v in PRESETS, f"one of {', '.join(PRESETS)}", "steady"),
    "snapshot_every": (int, _positive, "a positive integer", 100),
    "out": (str, None, "a path", "spindd-out"),
}

PRESET_OVERRIDES = {
    "steady": {},
    "sweep": {"p_values": list(DEFAULT_SWEEP)},
    "transient-entropy": {"U": 0.0, "mode": gs.SELF_CONSISTENT},
    "small-device": {
        "layer_length_um": PAPER_LAYER * 1e6 / 3,
        "C_max": 9 * PAPER_C_MAX,
        "C_min": 9 * PAPER_C_MIN,
    },
}


@dataclass(frozen=True)
class RunSpec:
    values: dict  # resolved flat configuration
    config_path: str | None = None

    @property
    def preset(self):
        return self.values["preset"]

    @property
    def mode(self):
        return self.values["mode"]

    @property
    def out(self):
        return self.values["out"]

    @property
    def snapshot_every(self):
        return self.values["snapshot_every"]

    @property
    def p_values(self):
        pv = self.values.get("p_values")
        return list(pv) if pv else [self.values["p"]]

    @property
    def is_sweep(self):
        return len(self.p_values) > 1 or self.preset == "sweep"

    def device(self, p=None):
        v = self.values
        return three_layer_device(
            p=v["p"] if p is None else p,
            layer_length=v["layer_length_um"] * 1e-6,
            C_max=v["C_max"],
            C_min=v["C_min"],
            m=tuple(v["m"]),
            D=v["D"],
            tau=v["tau"],
            gamma=v["gamma"],
            V_th=v["V_th"],
            U=v["U"],
            n_bc=v["n_bc"],
            grid_points=v["grid_points"],
        )

    def settings(self):
        v = self.values
        return gs.SolverSettings(
            dt=v["dt_over_tau"],
            gummel_tol=v["gummel_tol"],
            gummel_max_iter=v["gummel_max_iter"],
            newton_tol=v["newton_tol"],
            newton_max_iter=v["newton_max_iter"],
            newton_max_step=v["newton_max_step"],
            steady_tol=v["steady_tol"],
            max_time=v["max_time_ps"] * 1e-12 / v["tau"],
        )


def _check(key, value, where):
    if key not in SCHEMA:
        raise ConfigurationError(f"{where}: unknown key {key!r}")
    types, pred, text, _ = SCHEMA[key]
    if value is None and SCHEMA[key][3] is None:
        return value
    ok = isinstance(value, types) and not isinstance(value, bool)
    if ok and types is int and isinstance(value, float):
        ok = False
    if ok and pred is not None:
        ok = bool(pred(value))
    if ok and key == "p_values":
        ok = all(isinstance(x, _num) and not isinstance(x, bool) and _unit_interval(x) for x in value)
    if ok and key == "m":
        ok = (
            len(value) == 3
            and all(isinstance(x, _num) and not isinstance(x, bool) for x in value)
            and abs(float(np.linalg.norm(value)) - 1.0) <= 1e-12
        )
    if not ok:
        raise ConfigurationError(f"{where}: key {key!r} must be {text}, got {value!r}")
    if types is _num:
        value = float(value)
    return value


def load_config_file(path):
    """Read a flat JSON object; parse errors carry line and column."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc.strerror}") from exc
    if not text.strip():
        return {}
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: top level must be a JSON object")
    return data


def resolve(file_values=None, overrides=None, config_path=None):
    """Merge defaults, preset, config file and command-line overrides (in that order)."""
    file_values = dict(file_values or {})
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    where = config_path or "config"
    for k, v in file_values.items():
        file_values[k] = _check(k, v, where)
    for k, v in overrides.items():
        overrides[k] = _check(k, v, "command line")
    preset = overrides.get("preset", file_values.get("preset", SCHEMA["preset"][3]))
    values = {k: spec[3] for k, spec in SCHEMA.items()}
    values.update(PRESET_OVERRIDES[preset])
    values.update(file_values)
    values.update(overrides)
    if preset == "transient-entropy" and values["U"] != 0.0:
        log.warning("transient-entropy preset run with U=%g; the free energy only decays at zero bias", values["U"])
    spec = RunSpec(values, config_path)
    # surface interface/grid incompatibilities before any run starts
    from .device import build_grid

    build_grid(spec.device())
    return spec


def parse_config(path):
    """``(DeviceConfig, SolverSettings, RunSpec)`` from a JSON file with defaults filled in."""
    spec = resolve(load_config_file(path), config_path=str(path))
    return spec.device(), spec.settings(), spec


# ---------------------------------------------------------------- output


def _fmt(x):
    # shortest string that round-trips to the same double
    return repr(float(x))


def write_profile(path, model, state, potential):
    sc = model.scale
    up = to_updown(state, model.axis)
    n = state.as_array()
    cols = [
        sc.unscale_length(model.grid.x) * 1e6,
        *(sc.unscale_density(n[:, k]) for k in range(4)),
        sc.unscale_density(up.n_plus),
        sc.unscale_density(up.n_minus),
        sc.unscale_potential(potential.V if hasattr(potential, "V") else potential),
    ]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x_um", "n0", "n1", "n2", "n3", "n_plus", "n_minus", "V_volts"])
        for row in zip(*cols):
            w.writerow([_fmt(v) for v in row])


SERIES_HEADER = [
    "t_ps", "H0", "HQ", "mass", "min_nplus", "min_nminus", "max_nplus", "max_nminus", "perp_norm", "gummel_iters",
]


class SeriesWriter:
    def __init__(self, path, model):
        self._fh = open(path, "w", newline="")
        self._w = csv.writer(self._fh, lineterminator="\n")
        self._w.writerow(SERIES_HEADER)
        self._model = model

    def write(self, rec):
        t_ps = self._model.scale.unscale_time(rec.t) * 1e12
        self._w.writerow(
            [_fmt(t_ps), _fmt(rec.H0), "" if rec.HQ is None else _fmt(rec.HQ), _fmt(rec.mass)]
            + [_fmt(b) for b in rec.bounds]
            + [_fmt(rec.perp_norm), str(rec.gummel_iters)]
        )

    def close(self):
        self._fh.close()


def write_manifest(path, spec, model, p, status, extra=()):
    lines = [f"status = {status}", f"preset = {spec.preset}", f"mode = {spec.mode}", f"p = {_fmt(p)}"]
    if spec.config_path:
        lines.append(f"config_path = {spec.config_path}")
    for k in sorted(spec.values):
        if k in ("p", "p_values", "preset", "mode"):
            continue
        lines.append(f"{k} = {json.dumps(spec.values[k])}")
    for k, v in model.scale.as_dict().items():
        lines.append(f"scale.{k} = {_fmt(v) if isinstance(v, float) else json.dumps(v)}")
    lines.append(f"nodes = {model.n_nodes}")
    lines.extend(f"{k} = {v}" for k, v in extra)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------- runs


def _run_steady(spec, p, out):
    model = build_model(spec.device(p))
    settings = spec.settings()
    write_profile(os.path.join(out, "profile_t0.csv"), model, model.initial_state(), model.linear_potential())
    guess, V = gs.solve_steady(model, settings, gs.LINEAR_POTENTIAL)
    state = guess
    if spec.mode == gs.SELF_CONSISTENT:
        state, V = gs.solve_steady(model, settings, gs.SELF_CONSISTENT, state_guess=guess)
    write_profile(os.path.join(out, "profile_steady.csv"), model, state, V)
    reference = gs.entropy_reference(model, settings, spec.mode)
    from .diagnostics import make_record

    series = SeriesWriter(os.path.join(out, "series.csv"), model)
    try:
        series.write(make_record(state, V, model, reference, 0, sample_j1=False))
    finally:
        series.close()
    return model, [("solution", "steady")]


def _run_transient(spec, p, out):
    model = build_model(spec.device(p))
    settings = spec.settings()
    series = SeriesWriter(os.path.join(out, "series.csv"), model)
    every = spec.snapshot_every
    V0 = gs.initial_potential(model, spec.mode, "zero" if spec.preset == "transient-entropy" else "linear")

    def hook(step, state, potential, rec):
        series.write(rec)
        if step % every == 0:
            write_profile(os.path.join(out, f"profile_t{step}.csv"), model, state, potential)

    try:
        tr = gs.run_transient(model, settings, spec.mode, hooks=(hook,), V0=V0, sample_j1=False)
    finally:
        series.close()
    if tr.steps % every:
        write_profile(os.path.join(out, f"profile_t{tr.steps}.csv"), model, tr.state, tr.potential)
    return model, [("steps", tr.steps), ("steady", tr.steady), ("M_bound", _fmt(tr.M_bound))]


def run_single(spec, p, out):
    """One run into ``out``; returns 0 on success and 1 on solver failure."""
    os.makedirs(out, exist_ok=True)
    runner = _run_transient if spec.preset == "transient-entropy" else _run_steady
    try:
        model, extra = runner(spec, p, out)
    except SpinDDError as exc:
        log.error("run p=%s failed: %s", p, exc)
        model = build_model(spec.device(p))
        write_manifest(os.path.join(out, "manifest.txt"), spec, model, p, "failed", [("error", str(exc))])
        return 1
    write_manifest(os.path.join(out, "manifest.txt"), spec, model, p, "ok", extra)
    return 0


def _sweep_dir(out, p):
    return os.path.join(out, f"p_{p:g}")


def run(spec, jobs=1):
    """Execute a resolved run; sweeps go to ``<out>/p_<value>`` subdirectories."""
    if not spec.is_sweep:
        return run_single(spec, spec.values["p"], spec.out)
    ps = spec.p_values
    dirs = [_sweep_dir(spec.out, p) for p in ps]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            codes = list(pool.map(run_single, [spec] * len(ps), ps, dirs))
    else:
        codes = [run_single(spec, p, d) for p, d in zip(ps, dirs)]
    return max(codes)


def _p_list(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"--p expects a comma-separated list of numbers, got {text!r}") from exc


def build_parser():
    ap = argparse.ArgumentParser(prog="spindd", description="Spin-polarized drift-diffusion diode simulator.")
    ap.add_argument("--config", help="JSON file with configuration keys")
    ap.add_argument("--preset", choices=PRESETS)
    ap.add_argument("--mode", choices=gs.MODES)
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--p", type=_p_list, help="polarization, or a comma list for a sweep")
    ap.add_argument("--grid-points", type=int)
    ap.add_argument("--dt-over-tau", type=float)
    ap.add_argument("--max-time-ps", type=float)
    ap.add_argument("--snapshot-every", type=int)
    ap.add_argument("--jobs", type=int, default=1, help="parallel processes for sweeps")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    overrides = {
        "preset": args.preset,
        "mode": args.mode,
        "out": args.out,
        "grid_points": args.grid_points,
        "dt_over_tau": args.dt_over_tau,
        "max_time_ps": args.max_time_ps,
        "snapshot_every": args.snapshot_every,
    }
    if args.p is not None:
        if len(args.p) == 1:
            overrides["p"] = args.p[0]
            overrides["p_values"] = args.p
        else:
            overrides["p_values"] = args.p
    try:
        file_values = load_config_file(args.config) if args.config else {}
        spec = resolve(file_values, overrides, args.config)
    except ConfigurationError as exc:
        print(f"spindd: error: {exc}", file=sys.stderr)
        return 2
    return run(spec, jobs=max(1, args.jobs))


if __name__ == "__main__":
    sys.exit(main())
