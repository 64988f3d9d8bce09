"""``qmq`` command-line front end.

Each subcommand runs one scenario from a TOML (or JSON) config and writes
plot-ready CSV series, a JSON report and a manifest sidecar into ``--out``.
A manifest can be passed back as ``--config`` to reproduce the run.

Exit codes: 0 success, 2 config/argument error, 3 parameter validation
error, 4 resource cap exceeded.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import math
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__, analytics, engine, metrics, models, protocols, sme, sweetspot
from .errors import ConfigError, DomainError, ResourceError

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

SCENARIOS = ("charge-readout", "spin-readout", "sweetspot", "sme-compare", "leakage-experiment")

EXIT_OK, EXIT_CONFIG, EXIT_DOMAIN, EXIT_RESOURCE = 0, 2, 3, 4

#: hard cap on the number of meter steps in any series
HARD_MAX_N = engine.DEFAULT_MAX_N
#: nominal sustained throughput used for the time estimate in ``validate``
NOMINAL_FLOPS = 2e9

DEFAULTS: dict[str, dict] = {
    "run": {
        "prefix": None,
        "out": ".",
        "threads": 1,
        "seed": 0,
        "max_n": None,
        "n_min": 10,
        "points": 40,
        "streaming": True,
    },
    "charge": {
        "epsilon": 10.0,
        "gamma": 5.0,
        "delta_gamma": 0.5,
        "t_values": [0.0, 0.1, 0.5, 2.0],
        "delta_tau": None,
    },
    "spin": {
        "U": 1000.0,
        "epsilon": 1040.0,
        "z_l": 11.0,
        "z_r": 9.0,
        "t": 0.0,
        "gamma": 5.0,
        "delta_gamma": 0.5,
        "delta_x_values": [0.0125, 0.05, 0.25],
        "delta_z_values": [-0.125, -0.075, -0.025, 0.0, 0.025, 0.075, 0.125],
        "zeeman_convention": "pauli",
    },
    "sme": {
        "epsilon": 10.0,
        "t": 2.0,
        "gamma": 5.0,
        "delta_gamma": 0.5,
        "n_traj": 0,
    },
    "leakage": {
        "delta_x": 0.05,
        "n_steps_per_round": 600,
        "shots": 10000,
        "q1": 0.0,
        "q2": 0.0,
    },
    "sweetspot": {
        "g_file": None,
        "grid": "181x360",
        "magnitude": 1.0,
    },
}

DEFAULT_MAX_N = {"charge-readout": 4000, "spin-readout": 1500}
DEFAULT_PREFIX = {
    "charge-readout": "fig2",
    "spin-readout": "fig3",
    "sweetspot": "sweetspot",
    "sme-compare": "sme",
    "leakage-experiment": "leakage",
}
SECTIONS = {
    "charge-readout": ("charge",),
    "spin-readout": ("spin",),
    "sweetspot": ("sweetspot",),
    "sme-compare": ("sme",),
    "leakage-experiment": ("spin", "leakage"),
}


# --- config handling -------------------------------------------------------------------


def load_config_file(path) -> tuple[dict, str | None]:
    """Parse a TOML/JSON config or a manifest. Returns ``(config, scenario)``."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        if path.suffix.lower() == ".json":
            data = json.loads(text)
        else:
            data = tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must hold a table of sections")
    scenario = None
    if "manifest_version" in data:
        scenario = data.get("scenario")
        data = data.get("config", {})
    run = data.get("run", {})
    if isinstance(run, dict) and "scenario" in run:
        scenario = scenario or run["scenario"]
        run = {k: v for k, v in run.items() if k != "scenario"}
        data = {**data, "run": run}
    return data, scenario


def resolve_config(raw: dict, scenario: str, stem: str | None = None) -> dict:
    """Merge ``raw`` onto the defaults, rejecting unknown sections and keys."""
    cfg = copy.deepcopy(DEFAULTS)
    for section, values in raw.items():
        if section not in cfg:
            raise ConfigError(f"unknown config section [{section}]")
        if not isinstance(values, dict):
            raise ConfigError(f"[{section}] must be a table")
        for key, value in values.items():
            if key not in cfg[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            cfg[section][key] = value
    run = cfg["run"]
    if run["prefix"] is None:
        run["prefix"] = stem or DEFAULT_PREFIX[scenario]
    if run["max_n"] is None:
        run["max_n"] = DEFAULT_MAX_N.get(scenario)
    run["streaming"] = _as_bool(run["streaming"], "run.streaming")
    for key in ("threads", "seed", "n_min", "points"):
        run[key] = _as_int(run[key], f"run.{key}")
    if run["max_n"] is not None:
        run["max_n"] = _as_int(run["max_n"], "run.max_n")
    if run["threads"] < 1:
        raise ConfigError("run.threads must be at least 1")
    return cfg


def _as_int(v, name: str) -> int:
    if isinstance(v, bool) or not isinstance(v, (int, float)) or v != int(v):
        raise ConfigError(f"{name} must be an integer, got {v!r}")
    return int(v)


def _as_bool(v, name: str) -> bool:
    if isinstance(v, bool):
        return v
    if isinstance(v, str) and v.lower() in ("on", "off", "true", "false"):
        return v.lower() in ("on", "true")
    raise ConfigError(f"{name} must be on/off, got {v!r}")


def _number(section: dict, key: str, name: str) -> float:
    v = section[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{name}.{key} must be a number, got {v!r}")
    return float(v)


def _numbers(section: dict, key: str, name: str) -> list[float]:
    v = section[key]
    if not isinstance(v, list) or not v:
        raise ConfigError(f"{name}.{key} must be a non-empty list of numbers")
    return [_number({key: x}, key, name) for x in v]


def parse_grid(text: str) -> tuple[int, int]:
    try:
        a, b = str(text).lower().split("x")
        return int(a), int(b)
    except ValueError as exc:
        raise ConfigError(f"grid must look like 181x360, got {text!r}") from exc


def n_grid(cfg: dict) -> list[int]:
    run = cfg["run"]
    n_max = run["max_n"]
    if n_max > HARD_MAX_N:
        raise ResourceError(f"max_n={n_max} exceeds the cap of {HARD_MAX_N} steps")
    return engine.log_checkpoints(run["n_min"], n_max, run["points"])


# --- parameter construction -----------------------------------------------------------


def charge_params(cfg: dict) -> list[models.ChargeQubitParams]:
    c = cfg["charge"]
    eps, gamma, dg = (_number(c, k, "charge") for k in ("epsilon", "gamma", "delta_gamma"))
    out = [models.ChargeQubitParams(eps, t, gamma, dg) for t in _numbers(c, "t_values", "charge")]
    for p in out:
        p.validate()
    return out


def spin_params(cfg: dict, delta=(0.0, 0.0, 0.0)) -> models.SpinQubitParams:
    s = cfg["spin"]
    vals = {k: _number(s, k, "spin") for k in ("epsilon", "t", "U", "z_l", "z_r", "gamma", "delta_gamma")}
    p = models.SpinQubitParams(**vals, delta=tuple(delta), zeeman_convention=s["zeeman_convention"])
    p.validate()
    return p


def _charge_delta_tau(cfg: dict) -> float | None:
    dt = cfg["charge"]["delta_tau"]
    return None if dt is None else _number(cfg["charge"], "delta_tau", "charge")


# --- output helpers --------------------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    return "nan" if math.isnan(x) else f"{x:.12g}"


def write_csv(path: Path, header, rows) -> Path:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return None if not math.isfinite(float(obj)) else float(obj)
    return obj


def write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n")
    return path


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _prediction(r: analytics.RatePrediction) -> dict:
    return {"value": r.value, "valid": r.valid, "reason": r.reason, "variants": dict(r.variants)}


# --- scenarios ---------------------------------------------------------------------------


def run_charge_readout(cfg: dict, out: Path) -> tuple[list[Path], dict]:
    run = cfg["run"]
    prefix = run["prefix"]
    n_values = n_grid(cfg)
    rho_pre = np.eye(2, dtype=complex) / 2
    infid_rows, mix_rows = [], []
    report: dict = {"t_values": {}}
    drift = 0.0
    for p in charge_params(cfg):
        model = models.charge_readout_model(p, _charge_delta_tau(cfg))
        dt = model.delta_tau
        series = metrics.conditional_series(
            model, n_values, rho_pre, workers=run["threads"], max_n=HARD_MAX_N,
            streaming=run["streaming"],
        )
        drift = max(drift, series.trace_drift)
        gm = analytics.measurement_rate(p.delta_gamma, dt, gamma=p.gamma)
        gd = analytics.dephasing_rate(gm.variants["delta_p"], dt)
        entry: dict = {"delta_tau_ns": dt, "gamma_m": _prediction(gm), "gamma_d": _prediction(gd)}
        if p.t > 0:
            grel = analytics.relaxation_rate_charge(p.t, p.delta_gamma, p.epsilon, dt)
            entry["gamma_rel"] = _prediction(grel)
            fit = metrics.fit_relaxation(model, grel.value)
            entry["gamma_rel_fit"] = {"rate": fit.rate, "residual": fit.residual}
            g_rel = grel.value
            try:
                ideal = analytics.ideal_integration_time(gm.value, g_rel)
                entry["ideal_time_ns"] = {"closed_form": ideal.closed_form, "refined": ideal.refined}
            except DomainError as exc:
                entry["ideal_time_ns"] = {"error": str(exc)}
        else:
            g_rel = 0.0
            fit = metrics.fit_measurement_rate_series(series)
            entry["gamma_m_fit"] = {"rate": fit.rate, "residual": fit.residual}
        minimum = metrics.interior_minimum(series.integration_times, series.infidelity)
        entry["numeric_minimum"] = (
            None if minimum is None else {"time_ns": minimum[0], "infidelity": minimum[1]}
        )
        estimate = analytics.infidelity_estimate(gm.value, g_rel, series.integration_times)
        report["t_values"][_fmt(p.t)] = entry
        for i, n in enumerate(series.n_steps):
            tau = series.integration_times[i]
            infid_rows.append((p.t, n, tau, series.infidelity[i], series.k_critical[i], estimate[i]))
            mix_rows.append(
                (p.t, n, tau, series.mixedness_by_outcome["e"][i], series.mixedness_by_outcome["g"][i])
            )
    files = [
        write_csv(
            out / f"{prefix}_infidelity.csv",
            ("t_ueV", "n_steps", "time_ns", "infidelity", "k_critical", "infidelity_estimate"),
            infid_rows,
        ),
        write_csv(
            out / f"{prefix}_mixedness.csv",
            ("t_ueV", "n_steps", "time_ns", "mixedness_e", "mixedness_g"),
            mix_rows,
        ),
        write_json(out / f"{prefix}_rates.json", report),
    ]
    return files, {"trace_drift": drift}


def run_spin_readout(cfg: dict, out: Path) -> tuple[list[Path], dict]:
    run = cfg["run"]
    prefix = run["prefix"]
    s = cfg["spin"]
    n_values = n_grid(cfg)
    report: dict = {"leakage": {}, "measurement_rate": {}}
    drift = 0.0

    leak_rows = []
    rho_dd = np.outer(models.basis_state(models.DD), models.basis_state(models.DD))
    for dx in _numbers(s, "delta_x_values", "spin"):
        p = spin_params(cfg, (dx, 0.0, 0.0))
        model = models.spin_readout_model(p)
        dt = model.delta_tau
        g_leak = analytics.leakage_rate(dx, p.z_r, dt)
        leak = metrics.leakage_series(model, rho_dd, n_values)
        analytic = 0.5 * (1.0 - np.exp(-g_leak.value * np.asarray(n_values) * dt))
        entry = {"delta_tau_ns": dt, "gamma_leak": _prediction(g_leak)}
        decay = 1.0 - 2.0 * leak
        if np.all(decay > 0):
            fit = metrics.fit_decay_rate(np.asarray(n_values) * dt, decay, window=None)
            entry["gamma_leak_fit"] = {"rate": fit.rate, "residual": fit.residual}
        if g_leak.value > 0:
            n_sat = int(math.ceil(10.0 / (g_leak.value * dt)))
            if n_sat <= 50 * HARD_MAX_N:
                entry["saturation"] = {
                    "n_steps": n_sat,
                    "leakage": float(metrics.leakage_series(model, rho_dd, [n_sat])[0]),
                }
        report["leakage"][_fmt(dx)] = entry
        for n, value, ref in zip(n_values, leak, analytic):
            leak_rows.append((dx, n, n * dt, value, ref))

    infid_rows, rate_rows = [], []
    dzs = _numbers(s, "delta_z_values", "spin")
    fitted, predicted = [], []
    for dz in dzs:
        p = spin_params(cfg, (0.0, 0.0, dz))
        model = models.spin_readout_model(p)
        dt = model.delta_tau
        series = metrics.conditional_series(
            model, n_values, workers=run["threads"], max_n=HARD_MAX_N, streaming=run["streaming"]
        )
        drift = max(drift, series.trace_drift)
        fit = metrics.fit_measurement_rate_series(series)
        gm = analytics.measurement_rate(p.delta_gamma, dt, dz, gamma=p.gamma)
        fitted.append(fit.rate)
        predicted.append(gm.value)
        rate_rows.append((dz, dt, fit.rate, gm.value, fit.rate / gm.value - 1.0))
        report["measurement_rate"][_fmt(dz)] = {
            "delta_tau_ns": dt, "fit": fit.rate, "fit_residual": fit.residual, "analytic": _prediction(gm),
        }
        for i, n in enumerate(series.n_steps):
            infid_rows.append((dz, n, series.integration_times[i], series.infidelity[i], series.k_critical[i]))
    if len(dzs) >= 3:
        slope, icpt = np.polyfit(dzs, fitted, 1)
        pred = slope * np.asarray(dzs) + icpt
        ss_res = float(np.sum((np.asarray(fitted) - pred) ** 2))
        ss_tot = float(np.sum((np.asarray(fitted) - np.mean(fitted)) ** 2))
        report["measurement_rate_linear_fit"] = {
            "slope": slope, "intercept": icpt, "r_squared": 1.0 - ss_res / ss_tot if ss_tot > 0 else None,
        }
    files = [
        write_csv(
            out / f"{prefix}_leakage.csv",
            ("delta_x_ueV", "n_steps", "time_ns", "leakage", "leakage_analytic"),
            leak_rows,
        ),
        write_csv(
            out / f"{prefix}_infidelity.csv",
            ("delta_z_ueV", "n_steps", "time_ns", "infidelity", "k_critical"),
            infid_rows,
        ),
        write_csv(
            out / f"{prefix}_measurement_rate.csv",
            ("delta_z_ueV", "delta_tau_ns", "gamma_m_fit", "gamma_m_analytic", "relative_error"),
            rate_rows,
        ),
        write_json(out / f"{prefix}_rates.json", report),
    ]
    return files, {"trace_drift": drift}


def _read_pair(path) -> sweetspot.GTensorPair:
    try:
        return sweetspot.read_pair_csv(path)
    except DomainError:
        raise
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read g-tensor file {path}: {exc}") from exc


def run_sweetspot(cfg: dict, out: Path) -> tuple[list[Path], dict]:
    prefix = cfg["run"]["prefix"]
    sw = cfg["sweetspot"]
    grid = parse_grid(sw["grid"])
    if sw["g_file"]:
        pair = _read_pair(sw["g_file"])
        source = str(sw["g_file"])
    else:
        warnings.warn("no g-tensor file given; using the built-in synthetic pair", stacklevel=2)
        pair = sweetspot.synthetic_hole_spin_pair()
        source = "synthetic"
    mag = _number(sw, "magnitude", "sweetspot")
    spots = sweetspot.sweet_spot_directions(pair)
    dmap = sweetspot.direction_sweep(pair, grid, mag)
    directions = []
    for v, lam in spots:
        theta = math.degrees(math.acos(max(-1.0, min(1.0, v[2]))))
        phi = math.degrees(math.atan2(v[1], v[0])) % 360.0
        dz, dx, _ = sweetspot.decompose_delta(pair, sweetspot.FieldConfig(v, mag))
        directions.append(
            {"direction": v, "eigenvalue": lam, "theta_deg": theta, "phi_deg": phi,
             "delta_x_ueV": dx, "delta_z_ueV": dz}
        )
    report = {
        "source": source,
        "g": pair.g,
        "g_prime": pair.g_prime,
        "eigenvalues_real": np.real(spots.eigenvalues),
        "eigenvalues_imag": np.imag(spots.eigenvalues),
        "degenerate": spots.degenerate,
        "note": spots.note,
        "sweet_spots": directions,
        "grid": list(grid),
    }
    files = [
        dmap.write_csv(out / f"{prefix}_map.csv"),
        write_json(out / f"{prefix}_directions.json", report),
    ]
    return files, {}


def run_sme_compare(cfg: dict, out: Path) -> tuple[list[Path], dict]:
    prefix = cfg["run"]["prefix"]
    s = cfg["sme"]
    eps, t, gamma, dg = (_number(s, k, "sme") for k in ("epsilon", "t", "gamma", "delta_gamma"))
    models.ChargeQubitParams(eps, t, gamma, dg).validate()
    dt = models.calibrate_timestep(gamma, dg)
    cmp = sme.compare_rates(gamma, dg, eps, t, dt)
    report = cmp.as_dict()
    n_traj = _as_int(s["n_traj"], "sme.n_traj")
    if n_traj > 0:
        q0 = models.ChargeQubitParams(eps, 0.0, gamma, dg)
        p = sme.match_parameters(gamma, dg, dt, q0)
        est = sme.ensemble_dephasing_rate(p, n_traj=n_traj, seed=cfg["run"]["seed"])
        report["ensemble_dephasing"] = {
            "rate": est.rate, "sigma": est.sigma, "expected": p.dephasing_rate, "n_traj": n_traj,
        }
    files = [write_json(out / f"{prefix}_sme_rates.json", report)]
    return files, {}


def run_leakage_experiment(cfg: dict, out: Path) -> tuple[list[Path], dict]:
    run = cfg["run"]
    lk = cfg["leakage"]
    dx = _number(lk, "delta_x", "leakage")
    p = spin_params(cfg, (dx, 0.0, 0.0))
    n = _as_int(lk["n_steps_per_round"], "leakage.n_steps_per_round")
    if n > HARD_MAX_N:
        raise ResourceError(f"n_steps_per_round={n} exceeds the cap of {HARD_MAX_N}")
    res = protocols.simulate_leakage_experiment(
        p, n, _as_int(lk["shots"], "leakage.shots"), run["seed"],
        q1=_number(lk, "q1", "leakage"), q2=_number(lk, "q2", "leakage"), workers=run["threads"],
    )
    files = [res.write_json(out / f"{run['prefix']}_leakage_experiment.json")]
    return files, {}


RUNNERS = {
    "charge-readout": run_charge_readout,
    "spin-readout": run_spin_readout,
    "sweetspot": run_sweetspot,
    "sme-compare": run_sme_compare,
    "leakage-experiment": run_leakage_experiment,
}


def run(scenario: str, cfg: dict) -> dict:
    """Run one scenario and write its files plus a manifest. Returns the manifest."""
    out = Path(cfg["run"]["out"])
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from exc
    t0 = time.perf_counter()
    files, diagnostics = RUNNERS[scenario](cfg, out)
    wall = time.perf_counter() - t0
    manifest_path = out / f"{cfg['run']['prefix']}_{scenario}.manifest.json"
    manifest = {
        "manifest_version": 1,
        "scenario": scenario,
        "version": __version__,
        "config": cfg,
        "wall_time_s": wall,
        "diagnostics": diagnostics,
        "files": {f.name: _sha256(f) for f in files},
    }
    write_json(manifest_path, manifest)
    manifest["manifest"] = str(manifest_path)
    return manifest


# --- validate ---------------------------------------------------------------------------


def validate(scenario: str, cfg: dict) -> list[str]:
    """Dry run: check parameters and resource needs without simulating."""
    lines = [f"scenario {scenario}"]
    run = cfg["run"]
    if scenario in ("charge-readout", "spin-readout"):
        if scenario == "charge-readout":
            charge_params(cfg)
            dim, probes, count = 2, 3, len(cfg["charge"]["t_values"])
        else:
            for dx in _numbers(cfg["spin"], "delta_x_values", "spin"):
                spin_params(cfg, (dx, 0.0, 0.0))
            for dz in _numbers(cfg["spin"], "delta_z_values", "spin"):
                spin_params(cfg, (0.0, 0.0, dz))
            dim, probes, count = 6, 2, len(cfg["spin"]["delta_z_values"])
        n_values = n_grid(cfg)
        n_max = n_values[-1]
        if run["streaming"]:
            nbytes = engine.streaming_bytes(n_max, dim, probes)
            rows = probes
        else:
            nbytes = engine.history_bytes(n_max, dim)
            rows = dim**2
            if nbytes > engine.MAX_CHANNEL_BYTES:
                raise ResourceError(
                    f"full channel history at N={n_max} needs ~{nbytes / 1e9:.1f} GB "
                    f"(cap {engine.MAX_CHANNEL_BYTES / 1e9:.1f} GB); rerun with --streaming on"
                )
        flops = 8.0 * rows * dim**4 * n_max**2 * count
        lines.append(f"grid: {len(n_values)} points, N in [{n_values[0]}, {n_max}]")
        lines.append(f"mode: {'streaming' if run['streaming'] else 'full history'}")
        lines.append(f"estimated memory: {nbytes / 1e6:.1f} MB")
        seconds = flops / NOMINAL_FLOPS
        lines.append(f"estimated time: {seconds:.1f} s at {NOMINAL_FLOPS / 1e9:.0f} GFLOP/s")
        if not run["streaming"] and seconds > 3600:
            lines.append("hint: the full channel history is slow at this N; use --streaming on")
    elif scenario == "sweetspot":
        sw = cfg["sweetspot"]
        grid = parse_grid(sw["grid"])
        if sw["g_file"]:
            _read_pair(sw["g_file"])
        lines.append(f"grid: {grid[0]}x{grid[1]} directions")
    elif scenario == "sme-compare":
        s = cfg["sme"]
        models.ChargeQubitParams(*(_number(s, k, "sme") for k in ("epsilon", "t", "gamma", "delta_gamma"))).validate()
        lines.append(f"trajectories: {_as_int(s['n_traj'], 'sme.n_traj')}")
    else:
        lk = cfg["leakage"]
        spin_params(cfg, (_number(lk, "delta_x", "leakage"), 0.0, 0.0))
        n = _as_int(lk["n_steps_per_round"], "leakage.n_steps_per_round")
        if n > HARD_MAX_N:
            raise ResourceError(f"n_steps_per_round={n} exceeds the cap of {HARD_MAX_N}")
        lines.append(f"round length: {n} steps, shots: {lk['shots']}")
    lines.append("OK")
    return lines


# --- argument parsing -------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="TOML/JSON config or a previous manifest")
    p.add_argument("--out", help="output directory")
    p.add_argument("--threads", type=int, help="worker threads for the engine")
    p.add_argument("--seed", type=int, help="random seed")
    p.add_argument("--max-n", type=int, dest="max_n", help="largest number of meter steps")
    p.add_argument("--streaming", choices=("on", "off"), help="propagate probes only (on) or full channels (off)")
    p.add_argument("--prefix", help="file name prefix (default: config file stem)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qmq", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SCENARIOS:
        p = sub.add_parser(name)
        _add_common(p)
        if name == "sweetspot":
            p.add_argument("--g-file", dest="g_file", help="CSV with g (3 rows) then g' (3 rows)")
            p.add_argument("--grid", help="theta x phi samples, e.g. 181x360")
    p = sub.add_parser("validate", help="check a config without running it")
    _add_common(p)
    p.add_argument("--scenario", choices=SCENARIOS)
    p.add_argument("config_path", nargs="?", type=Path, help="config file (same as --config)")
    return parser


def _infer_scenario(raw: dict) -> str | None:
    hits = [s for s, secs in SECTIONS.items() if all(sec in raw for sec in secs)]
    return hits[-1] if len(hits) == 1 or (hits and "leakage" in raw) else None


def _configure(args) -> tuple[str, dict]:
    raw, scenario, stem = {}, None, None
    config_path = args.config or getattr(args, "config_path", None)
    if config_path is not None:
        raw, scenario = load_config_file(config_path)
        # relative paths inside a config are relative to the config file
        g_file = raw.get("sweetspot", {}).get("g_file")
        if isinstance(g_file, str) and g_file:
            raw = copy.deepcopy(raw)
            raw["sweetspot"]["g_file"] = str((config_path.parent / g_file).resolve())
        # a manifest carries its own prefix
        stem = None if raw.get("run", {}).get("prefix") else config_path.stem
    if args.command != "validate":
        if scenario is not None and scenario != args.command:
            raise ConfigError(f"config is for {scenario!r}, not {args.command!r}")
        scenario = args.command
    else:
        scenario = args.scenario or scenario or _infer_scenario(raw)
        if scenario is None:
            raise ConfigError("cannot tell which scenario to validate; pass --scenario")
    raw = copy.deepcopy(raw)
    run = raw.setdefault("run", {})
    for key in ("out", "threads", "seed", "max_n", "prefix"):
        value = getattr(args, key, None)
        if value is not None:
            run[key] = value
    if args.streaming is not None:
        run["streaming"] = args.streaming
    if scenario == "sweetspot":
        sw = raw.setdefault("sweetspot", {})
        for key in ("g_file", "grid"):
            value = getattr(args, key, None)
            if value is not None:
                sw[key] = str(Path(value).resolve()) if key == "g_file" else value
    return scenario, resolve_config(raw, scenario, stem)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        scenario, cfg = _configure(args)
        if args.command == "validate":
            for line in validate(scenario, cfg):
                print(line)
            return EXIT_OK
        manifest = run(scenario, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DomainError as exc:
        print(f"invalid parameters: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except ResourceError as exc:
        print(f"resource limit: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    for name in manifest["files"]:
        print(name)
    print(f"manifest: {manifest['manifest']}  ({manifest['wall_time_s']:.1f} s)")
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
