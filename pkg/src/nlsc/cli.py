"""Command-line entry point ``nlsc``.

Configuration is an INI document::

    [model]
    d = 3
    alpha = 2.0          ; or mass-critical / energy-critical
    c = -0.1

    [grid]
    r_max = 30
    n = 4000

Further sections: ``run`` (subcommand, seed, workers, gs_tol), ``controls``
(EvolveControls fields), ``io`` (out_dir, format), ``data`` (family, value,
width, T, bump_radius), ``virial`` (R, eps) and one ``sweep.NAME`` section
per sweep cell.  Keys set in ``grid`` and ``controls`` (and ``run.gs_tol``)
are sweep defaults; cell keys override them.  Command-line flags override the
file.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import platform
import re
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .classify import Geometry, classify, config_digest, sweep
from .dynamics import EvolveControls, evolve, trajectory_summary, write_trajectory_csv
from .errors import (
    ConfigParseError,
    NLSCError,
    NotConverged,
    SweepContradiction,
)
from .exact import default_bump, positive_energy_blowup_data, pseudo_conformal
from .grid import (
    Field,
    ModelParams,
    apply_pc,
    build_grid,
    h1c_seminorm_sq,
    hardy_residual,
    mass,
)
from .groundstate import (
    elliptic_residual,
    explicit_w,
    export_profile,
    shoot_ground_state,
    summary_record,
    thresholds,
    w_closed_form_norm,
)
from .virial import (
    A_BREAK,
    build_phi_r,
    build_theta,
    epsilon_bound,
    export_weight,
    global_virial_rhs,
    localized_virial_bound,
    masscrit_virial_bound,
    positivity_margin,
    virial_first_derivative,
    virial_potential,
    virial_second_derivative,
)

__all__ = ["RunConfig", "parse_config", "run", "main", "SUBCOMMANDS"]

SUBCOMMANDS = ("ground", "evolve", "virial-check", "classify", "sweep", "verify")
FORMATS = ("csv", "json")

_SCHEMA = {
    "run": {"subcommand": str, "seed": int, "workers": int, "gs_tol": float},
    "model": {"d": int, "alpha": str, "c": float},
    "grid": {"r_max": float, "n": int},
    "controls": {
        "dt0": float, "t_end": float, "adapt": bool, "blowup_h1_factor": float,
        "energy_drift_cap": float, "snapshot_stride": int, "virial_radius": float,
        "window": int, "max_steps": int,
    },
    "io": {"out_dir": str, "format": str},
    "data": {"family": str, "value": float, "width": float, "T": float,
             "bump_radius": float},
    "virial": {"R": float, "eps": float},
}
_CELL_KEYS = {
    "d": "ints", "alpha": "alphas", "c": "floats", "family": str, "values": "floats",
    "width": float, "r_max": float, "n": int, "dt0": float, "t_end": float,
    "gs_tol": float, "blowup_h1_factor": float, "energy_drift_cap": float,
    "snapshot_stride": int,
}
_FAMILIES = ("ground", "gaussian", "pseudo_conformal", "positive_energy")

_SECTION_RE = re.compile(r"^\s*\[([^\]]+)\]")
_KEY_RE = re.compile(r"^\s*([^=:#;\s][^=:]*?)\s*[=:]")


@dataclass(frozen=True)
class RunConfig:
    """Validated run description."""

    subcommand: str
    model: ModelParams
    grid: dict
    controls: EvolveControls
    io: dict
    data: dict = field(default_factory=dict)
    virial: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)
    seed: int = 0
    gs_tol: float = 1e-4

    def canonical(self) -> dict:
        """Plain-data form; the digest of this identifies the run.

        The worker count is left out: it does not change any output.
        """
        m = self.model
        return {
            "subcommand": self.subcommand,
            "model": {"d": m.d, "alpha": m.alpha, "c": m.c},
            "grid": dict(self.grid),
            "controls": asdict(self.controls),
            "io": {"format": self.io["format"]},
            "data": dict(self.data),
            "virial": dict(self.virial),
            "sweep": {"defaults": self.sweep.get("defaults", {}),
                      "cells": self.sweep.get("cells", [])},
            "seed": self.seed,
            "gs_tol": self.gs_tol,
        }


def _key_lines(text: str) -> dict:
    out, section = {}, None
    for i, line in enumerate(text.splitlines(), start=1):
        m = _SECTION_RE.match(line)
        if m:
            section = m.group(1).strip()
            out.setdefault((section, None), i)
            continue
        m = _KEY_RE.match(line)
        if m and section is not None:
            out.setdefault((section, m.group(1).strip().lower()), i)
    return out


def _convert(raw: str, kind, line: int | None, key: str):
    try:
        if kind is bool:
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind == "floats":
            return [float(x) for x in raw.split(",") if x.strip()]
        if kind == "ints":
            return [int(x) for x in raw.split(",") if x.strip()]
        if kind == "alphas":
            return [x.strip() for x in raw.split(",") if x.strip()]
        return raw.strip()
    except ValueError:
        raise ConfigParseError(f"bad value {raw!r} for {key}", line) from None


def _alpha(spec, d: int) -> float:
    if isinstance(spec, (int, float)):
        return float(spec)
    s = str(spec).strip().lower()
    if s == "mass-critical":
        return 4.0 / d
    if s == "energy-critical":
        if d <= 2:
            raise ConfigParseError("energy-critical alpha needs d >= 3", None)
        return 4.0 / (d - 2)
    if "/" in s:
        num, den = s.split("/", 1)
        return float(num) / float(den)
    return float(s)


def parse_config(text: str, overrides: dict | None = None) -> RunConfig:
    """Parse an INI document into a RunConfig.

    ``overrides`` maps ``section.key`` to already-typed values (command-line
    flags) and wins over the document.

    Raises
    ------
    ConfigParseError
        Malformed text, unknown sections or keys, bad values.
    CouplingOutOfRange, DimensionUnsupported
        Invalid model parameters.
    """
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigParseError(str(exc).splitlines()[0], getattr(exc, "lineno", None)) from None
    lines = _key_lines(text)
    values: dict = {s: {} for s in _SCHEMA}
    cells = []
    for section in parser.sections():
        sec_line = lines.get((section, None))
        if section.startswith("sweep."):
            cell = {}
            for key, raw in parser.items(section):
                line = lines.get((section, key.lower()))
                if key not in _CELL_KEYS:
                    raise ConfigParseError(f"unknown key {key!r} in [{section}]", line)
                cell[key] = _convert(raw, _CELL_KEYS[key], line, key)
            for req in ("d", "alpha", "c", "values"):
                if req not in cell:
                    raise ConfigParseError(f"[{section}] needs {req!r}", sec_line)
            cells.append((section[6:], cell))
            continue
        if section == "sweep":
            for key, raw in parser.items(section):
                line = lines.get((section, key.lower()))
                if key != "workers":
                    raise ConfigParseError(f"unknown key {key!r} in [sweep]", line)
                values["run"]["workers"] = _convert(raw, int, line, key)
            continue
        if section not in _SCHEMA:
            raise ConfigParseError(f"unknown section [{section}]", sec_line)
        for key, raw in parser.items(section):
            line = lines.get((section, key.lower()))
            schema = _SCHEMA[section]
            if key not in schema:
                raise ConfigParseError(f"unknown key {key!r} in [{section}]", line)
            values[section][key] = _convert(raw, schema[key], line, key)
    for dotted, val in (overrides or {}).items():
        if val is None:
            continue
        sec, key = dotted.split(".", 1)
        values[sec][key] = val
    return _build(values, cells)


def _build(values: dict, cells: list) -> RunConfig:
    run_sec = values["run"]
    sub = run_sec.get("subcommand", "ground")
    if sub not in SUBCOMMANDS:
        raise ConfigParseError(f"unknown subcommand {sub!r}", None)
    m = values["model"]
    d = int(m.get("d", 3))
    params = ModelParams(d, _alpha(m.get("alpha", 2.0), d), float(m.get("c", -0.1)))
    grid = {"r_max": float(values["grid"].get("r_max", 30.0)),
            "n": int(values["grid"].get("n", 4000))}
    ctrl = dict(values["controls"])
    try:
        controls = EvolveControls(**ctrl)
    except (TypeError, ValueError) as exc:
        raise ConfigParseError(f"[controls]: {exc}", None) from None
    io = {"out_dir": values["io"].get("out_dir", "nlsc_out"),
          "format": values["io"].get("format", "json")}
    if io["format"] not in FORMATS:
        raise ConfigParseError(f"format must be one of {FORMATS}", None)
    data = {"family": "ground", "value": 1.0, "width": 1.0, "T": 1.0, "bump_radius": 0.5}
    data.update(values["data"])
    if data["family"] not in _FAMILIES:
        raise ConfigParseError(f"data family must be one of {_FAMILIES}", None)
    virial = {"R": 10.0}
    virial.update(values["virial"])
    # explicitly set grid and controls keys become sweep defaults; cells override them
    shared = {**values["grid"], **values["controls"]}
    defaults = {k: v for k, v in shared.items() if k in _CELL_KEYS}
    if "gs_tol" in run_sec:
        defaults["gs_tol"] = run_sec["gs_tol"]
    sweep_cfg = {"workers": int(run_sec.get("workers", 1)), "defaults": defaults, "cells": []}
    for name, cell in cells:
        for dd in cell["d"]:
            c = {**cell, "d": int(dd), "alpha": [_alpha(a, dd) for a in cell["alpha"]]}
            for cc in c["c"]:
                for aa in c["alpha"]:
                    ModelParams(int(dd), aa, float(cc))
            fam = c.get("family", "lambda_q")
            c["family"] = "lambda_q" if fam == "ground" else fam
            c["name"] = name
            sweep_cfg["cells"].append(c)
    return RunConfig(sub, params, grid, controls, io, data, virial, sweep_cfg,
                     int(run_sec.get("seed", 0)), float(run_sec.get("gs_tol", 1e-4)))


# -- outputs ------------------------------------------------------------------


def _dump(obj, path: Path) -> None:
    path.write_text(json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n")


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return repr(obj)
    return obj


def _flatten(obj, prefix=""):
    if isinstance(obj, dict):
        for k in sorted(obj):
            yield from _flatten(obj[k], f"{prefix}{k}.")
    elif isinstance(obj, (list, tuple)):
        for i, v in enumerate(obj):
            yield from _flatten(v, f"{prefix}{i}.")
    else:
        yield prefix[:-1], obj


def _write_summary(cfg: RunConfig, out: Path, record: dict) -> None:
    if cfg.io["format"] == "json":
        _dump(record, out / "summary.json")
        return
    with open(out / "summary.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["key", "value"])
        for k, v in _flatten(_plain(record)):
            wr.writerow([k, repr(v) if isinstance(v, float) else v])


def _manifest(cfg: RunConfig, out: Path, tolerances: dict, status: str) -> None:
    canon = cfg.canonical()
    _dump({
        "inputs_digest": config_digest(canon),
        "config": canon,
        "versions": {"nlsc": __version__, "numpy": np.__version__,
                     "scipy": scipy.__version__, "python": platform.python_version()},
        "grid": cfg.grid,
        "tolerances": tolerances,
        "status": status,
    }, out / "manifest.json")


# -- subcommands --------------------------------------------------------------


def _grid(cfg):
    return build_grid(cfg.model.d, cfg.grid["r_max"], cfg.grid["n"])


def _ground_profile(params, grid, tol):
    if params.regime == "energy-critical":
        return explicit_w(params.with_c(params.c_bar), grid), None
    gs = shoot_ground_state(params.with_c(params.c_bar), grid, tol=tol)
    return gs.profile, gs


def _datum(cfg: RunConfig, grid):
    p, data = cfg.model, cfg.data
    fam = data["family"]
    if fam == "ground":
        prof, _ = _ground_profile(p, grid, cfg.gs_tol)
        return prof.scaled(data["value"]), {}
    if fam == "gaussian":
        r = grid.nodes
        return Field(grid, data["value"] * np.exp(-(r / data["width"]) ** 2)), {}
    if fam == "pseudo_conformal":
        gs = shoot_ground_state(p, grid, tol=cfg.gs_tol)
        return pseudo_conformal(gs, data["T"], 0.0), {"T": data["T"]}
    bd = positive_energy_blowup_data(p, data["value"], default_bump(grid, data["bump_radius"]))
    return bd.field, {"lambda": bd.lambda_, "mu": bd.mu, "margin": bd.margin,
                      "datum_margin": bd.datum_margin, "zero_time": bd.zero_time}


def _cmd_ground(cfg, out):
    p = cfg.model
    grid = _grid(cfg)
    if p.regime == "energy-critical":
        w = explicit_w(p.with_c(p.c_bar), grid)
        export_profile(w, out / "profile.dat")
        rec = {"d": p.d, "alpha": p.alpha, "c": p.c, "branch": "explicit_w",
               "h1c_sq_closed_form": w_closed_form_norm(p.with_c(p.c_bar)),
               "h1c_sq": h1c_seminorm_sq(w, p.c_bar),
               "thresholds": thresholds(p, grid).as_dict()}
    else:
        gs = shoot_ground_state(p, grid, tol=cfg.gs_tol)
        export_profile(gs.profile, out / "profile.dat")
        rec = summary_record(gs)
        rec["elliptic_residual"] = elliptic_residual(gs)
        th_gs = gs if p.c <= 0 else None
        rec["thresholds"] = thresholds(p, grid, gs=th_gs).as_dict()
    _write_summary(cfg, out, rec)
    return {"pohozaev": cfg.gs_tol}


def _cmd_evolve(cfg, out):
    grid = _grid(cfg)
    u0, extra = _datum(cfg, grid)
    traj = evolve(u0, cfg.model, cfg.controls)
    write_trajectory_csv(traj, out / "trajectory.csv")
    rec = trajectory_summary(traj)
    rec["datum"] = {**cfg.data, **extra}
    _write_summary(cfg, out, rec)
    return {"energy_drift_cap": cfg.controls.energy_drift_cap,
            "blowup_h1_factor": cfg.controls.blowup_h1_factor}


def _cmd_virial(cfg, out):
    p = cfg.model
    grid = _grid(cfg)
    R = float(cfg.virial["R"])
    eps = float(cfg.virial.get("eps", 0.5 * epsilon_bound(p.d)))
    weight = build_phi_r(build_theta(), R, grid)
    export_weight(weight, out / "weight.csv")
    u0, _ = _datum(cfg, grid)
    rec = {
        "R": R,
        "eps": eps,
        "eps_bound": epsilon_bound(p.d),
        "positivity_margin": positivity_margin(weight, p.d, eps),
        "positivity_margin_inner": positivity_margin(weight, p.d, eps, r_upper=A_BREAK * R),
        "V": virial_potential(u0, weight),
        "dV": virial_first_derivative(u0, weight),
        "d2V": virial_second_derivative(u0, p, weight),
        "global_rhs": global_virial_rhs(u0, p),
    }
    if p.regime == "mass-critical":
        rec["bound"] = masscrit_virial_bound(u0, p, weight, eps)
    else:
        rec["bound"] = localized_virial_bound(u0, p, weight)
    _write_summary(cfg, out, rec)
    return {"positivity": 1e-12}


def _cmd_classify(cfg, out):
    p = cfg.model
    grid = _grid(cfg)
    u0, extra = _datum(cfg, grid)
    gs = None
    if p.regime in ("mass-critical", "intercritical"):
        gs = shoot_ground_state(p.with_c(p.c_bar), grid, tol=cfg.gs_tol)
    th = thresholds(p, grid, gs=gs)
    v = classify(u0, p, th, Geometry(radial=True, has_xu_l2=True))
    rec = {"prediction": v.prediction, "rule": v.rule_fired, "margins": v.margins,
           "thresholds": th.as_dict(), "datum": {**cfg.data, **extra},
           "mass": mass(u0), "h1c_sq": h1c_seminorm_sq(u0, p.c)}
    _write_summary(cfg, out, rec)
    return {"threshold_rel": 1e-3, "energy_rel": 1e-3}


def _cmd_sweep(cfg, out):
    spec = {"defaults": cfg.sweep.get("defaults", {}), "cells": cfg.sweep["cells"]}
    try:
        report = sweep(spec, workers=cfg.sweep["workers"])
        status = None
    except SweepContradiction as exc:
        report = exc.report
        status = exc
    report.write_csv(out / "sweep.csv")
    report.write_json(out / "sweep.json")
    if status is not None:
        raise status
    return {"h1_ratio_global": 10.0}


def _verify_checks(cfg):
    rng = np.random.default_rng(cfg.seed)
    checks = []
    for d in (3, 4, 5):
        g = build_grid(d, 30.0, 2000)
        r = g.nodes
        gauss = (np.pi / 2) ** (d / 2)
        m = mass(Field(g, np.exp(-r**2)))
        checks.append((f"gaussian_mass_d{d}", abs(m - gauss) / gauss, 1e-8))
        worst = np.inf
        for _ in range(50):
            k = rng.integers(1, 5)
            coef = rng.normal(size=k)
            width = rng.uniform(0.5, 5.0, size=k)
            vals = np.sum(coef[:, None] * np.exp(-(r[None, :] / width[:, None]) ** 2), axis=0)
            f = Field(g, vals)
            scale = h1c_seminorm_sq(f, 0.0)
            worst = min(worst, hardy_residual(f) / scale)
        checks.append((f"hardy_d{d}", -worst, 1e-8))
        lam = ((d - 2) / 2) ** 2
        f = Field(g, np.exp(-r**2))
        c = -0.5 * lam
        lhs = float(np.sum(g.weights * np.real(np.conj(f.values) * apply_pc(f, c).values)))
        rhs = h1c_seminorm_sq(f, c)
        checks.append((f"form_identity_d{d}", abs(lhs - rhs) / rhs, 1e-10))
    p = cfg.model
    if p.regime in ("mass-critical", "intercritical"):
        gs = shoot_ground_state(p.with_c(p.c_bar), _grid(cfg), tol=np.inf)
        checks.append(("pohozaev", max(gs.pohozaev_residuals), cfg.gs_tol))
    return checks


def _cmd_verify(cfg, out):
    checks = _verify_checks(cfg)
    rec = {name: {"value": val, "tol": tol, "pass": bool(val <= tol)}
           for name, val, tol in checks}
    _write_summary(cfg, out, rec)
    if not all(c["pass"] for c in rec.values()):
        failed = sorted(k for k, c in rec.items() if not c["pass"])
        raise NotConverged(f"verify failed: {', '.join(failed)}")
    return {name: tol for name, _, tol in checks}


_DISPATCH = {
    "ground": _cmd_ground,
    "evolve": _cmd_evolve,
    "virial-check": _cmd_virial,
    "classify": _cmd_classify,
    "sweep": _cmd_sweep,
    "verify": _cmd_verify,
}


def run(cfg: RunConfig) -> int:
    """Execute ``cfg``; returns the process exit status."""
    out = Path(cfg.io["out_dir"])
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"nlsc: cannot create {out}: {exc}", file=sys.stderr)
        return 2
    try:
        tol = _DISPATCH[cfg.subcommand](cfg, out)
    except (ValueError, ConfigParseError) as exc:
        _manifest(cfg, out, {}, f"error: {exc}")
        print(f"nlsc: {exc}", file=sys.stderr)
        return 2
    except NLSCError as exc:
        _manifest(cfg, out, {}, f"failed: {type(exc).__name__}: {exc}")
        print(f"nlsc: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    _manifest(cfg, out, tol, "ok")
    return 0


def _arg_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nlsc", description=__doc__.splitlines()[0])
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--config", type=Path)
    ap.add_argument("--d", type=int)
    ap.add_argument("--alpha", type=str)
    ap.add_argument("--c", type=float)
    ap.add_argument("--rmax", type=float)
    ap.add_argument("--n", type=int)
    ap.add_argument("--tend", type=float)
    ap.add_argument("--out", type=str)
    ap.add_argument("--workers", type=int)
    return ap


def main(argv=None) -> int:
    args = _arg_parser().parse_args(argv)
    try:
        text = args.config.read_text() if args.config else ""
    except OSError as exc:
        print(f"nlsc: cannot read config: {exc}", file=sys.stderr)
        return 2
    overrides = {
        "run.subcommand": args.subcommand,
        "model.d": args.d,
        "model.alpha": args.alpha,
        "model.c": args.c,
        "grid.r_max": args.rmax,
        "grid.n": args.n,
        "controls.t_end": args.tend,
        "io.out_dir": args.out,
        "run.workers": args.workers,
    }
    try:
        cfg = parse_config(text, overrides)
    except ValueError as exc:
        print(f"nlsc: {exc}", file=sys.stderr)
        return 2
    return run(cfg)

