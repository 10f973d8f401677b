"""Batch front end: ``potsweep <config.yaml> [--out DIR]``.

The configuration is one YAML mapping. Every run writes ``<prefix>.csv``
(one row per resolution or level), ``<prefix>.diagnostics.yaml`` (solver and
truncation diagnostics) and, when ``output.plot`` is true, ``<prefix>.plot.csv``
with potentials at probe points. Floats are written with 17 significant
digits and nothing time-dependent is recorded, so reruns are bitwise equal.

Exit status: 0 on success, 2 on a configuration error (the message names the
offending field), 3 when a solver fails to certify its result.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from . import balayage, geometry, green, kernels, measures
from .measures import IllConditionedError
from .solver import SolverError

log = logging.getLogger("potsweep")

COMMANDS = ("sweep", "equilibrium", "represent", "symmetry", "refine", "green-demo", "mass-curve")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3


class ConfigError(ValueError):
    def __init__(self, field: str, message: str):
        super().__init__(f"config field {field!r}: {message}")
        self.field = field


# ---------------------------------------------------------------- parsing


def _section(cfg: dict, key: str, required: bool = True):
    if key not in cfg:
        if required:
            raise ConfigError(key, "missing")
        return None
    return cfg[key]


def _mapping(value, field: str) -> dict:
    if not isinstance(value, dict):
        raise ConfigError(field, f"expected a mapping, got {type(value).__name__}")
    return value


def _positive(value, field: str) -> float:
    try:
        v = float(value)
    except (TypeError, ValueError):
        raise ConfigError(field, f"expected a number, got {value!r}") from None
    if not v > 0:
        raise ConfigError(field, f"must be positive, got {value!r}")
    return v


def _int_list(value, field: str) -> list[int]:
    if not isinstance(value, list) or not value:
        raise ConfigError(field, "expected a nonempty list of positive integers")
    out = []
    for v in value:
        if isinstance(v, bool) or not isinstance(v, int) or v < 1:
            raise ConfigError(field, f"entries must be positive integers, got {v!r}")
        out.append(v)
    return out


def parse_kernel(d) -> kernels.Kernel:
    d = _mapping(d, "kernel")
    if "variant" not in d:
        raise ConfigError("kernel.variant", "missing")
    if d["variant"] not in ("riesz", "newtonian", "green_ball2", "green_alpha_ball"):
        raise ConfigError("kernel.variant", f"unknown kernel variant {d['variant']!r}")
    try:
        return kernels.kernel_from_dict(d)
    except KeyError as exc:
        raise ConfigError(f"kernel.{exc.args[0]}", "missing") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError("kernel", str(exc)) from None


def parse_descriptor(d, field: str) -> geometry.Descriptor:
    d = _mapping(d, field)
    if "shape" not in d:
        raise ConfigError(f"{field}.shape", "missing")
    try:
        desc = geometry.descriptor_from_dict(d)
    except KeyError as exc:
        raise ConfigError(f"{field}.{exc.args[0]}", "missing") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(field, str(exc)) from None
    return desc


def build_set(desc, resolution: int, field: str) -> geometry.DiscretizedSet:
    try:
        return geometry.build(desc, resolution)
    except geometry.GeometryError as exc:
        raise ConfigError(field, str(exc)) from None


def parse_source(d, field: str = "source") -> measures.DiscreteMeasure:
    """``{points: [...], weights: [...]}`` or ``{uniform: <descriptor>, resolution: r, mass: m}``."""
    d = _mapping(d, field)
    try:
        if "points" in d:
            pts = np.asarray(d["points"], dtype=float)
            w = d.get("weights")
            if w is not None and len(w) != len(pts):
                raise ConfigError(f"{field}.weights", "need one weight per point")
            return measures.dirac(pts, w)
        if "uniform" in d:
            desc = parse_descriptor(d["uniform"], f"{field}.uniform")
            if "resolution" not in d:
                raise ConfigError(f"{field}.resolution", "missing")
            res = _int_list([d["resolution"]], f"{field}.resolution")[0]
            mass = _positive(d.get("mass", 1.0), f"{field}.mass")
            return measures.uniform(build_set(desc, res, f"{field}.uniform"), mass)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(field, str(exc)) from None
    raise ConfigError(field, "expected 'points' or 'uniform'")


def _tol(cfg) -> float:
    tol = cfg.get("tolerances", {}) or {}
    tol = _mapping(tol, "tolerances")
    return _positive(tol.get("kkt", balayage.DEFAULT_TOL_KKT), "tolerances.kkt")


def _check_dims(k, dim: int, field: str):
    if k.n != dim:
        raise ConfigError("kernel.n", f"kernel lives in R^{k.n} but {field} in R^{dim}")


def _experiment(cfg) -> green.GreenExperiment:
    d = _mapping(_section(cfg, "experiment"), "experiment")
    allowed = {"R", "n", "r_F", "alpha", "source", "r_out", "ext_factor"}
    for key in d:
        if key not in allowed:
            raise ConfigError(f"experiment.{key}", "unknown key")
    res = _int_list(_section(cfg, "resolutions"), "resolutions")
    try:
        return green.GreenExperiment(**d, resolutions=tuple(res), tol_kkt=_tol(cfg))
    except (TypeError, ValueError) as exc:
        raise ConfigError("experiment", str(exc)) from None


# ---------------------------------------------------------------- commands


def _probes(target, cfg):
    out = cfg.get("output", {}) or {}
    return balayage.probe_points(target, int(out.get("probes", 50)))


def _plot_rows(probes, columns):
    return [[*p, *vals] for p, vals in zip(probes, zip(*columns))]


def cmd_sweep(cfg):
    k = parse_kernel(_section(cfg, "kernel"))
    desc = parse_descriptor(_section(cfg, "target"), "target")
    omega = parse_source(_section(cfg, "source"))
    _check_dims(k, omega.support.dim, "source")
    tol = _tol(cfg)
    rows, diag = [], {}
    for res in _int_list(_section(cfg, "resolutions"), "resolutions"):
        target = build_set(desc, res, "target")
        _check_dims(k, target.dim, "target")
        r = balayage.sweep(omega, target, k, tol)
        resid = r.residual()
        on = r.swept.weights > tol * r.swept_mass
        rows.append({
            "resolution": res,
            "cells": target.size,
            "source_mass": r.source_mass,
            "swept_mass": r.swept_mass,
            "frostman_margin": r.frostman_margin(k.frostman_h),
            "max_support_residual": float(np.max(np.abs(resid[on]))) if on.any() else 0.0,
            "min_residual": float(resid.min()),
        })
        diag[f"resolution_{res}"] = r.diagnostics()
    probes = _probes(target, cfg)
    plot = (
        [f"x{i + 1}" for i in range(target.dim)] + ["source_potential", "swept_potential"],
        _plot_rows(probes, [measures.potential(omega, k, probes), measures.potential(r.swept, k, probes)]),
    )
    return rows, diag, plot


def cmd_equilibrium(cfg):
    k = parse_kernel(_section(cfg, "kernel"))
    desc = parse_descriptor(_section(cfg, "target"), "target")
    tol = _tol(cfg)
    rows, diag = [], {}
    for res in _int_list(_section(cfg, "resolutions"), "resolutions"):
        target = build_set(desc, res, "target")
        _check_dims(k, target.dim, "target")
        eq = balayage.equilibrium(target, k, tol)
        rows.append({
            "resolution": res,
            "cells": target.size,
            "capacity": eq.capacity,
            "energy": eq.energy,
            "normalization_gap": abs(eq.capacity - eq.energy),
        })
        diag[f"resolution_{res}"] = eq.solution.diagnostics()
    probes = _probes(target, cfg)
    plot = (
        [f"x{i + 1}" for i in range(target.dim)] + ["potential"],
        _plot_rows(probes, [measures.potential(eq.measure, k, probes)]),
    )
    return rows, diag, plot


def cmd_represent(cfg):
    k = parse_kernel(_section(cfg, "kernel"))
    desc = parse_descriptor(_section(cfg, "target"), "target")
    omega = parse_source(_section(cfg, "source"))
    _check_dims(k, omega.support.dim, "source")
    tol = _tol(cfg)
    rows, diag = [], {}
    for res in _int_list(_section(cfg, "resolutions"), "resolutions"):
        target = build_set(desc, res, "target")
        _check_dims(k, target.dim, "target")
        G = measures.assemble_gram(target, k)
        direct = balayage.sweep(omega, target, k, tol, gram=G)
        rep = balayage.integral_representation(omega, target, k, tol, gram=G)
        probes = _probes(target, cfg)
        u_d = np.concatenate([G.entries @ direct.swept.weights, measures.potential(direct.swept, k, probes)])
        u_r = np.concatenate([G.entries @ rep.weights, measures.potential(rep, k, probes)])
        rows.append({
            "resolution": res,
            "sup_discrepancy": float(np.max(np.abs(u_d - u_r)) / max(np.max(np.abs(u_d)), 1e-300)),
            "mass_direct": direct.swept_mass,
            "mass_represented": rep.total_mass,
        })
        diag[f"resolution_{res}"] = direct.diagnostics()
    return rows, diag, None


def cmd_symmetry(cfg):
    k = parse_kernel(_section(cfg, "kernel"))
    desc = parse_descriptor(_section(cfg, "target"), "target")
    omega = parse_source(_section(cfg, "source"))
    lam = parse_source(_section(cfg, "second_source"), "second_source")
    _check_dims(k, omega.support.dim, "source")
    _check_dims(k, lam.support.dim, "second_source")
    tol = _tol(cfg)
    rows = []
    for res in _int_list(_section(cfg, "resolutions"), "resolutions"):
        target = build_set(desc, res, "target")
        _check_dims(k, target.dim, "target")
        rows.append({
            "resolution": res,
            "cells": target.size,
            "residual": balayage.verify_symmetry(omega, lam, target, k, tol),
        })
    return rows, {}, None


def cmd_refine(cfg):
    """Nested shell family ``r_in <= |x - c| <= r_outs[j]``."""
    k = parse_kernel(_section(cfg, "kernel"))
    fam = _mapping(_section(cfg, "family"), "family")
    for key in ("center", "r_in", "r_outs", "angular_resolution"):
        if key not in fam:
            raise ConfigError(f"family.{key}", "missing")
    omega = parse_source(_section(cfg, "source"))
    _check_dims(k, omega.support.dim, "source")
    try:
        targets = geometry.make_nested_shells(
            fam["center"], _positive(fam["r_in"], "family.r_in"),
            [_positive(r, "family.r_outs") for r in fam["r_outs"]],
            _int_list([fam["angular_resolution"]], "family.angular_resolution")[0],
            fam.get("ratio"),
        )
    except geometry.GeometryError as exc:
        raise ConfigError("family", str(exc)) from None
    _check_dims(k, targets[0].dim, "family")
    probes = _probes(targets[-1], cfg)
    seq = balayage.refinement_sequence(omega, targets, k, probes, _tol(cfg))
    rows, diag = [], {}
    for j, (t, r) in enumerate(zip(targets, seq.results)):
        step = float(np.min(seq.potentials[j] - seq.potentials[j - 1])) if j else 0.0
        rows.append({
            "level": j + 1,
            "r_out": t.descriptor.r_out,
            "cells": t.size,
            "swept_mass": r.swept_mass,
            "min_potential_increment": step,
        })
        diag[f"level_{j + 1}"] = r.diagnostics()
    plot = (
        [f"x{i + 1}" for i in range(targets[0].dim)] + [f"potential_level_{j + 1}" for j in range(len(targets))],
        _plot_rows(probes, list(seq.potentials)),
    )
    return rows, diag, plot


def cmd_green_demo(cfg):
    """One row per (resolution, r_out); ``truncation_check`` adds the first resolution at 2 r_out."""
    exp = _experiment(cfg)
    runs = [(res, exp.r_out) for res in exp.resolutions]
    if cfg.get("truncation_check", False):
        runs.append((exp.resolutions[0], 2 * exp.r_out))
    rows, diag = [], {}
    for res, r_out in runs:
        c = green.frostman_crosscheck(exp, res, exp.kernel(res, r_out))
        rows.append({"r_out": r_out, **c.row()})
        diag[f"resolution_{res}_r_out_{r_out:g}"] = {
            "green": c.green.diagnostics(), "union": c.union.diagnostics()
        }
    if len(runs) > len(exp.resolutions):
        diag["truncation_delta"] = {
            "resolution": exp.resolutions[0],
            "r_out": exp.r_out,
            "mass_change_on_doubling": rows[-1]["green_mass"] - rows[0]["green_mass"],
        }
    return rows, diag, None


def cmd_mass_curve(cfg):
    exp = _experiment(cfg)
    radii = _section(cfg, "radii")
    if not isinstance(radii, list) or not radii:
        raise ConfigError("radii", "expected a nonempty list of radii")
    radii = [_positive(r, "radii") for r in radii]
    for r in radii:
        try:
            green.GreenExperiment(**{**_experiment_fields(exp), "r_F": r})
        except ValueError as exc:
            raise ConfigError("radii", str(exc)) from None
    rows = []
    for res in exp.resolutions:
        for r, m in green.mass_curve(exp, radii, res):
            rows.append({"resolution": res, "r_F": r, "green_mass": m, "margin": 1.0 - m})
    return rows, {}, None


def _experiment_fields(exp):
    return {f: getattr(exp, f) for f in ("R", "n", "r_F", "alpha", "source", "resolutions", "r_out",
                                         "ext_factor", "tol_kkt")}


HANDLERS = {
    "sweep": cmd_sweep,
    "equilibrium": cmd_equilibrium,
    "represent": cmd_represent,
    "symmetry": cmd_symmetry,
    "refine": cmd_refine,
    "green-demo": cmd_green_demo,
    "mass-curve": cmd_mass_curve,
}


# ---------------------------------------------------------------- output


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for r in rows:
            wr.writerow([_fmt(v) for v in r])


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)) and not isinstance(obj, bool):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            cfg = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError("<file>", str(exc)) from None
    except yaml.YAMLError as exc:
        raise ConfigError("<file>", f"not valid YAML: {exc}") from None
    cfg = _mapping(cfg, "<root>")
    if "command" not in cfg:
        raise ConfigError("command", "missing")
    if cfg["command"] not in COMMANDS:
        raise ConfigError("command", f"unknown command {cfg['command']!r}; expected one of {COMMANDS}")
    return cfg


def run(cfg: dict, out_dir: Path | None = None) -> dict:
    """Execute a parsed configuration and write the output files; returns their paths."""
    command = cfg["command"]
    output = _mapping(cfg.get("output", {}) or {}, "output")
    prefix = Path(str(output.get("prefix", command)))
    if out_dir is not None:
        prefix = Path(out_dir) / prefix.name
    rows, diag, plot = HANDLERS[command](cfg)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    paths = {"csv": prefix.with_name(prefix.name + ".csv"),
             "diagnostics": prefix.with_name(prefix.name + ".diagnostics.yaml")}
    header = list(rows[0].keys())
    write_csv(paths["csv"], header, [[r[h] for h in header] for r in rows])
    with open(paths["diagnostics"], "w") as fh:
        yaml.safe_dump(_plain({"command": command, **diag}), fh, sort_keys=True)
    if plot is not None and output.get("plot", False):
        paths["plot"] = prefix.with_name(prefix.name + ".plot.csv")
        write_csv(paths["plot"], *plot)
    return paths


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="potsweep", description="Balayage and equilibrium experiments.")
    ap.add_argument("config", help="YAML experiment configuration")
    ap.add_argument("--out", type=Path, default=None, help="output directory (overrides the prefix directory)")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        paths = run(cfg, args.out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (geometry.GeometryError, kernels.KernelError, balayage.BalayageError,
            green.ExperimentError) as exc:
        # domain violations surfaced while running are still configuration problems
        print(f"error: config field {_guess_field(exc)!r}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, IllConditionedError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    for kind, p in paths.items():
        print(f"{kind}: {p}")
    return EXIT_OK


def _guess_field(exc) -> str:
    if isinstance(exc, kernels.KernelError):
        return "kernel"
    if isinstance(exc, green.ExperimentError):
        return "experiment"
    if isinstance(exc, balayage.BalayageError):
        return "source"
    return "target"


if __name__ == "__main__":
    sys.exit(main())
