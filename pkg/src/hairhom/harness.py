"""Configuration, model runs, comparison metrics and output files.

A run takes one scenario through any subset of the models

    A, B       leading-order macroscopic solution in the standard / distinguished regime
    A2, B2     the same plus the first- and second-order corrections
    reference  resolved-hair solve on the axisymmetric cell

and tabulates every model on the same heights, times and radii so that gap
norms can be recomputed from ``profile.csv`` alone.
"""
from __future__ import annotations

import configparser
import csv
import io
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.linalg

from . import macro, reference
from .cell import build_cell_psi, ring_average
from .correctors import CorrectorParams, w_closed_form
from .errors import (ConfigParseError, HairhomError, SolverError, UnsupportedStudyError,
                     ValidationError)
from .numerics import RESIDUAL_TOL, Grid1D, observed_orders
from .scenario import Scenario

log = logging.getLogger(__name__)

MODELS = ("A", "B", "A2", "B2", "reference")
MODEL_REGIME = {"A": "standard", "B": "distinguished", "A2": "standard", "B2": "distinguished",
                "reference": "reference"}
PROFILE_COLUMNS = ("model", "regime", "t", "z", "r_or_diag", "value")
SWEEPABLE = {"a_eps": "a_eps", "epsilon": "epsilon", "kappa": "kappa", "beta": "beta",
             "lambda": "lam", "d_u": "D_u", "l": "L", "m": "M"}
STUDIES = ("macro", "annulus", "time")

_SCENARIO_KEYS = {
    "regime": ("regime", str), "epsilon": ("epsilon", float), "a_eps": ("a_eps", float),
    "lambda": ("lam", float), "l": ("L", float), "m": ("M", float), "beta": ("beta", float),
    "d_u": ("D_u", float), "kappa": ("kappa", float), "uptake": ("uptake", str),
    "top_bc": ("top_bc", str), "top_value": ("top_value", float), "u_init": ("u_init", float),
    "mode": ("mode", str), "t": ("T", float), "dt": ("dt", float),
}


@dataclass(frozen=True)
class GridOptions:
    n_nodes: int = macro.DEFAULT_NODES
    n_r: int = 128
    n_z: int = 128
    grading: float = 1.0
    z_grading: float = reference.DEFAULT_Z_GRADING
    psi_modes: int = 64
    n_profile: int = 101


@dataclass(frozen=True)
class RunConfig:
    scenario: Scenario
    models: tuple = ("A", "B", "reference")
    grids: GridOptions = field(default_factory=GridOptions)
    out: Optional[str] = None
    slices: tuple = (0.0, 0.75)
    name: str = "run"
    sweep_param: Optional[str] = None
    sweep_values: tuple = ()
    study: Optional[str] = None
    levels: int = 4

    def with_value(self, param: str, value: float) -> "RunConfig":
        """Copy with one scenario parameter replaced (used by sweeps)."""
        key = SWEEPABLE[param.lower()]
        changes = {key: value}
        if key == "a_eps":
            changes["lam"] = None
        elif key == "lam":
            changes["a_eps"] = None
        return replace(self, scenario=replace(self.scenario, **changes))


# ---------------------------------------------------------------------------
# configuration


def _parse_list(text: str):
    return [t.strip() for t in text.replace(";", ",").split(",") if t.strip()]


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    """Parse INI-style ``key = value`` text; keys before any header go to ``[scenario]``."""
    lines = text.splitlines()
    offset = 0
    first = next((ln.strip() for ln in lines if ln.strip() and ln.strip()[0] not in "#;"), "")
    if not first.startswith("["):
        text = "[scenario]\n" + text
        offset = 1
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=source)
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] - offset
        raise ConfigParseError(f"cannot parse {lines[lineno - 1].strip()!r}", lineno) from None
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as exc:
        raise ConfigParseError(str(exc.message if hasattr(exc, "message") else exc).split(": ", 1)[-1],
                               (exc.lineno or 0) - offset) from None
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigParseError("missing section header", exc.lineno - offset) from None
    except configparser.Error as exc:
        raise ConfigParseError(str(exc)) from None

    problems = []
    known = {"scenario", "models", "grid", "output", "sweep", "convergence"}
    for sec in parser.sections():
        if sec not in known:
            problems.append(f"unknown section [{sec}]")

    def get(section, key, conv, default):
        if not parser.has_option(section, key):
            return default
        raw = parser.get(section, key)
        try:
            return conv(raw)
        except ValueError:
            problems.append(f"[{section}] {key}: cannot read {raw!r} as {conv.__name__}")
            return default

    def check_keys(section, allowed):
        if parser.has_section(section):
            for key in parser.options(section):
                if key not in allowed:
                    problems.append(f"[{section}] unknown key {key!r}")

    check_keys("scenario", _SCENARIO_KEYS)
    check_keys("models", {"models"})
    check_keys("grid", {"n_nodes", "n_r", "n_z", "grading", "z_grading", "psi_modes", "n_profile"})
    check_keys("output", {"out", "slices", "name"})
    check_keys("sweep", {"param", "values"})
    check_keys("convergence", {"study", "levels"})

    kwargs = {}
    for key, (attr, conv) in _SCENARIO_KEYS.items():
        value = get("scenario", key, conv, None)
        if value is not None:
            kwargs[attr] = value.strip().lower() if conv is str else value
    if "regime" not in kwargs:
        problems.append("regime is required (standard, distinguished or reference)")

    models = tuple(get("models", "models", _parse_list, None) or ())
    canon = {m.lower(): m for m in MODELS}
    fixed = []
    for m in models:
        if m.lower() not in canon:
            problems.append(f"unknown model {m!r}; expected some of {', '.join(MODELS)}")
        else:
            fixed.append(canon[m.lower()])
    defaults = GridOptions()
    grids = GridOptions(
        n_nodes=get("grid", "n_nodes", int, defaults.n_nodes), n_r=get("grid", "n_r", int, defaults.n_r),
        n_z=get("grid", "n_z", int, defaults.n_z), grading=get("grid", "grading", float, defaults.grading),
        z_grading=get("grid", "z_grading", float, defaults.z_grading),
        psi_modes=get("grid", "psi_modes", int, defaults.psi_modes),
        n_profile=get("grid", "n_profile", int, defaults.n_profile))
    slices = get("output", "slices", lambda s: tuple(float(v) for v in _parse_list(s)), (0.0, 0.75))
    sweep_param = get("sweep", "param", str, None)
    sweep_values = get("sweep", "values", lambda s: tuple(float(v) for v in _parse_list(s)), ())
    study = get("convergence", "study", str, None)
    levels = get("convergence", "levels", int, 4)

    scenario = None
    if "regime" in kwargs:
        try:
            scenario = Scenario(**kwargs)
        except ValidationError as exc:
            problems.extend(exc.problems)
    if problems:
        raise ValidationError(problems)
    config = RunConfig(scenario, tuple(fixed) or default_models(scenario), grids,
                       get("output", "out", str, None), slices,
                       get("output", "name", str, "run"), sweep_param, sweep_values, study, levels)
    validate_config(config)
    return config


def default_models(scenario: Scenario) -> tuple:
    return ("A", "B", "reference") if scenario.a_eps is not None else (
        "A", "B") if scenario.regime != "reference" else ("reference",)


def validate_config(config: RunConfig) -> None:
    """Cross-field checks that the scenario alone cannot make."""
    problems = []
    s, g = config.scenario, config.grids
    if g.n_nodes < 3:
        problems.append("n_nodes must be at least 3")
    if g.n_r < 16 or g.n_z < 16:
        problems.append("n_r and n_z must be at least 16")
    if not 0 <= g.grading <= 1:
        problems.append("grading must lie in [0, 1]")
    if not g.z_grading >= 1:
        problems.append("z_grading must be at least 1")
    if g.psi_modes < 8:
        problems.append("psi_modes must be at least 8")
    if g.n_profile < 2:
        problems.append("n_profile must be at least 2")
    for z in config.slices:
        if not 0 <= z <= s.M:
            problems.append(f"slice z={z} outside [0, M]")
    if not config.models:
        problems.append("no models requested")
    if "reference" in config.models:
        try:
            a = s.hair_ratio
            if not 0 < a < 1:
                raise ValidationError("a_eps must lie in (0, 1)")
            if s.epsilon * a >= reference.cell_radius(s.epsilon):
                problems.append("hair radius does not fit in the cell (a_eps too large)")
        except ValidationError as exc:
            problems.append(f"reference model needs a valid a_eps: {exc}")
    if not s.uptake.is_linear and any(m in ("A2", "B2") for m in config.models):
        problems.append("second-order models A2/B2 need linear uptake")
    if config.sweep_param is not None:
        if config.sweep_param.lower() not in SWEEPABLE:
            problems.append(f"cannot sweep {config.sweep_param!r}; sweepable: {', '.join(SWEEPABLE)}")
        else:
            for v in config.sweep_values:
                try:
                    config.with_value(config.sweep_param, v)
                except ValidationError as exc:
                    problems.append(f"sweep value {v!r}: {exc}")
    if config.study is not None and config.study not in STUDIES:
        problems.append(f"unknown convergence study {config.study!r}; expected one of {STUDIES}")
    if config.levels < 3:
        problems.append("convergence levels must be at least 3")
    if config.out is not None:
        parent = Path(config.out).resolve().parent
        if parent.exists() and not os.access(parent, os.W_OK):
            problems.append(f"output directory {config.out} is not writable")
    if problems:
        raise ValidationError(problems)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc.strerror}") from None
    cfg = parse_config(text, str(path))
    if cfg.name == "run":
        cfg = replace(cfg, name=path.stem)
    return cfg


# ---------------------------------------------------------------------------
# runs


@dataclass
class ComparisonReport:
    config: Optional[RunConfig] = None
    rows: list = field(default_factory=list)
    norms: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)
    psi_mean: Optional[float] = None
    meta: dict = field(default_factory=dict)
    convergence: list = field(default_factory=list)


def report_heights(config: RunConfig) -> np.ndarray:
    z = np.linspace(0.0, config.scenario.M, config.grids.n_profile)
    return np.unique(np.concatenate([z, np.asarray(config.slices, dtype=float)]))


def _run_macro(config: RunConfig, model: str, psi, heights, rows):
    regime = MODEL_REGIME[model]
    sc = config.scenario.with_regime(regime)
    order = 2 if model.endswith("2") else 0
    sol = macro.solve_macro(sc, n_nodes=config.grids.n_nodes, psi_mean=psi.mean, order=order)
    times = [0.0] if sc.mode == "steady" else list(sol.u0.times)
    for k, t in enumerate(times):
        vals = sol.cell_mean(heights, k, order)
        rows.extend((model, regime, t, z, "avg", v) for z, v in zip(heights.tolist(), vals.tolist()))
    return sol


def _macro_radial(config, model, sol, psi, slice_r, rows):
    """Ring-averaged reconstruction at the reference radii of every slice."""
    sc = sol.scenario
    eps = sc.epsilon
    t = 0.0 if sc.mode == "steady" else float(sol.u0.times[-1])
    u0, u1, U2 = sol.fields_at(-1)
    for z, r in slice_r.items():
        base = float(np.interp(z, sol.grid.nodes, u0))
        if z < sc.L and U2 is not None:
            hz = sol.grid.hair_zone().nodes
            psi_r = ring_average(psi, r / eps)
            vals = base + eps * float(np.interp(z, hz, u1)) + eps ** 2 * (
                float(np.interp(z, hz, U2)) + sol.psi_coefficient * base * psi_r)
        else:
            vals = np.full(r.size, base)
        rows.extend((model, MODEL_REGIME[model], t, z, rr, v) for rr, v in zip(r.tolist(), vals.tolist()))


def _run_reference(config: RunConfig, heights, rows):
    sc = config.scenario.with_regime("reference")
    g = config.grids
    sol = reference.solve_reference(sc, n_r=g.n_r, n_z=g.n_z, grading=g.grading, z_grading=g.z_grading)
    for k, t in enumerate(sol.times.tolist()):
        vals = [reference.cell_average_profile(sol, z, k) for z in heights.tolist()]
        rows.extend(("reference", "reference", t, z, "avg", v) for z, v in zip(heights.tolist(), vals))
    slice_r = {}
    t = float(sol.times[-1])
    for z in config.slices:
        r, u = sol.slice(z)
        keep = ~np.isnan(u)
        slice_r[z] = r[keep]
        rows.extend(("reference", "reference", t, z, rr, v) for rr, v in zip(r[keep].tolist(), u[keep].tolist()))
    return sol, slice_r


def run_scenario(config: RunConfig) -> ComparisonReport:
    """Run every requested model on the config's scenario and compare them."""
    psi = build_cell_psi(config.grids.psi_modes)
    heights = report_heights(config)
    rows = []
    meta = summary_meta(config, psi)
    slice_r = None
    ref = None
    ordered = sorted(config.models, key=MODELS.index)
    try:
        if "reference" in ordered:
            ref, slice_r = _run_reference(config, heights, rows)
            up = reference.total_uptake(ref) if ref.steady else None
            if up is not None:
                meta.update(uptake_hair=up.hair, uptake_root=up.root, influx=up.influx,
                            flux_imbalance=up.imbalance)
            meta["reference_nodes"] = ref.grid.n_active
        for m in ordered:
            if m == "reference":
                continue
            sol = _run_macro(config, m, psi, heights, rows)
            if slice_r is not None and m in ("A2", "B2"):
                _macro_radial(config, m, sol, psi, slice_r, rows)
    except SolverError as exc:
        raise type(exc)(f"[{config.name}] {exc}") from exc
    norms, flags = derive_norms(rows)
    return ComparisonReport(config, rows, norms, flags, psi.mean, meta)


def summary_meta(config: RunConfig, psi) -> dict:
    s = config.scenario
    lam_a = s.lambda_for("standard")
    lam_b = s.lambda_for("distinguished")
    meta = {
        "name": config.name,
        "regime": s.regime,
        "models": ",".join(sorted(config.models, key=MODELS.index)),
        "mode": s.mode,
        "uptake": s.uptake.name,
        "epsilon": s.epsilon,
        "a_eps": s.hair_ratio,
        "lambda": lam_b if s.regime != "standard" else lam_a,
        "lambda_A": lam_a,
        "lambda_B": lam_b,
        "kappa_tilde": lam_b * s.kappa / s.D_u,
        "sink_A": macro.sink_coefficient("standard", s.kappa, s.D_u),
        "sink_B": macro.sink_coefficient("distinguished", s.kappa, s.D_u, lam_b),
        "psi_mean": psi.mean,
        "psi_modes": psi.modes,
        "psi_error_estimate": psi.error_estimate,
        "rho_cell": reference.cell_radius(s.epsilon),
        "grading": config.grids.grading,
        "z_grading": config.grids.z_grading,
        "n_nodes": config.grids.n_nodes,
        "n_r": config.grids.n_r,
        "n_z": config.grids.n_z,
        "residual_tol": RESIDUAL_TOL,
        "picard_tol_macro": macro.PICARD_TOL,
        "picard_tol_reference": reference.PICARD_TOL,
    }
    if s.mode == "transient":
        meta.update(T=s.T, dt=s.dt, top_bc=s.top_bc)
    return meta


# ---------------------------------------------------------------------------
# norms


def _l2_z(z, d):
    return math.sqrt(max(float(np.trapezoid(d * d, z)), 0.0))


def _l2_radial(r, d):
    w = float(np.trapezoid(r, r))
    return math.sqrt(float(np.trapezoid(d * d * r, r)) / w) if w > 0 else float(abs(d).max())


def derive_norms(rows):
    """Gap norms and ordering flags from profile rows.

    Axial gaps compare each model's cell average with the reference at the
    final time; slice gaps compare radial profiles at the reference radii
    with weight ``r``.  Used by both :func:`run_scenario` and :func:`compare`.
    """
    avg, radial, t_final = {}, {}, {}
    for model, _, t, z, rd, v in rows:
        t_final[model] = max(t_final.get(model, -np.inf), t)
    for model, _, t, z, rd, v in rows:
        if t != t_final[model]:
            continue
        if rd == "avg":
            avg.setdefault(model, {})[z] = v
        else:
            radial.setdefault((model, z), {})[rd] = v
    norms, flags = {}, {}
    ref = avg.get("reference")
    if ref is not None:
        for m in MODELS:
            if m == "reference" or m not in avg:
                continue
            zs = np.array(sorted(set(ref) & set(avg[m])))
            d = np.array([avg[m][z] - ref[z] for z in zs])
            norms[f"gap_linf_{m}"] = float(np.abs(d).max()) if d.size else 0.0
            norms[f"gap_l2_{m}"] = _l2_z(zs, d) if d.size > 1 else 0.0
        for (m, z), prof in sorted(radial.items(), key=lambda kv: (MODELS.index(kv[0][0]), kv[0][1])):
            if m == "reference" or ("reference", z) not in radial:
                continue
            rp = radial[("reference", z)]
            rs = np.array(sorted(set(rp) & set(prof)))
            d = np.array([prof[r] - rp[r] for r in rs])
            norms[f"slice_l2_{m}_z{z!r}"] = _l2_radial(rs, d) if d.size > 1 else 0.0
        if 0.0 in ref:
            r0 = ref[0.0]
            a0 = avg.get("A", {}).get(0.0)
            b0 = avg.get("B", {}).get(0.0)
            if a0 is not None:
                flags["A_under"] = bool(a0 < r0)
            if b0 is not None:
                flags["B_over"] = bool(b0 > r0)
            if a0 is not None and b0 is not None:
                flags["A_under_B_over"] = bool(a0 < r0 < b0)
        for z in sorted({z for (_, z) in radial}):
            ka, kb = f"slice_l2_A2_z{z!r}", f"slice_l2_B2_z{z!r}"
            if ka in norms and kb in norms:
                flags[f"B2_closer_z{z!r}"] = bool(norms[kb] < norms[ka])
    return norms, flags


# ---------------------------------------------------------------------------
# output


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write(path: Path, text: str):
    try:
        path.write_text(text)
    except OSError as exc:
        raise HairhomError(f"cannot write {path}: {exc.strerror}") from None


def profile_text(rows, prefix=()) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(tuple(p for p, _ in prefix) + PROFILE_COLUMNS)
    pre = tuple(_fmt(v) for _, v in prefix)
    for row in rows:
        w.writerow(pre + tuple(_fmt(x) for x in row))
    return buf.getvalue()


def summary_text(report: ComparisonReport) -> str:
    lines = [f"{k}={_fmt(v)}" for k, v in report.meta.items()]
    lines += [f"{k}={_fmt(v)}" for k, v in report.norms.items()]
    lines += [f"{k}={_fmt(v)}" for k, v in report.flags.items()]
    return "".join(line + "\n" for line in lines)


def convergence_text(table) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("h", "error", "order"))
    for h, e, p in table:
        w.writerow((_fmt(h), _fmt(e), "" if p is None else _fmt(p)))
    return buf.getvalue()


def emit_outputs(report: ComparisonReport, directory) -> list:
    """Write ``profile.csv``, ``summary.kv`` and, if present, ``convergence.csv``."""
    d = Path(directory)
    try:
        d.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise HairhomError(f"cannot create {d}: {exc.strerror}") from None
    written = [d / "profile.csv", d / "summary.kv"]
    _write(written[0], profile_text(report.rows))
    _write(written[1], summary_text(report))
    if report.convergence:
        written.append(d / "convergence.csv")
        _write(written[-1], convergence_text(report.convergence))
    return written


def read_profile(path):
    """Rows of a ``profile.csv`` with numeric fields converted back."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != PROFILE_COLUMNS:
            raise ValidationError(f"{path}: unexpected header {header}")
        for rec in reader:
            model, regime, t, z, rd, v = rec
            rows.append((model, regime, float(t), float(z), rd if rd == "avg" else float(rd), float(v)))
    return rows


def read_summary(path) -> dict:
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line:
                k, _, v = line.partition("=")
                out[k] = v
    return out


def compare(directory):
    """Recompute norms and flags from ``profile.csv``; list disagreements with ``summary.kv``."""
    d = Path(directory)
    rows = read_profile(d / "profile.csv")
    norms, flags = derive_norms(rows)
    mismatches = []
    summary = d / "summary.kv"
    if summary.exists():
        stored = read_summary(summary)
        for k, v in list(norms.items()) + list(flags.items()):
            if stored.get(k) != _fmt(v):
                mismatches.append(f"{k}: stored {stored.get(k)} recomputed {_fmt(v)}")
    return norms, flags, mismatches


# ---------------------------------------------------------------------------
# sweeps


def _value_tag(v: float) -> str:
    return repr(float(v))


def run_sweep(config: RunConfig, param: Optional[str] = None, values=None, out=None,
              workers: Optional[int] = None) -> list:
    """Run one scenario per value, concurrently, and merge in the given order."""
    param = param or config.sweep_param
    values = tuple(values if values is not None else config.sweep_values)
    if param is None or not values:
        raise ValidationError("sweep needs a parameter and at least one value")
    config = replace(config, sweep_param=param, sweep_values=values)
    validate_config(config)
    configs = [replace(config.with_value(param, v), name=f"{config.name}:{param}={_value_tag(v)}")
               for v in values]
    with ThreadPoolExecutor(max_workers=workers or min(len(configs), os.cpu_count() or 1)) as pool:
        reports = list(pool.map(run_scenario, configs))
    if out is not None:
        emit_sweep(reports, param, values, out)
    return reports


def emit_sweep(reports, param, values, out):
    base = Path(out)
    for rep, v in zip(reports, values):
        emit_outputs(rep, base / f"{param}={_value_tag(v)}")
    merged = io.StringIO()
    merged.write("param,param_value," + ",".join(PROFILE_COLUMNS) + "\n")
    summary = [f"param={param}", "values=" + ",".join(_value_tag(v) for v in values)]
    for rep, v in zip(reports, values):
        body = profile_text(rep.rows, prefix=(("param", param), ("param_value", float(v))))
        merged.write(body.split("\n", 1)[1])
        tag = f"{param}={_value_tag(v)}"
        summary += [f"{tag}.{line}" for line in summary_text(rep).splitlines()]
    _write(base / "sweep.csv", merged.getvalue())
    _write(base / "summary.kv", "".join(s + "\n" for s in summary))


# ---------------------------------------------------------------------------
# convergence studies


def default_study(config: RunConfig) -> str:
    s = config.scenario
    if s.regime == "reference":
        return "annulus"
    return "macro" if s.mode == "steady" else "time"


def _with_orders(hs, errs):
    orders = [None] + [float(p) for p in observed_orders(hs, errs)]
    return [(float(h), float(e), p) for h, e, p in zip(hs, errs, orders)]


def convergence_study(config: RunConfig, levels: Optional[int] = None, study: Optional[str] = None):
    """Errors against an analytic oracle on successively halved meshes.

    ``macro``: steady linear u0 against the cosh/linear closed form;
    ``annulus``: the resolved solver's annulus mode against the corrector;
    ``time``: backward Euler on a transient linear u0 against the matrix
    exponential of the same semi-discrete system.
    """
    levels = config.levels if levels is None else int(levels)
    if levels < 3:
        raise ValidationError("convergence levels must be at least 3")
    study = study or config.study or default_study(config)
    s = config.scenario
    if study not in STUDIES:
        raise UnsupportedStudyError(f"unknown study {study!r}")
    if study in ("macro", "time"):
        if s.regime == "reference":
            raise UnsupportedStudyError(f"{study} study needs the standard or distinguished regime")
        if not s.uptake.is_linear:
            raise UnsupportedStudyError(f"no closed-form oracle for {study} with nonlinear uptake")
    if study == "macro":
        if s.mode != "steady" or s.top_bc != "dirichlet":
            raise UnsupportedStudyError("macro study needs a steady run with a Dirichlet top")
        S = macro.sink_coefficient(s.regime, s.kappa, s.D_u, s.lambda_value if s.regime == "distinguished" else 0.0)
        hs, errs = [], []
        for k in range(levels):
            grid = Grid1D.build(s.L, s.M, 32 * 2 ** k + 1)
            u = macro.solve_u0(s, grid)
            exact = macro.u0_closed_form(grid.nodes, S, s.D_u, s.beta, s.L, s.M, s.top_value)
            hs.append(grid.h)
            errs.append(float(np.abs(u.values - exact).max()))
        return _with_orders(hs, errs)
    if study == "annulus":
        a = s.hair_ratio
        params = CorrectorParams(s.epsilon, a, s.kappa if s.kappa > 0 else 1.0, s.D_u)
        hs, errs = [], []
        for k in range(levels):
            n = 16 * 2 ** k
            sol = reference.solve_annulus(params, n_r=n, grading=config.grids.grading)
            r = sol.grid.r
            u = sol.final[:, sol.grid.z.size // 2]
            hs.append(1.0 / n)
            errs.append(float(np.abs(u - w_closed_form(params, r)).max()))
        return _with_orders(hs, errs)
    # time
    if s.mode != "transient":
        raise UnsupportedStudyError("time study needs a transient scenario")
    grid = Grid1D.build(s.L, s.M, 65)
    S = macro.sink_coefficient(s.regime, s.kappa, s.D_u, s.lambda_value if s.regime == "distinguished" else 0.0)
    exact = _expm_reference(s, grid, S)
    hs, errs = [], []
    for k in range(levels):
        dt = s.dt / 2 ** k
        u = macro.solve_u0(replace(s, dt=dt), grid).values[-1]
        hs.append(dt)
        errs.append(float(np.abs(u - exact).max()))
    return _with_orders(hs, errs)


def _expm_reference(s: Scenario, grid: Grid1D, S: float) -> np.ndarray:
    """Exact time integration of the semi-discrete u0 system to ``T``."""
    top = s.top_value if s.top_bc == "dirichlet" else None
    op = macro.diffusion_operator(grid, s.D_u, S, sink_until=s.L, robin_left=s.beta, dirichlet_right=top)
    n = op.size
    fixed = sorted(op.dirichlet)
    free = np.array([i for i in range(n) if i not in op.dirichlet])
    K = op.stiffness.toarray()
    u = s.initial_profile(grid.nodes)
    for i in fixed:
        u[i] = op.dirichlet[i]
    minv = 1.0 / op.mass[free]
    A = -minv[:, None] * K[np.ix_(free, free)]
    b = minv * (op.forcing[free] - K[np.ix_(free, fixed)] @ u[fixed]) if fixed else minv * op.forcing[free]
    aug = np.zeros((free.size + 1, free.size + 1))
    aug[:-1, :-1] = A
    aug[:-1, -1] = b
    state = np.append(u[free], 1.0)
    out = u.copy()
    out[free] = (scipy.linalg.expm(aug * s.T) @ state)[:-1]
    return out


def run(config: RunConfig, out=None) -> ComparisonReport:
    """Run, optionally attach the convergence table, and write outputs."""
    report = run_scenario(config)
    if config.study is not None:
        report.convergence = convergence_study(config)
    target = out or config.out
    if target is not None:
        emit_outputs(report, target)
    return report


__all__ = ["RunConfig", "GridOptions", "ComparisonReport", "parse_config", "load_config",
           "validate_config", "run_scenario", "run", "run_sweep", "convergence_study",
           "emit_outputs", "compare", "derive_norms", "read_profile"]
