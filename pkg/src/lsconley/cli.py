"""Command-line front end: scenario configs, task dispatch and table output."""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import yaml

from . import __version__, catalog
from .acceptance import run_suite, suite_report
from .catalog import System
from .conley_e import classical_index, e_cohomology_limit, e_index, sphere_family
from .continuation import HomotopyFamily, reineck_verify, verify_isolating_along
from .isolation import GridBox, IsolationError, build_index_pair
from .ls_system import (
    GradientSpec,
    LSField,
    SplitModel,
    negative_gradient_field,
    polynomial_field_K,
    separable_polynomial_b,
    set_threads,
)
from .morse_local import DegenerateCriticalPointError, build_boundary, compare_with_e_index
from .z2_chain import GradedDims

TASKS = ("index", "morse", "compare", "continue", "ecoh", "suite")


class ConfigError(ValueError):
    """Invalid scenario; the message starts with the offending field path."""


class HypothesisFailure(RuntimeError):
    pass


@dataclass
class ScenarioConfig:
    system: Any
    task: str
    lower: Optional[List[float]] = None
    upper: Optional[List[float]] = None
    subdivisions: Optional[List[int]] = None
    T: Optional[float] = None
    step: float = 1e-2
    seed: int = 0
    perturb: float = 0.0
    directions: int = 64
    s_count: int = 11
    p_values: Optional[List[int]] = None
    levels: int = 3
    outputs: Dict[str, str] = field(default_factory=dict)

    def canonical(self) -> str:
        d = {k: v for k, v in self.__dict__.items() if k != "outputs"}
        return json.dumps(d, sort_keys=True, default=str)

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]


def _num_list(v, path: str, n: Optional[int] = None) -> List[float]:
    if not isinstance(v, (list, tuple)) or not all(isinstance(a, (int, float)) for a in v):
        raise ConfigError(f"{path}: expected a list of numbers")
    if n is not None and len(v) != n:
        raise ConfigError(f"{path}: expected {n} entries, got {len(v)}")
    return [float(a) for a in v]


def _validate_system(sysdef, path="system"):
    if isinstance(sysdef, str):
        if sysdef not in catalog.BUILDERS:
            raise ConfigError(f"{path}: unknown catalog system {sysdef!r}")
        return sysdef
    if not isinstance(sysdef, dict):
        raise ConfigError(f"{path}: expected a catalog name or a mapping")
    dim = sysdef.get("dimension")
    if not isinstance(dim, int) or dim < 1:
        raise ConfigError(f"{path}.dimension: expected a positive integer")
    spec = _num_list(sysdef.get("spectrum"), f"{path}.spectrum", dim)
    if any(v == 0 for v in spec):
        raise ConfigError(f"{path}.spectrum: entries must be nonzero")
    kind = sysdef.get("kind", "field")
    if kind not in ("field", "gradient"):
        raise ConfigError(f"{path}.kind: expected 'field' or 'gradient'")
    coeffs = sysdef.get("nonlinearity", [[] for _ in range(dim)])
    if not isinstance(coeffs, list) or len(coeffs) != dim:
        raise ConfigError(f"{path}.nonlinearity: expected one coefficient list per axis")
    for i, c in enumerate(coeffs):
        _num_list(c, f"{path}.nonlinearity[{i}]")
    if "linear" in sysdef:
        _num_list(sysdef["linear"], f"{path}.linear", dim)
    if "levels" in sysdef:
        _num_list(sysdef["levels"], f"{path}.levels")
    return sysdef


def load_config(data: Dict[str, Any], overrides: Optional[Dict[str, Any]] = None) -> ScenarioConfig:
    """Validate a parsed YAML mapping (plus command-line overrides)."""
    data = dict(data or {})
    for k, v in (overrides or {}).items():
        if v is not None:
            data[k] = v
    task = data.get("task")
    if task not in TASKS:
        raise ConfigError(f"task: expected one of {', '.join(TASKS)}")
    system = data.get("system")
    if task not in ("suite", "ecoh") or system is not None:
        if system is None:
            raise ConfigError("system: required")
        system = _validate_system(system)
    nb = data.get("neighborhood") or {}
    if not isinstance(nb, dict):
        raise ConfigError("neighborhood: expected a mapping")
    lower = upper = subs = None
    if nb:
        lower = _num_list(nb.get("lower"), "neighborhood.lower")
        upper = _num_list(nb.get("upper"), "neighborhood.upper", len(lower))
        if any(a >= b for a, b in zip(lower, upper)):
            raise ConfigError("neighborhood.upper: must exceed lower on every axis")
        raw = nb.get("subdivisions", 32)
        subs = [raw] * len(lower) if isinstance(raw, int) else raw
        if not isinstance(subs, list) or len(subs) != len(lower) or not all(isinstance(n, int) for n in subs):
            raise ConfigError("neighborhood.subdivisions: expected an integer or one integer per axis")
    if "subdivisions" in data and data["subdivisions"] is not None:
        raw = data["subdivisions"]
        if not isinstance(raw, int):
            raise ConfigError("neighborhood.subdivisions: expected an integer")
        subs = [raw] * (len(lower) if lower else 1)
    if subs is not None and min(subs) < 8:
        raise ConfigError("neighborhood.subdivisions: at least 8 cells per axis are required")
    T = data.get("T")
    if T is not None and (not isinstance(T, (int, float)) or T <= 0):
        raise ConfigError("T: expected a positive number")
    step = data.get("step", 1e-2)
    if not isinstance(step, (int, float)) or step <= 0:
        raise ConfigError("step: expected a positive number")
    if T is not None and step > T / 10:
        raise ConfigError(f"step: must be at most T/10 = {T / 10:g}")
    seed = data.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError("seed: expected an integer")
    morse = data.get("morse") or {}
    cont = data.get("continuation") or {}
    ecoh = data.get("ecoh") or {}
    directions = morse.get("directions", 64)
    if not isinstance(directions, int) or directions < 8:
        raise ConfigError("morse.directions: expected an integer >= 8")
    s_count = cont.get("s_count", 11)
    if not isinstance(s_count, int) or s_count < 2:
        raise ConfigError("continuation.s_count: expected an integer >= 2")
    p_values = ecoh.get("p")
    if p_values is not None:
        p_values = [p_values] if isinstance(p_values, int) else p_values
        if not all(isinstance(p, int) and p >= 0 for p in p_values):
            raise ConfigError("ecoh.p: expected non-negative integers")
    outputs = data.get("output") or {}
    if not isinstance(outputs, dict):
        raise ConfigError("output: expected a mapping")
    perturb = data.get("perturb", 0.0) or 0.0
    if not isinstance(perturb, (int, float)) or perturb < 0:
        raise ConfigError("perturb: expected a non-negative number")
    return ScenarioConfig(
        system=system, task=task, lower=lower, upper=upper, subdivisions=subs, T=T, step=float(step), seed=seed,
        perturb=float(perturb), directions=directions, s_count=s_count, p_values=p_values,
        levels=int(ecoh.get("levels", 3)), outputs={k: str(v) for k, v in outputs.items()},
    )


def _inline_system(d: Dict[str, Any]) -> System:
    dim = d["dimension"]
    levels = tuple(int(v) for v in d.get("levels", [])) or ()
    model = SplitModel(tuple(float(v) for v in d["spectrum"]), levels)
    coeffs = d.get("nonlinearity", [[] for _ in range(dim)])
    name = d.get("name", "inline")
    if d.get("kind", "field") == "gradient":
        b, gb, hb = separable_polynomial_b(coeffs)
        g = GradientSpec(model, b, gb, hb, support_level=model.levels[-1], name=name)
        F = negative_gradient_field(g)
    else:
        g = None
        F = LSField(model, polynomial_field_K(coeffs), linear=d.get("linear"), name=name)
    U = GridBox((-1.0,) * dim, (1.0,) * dim, 32)
    return System(name, F, U, 2.0, gradient=g)


def resolve_system(cfg: ScenarioConfig) -> System:
    s = catalog.get(cfg.system) if isinstance(cfg.system, str) else _inline_system(cfg.system)
    if not isinstance(s, System):
        return s
    U = s.U
    if cfg.lower is not None:
        if len(cfg.lower) != s.field.dim:
            raise ConfigError(f"neighborhood.lower: system has dimension {s.field.dim}")
        U = GridBox(tuple(cfg.lower), tuple(cfg.upper), tuple(cfg.subdivisions))
    elif cfg.subdivisions is not None:
        U = GridBox(U.lower, U.upper, tuple([cfg.subdivisions[0]] * U.dim))
    T = s.T if cfg.T is None else cfg.T
    if cfg.step > T / 10:
        raise ConfigError(f"step: must be at most T/10 = {T / 10:g}")
    g = s.gradient
    if g is not None and cfg.perturb > 0:
        g = catalog.tilt_gradient(g, cfg.perturb, cfg.seed)
    return System(s.name, s.field if g is s.gradient else negative_gradient_field(g), U, T, g, s.homotopy, s.description)


@dataclass
class RunReport:
    task: str
    system: str
    lines: List[str] = field(default_factory=list)
    tables: Dict[str, GradedDims] = field(default_factory=dict)
    violations: List[str] = field(default_factory=list)
    cells: Dict[str, Any] = field(default_factory=dict)
    witnesses: List[Any] = field(default_factory=list)
    provenance: Dict[str, str] = field(default_factory=dict)
    exit_code: int = 0
    seconds: float = 0.0

    def text(self) -> str:
        out = [f"task: {self.task}", f"system: {self.system}"]
        out += self.lines
        for name, t in self.tables.items():
            out.append(f"table {name}")
            out.append("degree dim")
            out += [f"{k} {v}" for k, v in sorted(t.as_dict().items())]
        if self.violations:
            out.append("violations:")
            out += [f"  {v}" for v in self.violations]
        out += [f"{k}: {v}" for k, v in self.provenance.items()]
        return "\n".join(out) + "\n"


def _index(cfg, s: System, rep: RunReport):
    pair = build_index_pair(s.field, s.U, s.T, cfg.step)
    h = classical_index(pair)
    e = e_index(pair, s.model, h)
    rep.lines += [f"T: {pair.T_used:g}", f"grid: {s.U.header()[2:]}", f"N cells: {len(pair.N.cells)}", f"L cells: {len(pair.L.cells)}"]
    rep.tables = {"classical": h, "e-graded": e.dims}
    rep.cells = {"N": pair.N, "L": pair.L, "GT": pair.GT, "GammaT": pair.GammaT}


def _need_gradient(s: System) -> GradientSpec:
    if s.gradient is None:
        raise HypothesisFailure(f"system {s.name} is not a gradient system")
    return s.gradient


def _morse(cfg, s: System, rep: RunReport):
    mc = build_boundary(_need_gradient(s), s.U, directions=cfg.directions)
    for k in sorted(mc.generators):
        for c in mc.generators[k]:
            rep.lines.append(f"critical {c.label()} rel_index {k} mu_neg {c.mu_neg} f {c.f_value:.6f}")
    for k in sorted(mc.boundary):
        rows = mc.boundary[k].to_dense().astype(int).tolist()
        rep.lines.append(f"boundary {k}: {rows}")
    rep.tables = {"morse": mc.homology()}
    rep.witnesses = [(c.source.label(), c.target.label(), w) for c in mc.connections for w in c.witnesses]


def _compare(cfg, s: System, rep: RunReport):
    r = compare_with_e_index(_need_gradient(s), s.U, s.T, cfg.step, directions=cfg.directions)
    rep.lines.append(r.summary())
    rep.tables = {"morse": r.morse, "e-graded": r.e.dims}
    if not r.equal:
        rep.exit_code = 2


def _continue(cfg, s: System, rep: RunReport):
    if s.homotopy is not None:
        r = verify_isolating_along(s.homotopy, s.U, cfg.s_count, s.T, cfg.step)
        rep.lines += r.lines()
        e0, e1 = r.endpoint_e_indices
        if e0 is not None:
            rep.tables["e-graded s=0"] = e0.dims
        if e1 is not None:
            rep.tables["e-graded s=1"] = e1.dims
        if r.lost_at is not None:
            rep.violations.append(f"isolation lost at s={r.lost_at:.4f}")
        if not r.verdict:
            rep.exit_code = 2
        return
    g = _need_gradient(s)
    r = reineck_verify(s.field, s.U, g, HomotopyFamily.constant(s.field), s.T, cfg.step, cfg.s_count, directions=cfg.directions)
    rep.lines += r.continuation.lines()
    rep.tables = {"e-graded field": r.e_field.dims, "e-graded gradient": r.e_gradient.dims, "morse": r.morse}
    rep.lines.append(f"three tables equal: {'yes' if r.equal else 'no'}")
    if not r.ok:
        rep.exit_code = 2


def _ecoh(cfg, s, rep: RunReport):
    fams = catalog.sphere_families(cfg.levels)
    ps = cfg.p_values if cfg.p_values is not None else sorted(fams)
    for p in ps:
        rec = e_cohomology_limit(fams[p] if p in fams else sphere_family(p, cfg.levels))
        rep.lines.append(f"p={p} level dims {rec.level_dims} composite ranks {dict(sorted(rec.composite_ranks.items()))}")
        rep.lines.append(f"p={p} exactness {'passed' if rec.exact else 'FAILED'}")
        rep.tables[f"limit p={p}"] = rec.limit
        if not rec.exact:
            rep.exit_code = 2


def run_scenario(cfg: ScenarioConfig) -> RunReport:
    t0 = time.perf_counter()
    if cfg.task == "suite":
        results = run_suite(seed=cfg.seed)
        rep = RunReport("suite", "acceptance battery")
        rep.lines = suite_report(results).rstrip("\n").split("\n")
        rep.exit_code = 0 if all(r.passed for r in results) else 1
    else:
        if cfg.system is None:
            name = "sphere-families"
        else:
            name = cfg.system if isinstance(cfg.system, str) else cfg.system.get("name", "inline")
        rep = RunReport(cfg.task, name)
        s = None if cfg.task == "ecoh" else resolve_system(cfg)
        if cfg.task != "ecoh" and not isinstance(s, System):
            raise ConfigError(f"system: {name} is not a flow; use task ecoh")
        {"index": _index, "morse": _morse, "compare": _compare, "continue": _continue, "ecoh": _ecoh}[cfg.task](cfg, s, rep)
    rep.provenance = {"config": cfg.digest(), "catalog": catalog.CATALOG_VERSION, "version": __version__, "seed": str(cfg.seed)}
    rep.seconds = time.perf_counter() - t0
    return rep


def emit_tables(rep: RunReport, fmt: str = "text", path: Optional[str] = None) -> str:
    """Render ``rep``; writes to ``path`` when given and returns the text."""
    if fmt == "csv":
        out = []
        for name, t in rep.tables.items():
            out.append(f"# {name}")
            out.append("degree,dim")
            out += [f"{k},{v}" for k, v in sorted(t.as_dict().items())]
        text = "\n".join(out) + "\n"
    elif fmt == "text":
        text = rep.text()
    else:
        raise ValueError(f"unknown format {fmt!r}")
    if path:
        Path(path).write_text(text)
    return text


def dump_trajectories(rep: RunReport, path: str) -> int:
    """CSV of connection witnesses: one row per sample point, plot-ready."""
    dim = max((np.shape(w)[-1] for _, _, w in rep.witnesses), default=0)
    rows = ["orbit,source,target,sample," + ",".join(f"x{i}" for i in range(dim))]
    for k, (src, dst, w) in enumerate(rep.witnesses):
        for j, x in enumerate(np.atleast_2d(w)):
            rows.append(f'{k},"{src}","{dst}",{j},' + ",".join(f"{v:.9g}" for v in x))
    Path(path).write_text("\n".join(rows) + "\n")
    return len(rep.witnesses)


def dump_cells(rep: RunReport, directory: str) -> List[Path]:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, cs in rep.cells.items():
        p = d / f"{rep.system}_{name}.cells"
        p.write_text(cs.to_text(name))
        paths.append(p)
    return paths


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lsconley", description="Conley indices and local Morse homology on grids.")
    ap.add_argument("task", choices=TASKS)
    ap.add_argument("--config", help="YAML scenario file")
    ap.add_argument("--system", help="catalog system name (overrides the config)")
    ap.add_argument("--T", type=float, dest="T", help="time horizon")
    ap.add_argument("--step", type=float, help="integration step")
    ap.add_argument("--subdivisions", type=int, help="cells per axis")
    ap.add_argument("--seed", type=int, help="random seed")
    ap.add_argument("--perturb", type=float, help="tilt gradient systems by EPS to break degeneracy")
    ap.add_argument("--threads", type=int, default=1, help="worker threads for cell classification")
    ap.add_argument("--csv", metavar="PATH", help="also write the tables as CSV")
    ap.add_argument("--trajectories", metavar="PATH", help="write connection witness orbits as CSV (morse task)")
    ap.add_argument("--dump-cells", nargs="?", const=".", metavar="DIR", help="write N and L cell snapshots")
    ap.add_argument("--out", metavar="PATH", help="write the text report here instead of stdout")
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        data = {}
        if args.config:
            data = yaml.safe_load(Path(args.config).read_text()) or {}
            if not isinstance(data, dict):
                raise ConfigError("config: expected a mapping at the top level")
        cfg = load_config(
            data,
            {"task": args.task, "system": args.system, "T": args.T, "step": args.step, "seed": args.seed,
             "subdivisions": args.subdivisions, "perturb": args.perturb},
        )
        set_threads(args.threads)
        rep = run_scenario(cfg)
    except (ConfigError, HypothesisFailure, IsolationError, DegenerateCriticalPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # internal failure
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    text = emit_tables(rep, "text", args.out or cfg.outputs.get("report"))
    if not (args.out or cfg.outputs.get("report")):
        sys.stdout.write(text)
    csv_path = args.csv or cfg.outputs.get("csv")
    if csv_path:
        emit_tables(rep, "csv", csv_path)
    traj_path = args.trajectories or cfg.outputs.get("trajectories")
    if traj_path:
        dump_trajectories(rep, traj_path)
    cells_dir = args.dump_cells or cfg.outputs.get("cells")
    if cells_dir and rep.cells:
        dump_cells(rep, cells_dir)
    print(f"elapsed {rep.seconds:.2f}s", file=sys.stderr)
    return rep.exit_code


if __name__ == "__main__":
    sys.exit(main())
