"""``bqclab`` command-line front end.

Configuration is a flat UTF-8 ``key = value`` file with ``#`` comments and
comma-separated lists, optionally overridden with repeated ``--set key=value``.
Every subcommand writes one CSV table (first line a schema comment) and a
plain-text summary on standard output.

Exit codes: 0 success, 1 an operation failed, 2 invalid configuration.
"""

from __future__ import annotations

import argparse
import csv
import difflib
import io
import math
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import experiments as ex
from .blend import SHAPE_KINDS, build_blend, get_shape
from .energy import TAGS, build_model, first_variation, site_forces, value
from .lattice import Deformation, LatticeConfig, diff1
from .potential import get_potential
from .solve import SolveOptions, solve_loaded

SCHEMA_VERSION = 1
SUBCOMMANDS = ("energy", "equilibrate", "ghost-force", "critical-strain", "modeling-audit", "convergence", "patch-test")
MODEL_NAMES = tuple(t for t in TAGS if t != "custom_bqc")
SHAPE_NAMES = tuple(s for s in SHAPE_KINDS if s != "custom")
PATCH_TOL = 1e-12

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2


class ConfigError(ValueError):
    pass


# --- value parsers --------------------------------------------------------------


def _int(s: str) -> int:
    return int(s)


def _float(s: str) -> float:
    v = float(s)
    if math.isnan(v):
        raise ValueError("nan is not allowed")
    return v


def _bool(s: str) -> bool:
    low = s.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected a boolean, got {s!r}")


def _str(s: str) -> str:
    if not s:
        raise ValueError("empty value")
    return s


def _list(item):
    def parse(s: str) -> tuple:
        parts = [p.strip() for p in s.split(",")]
        if not parts or any(not p for p in parts):
            raise ValueError(f"malformed list {s!r}")
        return tuple(item(p) for p in parts)

    return parse


def _optional(item):
    def parse(s: str):
        return None if s.lower() in ("auto", "none") else item(s)

    return parse


@dataclass(frozen=True)
class RunConfig:
    subcommand: str = "patch-test"
    potential: str = "lj"
    potential_depth: Optional[float] = None
    potential_r_min: Optional[float] = None
    potential_a: Optional[float] = None
    n: tuple = (256,)
    f: float = 1.0
    model: tuple = ("bqce",)
    blend_shape: tuple = ("cubic",)
    k: tuple = (8,)
    atomistic_width: Optional[int] = None  # auto: max(3, N/16)
    atomistic_center: Optional[int] = None  # auto: N/2
    p: tuple = (2.0,)
    state: str = "uniform"
    amplitude: float = 0.05
    strain_lo: float = 0.95
    strain_hi: float = 1.1
    samples: int = 10
    load_a: float = 0.1
    load_b: float = 1.0
    load_width: float = 0.05
    newton_tol: float = 1e-10
    max_iter: int = 50
    continuation_steps: int = 1
    admissibility_floor: Optional[float] = None
    search_lo: float = 1.0
    search_hi: float = 1.5
    tol: float = 1e-8
    seed: int = 0
    output: str = "bqclab.csv"
    emit_plot_data: bool = False

    def width_for(self, n: int) -> int:
        return self.atomistic_width if self.atomistic_width is not None else max(3, n // 16)

    def center_for(self, n: int) -> int:
        return (self.atomistic_center if self.atomistic_center is not None else n // 2) % n

    def make_potential(self):
        params = {
            key: getattr(self, "potential_" + key)
            for key in ("depth", "r_min", "a")
            if getattr(self, "potential_" + key) is not None
        }
        return get_potential(self.potential, **params)

    def solve_options(self) -> SolveOptions:
        return SolveOptions(self.newton_tol, self.max_iter, self.continuation_steps, self.admissibility_floor)


_PARSERS = {
    "subcommand": _str,
    "potential": _str,
    "potential_depth": _optional(_float),
    "potential_r_min": _optional(_float),
    "potential_a": _optional(_float),
    "n": _list(_int),
    "f": _float,
    "model": _list(_str),
    "blend_shape": _list(_str),
    "k": _list(_int),
    "atomistic_width": _optional(_int),
    "atomistic_center": _optional(_int),
    "p": _list(_float),
    "state": _str,
    "amplitude": _float,
    "strain_lo": _float,
    "strain_hi": _float,
    "samples": _int,
    "load_a": _float,
    "load_b": _float,
    "load_width": _float,
    "newton_tol": _float,
    "max_iter": _int,
    "continuation_steps": _int,
    "admissibility_floor": _optional(_float),
    "search_lo": _float,
    "search_hi": _float,
    "tol": _float,
    "seed": _int,
    "output": _str,
    "emit_plot_data": _bool,
}
KNOWN_KEYS = tuple(f.name for f in fields(RunConfig))
assert set(KNOWN_KEYS) == set(_PARSERS)


def _unknown_key(key: str, where: str) -> ConfigError:
    close = difflib.get_close_matches(key, KNOWN_KEYS, n=1, cutoff=0.6)
    hint = f"; did you mean {close[0]!r}?" if close else ""
    return ConfigError(f"{where}unknown key {key!r}{hint}")


def _parse_pairs(lines, origin: str) -> dict:
    out = {}
    for lineno, raw in lines:
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{origin}:{lineno}: " if lineno else f"{origin}: "
        if "=" not in line:
            raise ConfigError(f"{where}expected 'key = value', got {raw.strip()!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{where}missing key")
        if key not in _PARSERS:
            raise _unknown_key(key, where)
        if key in out and lineno:
            raise ConfigError(f"{where}duplicate key {key!r}")
        try:
            out[key] = _PARSERS[key](val)
        except ValueError as exc:
            raise ConfigError(f"{where}bad value for {key!r}: {exc}") from None
    return out


def parse_config(text: str, overrides=(), origin: str = "config") -> RunConfig:
    """Parse and validate a flat config; ``overrides`` are ``key=value`` strings applied last."""
    values = _parse_pairs(enumerate(text.splitlines(), start=1), origin)
    values.update(_parse_pairs(((0, o) for o in overrides), "--set"))
    return validate(RunConfig(**values))


def validate(cfg: RunConfig) -> RunConfig:
    def bad(key, msg):
        return ConfigError(f"invalid {key!r}: {msg}")

    if cfg.subcommand not in SUBCOMMANDS:
        raise bad("subcommand", f"{cfg.subcommand!r} is not one of {', '.join(SUBCOMMANDS)}")
    try:
        cfg.make_potential()
    except (ValueError, TypeError) as exc:
        raise bad("potential", str(exc)) from None
    for m in cfg.model:
        if m not in MODEL_NAMES:
            raise bad("model", f"{m!r} is not one of {', '.join(MODEL_NAMES)}")
    for s in cfg.blend_shape:
        if s not in SHAPE_NAMES:
            raise bad("blend_shape", f"{s!r} is not one of {', '.join(SHAPE_NAMES)}")
    for n in cfg.n:
        if n < 5:
            raise bad("n", f"N must be >= 5, got {n}")
    for k in cfg.k:
        if k < 1:
            raise bad("k", f"k must be >= 1, got {k}")
    for n in cfg.n:
        w = cfg.width_for(n)
        if w < 3:
            raise bad("atomistic_width", f"must be >= 3, got {w}")
        for k in cfg.k:
            if w + 2 * k + 4 > n:
                raise bad("k", f"geometry does not fit: atomistic_width + 2k + 4 = {w + 2 * k + 4} > N = {n}")
    for p in cfg.p:
        if not p >= 1:
            raise bad("p", f"norm order must be >= 1, got {p}")
    if cfg.state not in ("uniform", "random"):
        raise bad("state", "must be 'uniform' or 'random'")
    if not cfg.f > 0:
        raise bad("f", "macroscopic strain must be positive")
    if not 0 < cfg.strain_lo <= cfg.strain_hi:
        raise bad("strain_lo", "need 0 < strain_lo <= strain_hi")
    if not cfg.search_lo < cfg.search_hi:
        raise bad("search_lo", "need search_lo < search_hi")
    for key in ("newton_tol", "tol", "amplitude", "load_width"):
        if not getattr(cfg, key) > 0:
            raise bad(key, "must be positive")
    for key in ("samples", "max_iter", "continuation_steps"):
        if getattr(cfg, key) < 1:
            raise bad(key, "must be >= 1")
    if cfg.subcommand in ("convergence",) and len(cfg.n) > 1 and len(cfg.k) > 1:
        raise bad("n", "sweep either n or k, not both")
    return cfg


# --- output --------------------------------------------------------------------


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path, subcommand: str, columns, rows) -> None:
    buf = io.StringIO()
    buf.write(f"# bqclab schema {SCHEMA_VERSION} {subcommand}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([fmt(row[c]) for c in columns])
    Path(path).write_text(buf.getvalue(), encoding="utf-8", newline="")


def write_plot_data(path, xs, ys) -> None:
    lines = [f"{fmt(x)} {fmt(y)}\n" for x, y in zip(xs, ys)]
    Path(path).write_text("".join(lines), encoding="utf-8", newline="")


def _plot_path(cfg: RunConfig, suffix: str = "") -> Path:
    out = Path(cfg.output)
    return out.with_name(out.stem + suffix + ".dat")


# --- subcommands ---------------------------------------------------------------


@dataclass
class Outcome:
    columns: tuple
    rows: list
    summary: list = field(default_factory=list)
    plots: list = field(default_factory=list)  # (suffix, xs, ys)


def _single(cfg: RunConfig, key: str):
    v = getattr(cfg, key)
    if len(v) != 1:
        raise ConfigError(f"invalid {key!r}: {cfg.subcommand} takes a single value, got {len(v)}")
    return v[0]


def _blend(cfg: RunConfig, config: LatticeConfig, shape: str, k: int):
    n = config.n_atoms
    return build_blend(config, get_shape(shape), cfg.center_for(n), cfg.width_for(n), k)


def _state(cfg: RunConfig, config: LatticeConfig, rng) -> Deformation:
    if cfg.state == "uniform":
        return Deformation.uniform(config, cfg.f)
    return ex.random_smooth_state(config, rng, (cfg.strain_lo, cfg.strain_hi), cfg.amplitude)


def _model(cfg: RunConfig, pot, config: LatticeConfig, tag: str):
    blend = None
    if tag not in ("atomistic", "cauchy_born"):
        blend = _blend(cfg, config, _single(cfg, "blend_shape"), _single(cfg, "k"))
    return build_model(tag, pot, config.n_atoms, blend)


def run_energy(cfg: RunConfig) -> Outcome:
    pot = cfg.make_potential()
    config = LatticeConfig(_single(cfg, "n"))
    y = _state(cfg, config, np.random.default_rng(cfg.seed))
    m = _model(cfg, pot, config, _single(cfg, "model"))
    g = first_variation(m, y)
    forces = site_forces(m, y)
    strain = diff1(y)
    rows = [
        {"site": i, "position": y.positions[i], "strain": strain[i], "site_force": forces[i], "strain_rep": g.strain_rep[i]}
        for i in range(config.n_atoms)
    ]
    summary = [f"energy = {fmt(value(m, y))}", f"first_variation_dual_norm = {fmt(g.norm(2))}"]
    return Outcome(("site", "position", "strain", "site_force", "strain_rep"), rows, summary,
                   [("", range(config.n_atoms), strain)])


def run_equilibrate(cfg: RunConfig) -> Outcome:
    pot = cfg.make_potential()
    config = LatticeConfig(_single(cfg, "n"))
    m = _model(cfg, pot, config, _single(cfg, "model"))
    center = cfg.center_for(config.n_atoms)
    load = ex.canonical_load(config, center / config.n_atoms, cfg.load_a, cfg.load_b, cfg.load_width)
    y0 = _state(cfg, config, np.random.default_rng(cfg.seed))
    y, rep = solve_loaded(m, load, y0, cfg.solve_options())
    strain = diff1(y)
    rows = [
        {"site": i, "position": y.positions[i], "displacement": y.u[i], "strain": strain[i]}
        for i in range(config.n_atoms)
    ]
    summary = [
        f"iterations = {rep.iterations}",
        f"residual = {fmt(rep.residual)}",
        f"coercivity = {fmt(rep.coercivity)}",
        f"energy = {fmt(value(m, y))}",
    ]
    return Outcome(("site", "position", "displacement", "strain"), rows, summary,
                   [("", range(config.n_atoms), strain)])


def run_ghost_force(cfg: RunConfig) -> Outcome:
    pot = cfg.make_potential()
    cols = ("n", "k", "shape", "p", "delta2_alpha_norm", "delta2_gamma_norm", "transition_delta2_gamma_norm",
            "transition_dual_seminorm", "transition_bound", "ghost_dual_norm", "ghost_exact")
    rows = []
    for n in cfg.n:
        config = LatticeConfig(n)
        for shape in cfg.blend_shape:
            for k in cfg.k:
                blend = _blend(cfg, config, shape, k)
                for p in cfg.p:
                    rows.append(ex.ghost_force_table(pot, blend, cfg.f, p))
    summary = [f"points = {len(rows)}"]
    plots = []
    if len(cfg.k) >= 3 and len(cfg.n) == 1 and len(cfg.blend_shape) == 1 and len(cfg.p) == 1:
        fit = ex.fit_rate([(r["k"], r["delta2_alpha_norm"]) for r in rows])
        summary.append(f"slope = {fmt(fit.slope)}")
        plots.append(("", [r["k"] for r in rows], [r["delta2_alpha_norm"] for r in rows]))
    return Outcome(cols, rows, summary, plots)


def _sweep_spec(cfg: RunConfig, model: str) -> ex.SweepSpec:
    widths = {cfg.width_for(n) for n in cfg.n}
    if len(widths) != 1:
        raise ConfigError("invalid 'atomistic_width': sweeps over n need an explicit atomistic_width")
    pot = cfg.make_potential()
    return ex.SweepSpec(
        model=model,
        potential=cfg.potential,
        potential_params=pot.params,
        n_list=cfg.n,
        k_list=cfg.k,
        shape_list=cfg.blend_shape,
        strain_f=cfg.f,
        atomistic_width=widths.pop(),
        atomistic_center=cfg.atomistic_center,
        load_a=cfg.load_a,
        load_b=cfg.load_b,
        load_width=cfg.load_width,
        search=(cfg.search_lo, cfg.search_hi),
        tol=cfg.tol,
        solve=cfg.solve_options(),
    )


def _study(cfg: RunConfig, study, key: str) -> Outcome:
    rows, summary, plots, columns = [], [], [], None
    for model in cfg.model:
        res = study(_sweep_spec(cfg, model))
        rows.extend(res.rows)
        columns = res.columns
        if res.fit is not None:
            summary.append(f"{model} slope = {fmt(res.fit.slope)} (r_squared = {fmt(res.fit.r_squared)})")
            xs = [math.exp(px) for px, _ in res.fit.points]
            ys = [math.exp(py) for _, py in res.fit.points]
            plots.append((f"_{model}", xs, ys))
        for r in res.rows:
            summary.append(f"{model} n={r['n']} k={r['k']} {key} = {fmt(r[key])}")
    return Outcome(columns, rows, summary, plots)


def run_convergence(cfg: RunConfig) -> Outcome:
    return _study(cfg, ex.convergence_study, "error_u12")


def run_critical_strain(cfg: RunConfig) -> Outcome:
    return _study(cfg, ex.critical_strain_study, "critical_strain")


def run_modeling_audit(cfg: RunConfig) -> Outcome:
    pot = cfg.make_potential()
    config = LatticeConfig(_single(cfg, "n"))
    rng = np.random.default_rng(cfg.seed)
    samples = 1 if cfg.state == "uniform" else cfg.samples
    states = [_state(cfg, config, rng) for _ in range(samples)]
    models = [(tag, _model(cfg, pot, config, tag)) for tag in cfg.model]
    cols = ("sample", "model", "p", "lhs", "rhs", "ghost", "coupling", "cauchy_born", "holds")
    rows = []
    for i, y in enumerate(states):
        for tag, m in models:
            for p in cfg.p:
                a = ex.modeling_error_audit(m, y, p)
                rows.append({"sample": i, "model": tag, "p": p, "lhs": a.lhs, "rhs": a.rhs, **a.parts, "holds": a.holds})
    violations = sum(not r["holds"] for r in rows)
    return Outcome(cols, rows, [f"audits = {len(rows)}", f"violations = {violations}"])


def run_patch_test(cfg: RunConfig) -> Outcome:
    pot = cfg.make_potential()
    rows, summary = [], []
    for n in cfg.n:
        config = LatticeConfig(n)
        for shape in cfg.blend_shape:
            for k in cfg.k:
                blend = _blend(cfg, config, shape, k)
                rows.extend(ex.patch_test(pot, config, blend, cfg.f, cfg.model))
    for r in rows:
        rel = "≤" if r["ghost_dual_norm"] <= PATCH_TOL else ">"
        summary.append(f"{r['model']} n={r['n']} k={r['k']} shape={r['shape']}: ghost_dual_norm {rel} 1e-12 ({fmt(r['ghost_dual_norm'])})")
    return Outcome(ex.PATCH_COLUMNS, rows, summary)


RUNNERS = {
    "energy": run_energy,
    "equilibrate": run_equilibrate,
    "ghost-force": run_ghost_force,
    "critical-strain": run_critical_strain,
    "modeling-audit": run_modeling_audit,
    "convergence": run_convergence,
    "patch-test": run_patch_test,
}


def run(cfg: RunConfig, out=None, err=None) -> int:
    """Execute a validated config; returns the process exit code."""
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        outcome = RUNNERS[cfg.subcommand](cfg)
    except ConfigError as exc:
        print(f"bqclab: {exc}", file=err)
        return EXIT_CONFIG
    except Exception as exc:  # any module error becomes a nonzero exit
        print(f"bqclab: {cfg.subcommand} failed: {type(exc).__name__}: {exc}", file=err)
        return EXIT_FAILED
    write_csv(cfg.output, cfg.subcommand, outcome.columns, outcome.rows)
    if cfg.emit_plot_data:
        for suffix, xs, ys in outcome.plots:
            write_plot_data(_plot_path(cfg, suffix), xs, ys)
    print(f"{cfg.subcommand}: wrote {len(outcome.rows)} rows to {cfg.output}", file=out)
    for line in outcome.summary:
        print(line, file=out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bqclab", description="Blended quasicontinuum experiments on a periodic chain.")
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", type=Path, help="flat key = value configuration file")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a configuration key (repeatable)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        text = args.config.read_text(encoding="utf-8") if args.config else ""
        origin = str(args.config) if args.config else "config"
        cfg = parse_config(text, [f"subcommand={args.subcommand}", *args.overrides], origin)
    except (ConfigError, OSError, UnicodeDecodeError) as exc:
        print(f"bqclab: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
