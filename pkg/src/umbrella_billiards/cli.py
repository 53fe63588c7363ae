"""Command line: ``umbrella-billiards <verb> [options]``.

Every option can also come from a JSON file given with ``--config``; keys
are the option names with dashes replaced by underscores, and flags on the
command line override file values.  Exit codes: 0 success, 2 invalid
configuration, 3 failure during the computation.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import export
from .chaos import (
    SCAN_ISLAND_CONFIG,
    IslandConfig,
    LyapunovConfig,
    NoTransition,
    DegenerateSeed,
    ergodic_boundary_scan,
    grid_seeds,
    island_detect,
    lyapunov_curve,
)
from .dynamics import OK, PhasePoint, SingularityError, iterate, map_many
from .periodic import (
    NoConvergence,
    NotFound,
    NotPeriodic,
    SingularOrbit,
    axial_two_periodic,
    classify,
    radial_orbit,
    split_pair,
)
from .tables import (
    Family,
    InvalidSpec,
    OutOfRange,
    TableSpec,
    ThetaPair,
    build_table,
    max_offset,
    table_of_theta,
    theta_of_table,
)

log = logging.getLogger("umbrella_billiards")

EXIT_OK, EXIT_CONFIG, EXIT_COMPUTE = 0, 2, 3

COMMANDS = ("portrait", "classify", "orbit", "lyapunov", "scan", "sweep", "validate")

# built-in values used when neither the command line nor the config file sets an option
DEFAULTS = {
    "family": "lemon", "R": 1.0, "B": 1.0, "B1": 0.0, "n": 2, "theta1": None, "theta2": None,
    "output": "-", "format": None, "threads": None,
    "seeds": "random:20:0", "steps": None, "density": None, "bins": 200, "islands": None,
    "orbit": "axial2", "start": None, "normalized": False,
    "B_range": None, "B1_range": None, "k": 40, "n_steps": 10, "dx": 1e-6, "weighted": False,
    "theta1_range": None, "step": 0.001, "grid": None, "theta_grid": None, "n_long": None,
    "detection_threshold": None,
}

FORMATS = {
    "portrait": ("csv", "pgm"), "classify": ("json", "csv"), "orbit": ("csv",),
    "lyapunov": ("csv",), "scan": ("csv",), "sweep": ("csv",), "validate": ("json",),
}

# where results go and how fast they are made; kept out of the embedded config
NOT_RECORDED = {"threads", "output", "config", "verbose", "density", "islands"}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    table: dict | None
    params: dict = field(default_factory=dict)
    output: str = "-"
    format: str = "csv"
    threads: int = 1

    def record(self) -> dict:
        """JSON-ready copy without the fields that must not affect output bytes."""
        return {"command": self.command, "table": self.table, "format": self.format,
                "params": {k: v for k, v in self.params.items() if k not in NOT_RECORDED}}


# -- argument parsing --------------------------------------------------------------

def _table_options(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("table")
    g.add_argument("--family", help="lemon, moon, circle, flower, umbrella_lemon, umbrella_moon1, umbrella_moon2")
    g.add_argument("--R", type=float)
    g.add_argument("--B", type=float)
    g.add_argument("--B1", type=float)
    g.add_argument("--n", type=int, help="number of duplicated circles in an umbrella")
    g.add_argument("--theta1", type=float, help="give the base table by its theta pair instead of (R, B)")
    g.add_argument("--theta2", type=float)


def _island_options(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("island detection")
    g.add_argument("--grid", type=int, help="seed columns along s")
    g.add_argument("--theta-grid", dest="theta_grid", type=int, help="seed rows along theta (default: --grid)")
    g.add_argument("--n-long", dest="n_long", type=int)
    g.add_argument("--detection-threshold", dest="detection_threshold", type=float)


def _island_config(opts: dict, base: IslandConfig) -> dict:
    """Island settings from the options, falling back to ``base`` field by field."""
    out = {}
    for key in ("grid", "theta_grid", "n_long", "detection_threshold"):
        out[key] = opts[key] if opts.get(key) is not None else getattr(base, key)
    IslandConfig(**out)
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="umbrella-billiards", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of option values")
    common.add_argument("--output", "-o", help="output path, '-' for stdout")
    common.add_argument("--format")
    common.add_argument("--threads", type=int, help="worker threads (env UMBRELLA_THREADS)")
    common.add_argument("--verbose", "-v", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("portrait", parents=[common], help="iterate seeds and write the phase-space cloud")
    _table_options(p)
    p.add_argument("--seeds", help="random:COUNT:RNG_SEED, grid:K, or s,theta[;s,theta...]")
    p.add_argument("--steps", type=int, help="iterations per seed (default 5000)")
    p.add_argument("--density", help="also write a visit-density PGM here")
    p.add_argument("--bins", type=int)
    p.add_argument("--islands", help="also write the island-detection grid as PGM here")
    _island_options(p)

    p = sub.add_parser("classify", parents=[common], help="refine and classify a periodic orbit")
    _table_options(p)
    p.add_argument("--orbit", help="axial2, split, radial:M, or s,theta,k")

    p = sub.add_parser("orbit", parents=[common], help="write one orbit as CSV")
    _table_options(p)
    p.add_argument("--start", help="s,theta")
    p.add_argument("--steps", type=int, help="iterations (default 1000)")
    p.add_argument("--normalized", action="store_true", default=None)

    for name, helptext in (("lyapunov", "lambda_bar along a B range"),
                           ("sweep", "lambda_bar over a B x B1 grid")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        _table_options(p)
        p.add_argument("--B-range", dest="B_range", help="start:stop:step (inclusive) or a comma list")
        if name == "sweep":
            p.add_argument("--B1-range", dest="B1_range", help="start:stop:step (inclusive)")
        p.add_argument("--k", type=int)
        p.add_argument("--n-steps", dest="n_steps", type=int, help="indicator length n")
        p.add_argument("--dx", type=float)
        p.add_argument("--weighted", action="store_true", default=None)

    p = sub.add_parser("scan", parents=[common], help="bracket the island/ergodic transition along theta1")
    p.add_argument("--family")
    p.add_argument("--theta2", type=float, action="append", help="repeatable")
    p.add_argument("--B1", type=float)
    p.add_argument("--n", type=int)
    p.add_argument("--theta1-range", dest="theta1_range", help="start:stop (default theta2 - pi/2 +- 0.1)")
    p.add_argument("--step", type=float)
    _island_options(p)

    p = sub.add_parser("validate", parents=[common], help="check a table spec and describe it")
    _table_options(p)
    return parser


def _merge(args: argparse.Namespace) -> dict:
    """Option values: command line, then config file, then built-in defaults."""
    from_file = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                from_file = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(from_file, dict):
            raise ConfigError("config file must hold a JSON object")
        if isinstance(from_file.get("table"), dict):
            from_file = {**from_file.pop("table"), **from_file}
        from_file.pop("command", None)
        unknown = set(from_file) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    given = {k: v for k, v in vars(args).items() if v is not None and k not in ("command", "config")}
    merged = dict(DEFAULTS)
    merged.update(from_file)
    merged.update(given)
    if args.command == "scan" and "family" not in given and "family" not in from_file:
        merged["family"] = Family.UMBRELLA_MOON1.value
    return merged


# -- value parsing -------------------------------------------------------------

def parse_range(text: str, name: str) -> list[float]:
    """``start:stop:step`` with both ends included, or a comma list; empty is an error."""
    if "," in str(text):
        try:
            return [float(v) for v in str(text).split(",") if v.strip()]
        except ValueError as exc:
            raise ConfigError(f"{name}: cannot parse {text!r}") from exc
    try:
        a, b, h = (float(v) for v in str(text).split(":"))
    except ValueError as exc:
        raise ConfigError(f"{name} must be start:stop:step, got {text!r}") from exc
    if not h > 0 or b < a:
        raise ConfigError(f"{name} {text!r} is empty")
    count = int(math.floor((b - a) / h + 1e-9)) + 1
    return [round(a + i * h, 12) for i in range(count)]


def parse_interval(text: str, name: str) -> tuple[float, float]:
    try:
        a, b = (float(v) for v in str(text).split(":"))
    except ValueError as exc:
        raise ConfigError(f"{name} must be start:stop, got {text!r}") from exc
    if not b > a:
        raise ConfigError(f"{name} {text!r} is empty")
    return a, b


def _floats(text: str, count: int, name: str) -> list[float]:
    try:
        vals = [float(v) for v in str(text).split(",")]
    except ValueError as exc:
        raise ConfigError(f"{name}: cannot parse {text!r}") from exc
    if len(vals) != count:
        raise ConfigError(f"{name} needs {count} comma-separated numbers, got {text!r}")
    return vals


def parse_seeds(text: str):
    """``("random", count, seed)``, ``("grid", k)`` or ``("explicit", [(s, theta), ...])``."""
    text = str(text)
    kind, _, rest = text.partition(":")
    try:
        if kind == "random":
            count, seed = rest.split(":")
            count, seed = int(count), int(seed)
            if count < 1:
                raise ConfigError("random seed count must be >= 1")
            return ("random", count, seed)
        if kind == "grid":
            k = int(rest)
            if k < 1:
                raise ConfigError("grid size must be >= 1")
            return ("grid", k)
    except ValueError as exc:
        raise ConfigError(f"bad seed spec {text!r}") from exc
    body = rest if kind == "explicit" else text
    pts = [tuple(_floats(chunk, 2, "seed")) for chunk in body.split(";") if chunk.strip()]
    if not pts:
        raise ConfigError("no seeds given")
    return ("explicit", pts)


def resolve_seeds(table, seeds) -> tuple[np.ndarray, np.ndarray]:
    kind = seeds[0]
    L = table.total_length
    if kind == "grid":
        return grid_seeds(table, seeds[1])
    if kind == "explicit":
        s = np.array([p[0] for p in seeds[1]], dtype=float)
        t = np.array([p[1] for p in seeds[1]], dtype=float)
        if np.any((s < 0) | (s >= L)) or np.any((t <= 0) | (t >= math.pi)):
            raise ConfigError("explicit seeds must satisfy 0 <= s < |dQ| and 0 < theta < pi")
        return s, t
    # uniform in normalised coordinates, singular draws rejected, order fixed by the generator
    count, rng_seed = seeds[1], seeds[2]
    rng = np.random.default_rng(rng_seed)
    keep_s, keep_t = [], []
    while len(keep_s) < count:
        u = rng.random((2, count))
        s, t = u[0] * L, u[1] * math.pi
        ok = t > 0
        _, _, _, _, status = map_many(table, s, np.where(ok, t, 1.0))
        ok &= status == OK
        keep_s.extend(s[ok])
        keep_t.extend(t[ok])
    return np.array(keep_s[:count]), np.array(keep_t[:count])


def resolve_table(opts: dict) -> TableSpec:
    t1, t2 = opts.get("theta1"), opts.get("theta2")
    if t1 is not None or t2 is not None:
        if t1 is None or t2 is None:
            raise ConfigError("--theta1 and --theta2 go together")
        base = table_of_theta(ThetaPair(t1, t2))
        fam = Family.parse(opts["family"]) if opts["family"] != "lemon" else base.family
        if fam.is_umbrella:
            return TableSpec(fam, base.R, base.B, opts["B1"], opts["n"])
        return base
    return TableSpec(opts["family"], opts["R"], opts["B"], opts["B1"], opts["n"])


def _threads(opts: dict) -> int:
    value = opts.get("threads")
    if value is None:
        env = os.environ.get("UMBRELLA_THREADS")
        try:
            value = int(env) if env else 1
        except ValueError as exc:
            raise ConfigError(f"UMBRELLA_THREADS must be an integer, got {env!r}") from exc
    if value < 1:
        raise ConfigError("threads must be >= 1")
    return value


def make_config(command: str, opts: dict) -> RunConfig:
    """Validate everything the command needs before any computation starts."""
    fmt = opts["format"] or FORMATS[command][0]
    if fmt not in FORMATS[command]:
        raise ConfigError(f"{command} writes {'/'.join(FORMATS[command])}, not {fmt}")
    params: dict = {}
    table = None
    if command != "scan":
        spec = resolve_table(opts)
        build_table(spec)
        table = spec.to_dict()
    if command == "portrait":
        params["seeds"] = opts["seeds"]
        parse_seeds(opts["seeds"])
        params["steps"] = opts["steps"] if opts["steps"] is not None else 5000
        params["bins"] = opts["bins"]
        for key in ("density", "islands"):
            if opts[key]:
                params[key] = opts[key]
        if opts["islands"]:
            params["island"] = _island_config(opts, IslandConfig())
        if params["steps"] < 1 or params["bins"] < 1:
            raise ConfigError("steps and bins must be >= 1")
    elif command == "classify":
        params["orbit"] = str(opts["orbit"])
        _parse_orbit(params["orbit"])
    elif command == "orbit":
        if opts["start"] is None:
            raise ConfigError("orbit needs --start s,theta")
        params["start"] = _floats(opts["start"], 2, "start")
        params["steps"] = opts["steps"] if opts["steps"] is not None else 1000
        params["normalized"] = bool(opts["normalized"])
        if params["steps"] < 1:
            raise ConfigError("steps must be >= 1")
    elif command in ("lyapunov", "sweep"):
        params["B_values"] = parse_range(opts["B_range"], "B-range") if opts["B_range"] else [opts["B"]]
        if command == "sweep":
            if not opts["B1_range"]:
                raise ConfigError("sweep needs --B1-range")
            params["B1_values"] = parse_range(opts["B1_range"], "B1-range")
        LyapunovConfig(opts["dx"], opts["n_steps"], opts["k"], bool(opts["weighted"]))
        params.update(k=opts["k"], n=opts["n_steps"], dx=opts["dx"], weighted=bool(opts["weighted"]))
    elif command == "scan":
        theta2 = opts["theta2"]
        if theta2 is None:
            raise ConfigError("scan needs --theta2")
        theta2 = [float(v) for v in (theta2 if isinstance(theta2, list) else [theta2])]
        family = Family.parse(opts["family"])
        if family not in (Family.MOON, Family.UMBRELLA_MOON1, Family.UMBRELLA_MOON2):
            raise ConfigError("scan works on moon families")
        ranges = []
        for t2 in theta2:
            if opts["theta1_range"]:
                ranges.append(parse_interval(opts["theta1_range"], "theta1-range"))
            else:
                c = t2 - math.pi / 2
                ranges.append((max(c - 0.1, 1e-3), min(c + 0.1, t2 - 1e-3)))
        if not opts["step"] > 0:
            raise ConfigError("step must be positive")
        table = {"family": family.value, "B1": opts["B1"], "n": opts["n"]}
        params.update(theta2=theta2, theta1_ranges=ranges, step=opts["step"],
                      island=_island_config(opts, SCAN_ISLAND_CONFIG))
    return RunConfig(command, table, params, opts["output"], fmt, _threads(opts))


def _parse_orbit(text: str):
    if text in ("axial2", "split"):
        return (text,)
    if text.startswith("radial:"):
        try:
            m = int(text.split(":", 1)[1])
        except ValueError as exc:
            raise ConfigError(f"bad radial orbit {text!r}") from exc
        if m < 1:
            raise ConfigError("radial orbits need m >= 1")
        return ("radial", m)
    s, t, k = _floats(text, 3, "orbit")
    if k < 1 or k != int(k):
        raise ConfigError("period must be a positive integer")
    return ("point", PhasePoint(s, t), int(k))


# -- commands ------------------------------------------------------------------

def _emit(cfg: RunConfig, text: str) -> None:
    if cfg.output in (None, "-"):
        sys.stdout.write(text)
    else:
        export.write_text(cfg.output, text)


def cmd_portrait(cfg: RunConfig) -> int:
    table = build_table(TableSpec.from_dict(cfg.table))
    s, t = resolve_seeds(table, parse_seeds(cfg.params["seeds"]))
    steps = cfg.params["steps"]
    L = table.total_length
    S = np.empty((steps + 1, s.size))
    T = np.empty_like(S)
    S[0], T[0] = s, t
    alive = np.ones(s.size, bool)
    last = np.full(s.size, steps)
    for i in range(1, steps + 1):
        s1, t1, _, _, status = map_many(table, S[i - 1], np.where(alive, T[i - 1], 1.0))
        stopped = alive & (status != OK)
        last[stopped] = i - 1
        alive &= status == OK
        S[i] = np.where(alive, s1, S[i - 1])
        T[i] = np.where(alive, t1, T[i - 1])
    for j in np.nonzero(last < steps)[0]:
        log.warning("seed %d stopped after %d steps at a singularity", j, last[j])

    s_norm, t_norm, idx = [], [], []
    for j in range(s.size):
        s_norm.append(S[: last[j] + 1, j] / L)
        t_norm.append(T[: last[j] + 1, j] / math.pi)
        idx.append(np.full(last[j] + 1, j))
    s_norm, t_norm, idx = np.concatenate(s_norm), np.concatenate(t_norm), np.concatenate(idx)
    raster = export.density_raster(s_norm, t_norm, cfg.params["bins"])
    if cfg.format == "pgm":
        _emit(cfg, export.pgm_text(raster))
    else:
        rows = zip(s_norm.tolist(), t_norm.tolist(), idx.tolist())
        _emit(cfg, export.csv_text(cfg.record(), ["s_norm", "theta_norm", "seed_index"], rows))
    if cfg.params.get("density"):
        export.write_text(cfg.params["density"], export.pgm_text(raster))
    if cfg.params.get("islands"):
        report = island_detect(table, IslandConfig(**cfg.params["island"]), cfg.threads)
        # rows are theta (top = pi), columns are s; regular cells white
        export.write_text(cfg.params["islands"], export.pgm_text(report.cells.T[::-1].astype(float), 1))
        log.info("regular fraction %.4f, islands %s", report.regular_fraction, report.islands_found)
    return EXIT_OK


def cmd_classify(cfg: RunConfig) -> int:
    spec = TableSpec.from_dict(cfg.table)
    table = build_table(spec)
    what = _parse_orbit(cfg.params["orbit"])
    if what[0] == "axial2":
        orbits = [classify(table, axial_two_periodic(spec), 2)]
    elif what[0] == "split":
        orbits = split_pair(table)
    elif what[0] == "radial":
        orbits = [radial_orbit(table, what[1])]
    else:
        orbits = [classify(table, what[1], what[2])]
    if cfg.format == "csv":
        rows = [(i, x, y) for i, o in enumerate(orbits) for x, y in export.cycle_polyline(table, o).tolist()]
        _emit(cfg, export.csv_text(cfg.record(), ["orbit", "x", "y"], rows))
    else:
        records = [o.to_dict() for o in orbits]
        _emit(cfg, json.dumps(records[0] if len(records) == 1 else records, indent=2) + "\n")
    return EXIT_OK


def cmd_orbit(cfg: RunConfig) -> int:
    table = build_table(TableSpec.from_dict(cfg.table))
    s, t = cfg.params["start"]
    if not (0 <= s < table.total_length and 0 < t < math.pi):
        raise ConfigError("start must satisfy 0 <= s < |dQ| and 0 < theta < pi")
    orbit = iterate(table, PhasePoint(s, t), cfg.params["steps"])
    if orbit.terminated.value != "completed":
        log.warning("orbit stopped after %d steps: %s", len(orbit) - 1, orbit.terminated.value)
    rows = export.orbit_rows(table, orbit, cfg.params["normalized"])
    _emit(cfg, export.csv_text(cfg.record(), ["step", "s", "theta", "arc_index"], rows))
    return EXIT_OK


def _lyapunov_rows(cfg: RunConfig, B1_values):
    lcfg = LyapunovConfig(cfg.params["dx"], cfg.params["n"], cfg.params["k"], cfg.params["weighted"])
    spec = TableSpec.from_dict(cfg.table)
    rows = []
    for B1 in B1_values:
        template = TableSpec(spec.family, spec.R, spec.B, B1, spec.n)
        points, skipped = lyapunov_curve(template, cfg.params["B_values"], lcfg, cfg.threads)
        for B in skipped:
            log.warning("no valid table at B=%g, B1=%g", B, B1)
        rows += [(B, B1, res.lambda_bar, res.skipped) for B, res in points]
    return rows


def cmd_lyapunov(cfg: RunConfig) -> int:
    rows = _lyapunov_rows(cfg, [cfg.table["B1"]])
    _emit(cfg, export.csv_text(cfg.record(), ["B", "B1", "lambda_bar", "skipped_seeds"], rows))
    return EXIT_OK


def cmd_sweep(cfg: RunConfig) -> int:
    rows = _lyapunov_rows(cfg, cfg.params["B1_values"])
    _emit(cfg, export.csv_text(cfg.record(), ["B", "B1", "lambda_bar", "skipped_seeds"], rows))
    return EXIT_OK


def cmd_scan(cfg: RunConfig) -> int:
    icfg = IslandConfig(**cfg.params["island"])
    family = Family.parse(cfg.table["family"])
    rows = []
    for t2, rng in zip(cfg.params["theta2"], cfg.params["theta1_ranges"]):
        est = ergodic_boundary_scan(t2, cfg.table["B1"], rng, cfg.params["step"], family, icfg, cfg.threads)
        rows.append((est.theta2, est.theta1_low, est.theta1_high, est.B1))
    _emit(cfg, export.csv_text(cfg.record(), ["theta2", "theta1_low", "theta1_high", "B1"], rows))
    return EXIT_OK


def cmd_validate(cfg: RunConfig) -> int:
    spec = TableSpec.from_dict(cfg.table)
    table = build_table(spec)
    info = {
        "spec": spec.to_dict(),
        "valid": True,
        "perimeter": table.total_length,
        "arcs": [{"s_start": a.s_start, "length": a.length, "radius": a.radius,
                  "focusing": a.focusing} for a in table.arcs],
        "corners": list(table.corners),
    }
    if spec.family in (Family.LEMON, Family.MOON, Family.FLOWER):
        info["theta"] = list(theta_of_table(spec))
    if spec.family.is_umbrella:
        info["max_offset"] = max_offset(spec)
    _emit(cfg, json.dumps(info, indent=2) + "\n")
    return EXIT_OK


HANDLERS = {
    "portrait": cmd_portrait, "classify": cmd_classify, "orbit": cmd_orbit, "lyapunov": cmd_lyapunov,
    "scan": cmd_scan, "sweep": cmd_sweep, "validate": cmd_validate,
}

COMPUTE_ERRORS = (NotPeriodic, NotFound, NoConvergence, SingularOrbit, SingularityError, NoTransition,
                  DegenerateSeed, OutOfRange)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = make_config(args.command, _merge(args))
    except (ConfigError, InvalidSpec, ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return HANDLERS[cfg.command](cfg)
    except (ConfigError, InvalidSpec) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except COMPUTE_ERRORS as exc:
        print(f"failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    except BrokenPipeError:
        # reader went away (e.g. piped into head); not an error of ours
        sys.stdout = open(os.devnull, "w")
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
