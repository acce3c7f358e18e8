"""Command-line front end: ingest CSV data, fit, predict, simulate, report.

A single JSON configuration file governs a run; individual keys can be
overridden from the command line with --set dotted.key=value.  Every command
writes a run manifest before any long computation starts.  Output CSVs use
'.' decimals and LF line endings so golden-file comparisons are byte exact.

Exit codes: 0 ok, 2 configuration error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import json
import os
import sys
from dataclasses import dataclass
from importlib import metadata

import numpy as np

from .domain import (
    BlockIndex,
    Dataset,
    DomainSpec,
    MixedPoint,
    clamp_dataset,
)
from .errors import (
    ConfigError,
    DegenerateLikelihood,
    DmbppError,
    EmptyDataset,
    Infeasible,
    InvalidArgument,
    NormalizationError,
    ParseError,
    RescaleOutOfRange,
    ZeroMarginal,
)
from .estimate import (
    MarginalSubset,
    cube_axis_grid,
    full_grid,
    predictive_conditional,
    predictive_density,
    predictive_marginal,
    simplex_interior_grid,
)
from .gibbs import SamplerConfig, draws_to_csv, load_draws, run_chain, save_draws
from .model import ModelConfig, TruncatedPoisson, make_tail_modified
from .simlab import get_scenario, run_replicates, scenario_sample


def _version() -> str:
    try:
        return metadata.version("dmbpp")
    except metadata.PackageNotFoundError:
        return "0.0.0"


# --- ingestion -----------------------------------------------------------------


@dataclass(frozen=True)
class IngestConfig:
    """How to read a CSV into the mixed sample space.

    simplex_groups: tuple of (name, column names, mode) with mode "normalize"
    (d+1 raw parts, divided by their sum, last dropped) or "assert" (the d
    stored parts, sum must stay <= 1).  cube_columns: tuple of
    (name, column, (lo, hi)) rescaled by (x - lo) / (hi - lo).
    """

    path: str
    simplex_groups: tuple = ()
    cube_columns: tuple = ()
    interior_epsilon: float = 1e-6

    def __post_init__(self):
        seen = set()
        for name, cols, mode in self.simplex_groups:
            if mode not in ("normalize", "assert"):
                raise ConfigError(f"group {name!r}: unknown mode {mode!r}")
            if len(cols) < 2:
                raise ConfigError(f"group {name!r}: need at least two columns")
            for c in cols:
                if c in seen:
                    raise ConfigError(f"column {c!r} mapped twice")
                seen.add(c)
        for name, col, (lo, hi) in self.cube_columns:
            if col in seen:
                raise ConfigError(f"column {col!r} mapped twice")
            seen.add(col)
            if not lo < hi:
                raise ConfigError(f"column {name!r}: rescale bounds need min < max")

    @property
    def spec(self) -> DomainSpec:
        dims = tuple(
            len(cols) - 1 if mode == "normalize" else len(cols)
            for _, cols, mode in self.simplex_groups
        )
        return DomainSpec(dims, len(self.cube_columns))


def ingest(cfg: IngestConfig):
    """Read, drop incomplete rows, rescale, and clamp.

    Returns (dataset, spec, dropped_row_count).
    """
    spec = cfg.spec
    mapped = [c for _, cols, _ in cfg.simplex_groups for c in cols]
    mapped += [col for _, col, _ in cfg.cube_columns]
    try:
        fh = open(cfg.path, newline="")
    except OSError as e:
        raise ParseError(f"cannot open {cfg.path}: {e}") from e
    rows_simplex = [[] for _ in cfg.simplex_groups]
    rows_cube = []
    dropped = 0
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ParseError(f"{cfg.path}: empty file, header required")
        missing = [c for c in mapped if c not in reader.fieldnames]
        if missing:
            raise ParseError(f"{cfg.path}: missing columns {missing}")
        for i, row in enumerate(reader, start=2):
            raw = {c: (row.get(c) or "").strip() for c in mapped}
            if any(v == "" for v in raw.values()):
                dropped += 1
                continue
            try:
                vals = {c: float(raw[c]) for c in mapped}
            except ValueError:
                bad = next(c for c in mapped if not _is_float(raw[c]))
                raise ParseError(f"row {i}, column {bad!r}: not a number: {raw[bad]!r}")
            for g, (name, cols, mode) in enumerate(cfg.simplex_groups):
                parts = np.array([vals[c] for c in cols])
                if np.any(parts < 0):
                    raise ParseError(f"row {i}, group {name!r}: negative part")
                if mode == "normalize":
                    s = parts.sum()
                    if s <= 0:
                        raise ParseError(f"row {i}, group {name!r}: zero composition")
                    stored = (parts / s)[:-1]
                else:
                    if parts.sum() > 1.0 + 1e-12:
                        raise ParseError(f"row {i}, group {name!r}: parts sum past 1")
                    stored = parts
                rows_simplex[g].append(stored)
            cube_row = []
            for name, col, (lo, hi) in cfg.cube_columns:
                u = (vals[col] - lo) / (hi - lo)
                if not 0.0 <= u <= 1.0:
                    raise RescaleOutOfRange(
                        f"row {i}, column {name!r}: {vals[col]} outside [{lo}, {hi}]"
                    )
                cube_row.append(u)
            rows_cube.append(cube_row)
    if not rows_cube and not any(rows_simplex):
        raise EmptyDataset(f"{cfg.path}: no usable rows ({dropped} dropped)")
    n = len(rows_cube)
    simplex = tuple(np.array(b).reshape(n, d) for b, d in zip(rows_simplex, spec.simplex_dims))
    cube = np.array(rows_cube).reshape(n, spec.cube_dim)
    data = clamp_dataset(Dataset(spec, simplex, cube), cfg.interior_epsilon)
    return data, spec, dropped


def _is_float(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


def write_dataset(data: Dataset, path) -> None:
    """CSV dump of the stored coordinates; ingest in assert mode round-trips."""
    spec = data.spec
    header = []
    for m, d in enumerate(spec.simplex_dims):
        header += [f"x{m+1}_{p+1}" for p in range(d)]
    header += [f"x{spec.n_simplex + 1 + l}" for l in range(spec.cube_dim)]
    cols = list(data.simplex) + ([data.cube] if spec.cube_dim else [])
    flat = np.column_stack(cols) if cols else np.zeros((data.n, 0))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in flat:
            writer.writerow([repr(float(v)) for v in row])


# --- configuration -------------------------------------------------------------


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int
    version: str
    started: str
    outputs: list

    def write(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.__dict__, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _require(cfg: dict, key: str, path: str):
    if key not in cfg:
        raise ConfigError(f"missing key {path}.{key}" if path else f"missing key {key}")
    return cfg[key]


def _sampler_from(cfg: dict) -> SamplerConfig:
    known = {
        "chain_length",
        "burn_in",
        "thinning",
        "n_chains",
        "seed",
        "atom_step",
        "degree_step",
        "atom_proposal_mix",
        "n_jobs",
    }
    extra = set(cfg) - known
    if extra:
        raise ConfigError(f"sampler: unknown keys {sorted(extra)}")
    try:
        return SamplerConfig(**cfg)
    except (InvalidArgument, TypeError) as e:
        raise ConfigError(f"sampler: {e}") from e


def _model_from(cfg: dict, spec: DomainSpec) -> ModelConfig:
    known = {
        "truncation",
        "degree_rate",
        "tail_modified",
        "k_tilde",
        "precision_shape",
        "precision_rate",
        "interior_epsilon",
    }
    extra = set(cfg) - known
    if extra:
        raise ConfigError(f"model: unknown keys {sorted(extra)}")
    lams = cfg.get("degree_rate", 15.0)
    if np.isscalar(lams):
        lams = (float(lams),) * spec.n_blocks
    else:
        lams = tuple(float(v) for v in lams)
    if len(lams) != spec.n_blocks:
        raise ConfigError(f"model.degree_rate: need {spec.n_blocks} rates")
    if cfg.get("tail_modified", False):
        prior = make_tail_modified(spec, lams, int(cfg.get("k_tilde", 30)))
    else:
        prior = TruncatedPoisson(lams)
    try:
        return ModelConfig(
            spec,
            truncation=int(cfg.get("truncation", 25)),
            degree_prior=prior,
            precision_shape=float(cfg.get("precision_shape", 1.0)),
            precision_rate=float(cfg.get("precision_rate", 1.0)),
            interior_epsilon=float(cfg.get("interior_epsilon", 1e-6)),
        )
    except (InvalidArgument, ValueError) as e:
        raise ConfigError(f"model: {e}") from e


def _ingest_from(cfg: dict) -> IngestConfig:
    path = _require(cfg, "csv", "data")
    groups = []
    for g in cfg.get("simplex_blocks", []):
        groups.append(
            (
                _require(g, "name", "data.simplex_blocks"),
                tuple(_require(g, "columns", "data.simplex_blocks")),
                g.get("mode", "normalize"),
            )
        )
    cube = []
    for c in cfg.get("cube_columns", []):
        bounds = c.get("bounds", [0.0, 1.0])
        if len(bounds) != 2:
            raise ConfigError("data.cube_columns.bounds: need [min, max]")
        cube.append(
            (
                _require(c, "name", "data.cube_columns"),
                c.get("column", c["name"]),
                (float(bounds[0]), float(bounds[1])),
            )
        )
    try:
        return IngestConfig(path, tuple(groups), tuple(cube))
    except ConfigError:
        raise
    except DmbppError as e:
        raise ConfigError(f"data: {e}") from e


def _parse_point(cfg: dict, spec: DomainSpec) -> MixedPoint:
    simplex = tuple(
        np.asarray(b, dtype=float) for b in cfg.get("simplex", [])
    )
    cube = np.asarray(cfg.get("cube", []), dtype=float)
    if len(simplex) != spec.n_simplex or cube.shape[0] != spec.cube_dim:
        raise ConfigError("given: one simplex array per block and all cube values required")
    return MixedPoint(simplex, cube)


# --- commands ------------------------------------------------------------------


def _manifest(command: str, cfg: dict, seed: int, outputs: list, out_dir: str) -> None:
    man = RunManifest(
        command,
        cfg,
        seed,
        _version(),
        datetime.datetime.now(datetime.timezone.utc).isoformat(),
        [str(p) for p in outputs],
    )
    man.write(os.path.join(out_dir, "manifest.json"))


def cmd_fit(cfg: dict) -> int:
    data_cfg = _require(cfg, "data", "")
    out_dir = cfg.get("output_dir", ".")
    os.makedirs(out_dir, exist_ok=True)
    icfg = _ingest_from(data_cfg)
    sampler = _sampler_from(cfg.get("sampler", {}))
    draws_bin = os.path.join(out_dir, "draws.bin")
    draws_csv = os.path.join(out_dir, "draws.csv")
    _manifest("fit", cfg, sampler.seed, [draws_bin, draws_csv], out_dir)
    data, spec, dropped = ingest(icfg)
    if dropped:
        print(f"dropped {dropped} incomplete rows", file=sys.stderr)
    model = _model_from(cfg.get("model", {}), spec)
    draws = run_chain(sampler, model, data)
    save_draws(draws, draws_bin)
    draws_to_csv(draws, draws_csv)
    print(f"fit: {draws.count} retained draws -> {draws_bin}")
    return 0


def cmd_predict(cfg: dict) -> int:
    out_dir = cfg.get("output_dir", ".")
    os.makedirs(out_dir, exist_ok=True)
    pred = _require(cfg, "predict", "")
    kind = _require(pred, "kind", "predict")
    out_path = os.path.join(out_dir, pred.get("output", "predict.csv"))
    _manifest("predict", cfg, int(cfg.get("seed", 0)), [out_path], out_dir)
    draws = load_draws(_require(cfg, "draws", ""))
    spec = draws.model_config.spec
    res = int(pred.get("resolution", 50))
    level = float(pred.get("level", 0.95))
    if kind == "joint":
        grid, _ = full_grid(spec, res)
        est = predictive_density(draws, grid, level)
    elif kind == "marginal":
        block = int(_require(pred, "block", "predict"))
        part = int(_require(pred, "part", "predict"))
        t = cube_axis_grid(res)
        if 1 <= block <= spec.n_simplex:
            keep = MarginalSubset(
                tuple(("part", part) if m == block - 1 else None for m in range(spec.n_simplex))
            )
            est = predictive_marginal(
                draws,
                keep,
                [t if m == block - 1 else None for m in range(spec.n_simplex)],
                np.empty((res, 0)),
                level,
            )
        elif block == spec.n_simplex + 1 and spec.cube_dim:
            keep = MarginalSubset((None,) * spec.n_simplex, (part,))
            est = predictive_marginal(draws, keep, [None] * spec.n_simplex, t.reshape(-1, 1), level)
        else:
            raise ConfigError(f"predict.block: no block {block}")
    elif kind == "conditional":
        target = BlockIndex(int(_require(pred, "target_block", "predict")))
        try:
            target.check(spec)
        except DmbppError as e:
            raise ConfigError(f"predict.target_block: {e}") from e
        given = _parse_point(_require(pred, "given", "predict"), spec)
        if target.index <= spec.n_simplex:
            pts, _ = simplex_interior_grid(spec.block_dim(target.index), res)
        else:
            pts = cube_axis_grid(res).reshape(-1, 1)
            if spec.cube_dim > 1:
                grids = np.meshgrid(*([cube_axis_grid(res)] * spec.cube_dim), indexing="ij")
                pts = np.column_stack([g.ravel() for g in grids])
        est = predictive_conditional(draws, target, given, pts, level)
    else:
        raise ConfigError(f"predict.kind: unknown kind {kind!r}")
    est.to_csv(out_path)
    print(f"predict: {est.mean.shape[0]} grid points -> {out_path}")
    return 0


def cmd_simulate(cfg: dict) -> int:
    out_dir = cfg.get("output_dir", ".")
    os.makedirs(out_dir, exist_ok=True)
    sim = _require(cfg, "simulate", "")
    try:
        scenario = get_scenario(str(_require(sim, "scenario", "simulate")))
    except InvalidArgument as e:
        raise ConfigError(f"simulate.scenario: {e}") from e
    n = int(_require(sim, "n", "simulate"))
    seed = int(sim.get("seed", 0))
    out_path = os.path.join(out_dir, sim.get("output", "simulate.csv"))
    _manifest("simulate", cfg, seed, [out_path], out_dir)
    data = scenario_sample(scenario, n, np.random.default_rng(seed))
    write_dataset(data, out_path)
    print(f"simulate: scenario {scenario.name}, n={n} -> {out_path}")
    return 0


def cmd_report(cfg: dict) -> int:
    out_dir = cfg.get("output_dir", ".")
    os.makedirs(out_dir, exist_ok=True)
    rep = _require(cfg, "report", "")
    try:
        scenario = get_scenario(str(_require(rep, "scenario", "report")))
    except InvalidArgument as e:
        raise ConfigError(f"report.scenario: {e}") from e
    n = int(_require(rep, "n", "report"))
    replicates = int(rep.get("replicates", 10))
    sampler = _sampler_from(rep.get("sampler", {}))
    model = _model_from(rep.get("model", {}), scenario.spec)
    out_path = os.path.join(out_dir, rep.get("output", "report.csv"))
    _manifest("report", cfg, sampler.seed, [out_path], out_dir)
    report = run_replicates(
        scenario,
        n,
        replicates,
        sampler,
        model,
        marginal_resolution=int(rep.get("marginal_resolution", 256)),
        joint_resolution=int(rep.get("joint_resolution", 40)),
    )
    report.to_csv(out_path)
    print(
        f"report: scenario {scenario.name}, n={n}, {replicates} replicates,"
        f" {report.runtime_seconds:.1f}s -> {out_path}"
    )
    return 0


# --- entry point ----------------------------------------------------------------


def _apply_override(cfg: dict, spec: str) -> None:
    if "=" not in spec:
        raise ConfigError(f"--set needs key=value, got {spec!r}")
    key, _, raw = spec.partition("=")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node = cfg
    parts = key.split(".")
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"--set {key}: {p} is not a section")
    node[parts[-1]] = value


def load_config(path: str, overrides) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON: {e}") from e
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be an object")
    for spec in overrides or []:
        _apply_override(cfg, spec)
    return cfg


_COMMANDS = {
    "fit": cmd_fit,
    "predict": cmd_predict,
    "simulate": cmd_simulate,
    "report": cmd_report,
}

_DATA_ERRORS = (ParseError, RescaleOutOfRange, EmptyDataset)
_NUMERIC_ERRORS = (NormalizationError, ZeroMarginal, DegenerateLikelihood, Infeasible)


def _planned_outputs(command: str, cfg: dict) -> list:
    out_dir = cfg.get("output_dir", ".")
    section = {"fit": None, "predict": "predict", "simulate": "simulate", "report": "report"}
    if command == "fit":
        names = ["draws.bin", "draws.csv"]
    else:
        defaults = {"predict": "predict.csv", "simulate": "simulate.csv", "report": "report.csv"}
        sec = cfg.get(section[command], {})
        names = [sec.get("output", defaults[command]) if isinstance(sec, dict) else defaults[command]]
    return [os.path.join(out_dir, n) for n in names]


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="dmbpp",
        description="Density estimation for mixed compositional and bounded data.",
    )
    parser.add_argument("--version", action="version", version=_version())
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON configuration file")
        p.add_argument(
            "--set",
            action="append",
            dest="overrides",
            metavar="KEY=VALUE",
            help="override a config key (dotted path, JSON value)",
        )
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code in (0, None) else 2
    outputs = []
    try:
        cfg = load_config(args.config, args.overrides)
        outputs = _planned_outputs(args.command, cfg)
        return _COMMANDS[args.command](cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        code = 2
    except _DATA_ERRORS as e:
        print(f"data error: {e}", file=sys.stderr)
        code = 3
    except _NUMERIC_ERRORS + (FloatingPointError,) as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        code = 4
    except DmbppError as e:
        print(f"error: {e}", file=sys.stderr)
        code = 3
    for path in outputs:
        if os.path.exists(path):
            os.unlink(path)
    return code


if __name__ == "__main__":
    sys.exit(main())
