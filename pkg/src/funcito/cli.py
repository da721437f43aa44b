"""Experiment runner: config files, reports and the ``funcito`` command line.

Every subcommand builds an `ExperimentConfig` and hands it to `run`, so a
command line invocation and ``funcito run --config file.ini`` with the same
settings produce the same tables. Exit status is 0 when every pass flag is
true, 1 when some check failed, 2 for a bad config or functional id and 3 for
I/O failures.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import io
import json
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import derivatives, itoverify
from .errors import ConfigurationError, DomainError, EvaluationError
from .functionals import parse_functional
from .pathspace import CadlagPath, TimeGrid
from .simulate import GeneratorConfig, JumpSpec, brownian, exp_smoother, k_process, random_path

OUT_ENV = "FUNCITO_OUT_DIR"
COMMANDS = ("simulate", "differentiate", "verify-ito", "wong-zakai", "smoother", "props")


def default_out() -> str:
    return os.environ.get(OUT_ENV, "funcito_out")


def _ints(text: str) -> List[int]:
    return [int(x) for x in text.replace(" ", "").split(",") if x]


def _floats(text: str) -> List[float]:
    return [float(x) for x in text.replace(" ", "").split(",") if x]


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _show(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, tuple)):
        return ",".join(_show(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


# section -> key -> (attribute, parser)
_LAYOUT: Dict[str, Dict[str, Tuple[str, object]]] = {
    "experiment": {
        "command": ("command", str),
        "functional": ("functional", str),
        "out": ("out", str),
    },
    "generator": {
        "kind": ("gen_kind", str),
        "horizon": ("horizon", float),
        "drift": ("drift", float),
        "lambda": ("intensity", float),
        "jump_law": ("jump_law", str),
        "jump_params": ("jump_params", _floats),
        "compensated": ("compensated", _bool),
    },
    "run": {
        "levels": ("levels", _ints),
        "seeds": ("seeds", int),
        "first_seed": ("first_seed", int),
        "n_steps": ("n_steps", int),
        "tolerance": ("tolerance", float),
        "t": ("t", float),
        "kind": ("kind", str),
        "path": ("path", str),
    },
}


@dataclass
class ExperimentConfig:
    """One reproducible experiment.

    ``levels`` means log2 of the grid size for verify-ito and the smoothing
    index n for wong-zakai and smoother.
    """

    command: str = "verify-ito"
    functional: str = "square"
    out: str = ""
    gen_kind: str = "bm"
    horizon: float = 1.0
    drift: float = 0.0
    intensity: float = 0.0
    jump_law: str = "sign"
    jump_params: List[float] = field(default_factory=list)
    compensated: bool = False
    levels: List[int] = field(default_factory=lambda: [8, 10, 12])
    seeds: int = 10
    first_seed: int = 0
    n_steps: int = 4096
    tolerance: float = 0.05
    t: float = 0.5
    kind: str = "chit"
    path: str = ""

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigurationError(f"command: unknown command {self.command!r}")
        if self.seeds < 1:
            raise ConfigurationError("seeds: must be >= 1")

    def seed_list(self) -> List[int]:
        return list(range(self.first_seed, self.first_seed + self.seeds))

    def generator(self) -> GeneratorConfig:
        try:
            jump = JumpSpec(self.intensity, self.jump_law, tuple(self.jump_params))
            return GeneratorConfig(self.gen_kind, self.horizon, self.drift, jump, self.compensated)
        except DomainError as exc:
            raise ConfigurationError(f"generator: {exc}") from exc

    def to_ini(self) -> str:
        """Canonical file form; fixed section and key order."""
        lines = []
        for section, keys in _LAYOUT.items():
            lines.append(f"[{section}]")
            for key, (attr, _) in keys.items():
                lines.append(f"{key} = {_show(getattr(self, attr))}")
            lines.append("")
        return "\n".join(lines)

    def digest(self) -> str:
        return hashlib.sha256(self.to_ini().encode()).hexdigest()

    @classmethod
    def from_ini(cls, text: str) -> "ExperimentConfig":
        parser = configparser.ConfigParser(interpolation=None)
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigurationError(f"unreadable config: {exc}") from exc
        kwargs = {}
        for section in parser.sections():
            if section not in _LAYOUT:
                raise ConfigurationError(f"[{section}]: unknown section")
            for key, raw in parser.items(section):
                if key not in _LAYOUT[section]:
                    raise ConfigurationError(f"{section}.{key}: unknown key")
                attr, conv = _LAYOUT[section][key]
                try:
                    kwargs[attr] = conv(raw)
                except ValueError as exc:
                    raise ConfigurationError(f"{section}.{key}: bad value {raw!r} ({exc})") from exc
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_ini(Path(path).read_text())

    def save(self, path) -> None:
        Path(path).write_text(self.to_ini())


@dataclass
class ExperimentReport:
    config_hash: str
    command: str
    tables: Dict[str, List[Tuple[float, float]]] = field(default_factory=dict)
    passes: Dict[str, bool] = field(default_factory=dict)
    details: dict = field(default_factory=dict)
    wall_clock: float = 0.0

    @property
    def passed(self) -> bool:
        return all(self.passes.values())

    def table_csv(self, name: str) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["level", "metric"])
        for level, metric in self.tables[name]:
            w.writerow([_show(float(level)), _show(float(metric))])
        return buf.getvalue()

    def as_dict(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "command": self.command,
            "tables": {k: [{"param": p, "metric": m} for p, m in v] for k, v in self.tables.items()},
            "pass": self.passed,
            "checks": self.passes,
            "details": self.details,
            "wall_clock": self.wall_clock,
        }

    def write(self, out: str) -> List[Path]:
        """Write the JSON verdict and one ``level,metric`` CSV per table.

        ``out`` ending in ``.json`` names the report file, with tables next to
        it; otherwise it is a directory.
        """
        target = Path(out)
        if target.suffix == ".json":
            target.parent.mkdir(parents=True, exist_ok=True)
            report_path, stem = target, target.with_suffix("")
            table_path = lambda name: Path(f"{stem}_{name}.csv")
        else:
            target.mkdir(parents=True, exist_ok=True)
            report_path = target / "report.json"
            table_path = lambda name: target / f"{name}.csv"
        written = []
        for name in self.tables:
            p = table_path(name)
            p.write_text(self.table_csv(name))
            written.append(p)
        report_path.write_text(json.dumps(self.as_dict(), indent=2, default=_json_default) + "\n")
        written.append(report_path)
        return written


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _functional(cfg: ExperimentConfig):
    try:
        return parse_functional(cfg.functional)
    except ConfigurationError as exc:
        raise ConfigurationError(f"experiment.functional: {exc}") from exc


def _run_simulate(cfg: ExperimentConfig, rep: ExperimentReport) -> None:
    gen = cfg.generator()
    out = Path(cfg.out or default_out())
    samples = [gen.sample(cfg.n_steps, s) for s in cfg.seed_list()]
    if out.suffix == ".csv" and len(samples) == 1:
        out.parent.mkdir(parents=True, exist_ok=True)
        samples[0].X.to_csv(out)
        files = [str(out)]
    else:
        out.mkdir(parents=True, exist_ok=True)
        files = []
        for s, sample in zip(cfg.seed_list(), samples):
            p = out / f"seed_{s:06d}.csv"
            sample.X.to_csv(p)
            files.append(p.name)
    ends = np.array([x.X.values[-1] for x in samples])
    rep.details = {
        "seeds": cfg.seed_list(),
        "files": files,
        "mean_terminal": float(ends.mean()),
        "mean_jump_count": float(np.mean([len(x.X.jumps) for x in samples])),
        "mean_realized_qv": float(np.mean([x.X.realized_qv_continuous() for x in samples])),
    }
    rep.passes["simulated"] = True
    if not (out.suffix == ".csv" and len(samples) == 1):
        manifest = {"config_hash": rep.config_hash, **rep.details}
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def _run_differentiate(cfg: ExperimentConfig, rep: ExperimentReport) -> None:
    f = _functional(cfg)
    if cfg.kind not in derivatives.ESTIMATORS:
        raise ConfigurationError(f"run.kind: unknown estimator {cfg.kind!r}")
    if cfg.path:
        path = CadlagPath.from_csv(cfg.path)
    else:
        path = cfg.generator().sample(cfg.n_steps, cfg.first_seed).X
    est = derivatives.ESTIMATORS[cfg.kind](f, cfg.t, path)
    rep.details = est.as_dict()
    rep.passes["converged"] = est.converged


def _run_verify_ito(cfg: ExperimentConfig, rep: ExperimentReport, threads: int) -> None:
    f = _functional(cfg)
    sizes = [2**k for k in cfg.levels]
    res = itoverify.ito_convergence(f, cfg.generator(), sizes, cfg.seed_list(), cfg.tolerance, threads)
    rep.tables["residual"] = res.levels
    rep.details = res.as_dict()
    rep.passes["final_within_tolerance"] = res.passed


def _run_wong_zakai(cfg: ExperimentConfig, rep: ExperimentReport, threads: int) -> None:
    f = _functional(cfg)
    res = itoverify.wong_zakai_ensemble(
        f, cfg.generator(), cfg.n_steps, cfg.levels, cfg.seed_list(), cfg.tolerance, threads
    )
    rep.tables["wong_zakai"] = res.levels
    rep.details = res.as_dict()
    rep.passes["final_within_tolerance"] = res.passed
    rep.passes["decreasing"] = res.decreasing()


def _smoother_errors(seed: int, n_steps: int, ns: Sequence[int]) -> Tuple[List[float], List[float]]:
    sample = brownian(TimeGrid.uniform(n_steps), seed)
    M, clock = sample.M_c, sample.clock
    sup_err, k_err = [], []
    for n in ns:
        Mn = exp_smoother(M, clock, n)
        sup_err.append(float(np.max(np.abs(Mn.cont - M.cont))))
        K = k_process(M, clock, n, smoothed=Mn)
        k_err.append(float(np.max(np.abs(K.cont - 0.5 * clock))))
    return sup_err, k_err


def _run_smoother(cfg: ExperimentConfig, rep: ExperimentReport, threads: int) -> None:
    rows = itoverify._map(lambda s: _smoother_errors(s, cfg.n_steps, cfg.levels), cfg.seed_list(), threads)
    sup = np.median([r[0] for r in rows], axis=0)
    kerr = np.median([r[1] for r in rows], axis=0)
    rep.tables["smoother_sup_error"] = [(float(n), float(m)) for n, m in zip(cfg.levels, sup)]
    rep.tables["k_process_error"] = [(float(n), float(m)) for n, m in zip(cfg.levels, kerr)]
    rep.passes["sup_error_decreasing"] = bool(np.all(np.diff(sup) < 0))
    rep.passes["sup_error_within_tolerance"] = bool(sup[-1] <= cfg.tolerance)
    rep.details = {"seeds": cfg.seeds, "n_steps": cfg.n_steps}


def _run_props(cfg: ExperimentConfig, rep: ExperimentReport) -> None:
    f = _functional(cfg)
    samples = []
    for s in cfg.seed_list():
        rng = np.random.default_rng(s)
        p = random_path(rng, n_steps=cfg.n_steps, horizon=cfg.horizon)
        samples.append((float(rng.uniform(0.1, 0.7) * cfg.horizon), p))
    p1 = itoverify.prop1_check(f, samples)
    p3 = itoverify.prop3_check(f, samples)
    rep.details = {"prop1": p1.as_dict(), "prop3": p3.as_dict()}
    rep.passes["prop1_time"] = p1.max_time_deviation <= cfg.tolerance
    rep.passes["prop1_space"] = p1.max_space_deviation <= cfg.tolerance
    if p3.hypothesis_holds:
        rep.passes["prop3_space"] = p3.max_space_deviation <= cfg.tolerance


def run(cfg: ExperimentConfig, threads: int = 1, write: bool = True) -> ExperimentReport:
    """Dispatch one experiment and, unless ``write`` is false, write its outputs."""
    rep = ExperimentReport(cfg.digest(), cfg.command)
    start = time.perf_counter()
    if cfg.command == "simulate":
        _run_simulate(cfg, rep)
    elif cfg.command == "differentiate":
        _run_differentiate(cfg, rep)
    elif cfg.command == "verify-ito":
        _run_verify_ito(cfg, rep, threads)
    elif cfg.command == "wong-zakai":
        _run_wong_zakai(cfg, rep, threads)
    elif cfg.command == "smoother":
        _run_smoother(cfg, rep, threads)
    else:
        _run_props(cfg, rep)
    rep.passes = {k: bool(v) for k, v in rep.passes.items()}
    rep.wall_clock = time.perf_counter() - start
    if write and cfg.command != "simulate":
        rep.write(cfg.out or default_out())
    return rep


def _read_generator(spec: str, cfg_kwargs: dict) -> None:
    """--gen is either a generator kind or an INI file with a [generator] section."""
    if spec in ("bm", "jumpdiff"):
        cfg_kwargs["gen_kind"] = spec
        return
    loaded = ExperimentConfig.load(spec)
    for attr in ("gen_kind", "horizon", "drift", "intensity", "jump_law", "jump_params", "compensated"):
        cfg_kwargs.setdefault(attr, getattr(loaded, attr))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="funcito", description="Functional Itô calculus experiments")
    ap.add_argument("--threads", type=int, default=1, help="worker threads for seed ensembles")
    sub = ap.add_subparsers(dest="cmd", required=True)

    def common(p, functional=True):
        if functional:
            p.add_argument("--functional", default="square")
        p.add_argument("--out", default=None, help=f"output path (default ${OUT_ENV} or ./funcito_out)")
        p.add_argument("--seeds", type=int, default=None, help="number of seeds")
        p.add_argument("--first-seed", type=int, default=None)

    def generator(p):
        p.add_argument("--gen", default=None, help="bm, jumpdiff, or an INI file with a [generator] section")
        p.add_argument("--lambda", dest="intensity", type=float, default=None)
        p.add_argument("--jump-law", default=None, choices=("sign", "uniform", "normal"))
        p.add_argument("--jump-params", default=None, help="comma separated law parameters")
        p.add_argument("--drift", type=float, default=None)
        p.add_argument("--compensated", action="store_true", default=None)

    p = sub.add_parser("simulate", help="simulate sample paths to CSV")
    common(p, functional=False)
    generator(p)
    p.add_argument("--kind", dest="gen", default=None, choices=("bm", "jumpdiff"))
    p.add_argument("--n-steps", type=int, default=None)
    p.add_argument("--seed", type=int, default=None, help="single seed (same as --first-seed)")

    p = sub.add_parser("differentiate", help="estimate a functional derivative")
    common(p)
    generator(p)
    p.add_argument("--path", default=None, help="path CSV (time,cont,jump)")
    p.add_argument("--t", type=float, default=None)
    p.add_argument("--kind", default=None, choices=sorted(derivatives.ESTIMATORS))
    p.add_argument("--n-steps", type=int, default=None)

    p = sub.add_parser("verify-ito", help="grid-refinement study of the Itô residual")
    common(p)
    generator(p)
    p.add_argument("--levels", default=None, help="log2 grid sizes, e.g. 8,10,12")
    p.add_argument("--tol", type=float, default=None)

    p = sub.add_parser("wong-zakai", help="integrals along smoothed approximations")
    common(p)
    generator(p)
    p.add_argument("--n", dest="levels", default=None, help="smoothing indices, e.g. 4,16,64,256")
    p.add_argument("--n-steps", type=int, default=None)
    p.add_argument("--tol", type=float, default=None)

    p = sub.add_parser("smoother", help="sup error of the exponential smoother")
    common(p, functional=False)
    p.add_argument("--n", dest="levels", default=None)
    p.add_argument("--n-steps", type=int, default=None)
    p.add_argument("--tol", type=float, default=None)

    p = sub.add_parser("props", help="oracle checks on random càdlàg paths")
    common(p)
    p.add_argument("--n-steps", type=int, default=None)
    p.add_argument("--tol", type=float, default=None)

    p = sub.add_parser("run", help="run an experiment from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    return ap


_DEFAULTS = {
    "simulate": dict(n_steps=1024, seeds=1, levels=[]),
    "differentiate": dict(n_steps=256, seeds=1, levels=[]),
    "verify-ito": dict(levels=[8, 10, 12], seeds=100, n_steps=4096),
    "wong-zakai": dict(levels=[4, 16, 64, 256], seeds=100, n_steps=2**14, functional="identity"),
    "smoother": dict(levels=[4, 16, 64, 256], seeds=1, n_steps=2**14),
    "props": dict(seeds=50, n_steps=128, tolerance=1e-6),
}


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    kw = {"command": args.cmd, **_DEFAULTS[args.cmd]}
    direct = {
        "functional": "functional",
        "out": "out",
        "seeds": "seeds",
        "first_seed": "first_seed",
        "intensity": "intensity",
        "jump_law": "jump_law",
        "drift": "drift",
        "compensated": "compensated",
        "n_steps": "n_steps",
        "path": "path",
        "t": "t",
        "kind": "kind",
        "tol": "tolerance",
    }
    for src, dst in direct.items():
        val = getattr(args, src, None)
        if val is not None:
            kw[dst] = val
    if getattr(args, "seed", None) is not None:
        kw["first_seed"] = args.seed
    if getattr(args, "levels", None):
        kw["levels"] = _ints(args.levels)
    if getattr(args, "jump_params", None):
        kw["jump_params"] = _floats(args.jump_params)
    if getattr(args, "gen", None):
        _read_generator(args.gen, kw)
    if kw.get("gen_kind") == "jumpdiff" and "intensity" not in kw:
        kw["intensity"] = 2.0
    return ExperimentConfig(**kw)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.cmd == "run":
            cfg = ExperimentConfig.load(args.config)
            if args.out:
                cfg.out = args.out
        else:
            cfg = config_from_args(args)
        rep = run(cfg, threads=max(1, args.threads))
    except (ConfigurationError, DomainError) as exc:
        print(f"funcito: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"funcito: I/O error: {exc}", file=sys.stderr)
        return 3
    except EvaluationError as exc:
        print(f"funcito: evaluation failed: {exc}", file=sys.stderr)
        return 1
    if cfg.command in ("differentiate", "simulate"):
        print(json.dumps(rep.details, default=_json_default))
    else:
        for name, rows in rep.tables.items():
            print(f"# {name}")
            print(rep.table_csv(name), end="")
        print(json.dumps({"pass": rep.passed, "checks": rep.passes}))
    return 0 if rep.passed else 1


if __name__ == "__main__":
    sys.exit(main())
