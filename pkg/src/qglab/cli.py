"""Command-line front end.

Exit codes
----------
0  success
1  internal error (a bug)
2  parse, configuration or validation error
3  solver non-convergence or exhausted budget
4  certification failure (a result was computed but did not pass its check)

Every non-zero exit also writes one JSON object to stderr with the keys
``error``, ``message`` and ``exit_code``.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Sequence

import yaml

from . import __version__
from .eigsolve import EigenSolverError
from .fd import FDBudgetError, eigenvalues_fd
from .floquet import (BandBudgetError, GroupParseError, band_structure_borderline,
                      band_structure_kirchhoff, find_gaps, parse_group, samples_in_gaps,
                      theta_sampled_bands)
from .graph import GraphError, MetricGraph, VertexCondition, flower, interval, load_graph, loop, star
from .io import SchemaError, dumps_json, make_document, to_csv
from .limits import MissingVertexSpectra, limit_spectrum
from .regimes import REGIMES, RegimeError, ScalingRegime, classify
from .secular import ScanBudgetError, VariableDensityError, eigenvalues_secular
from .svg import render_band_svg

EXIT_OK, EXIT_INTERNAL, EXIT_CONFIG, EXIT_SOLVER, EXIT_CERT = 0, 1, 2, 3, 4
COMMANDS = ("spectrum", "limit", "bands", "gaps", "manifold-converge")
FORMATS = ("csv", "json", "svg")
TOL_RANGE = (1e-14, 1e-2)

_CONFIG_ERRORS = (GraphError, GroupParseError, RegimeError, SchemaError, MissingVertexSpectra,
                  VariableDensityError, FileNotFoundError, IsADirectoryError, yaml.YAMLError,
                  ValueError)
_SOLVER_ERRORS = (ScanBudgetError, FDBudgetError, BandBudgetError, EigenSolverError)


class CliError(Exception):
    """Error with a fixed exit code."""

    def __init__(self, message: str, code: int, kind: str | None = None):
        super().__init__(message)
        self.code = code
        self.kind = kind or type(self).__name__


class CertificationError(CliError):
    def __init__(self, message: str):
        super().__init__(message, EXIT_CERT, "CertificationError")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message, EXIT_CONFIG, "UsageError")


@dataclass(frozen=True)
class RunConfig:
    """Validated invocation; the fields relevant to ``command`` are echoed into JSON output."""

    command: str
    cutoff: float = 100.0
    tol: float = 1e-10
    format: str = "csv"
    seed: int = 0
    workers: int = 1
    graph: str | None = None
    cond: str | None = None
    method: str = "secular"
    n: int = 2048
    regime: str | None = None
    alpha: float | None = None
    vertex_spectra: str | None = None
    group: str | None = None
    model: str = "kirchhoff"
    c: float = 1.0
    samples: int = 0
    eps: tuple[float, ...] = (0.2, 0.1, 0.05)
    k: int = 4
    h: float = 0.01
    export: str | None = None
    timing: bool = False
    out: str | None = None

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ValueError(f"unknown command {self.command!r}")
        if not self.cutoff > 0:
            raise ValueError("--max-lambda must be positive")
        if not TOL_RANGE[0] <= self.tol <= TOL_RANGE[1]:
            raise ValueError(f"--tol must lie in [{TOL_RANGE[0]:g}, {TOL_RANGE[1]:g}]")
        if self.format not in FORMATS:
            raise ValueError(f"unknown format {self.format!r}")
        if self.format == "svg" and self.command not in ("bands", "gaps"):
            raise ValueError("svg output is only available for bands and gaps")
        if self.workers < 1:
            raise ValueError("--workers must be at least 1")
        if self.command in ("spectrum", "limit", "manifold-converge") and not self.graph:
            raise ValueError(f"{self.command} needs --graph")
        if self.command in ("bands", "gaps") and not self.group:
            raise ValueError(f"{self.command} needs --group")
        if self.command in ("limit", "manifold-converge") and self.regime is None and self.alpha is None:
            raise ValueError(f"{self.command} needs --regime or --alpha")
        if self.regime is not None and self.regime not in REGIMES:
            raise ValueError(f"unknown regime {self.regime!r}")
        if self.method not in ("secular", "fd"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.model not in ("kirchhoff", "borderline"):
            raise ValueError(f"unknown model {self.model!r}")
        if self.samples < 0 or self.k < 1 or self.n < 16 or not self.h > 0:
            raise ValueError("--samples must be >= 0, --k >= 1, --n >= 16 and --h > 0")

    def echo(self) -> dict[str, Any]:
        d = asdict(self)
        keep = _COMMON_FIELDS + _COMMAND_FIELDS[self.command]
        d["eps"] = list(self.eps)
        return {k: d[k] for k in keep}


# ``workers``, ``timing`` and ``out`` are left out of the echo so that documents do
# not depend on how (or where) they were produced.
_COMMON_FIELDS = ("command", "cutoff", "tol", "format", "seed")
_COMMAND_FIELDS = {
    "spectrum": ("graph", "cond", "method", "n"),
    "limit": ("graph", "cond", "regime", "alpha", "vertex_spectra"),
    "bands": ("group", "model", "c", "samples"),
    "gaps": ("group", "model", "c", "samples"),
    "manifold-converge": ("graph", "cond", "regime", "alpha", "eps", "k", "h", "export"),
}


# ---------------------------------------------------------------------------
# inputs


_BUILTINS = {"interval": interval, "star": star, "loop": loop, "flower": flower}


def resolve_graph(ref: str, cond: str | None) -> MetricGraph:
    """Load ``ref`` (a YAML/JSON path or ``builtin:<name>[:<n>]``) and apply ``--cond``."""
    if ref.startswith("builtin:"):
        name, _, arg = ref[len("builtin:"):].partition(":")
        if name not in _BUILTINS:
            raise ValueError(f"unknown builtin graph {name!r}; choose from {sorted(_BUILTINS)}")
        fn = _BUILTINS[name]
        if arg:
            if name not in ("star", "flower"):
                raise ValueError(f"builtin {name!r} takes no argument")
            g = fn(int(arg))
        else:
            g = fn(3) if name == "flower" else fn()
    else:
        g = load_graph(ref)
    return g.with_condition(VertexCondition.parse(cond)) if cond else g


def _vertex_spectra(path: str | None):
    if path is None:
        return None
    data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, (dict, list)):
        raise SchemaError("vertex spectra file must hold a mapping or a list of lists")
    return data


def _regime(cfg: RunConfig) -> ScalingRegime:
    alpha = cfg.alpha
    if alpha is None:
        alpha = {"fast": 1.0, "borderline": 0.5, "slow": 0.25, "nondecay": 0.0}[cfg.regime]
    tag = cfg.regime or classify(alpha)
    return ScalingRegime(tag, alpha)


# ---------------------------------------------------------------------------
# commands


def _cmd_spectrum(cfg: RunConfig, pool):
    g = resolve_graph(cfg.graph, cfg.cond)
    if cfg.method == "fd":
        return eigenvalues_fd(g, None, cfg.n, cfg.cutoff), {}
    return eigenvalues_secular(g, cfg.cutoff, cfg.tol), {}


def _cmd_limit(cfg: RunConfig, pool):
    g = resolve_graph(cfg.graph, cfg.cond)
    reg = _regime(cfg)
    return limit_spectrum(g, reg, cfg.cutoff, vertex_spectra=_vertex_spectra(cfg.vertex_spectra),
                          tol=cfg.tol), {}


def _band_structure(cfg: RunConfig):
    grp = parse_group(cfg.group)
    if cfg.model == "kirchhoff":
        return grp, band_structure_kirchhoff(grp, cfg.cutoff)
    return grp, band_structure_borderline(grp, cfg.c, cfg.cutoff)


def _theta_check(cfg: RunConfig, grp, b, pool) -> dict:
    samples = theta_sampled_bands(grp, cfg.model, cfg.samples, cfg.cutoff,
                                  c=cfg.c if cfg.model == "borderline" else None,
                                  tol=max(cfg.tol, 1e-12), executor=pool)
    outside = samples_in_gaps(samples, find_gaps(b))
    n_vals = sum(len(s.spectrum) for s in samples)
    return {"theta_check": {"samples": len(samples), "eigenvalues": n_vals, "in_gaps": outside}}


def _cmd_bands(cfg: RunConfig, pool, gaps_only: bool = False):
    grp, b = _band_structure(cfg)
    extra = _theta_check(cfg, grp, b, pool) if cfg.samples else {}
    payload = find_gaps(b) if gaps_only and cfg.format != "svg" else b
    if extra and extra["theta_check"]["in_gaps"]:
        raise CertificationError(
            f"{extra['theta_check']['in_gaps']} theta-sampled eigenvalues fall inside a gap")
    return payload, extra


def _cmd_converge(cfg: RunConfig, pool):
    from .manifold.study import HPolicy, convergence_study

    g = resolve_graph(cfg.graph, cfg.cond)
    reg = _regime(cfg)
    rep = convergence_study(g, reg, cfg.eps, cfg.k, HPolicy(h=cfg.h), seed=cfg.seed, executor=pool)
    if cfg.export:
        _export(g, reg.at(cfg.eps[-1]), cfg.h / HPolicy().refine, Path(cfg.export))
    return rep, {}


def _export(g, reg, h, outdir: Path):
    from .manifold.assemble import assemble
    from .manifold.export import write_nodes, write_triplets
    from .manifold.mesh import build_mesh
    from .manifold.study import effective_graph

    mesh = build_mesh(effective_graph(g, reg.tag), reg, h)
    pair = assemble(mesh)
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "stiffness.txt", "w", encoding="utf-8") as f:
        write_triplets(pair.stiffness, f)
    with open(outdir / "mass.txt", "w", encoding="utf-8") as f:
        write_triplets(pair.mass, f)
    with open(outdir / "nodes.txt", "w", encoding="utf-8") as f:
        write_nodes(mesh, f)


_DISPATCH = {
    "spectrum": _cmd_spectrum,
    "limit": _cmd_limit,
    "bands": _cmd_bands,
    "gaps": lambda cfg, pool: _cmd_bands(cfg, pool, gaps_only=True),
    "manifold-converge": _cmd_converge,
}


def run(cfg: RunConfig) -> tuple[str, int]:
    """Execute ``cfg``; returns the rendered document and the exit code.

    Raises :class:`CliError` (with its exit code) for every handled failure.
    """
    t0 = time.perf_counter()
    pool = ProcessPoolExecutor(cfg.workers) if cfg.workers > 1 else None
    try:
        try:
            payload, extra = _DISPATCH[cfg.command](cfg, pool)
        finally:
            if pool is not None:
                pool.shutdown()
    except CliError:
        raise
    except _SOLVER_ERRORS as exc:
        raise CliError(str(exc), EXIT_SOLVER, type(exc).__name__) from exc
    except _CONFIG_ERRORS as exc:
        raise CliError(str(exc), EXIT_CONFIG, type(exc).__name__) from exc
    code = EXIT_OK
    if cfg.command == "manifold-converge" and not payload.all_certified:
        code = EXIT_CERT
    wall = time.perf_counter() - t0 if cfg.timing else None
    if cfg.format == "svg":
        return render_band_svg(payload), code
    if cfg.format == "csv":
        return to_csv(payload), code
    doc = make_document(payload, version=__version__, config=cfg.echo(), wall_time=wall,
                        extra=extra or None)
    return dumps_json(doc), code


# ---------------------------------------------------------------------------
# argument parsing


def _eps_list(text: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad eps list {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty eps list")
    return vals


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--graph", help="graph file (YAML/JSON) or builtin:<name>[:<n>]")
    common.add_argument("--cond", help="kirchhoff | delta:<kappa> | dirichlet | borderline")
    common.add_argument("--max-lambda", dest="cutoff", type=float, default=100.0)
    common.add_argument("--tol", type=float, default=1e-10)
    common.add_argument("--format", choices=FORMATS, default="csv")
    common.add_argument("--out", help="output file (default: stdout)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("--timing", action="store_true", help="record wall time in JSON output")

    p = _Parser(prog="qglab", description="Quantum graph spectra, band gaps and thin-manifold limits.")
    p.add_argument("--version", action="version", version=f"qglab {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("spectrum", parents=[common], help="eigenvalues of a metric graph")
    s.add_argument("--method", choices=("secular", "fd"), default="secular")
    s.add_argument("--n", type=int, default=2048, help="fd points per unit length")

    s = sub.add_parser("limit", parents=[common], help="spectrum of the thin-manifold limit operator")
    s.add_argument("--regime", choices=REGIMES)
    s.add_argument("--alpha", type=float)
    s.add_argument("--vertex-spectra", dest="vertex_spectra", help="YAML vertex id -> eigenvalues")

    for name in ("bands", "gaps"):
        s = sub.add_parser(name, parents=[common], help=f"{name} of a periodic Cayley graph")
        s.add_argument("--group", required=True, help='e.g. "Z x Z_3"')
        s.add_argument("--model", choices=("kirchhoff", "borderline"), default="kirchhoff")
        s.add_argument("--c", type=float, default=1.0, help="borderline coupling constant")
        s.add_argument("--samples", type=int, default=0,
                       help="theta samples per torus dimension for a cross-check (0: off)")

    s = sub.add_parser("manifold-converge", parents=[common],
                       help="thin-manifold eigenvalues against the graph limit")
    s.add_argument("--regime", choices=REGIMES)
    s.add_argument("--alpha", type=float)
    s.add_argument("--eps", type=_eps_list, default=(0.2, 0.1, 0.05))
    s.add_argument("--k", type=int, default=4)
    s.add_argument("--h", type=float, default=0.01)
    s.add_argument("--export", help="directory for triplet files of the finest mesh")
    return p


def parse_config(argv: Sequence[str]) -> RunConfig:
    ns = vars(build_parser().parse_args(list(argv)))
    try:
        return RunConfig(**{k: v for k, v in ns.items() if v is not None})
    except ValueError as exc:
        raise CliError(str(exc), EXIT_CONFIG, "ConfigError") from exc


def _diagnose(kind: str, message: str, code: int) -> None:
    sys.stderr.write(json.dumps({"error": kind, "message": message, "exit_code": code},
                                sort_keys=True) + "\n")


def main(argv: Sequence[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = parse_config(argv)
        text, code = run(cfg)
        if cfg.out:
            Path(cfg.out).write_text(text, encoding="utf-8")
        else:
            sys.stdout.write(text)
        if code == EXIT_CERT:
            _diagnose("CertificationError", "some eigenvalues failed the mesh self-convergence check",
                      code)
        return code
    except CliError as exc:
        _diagnose(exc.kind, str(exc), exc.code)
        return exc.code
    except Exception as exc:  # noqa: BLE001 - last-resort mapping to the internal-error code
        _diagnose(type(exc).__name__, str(exc), EXIT_INTERNAL)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
