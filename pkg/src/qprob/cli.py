"""Command line front end: file I/O, fixture generation and report emission.

Every subcommand loads its inputs, calls one library operation, and emits a
report whose verdicts decide the exit code:

* 0: every verdict passed,
* 2: at least one mathematical verdict failed,
* 3: malformed input (files, flags or tolerance overrides).

Reports come in two formats. ``text`` is line oriented for reading, and
``machine`` is deterministic JSON: rerunning a command with the same seed
produces an identical report except for the wall-clock field. Tolerances are
overridden per run with ``--tol.<name> <value>`` flags, and the environment
variable ``QPROB_SEED`` overrides any ``--seed`` flag.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from types import SimpleNamespace
from typing import Any

import numpy as np

from . import __version__, serialize
from .conditioning import (GAMMA_TOL, SOLVER_TOL, conditional_expectation,
                           qmct_run, tower_check)
from .errors import (DimMismatch, InvalidMatrix, NotNested, ParseError,
                     QprobError, SpaceMismatch)
from .expectation import (CONV_TOL, UW_WINDOW, dct_check,
                          effect_series_identity, expectation,
                          expectation_via_derivative)
from .generate import (FIXTURE_KINDS, dct_fixture, default_space,
                       generate_fixture, martingale_fixture, random_effect_qrv,
                       random_povm, rng_for)
from .linalg import GEOMEAN_TOL, MAX_DIM, max_entry_norm
from .meanzero import MEANZERO_TOL, classify_mean_zero, counterexample_fixtures
from .povm import Povm, induced_measure
from .rv import QuantumRandomVariable
from .spaces import Filtration

EXIT_PASS = 0
EXIT_VERDICT = 2
EXIT_INPUT = 3

INPUT_ERRORS = (ParseError, InvalidMatrix, DimMismatch, SpaceMismatch,
                NotNested, OSError)

TOL_DEFAULTS = {
    "solver": SOLVER_TOL,
    "conv": CONV_TOL,
    "gamma": GAMMA_TOL,
    "meanzero": MEANZERO_TOL,
    "geomean": GEOMEAN_TOL,
}

DCT_DEFAULT_TERMS = 1500
DCT_DEFAULT_TOL = 1e-3


@dataclass
class RunReport:
    """Everything one subcommand produced, ready for emission.

    ``verdicts`` drive the exit code: the run passes when every verdict that
    is not ``None`` is true. ``None`` marks a check that did not apply.
    """

    command: str
    verdicts: dict[str, bool | None] = field(default_factory=dict)
    residuals: dict[str, float] = field(default_factory=dict)
    witnesses: dict[str, Any] = field(default_factory=dict)
    extras: dict[str, Any] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)
    seed: int | None = None
    tolerances: dict[str, float] = field(default_factory=dict)
    wall_clock_s: float = 0.0
    version: str = __version__

    @property
    def passed(self) -> bool:
        return all(v for v in self.verdicts.values() if v is not None)

    def to_obj(self) -> dict:
        return {
            "command": self.command,
            "version": self.version,
            "seed": self.seed,
            "tolerances": {k: float(v) for k, v in self.tolerances.items()},
            "verdicts": dict(self.verdicts),
            "residuals": {k: float(v) for k, v in self.residuals.items()},
            "witnesses": {k: serialize.matrix_to_obj(np.asarray(v))
                          for k, v in self.witnesses.items()},
            "extras": self.extras,
            "notes": list(self.notes),
            "overall": "pass" if self.passed else "fail",
            "wall_clock_s": self.wall_clock_s,
        }

    def render_text(self) -> str:
        lines = [f"command: {self.command}", f"version: {self.version}"]
        if self.seed is not None:
            lines.append(f"seed: {self.seed}")
        for name, value in sorted(self.tolerances.items()):
            lines.append(f"tolerance {name}: {value:.3e}")
        for name, verdict in self.verdicts.items():
            word = "n/a" if verdict is None else ("pass" if verdict else "FAIL")
            lines.append(f"verdict {name}: {word}")
        for name, value in self.residuals.items():
            lines.append(f"residual {name}: {value:.6e}")
        for name, matrix in self.witnesses.items():
            body = np.array2string(np.asarray(matrix), precision=6,
                                   suppress_small=True)
            lines.append(f"witness {name}:")
            lines.extend("  " + ln for ln in body.splitlines())
        for name, value in self.extras.items():
            if isinstance(value, (str, int, float, bool)) or value is None:
                lines.append(f"{name}: {value}")
            elif isinstance(value, (list, tuple)) and len(value) <= 16 and all(
                    isinstance(v, (str, int, float, bool)) for v in value):
                lines.append(f"{name}: {list(value)}")
            elif isinstance(value, dict) and len(value) <= 16 and all(
                    isinstance(v, (str, int, float, bool)) or v is None
                    for v in value.values()):
                lines.append(f"{name}: {value}")
            else:
                lines.append(f"{name}: <{type(value).__name__}, "
                             f"see machine format>")
        for note in self.notes:
            lines.append(f"note: {note}")
        lines.append(f"wall clock: {self.wall_clock_s:.3f} s")
        lines.append(f"overall: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines) + "\n"


def split_tolerance_args(argv: list[str]) -> tuple[dict[str, float], list[str]]:
    """Extract every ``--tol.<name> <value>`` pair from an argument list."""
    tols: dict[str, float] = {}
    rest: list[str] = []
    i = 0
    while i < len(argv):
        arg = argv[i]
        if arg.startswith("--tol."):
            name, sep, raw = arg[len("--tol."):].partition("=")
            if not sep:
                if i + 1 >= len(argv):
                    raise ParseError(f"flag {arg} needs a value")
                raw = argv[i + 1]
                i += 1
            if name not in TOL_DEFAULTS:
                known = ", ".join(sorted(TOL_DEFAULTS))
                raise ParseError(f"unknown tolerance {name!r}; known: {known}")
            try:
                value = float(raw)
            except ValueError:
                raise ParseError(f"tolerance {name!r} value {raw!r} "
                                 "is not a number") from None
            if not value > 0.0:
                raise ParseError(f"tolerance {name!r} must be positive")
            tols[name] = value
        else:
            rest.append(arg)
        i += 1
    return tols, rest


def resolve_seed(flag_value: int | None) -> int | None:
    raw = os.environ.get("QPROB_SEED")
    if raw is None:
        return flag_value
    try:
        return int(raw)
    except ValueError:
        raise ParseError(f"QPROB_SEED={raw!r} is not an integer") from None


def _positive_int(raw: str) -> int:
    value = int(raw)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _check_dim(d: int) -> int:
    if d > MAX_DIM:
        raise ParseError(f"dimension {d} exceeds the supported maximum {MAX_DIM}")
    return d


def _load_povm(path: str) -> Povm:
    return serialize.povm_from_obj(serialize.load_json(path))


def _load_qrv(path: str, nu: Povm) -> QuantumRandomVariable:
    psi = serialize.qrv_from_obj(serialize.load_json(path))
    if psi.space != nu.space:
        raise SpaceMismatch(f"{path}: sample space differs from the measure's")
    if psi.dim != nu.dim:
        raise DimMismatch(f"{path}: dimension {psi.dim} differs from "
                          f"the measure's {nu.dim}")
    return psi


def _load_filtration(path: str, nu: Povm) -> Filtration:
    return serialize.filtration_from_obj(serialize.load_json(path), nu.space)


def _block_label(block: tuple[str, ...]) -> str:
    return "|".join(block)


def _complex_series_to_obj(series: np.ndarray) -> list[list[float]]:
    return [[float(z.real), float(z.imag)] for z in np.asarray(series)]


# ---------------------------------------------------------------------------
# subcommand handlers


def _cmd_validate(args: argparse.Namespace, tols: dict[str, float]) -> RunReport:
    report = RunReport(command="validate")
    try:
        nu = _load_povm(args.input)
    except (ParseError, InvalidMatrix, SpaceMismatch, DimMismatch, OSError):
        raise
    except QprobError as exc:
        report.verdicts["povm_axioms"] = False
        report.notes.append(f"{args.input}: {exc}")
        return report
    report.verdicts["povm_axioms"] = True
    total = nu.mass()
    report.residuals["total_mass_identity_gap"] = float(
        max_entry_norm(total - np.eye(nu.dim)))
    report.witnesses["total_mass"] = total
    report.extras["dim"] = nu.dim
    report.extras["points"] = list(nu.space.points)
    report.extras["is_probability"] = bool(nu.is_probability)
    mu = induced_measure(nu)
    report.extras["induced_weights"] = {x: float(mu.weights[x])
                                       for x in nu.space.points}
    return report


def _cmd_expectation(args: argparse.Namespace,
                     tols: dict[str, float]) -> RunReport:
    tol = tols.get("solver", SOLVER_TOL)
    report = RunReport(command="expectation", tolerances={"solver": tol})
    nu = _load_povm(args.povm)
    if args.qrv is None:
        psi = QuantumRandomVariable.constant(nu.space, np.eye(nu.dim))
        identity_input = True
    else:
        psi = _load_qrv(args.qrv, nu)
        identity_input = all(
            max_entry_norm(psi.value(x) - np.eye(nu.dim)) == 0.0
            for x in nu.space.points)
    value = expectation(psi, nu)
    via = expectation_via_derivative(psi, nu)
    gap = float(max_entry_norm(value - via))
    report.witnesses["expectation"] = value
    report.residuals["dual_route_gap"] = gap
    report.verdicts["dual_route"] = gap < tol
    if identity_input:
        unital_gap = float(max_entry_norm(value - np.eye(nu.dim)))
        report.residuals["identity_gap"] = unital_gap
        report.verdicts["unital"] = unital_gap < tol
    if psi.is_positive:
        low = float(np.linalg.eigvalsh(value)[0])
        report.residuals["min_eigenvalue"] = low
        report.verdicts["positive_output"] = low > -tol
    return report


_FIXTURE1_PATTERN = {"A": True, "B": False, "C": False, "D": False, "E": None}
_FIXTURE2_PATTERN = {"A": True, "B": False, "C": False, "D": True, "E": None}


def _cmd_meanzero(args: argparse.Namespace,
                  tols: dict[str, float]) -> RunReport:
    tol = tols.get("meanzero", MEANZERO_TOL)
    report = RunReport(command="meanzero", tolerances={"meanzero": tol})
    if args.fixtures == "paper":
        fx = counterexample_fixtures()
        rep1 = classify_mean_zero(fx.psi1, fx.nu1, tol=tol)
        rep2 = classify_mean_zero(fx.psi2, fx.nu2, tol=tol)
        report.verdicts["fixture1_classification"] = (
            rep1.verdicts == _FIXTURE1_PATTERN)
        report.verdicts["fixture2_classification"] = (
            rep2.verdicts == _FIXTURE2_PATTERN)
        report.verdicts["implication_graph"] = (
            not rep1.implication_violations()
            and not rep2.implication_violations())
        report.residuals["fixture1_expectation_norm"] = float(
            max_entry_norm(expectation(fx.psi1, fx.nu1)))
        report.residuals["fixture2_expectation_norm"] = float(
            max_entry_norm(expectation(fx.psi2, fx.nu2)))
        for x in fx.nu1.space.points:
            report.witnesses[f"fixture1_star_product_{x}"] = rep1.witnesses["C"][x]
            report.witnesses[f"fixture1_box_product_{x}"] = rep1.witnesses["D"][x]
            report.witnesses[f"fixture2_star_product_{x}"] = rep2.witnesses["C"][x]
            report.witnesses[f"fixture2_box_product_{x}"] = rep2.witnesses["D"][x]
        report.extras["fixture1_statements"] = rep1.verdicts
        report.extras["fixture2_statements"] = rep2.verdicts
        return report
    if args.povm is None or args.qrv is None:
        raise ParseError("meanzero needs --povm and --qrv, "
                         "or --fixtures paper")
    nu = _load_povm(args.povm)
    psi = _load_qrv(args.qrv, nu)
    rep = classify_mean_zero(psi, nu, tol=tol)
    violations = rep.implication_violations()
    report.verdicts["implication_graph"] = not violations
    if psi.is_positive:
        report.verdicts["equivalence"] = rep.all_equivalent
    report.extras["statements"] = rep.verdicts
    if violations:
        report.notes.append("violated edges: " + ", ".join(violations))
    report.residuals["expectation_norm"] = float(
        max_entry_norm(np.asarray(rep.witnesses["A"])))
    return report


def _cmd_condexp(args: argparse.Namespace,
                 tols: dict[str, float]) -> RunReport:
    tol = tols.get("solver", SOLVER_TOL)
    report = RunReport(command="condexp", tolerances={"solver": tol})
    nu = _load_povm(args.povm)
    psi = _load_qrv(args.qrv, nu)
    sigma = serialize.partition_from_obj(
        serialize.load_json(args.input), nu.space)
    solve = conditional_expectation(psi, nu, sigma, solver_tol=tol,
                                    strict=not args.no_strict)
    report.verdicts["defining_property"] = bool(solve.max_residual < tol)
    if psi.is_positive:
        report.verdicts["positive_output"] = not solve.clamped_blocks
    for block in sigma.blocks:
        label = _block_label(block)
        report.residuals[f"block_{label}"] = float(solve.residuals[block])
        report.witnesses[f"block_{label}"] = solve.block_values[block]
    report.extras["clamped_blocks"] = [list(b) for b in solve.clamped_blocks]
    report.extras["beyond_hypothesis"] = bool(solve.beyond_hypothesis)
    return report


def _cmd_tower(args: argparse.Namespace, tols: dict[str, float]) -> RunReport:
    tol = tols.get("conv", CONV_TOL)
    report = RunReport(command="tower", tolerances={"conv": tol})
    nu = _load_povm(args.povm)
    psi = _load_qrv(args.qrv, nu)
    filtration = _load_filtration(args.filtration, nu)
    if filtration.depth < 2:
        raise ParseError("tower needs a filtration with at least two stages")
    worst = 0.0
    for k in range(filtration.depth - 1):
        coarse = filtration.stages[k]
        fine = filtration.stages[k + 1]
        pair = tower_check(psi, nu, coarse, fine, tol=tol,
                           strict=not args.no_strict)
        report.residuals[f"stage_{k}_to_{k + 1}"] = pair.max_deviation
        worst = max(worst, pair.max_deviation)
    report.residuals["max_deviation"] = worst
    report.verdicts["tower_property"] = worst < tol
    return report


def _martingale_inputs(args: argparse.Namespace):
    file_flags = [args.povm, args.qrv, args.filtration]
    if any(f is not None for f in file_flags):
        if any(f is None for f in file_flags):
            raise ParseError("martingale run needs --povm, --qrv and "
                             "--filtration together, or none of them")
        nu = _load_povm(args.povm)
        psi = _load_qrv(args.qrv, nu)
        filtration = _load_filtration(args.filtration, nu)
        return psi, nu, filtration, None
    seed = resolve_seed(args.seed)
    if seed is None:
        seed = 0
    _check_dim(args.d)
    psi, nu, filtration = martingale_fixture(
        seed, args.d, args.atoms, args.depth, deficient=args.deficient)
    return psi, nu, filtration, seed


def _cmd_martingale_run(args: argparse.Namespace,
                        tols: dict[str, float]) -> RunReport:
    conv_tol = tols.get("conv", CONV_TOL)
    gamma_tol = tols.get("gamma", GAMMA_TOL)
    report = RunReport(command="martingale run",
                       tolerances={"conv": conv_tol, "gamma": gamma_tol})
    psi, nu, filtration, seed = _martingale_inputs(args)
    report.seed = seed
    run = qmct_run(psi, nu, filtration, tol=conv_tol, gamma_tol=gamma_tol,
                   strict=not args.no_strict)
    clamped = bool(run.clamped)
    report.verdicts["martingale_axioms"] = (
        None if clamped else run.martingale_verdict.passed)
    report.verdicts["limit_measurable"] = run.limit_measurable
    report.verdicts["gamma_limit"] = run.gamma_verdict
    report.verdicts["sigma_membership"] = run.sigma_verdict
    report.verdicts["gamma_vs_input"] = run.gamma_vs_target
    if clamped:
        report.notes.append(
            "aggregate solves left the positive cone on "
            f"{len(run.clamped)} block(s); martingale axioms not judged")
    report.residuals["final_stage_gap"] = float(run.stage_gaps[-1])
    report.residuals["max_solver_residual"] = float(
        max(run.solver_residuals))
    for x in nu.space.points:
        report.witnesses[f"limit_{x}"] = run.limit.value(x)
    report.extras["stage_gaps"] = [float(g) for g in run.stage_gaps]
    report.extras["solver_residuals"] = [float(r) for r in run.solver_residuals]
    report.extras["clamped_blocks"] = [list(b) for b in run.clamped]
    report.extras["depth"] = filtration.depth
    report.extras["terminal_blocks"] = [list(b)
                                        for b in run.terminal_sigma.blocks]
    report.extras["stages"] = [serialize.qrv_to_obj(phi) for phi in run.stages]
    report.extras["probe_traces"] = {
        label: {x: _complex_series_to_obj(series)
                for x, series in traces.items()}
        for label, traces in run.probe_traces.items()}
    report.extras["conditioning_residuals"] = [
        float(r) for r in run.martingale_verdict.conditioning_residuals]
    if args.plot_dir is not None:
        from . import plotting
        paths = plotting.martingale_figures(run, args.plot_dir)
        report.extras["figures"] = [str(p) for p in paths]
    return report


def _cmd_dct(args: argparse.Namespace, tols: dict[str, float]) -> RunReport:
    tol = tols.get("conv", DCT_DEFAULT_TOL)
    report = RunReport(command="dct", tolerances={"conv": tol})
    if args.povm is not None and args.input is not None:
        nu = _load_povm(args.povm)
        seq = serialize.sequence_from_obj(serialize.load_json(args.input))
        for psi in seq:
            if psi.space != nu.space or psi.dim != nu.dim:
                raise SpaceMismatch(
                    f"{args.input}: sequence terms do not match the measure")
        indices = list(range(1, len(seq) + 1))
        seed = None
    elif args.povm is None and args.input is None:
        seed = resolve_seed(args.seed)
        if seed is None:
            seed = 0
        _check_dim(args.d)
        terms = args.depth if args.depth is not None else DCT_DEFAULT_TERMS
        if terms < UW_WINDOW:
            raise ParseError(f"dct needs at least {UW_WINDOW} terms")
        indices = list(range(1, terms + 1))
        seq, _, _, nu = dct_fixture(seed, args.d, args.atoms, indices)
    else:
        raise ParseError("dct needs --povm with --input, or neither")
    report.seed = seed
    rep = dct_check(seq, nu, tol=tol)
    report.verdicts["expectations_converge"] = rep.converged
    report.residuals["final_residual"] = float(rep.final_residual)
    report.extras["decay_exponent"] = float(rep.decay_exponent)
    report.extras["terms"] = len(indices)
    report.extras["envelope"] = {x: float(v) for x, v in rep.envelope.items()}
    history = np.asarray(rep.residual_history)
    if history.shape[1] > 128:
        keep = np.unique(np.geomspace(1, history.shape[1],
                                      128).astype(int) - 1)
    else:
        keep = np.arange(history.shape[1])
    report.extras["history_indices"] = [int(indices[k]) for k in keep]
    report.extras["residual_history"] = [
        [float(v) for v in history[p, keep]]
        for p in range(history.shape[0])]
    for x in nu.space.points:
        report.witnesses[f"limit_{x}"] = rep.limit.value(x)
    if args.plot_dir is not None:
        from . import plotting
        paths = plotting.dct_figures(rep, indices, args.plot_dir)
        report.extras["figures"] = [str(p) for p in paths]
    return report


def _cmd_series(args: argparse.Namespace, tols: dict[str, float]) -> RunReport:
    tol = tols.get("conv", CONV_TOL)
    report = RunReport(command="series", tolerances={"conv": tol})
    if args.povm is not None and args.qrv is not None:
        nu = _load_povm(args.povm)
        psi = _load_qrv(args.qrv, nu)
        seed = None
    elif args.povm is None and args.qrv is None:
        seed = resolve_seed(args.seed)
        if seed is None:
            seed = 0
        _check_dim(args.d)
        space = default_space(args.atoms)
        nu = random_povm(rng_for(seed, "povm"), space, args.d)
        psi = random_effect_qrv(rng_for(seed, "effect_qrv"), space, args.d)
    else:
        raise ParseError("series needs --povm with --qrv, or neither")
    report.seed = seed
    verdict = effect_series_identity(psi, nu, n_max=args.depth, tol=tol)
    report.verdicts["series_sums_to_identity"] = verdict.passed
    report.residuals["identity_gap"] = float(verdict.residual)
    report.extras["terms_used"] = int(verdict.n_used)
    report.extras["min_eigenvalue"] = float(verdict.lambda_min)
    report.witnesses["series_total"] = verdict.total
    return report


def _cmd_generate(args: argparse.Namespace,
                  tols: dict[str, float]) -> RunReport:
    report = RunReport(command="generate")
    seed = resolve_seed(args.seed)
    if seed is None:
        seed = 0
    report.seed = seed
    _check_dim(args.d)
    paths: list[str] = []
    for k in range(args.count):
        paths.extend(generate_fixture(args.kind, seed + k, args.d, args.atoms,
                                      args.output, depth=args.depth))
    report.extras["paths"] = paths
    space = default_space(args.atoms)
    for path in paths:
        obj = serialize.load_json(path)
        if args.kind == "povm":
            serialize.povm_from_obj(obj)
        elif args.kind.endswith("_qrv"):
            serialize.qrv_from_obj(obj)
        elif args.kind == "refining_filtration":
            serialize.filtration_from_obj(obj, space)
        elif args.kind == "partition":
            serialize.partition_from_obj(obj, space)
        elif args.kind == "density":
            serialize.matrix_from_obj(obj)
    report.verdicts["self_check"] = True
    report.extras["kind"] = args.kind
    return report


def _cmd_plot(args: argparse.Namespace, tols: dict[str, float]) -> RunReport:
    report = RunReport(command="plot")
    obj = serialize.load_json(args.input)
    if not isinstance(obj, dict) or "command" not in obj:
        raise ParseError(f"{args.input}: not a machine-format report")
    source = obj.get("command")
    extras = obj.get("extras", {})
    from . import plotting
    if source == "martingale run":
        needed = ("probe_traces", "stage_gaps", "solver_residuals", "stages")
        if any(k not in extras for k in needed):
            raise ParseError(f"{args.input}: report lacks plotting data")
        traces = {
            label: {x: np.array([complex(re, im) for re, im in series])
                    for x, series in points.items()}
            for label, points in extras["probe_traces"].items()}
        run = SimpleNamespace(
            probe_traces=traces,
            stages=[None] * len(extras["stages"]),
            stage_gaps=np.asarray(extras["stage_gaps"], dtype=float),
            solver_residuals=np.asarray(extras["solver_residuals"],
                                        dtype=float),
            tol=float(obj.get("tolerances", {}).get("conv", CONV_TOL)))
        paths = plotting.martingale_figures(run, args.output)
    elif source == "dct":
        needed = ("residual_history", "history_indices")
        if any(k not in extras for k in needed):
            raise ParseError(f"{args.input}: report lacks plotting data")
        rep = SimpleNamespace(
            residual_history=np.asarray(extras["residual_history"],
                                        dtype=float),
            decay_exponent=float(extras.get("decay_exponent", float("nan"))),
            tol=float(obj.get("tolerances", {}).get("conv", DCT_DEFAULT_TOL)))
        paths = plotting.dct_figures(rep, extras["history_indices"],
                                     args.output)
    else:
        raise ParseError(f"{args.input}: no renderer for "
                         f"{source!r} reports")
    report.verdicts["rendered"] = True
    report.extras["figures"] = [str(p) for p in paths]
    return report


# ---------------------------------------------------------------------------
# parser assembly and dispatch


class _Parser(argparse.ArgumentParser):
    """Argument parser whose usage errors use the input-error exit code."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _add_common(parser: argparse.ArgumentParser, *, seed: bool = False,
                dims: bool = False, plot: bool = False) -> None:
    parser.add_argument("--format", choices=("text", "machine"),
                        default="text", help="report rendering")
    parser.add_argument("--output", default=None,
                        help="write the report to this file instead of stdout")
    if seed:
        parser.add_argument("--seed", type=int, default=None,
                            help="fixture seed (QPROB_SEED overrides)")
    if dims:
        parser.add_argument("--d", type=_positive_int, default=2,
                            help="Hilbert space dimension")
        parser.add_argument("--atoms", type=_positive_int, default=4,
                            help="number of sample points")
    if plot:
        parser.add_argument("--plot-dir", default=None,
                            help="also render figures into this directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qprob",
                     description="quantum probability experiment runner")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    p = sub.add_parser("validate", help="check the measure axioms on a file")
    p.add_argument("--input", required=True, help="POVM file")
    _add_common(p)
    p.set_defaults(handler=_cmd_validate)

    p = sub.add_parser("expectation",
                       help="quantum expectation through both routes")
    p.add_argument("--povm", required=True)
    p.add_argument("--qrv", default=None,
                   help="variable file; defaults to the constant identity")
    _add_common(p)
    p.set_defaults(handler=_cmd_expectation)

    p = sub.add_parser("meanzero",
                       help="classify the five vanishing-mean statements")
    p.add_argument("--povm", default=None)
    p.add_argument("--qrv", default=None)
    p.add_argument("--fixtures", choices=("paper",), default=None,
                   help="run the built-in counterexample fixtures")
    _add_common(p)
    p.set_defaults(handler=_cmd_meanzero)

    p = sub.add_parser("condexp",
                       help="conditional expectation on a partition")
    p.add_argument("--povm", required=True)
    p.add_argument("--qrv", required=True)
    p.add_argument("--input", required=True, help="partition file")
    p.add_argument("--no-strict", action="store_true",
                   help="allow conditioning a zero-expectation variable")
    _add_common(p)
    p.set_defaults(handler=_cmd_condexp)

    p = sub.add_parser("tower",
                       help="iterated conditioning along a filtration")
    p.add_argument("--povm", required=True)
    p.add_argument("--qrv", required=True)
    p.add_argument("--filtration", required=True)
    p.add_argument("--no-strict", action="store_true")
    _add_common(p)
    p.set_defaults(handler=_cmd_tower)

    p = sub.add_parser("martingale", help="martingale experiments")
    msub = p.add_subparsers(dest="subcommand", required=True,
                            parser_class=_Parser)
    p = msub.add_parser("run", help="run one convergence experiment")
    p.add_argument("--povm", default=None)
    p.add_argument("--qrv", default=None)
    p.add_argument("--filtration", default=None)
    p.add_argument("--depth", type=_positive_int, default=3,
                   help="filtration depth for generated fixtures")
    p.add_argument("--deficient", action="store_true",
                   help="generate rank-deficient effects")
    p.add_argument("--no-strict", action="store_true")
    _add_common(p, seed=True, dims=True, plot=True)
    p.set_defaults(handler=_cmd_martingale_run)

    p = sub.add_parser("dct",
                       help="dominated convergence along a sequence")
    p.add_argument("--povm", default=None)
    p.add_argument("--input", default=None, help="sequence file")
    p.add_argument("--depth", type=_positive_int, default=None,
                   help=f"generated term count "
                        f"(default {DCT_DEFAULT_TERMS})")
    _add_common(p, seed=True, dims=True, plot=True)
    p.set_defaults(handler=_cmd_dct)

    p = sub.add_parser("series",
                       help="effect series summing to the identity")
    p.add_argument("--povm", default=None)
    p.add_argument("--qrv", default=None, help="effect-valued variable file")
    p.add_argument("--depth", type=_positive_int, default=None,
                   help="term count override (default: a-priori bound)")
    _add_common(p, seed=True, dims=True)
    p.set_defaults(handler=_cmd_series)

    p = sub.add_parser("generate", help="write seeded fixture files")
    p.add_argument("kind", choices=tuple(FIXTURE_KINDS))
    p.add_argument("--count", type=_positive_int, default=1,
                   help="number of fixtures (consecutive seeds)")
    p.add_argument("--depth", type=_positive_int, default=3,
                   help="stages for filtration fixtures")
    p.add_argument("--output", default=".", help="output directory")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--d", type=_positive_int, default=2)
    p.add_argument("--atoms", type=_positive_int, default=4)
    p.add_argument("--format", choices=("text", "machine"), default="text")
    p.set_defaults(handler=_cmd_generate, generate_output=True)

    p = sub.add_parser("plot", help="render figures from a machine report")
    p.add_argument("--input", required=True, help="machine-format report")
    p.add_argument("--output", default=".", help="figure directory")
    p.add_argument("--format", choices=("text", "machine"), default="text")
    p.set_defaults(handler=_cmd_plot, generate_output=True)

    return parser


def _write_text_atomic(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit(report: RunReport, args: argparse.Namespace) -> None:
    to_file = getattr(args, "output", None)
    if getattr(args, "generate_output", False):
        to_file = None
    if args.format == "machine":
        if to_file is not None:
            serialize.dump_json(to_file, report.to_obj())
            print(f"report written to {to_file}")
            print(f"overall: {'PASS' if report.passed else 'FAIL'}")
        else:
            print(json.dumps(report.to_obj(), sort_keys=True, indent=2))
    else:
        text = report.render_text()
        if to_file is not None:
            _write_text_atomic(to_file, text)
            print(f"report written to {to_file}")
            print(f"overall: {'PASS' if report.passed else 'FAIL'}")
        else:
            sys.stdout.write(text)


def main(argv: list[str] | None = None) -> int:
    raw = list(sys.argv[1:] if argv is None else argv)
    try:
        tols, rest = split_tolerance_args(raw)
    except ParseError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    parser = build_parser()
    args = parser.parse_args(rest)

    start = time.perf_counter()
    try:
        report = args.handler(args, tols)
    except INPUT_ERRORS as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except QprobError as exc:
        print(f"verdict failure: {exc}", file=sys.stderr)
        return EXIT_VERDICT
    report.wall_clock_s = time.perf_counter() - start
    emit(report, args)
    return EXIT_PASS if report.passed else EXIT_VERDICT


if __name__ == "__main__":
    sys.exit(main())
