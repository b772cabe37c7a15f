"""Command-line front end.

Every command takes a scenario (bundled name or YAML path), writes one
CSV per observable named ``<scenario>_<command>_<freq>.csv`` into the
output directory and prints a short summary. Exit status is 0 on
success, 1 on usage, configuration or I/O errors and 2 when a
regression check fails.
"""

from __future__ import annotations

import argparse
import os
import sys
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import experiments as ex
from .interferometry import (
    PartialRecoveryWarning, compare_modes, convergence_study, direct_modes, fringe_sweep, extract_fringe,
    measure_H, recover_modes,
)
from .io import Table, h_matrix_table, mode_table, write_csv
from .linalg import FLOAT64, Backend, LinAlgError
from .model import ConfigError, ghz_to_omega

OUTPUT_ENV = "EAISIM_OUTPUT_DIR"
COMMANDS = ("spectrum", "scan", "fringe", "visibility", "recover", "converge", "regress", "list-scenarios")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass(frozen=True)
class RunConfig:
    """Validated command line, with paths resolved."""

    command: str
    scenario: str | None
    out_dir: Path
    freq_ghz: float | None
    freqs: tuple[float, float, float] | None
    probes: int | None
    green: str | None
    pinv_tol: float
    phase_steps: int
    noise_snr: float | None
    seed: int | None
    threads: int
    precision_digits: int | None
    pair: tuple[int, int]
    max_probes: int | None
    run_all: bool


def _positive_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not np.isfinite(v) or v <= 0:
        raise argparse.ArgumentTypeError(f"must be positive: {text!r}")
    return v


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1: {text!r}")
    return v


def _freq_range(text: str) -> tuple[float, float, float]:
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected start:stop:step in GHz")
    a, b, s = (_positive_float(p) for p in parts)
    if b < a:
        raise argparse.ArgumentTypeError("stop must not be below start")
    return a, b, s


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--scenario", help="bundled scenario name or path to a YAML file")
    common.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or the current directory)")
    common.add_argument("--freq", type=_positive_float, help="analysis frequency in GHz")
    common.add_argument("--freqs", type=_freq_range, help="spectrum grid start:stop:step in GHz")
    common.add_argument("--probes", type=_positive_int, help="number of probes taken from the probe set")
    common.add_argument("--green", choices=["full", "near", "intermediate", "far"], help="probe dyadic terms")
    common.add_argument("--pinv-tol", type=_positive_float, default=1e-10,
                        help="relative singular-value cutoff for the pseudo-inverse")
    common.add_argument("--phase-steps", type=_positive_int, default=16, help="phase samples per fringe")
    common.add_argument("--noise-snr", type=_positive_float, help="add Gaussian noise to fringe samples")
    common.add_argument("--seed", type=int, help="random seed for noise")
    common.add_argument("--threads", type=_positive_int, default=1, help="worker threads for sweeps")
    common.add_argument("--precision-digits", type=int,
                        help="decimal digits for recovery; 0 forces float64")
    common.add_argument("--pair", type=int, nargs=2, default=(0, 1), metavar=("A", "B"),
                        help="probe indices for the fringe command")
    common.add_argument("--max-probes", type=_positive_int, help="largest probe count for converge")
    common.add_argument("--all", action="store_true", help="regress every bundled scenario")

    parser = _Parser(prog="eaisim", description="Energy absorption interferometry on coupled dipoles.")
    sub = parser.add_subparsers(dest="command", metavar="command")
    helps = {
        "spectrum": "absorbed power against frequency for the scenario source",
        "scan": "single-probe absorbed power along the scan path",
        "fringe": "two-source fringe for one probe pair",
        "visibility": "fringe visibility along the scan path against its reference",
        "recover": "measure H from fringes and recover the absorption modes",
        "converge": "recovery error as probes are added",
        "regress": "check the scenario against its expected observables",
        "list-scenarios": "list bundled scenarios",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def parse_args(argv: Sequence[str] | None) -> RunConfig:
    args = build_parser().parse_args(argv)
    if args.command is None:
        raise UsageError("a command is required; choose from " + ", ".join(COMMANDS))
    needs_scenario = args.command not in ("list-scenarios",) and not (args.command == "regress" and args.all)
    if needs_scenario and not args.scenario:
        raise UsageError(f"{args.command} needs --scenario")
    if args.phase_steps < 4:
        raise UsageError("--phase-steps must be at least 4")
    if args.precision_digits is not None and args.precision_digits != 0 and args.precision_digits < 16:
        raise UsageError("--precision-digits must be 0 or at least 16")
    if args.noise_snr is not None and args.seed is None:
        warnings.warn("noise requested without --seed; output is not reproducible", stacklevel=2)
    out = Path(args.out or os.environ.get(OUTPUT_ENV) or ".").resolve()
    scenario = args.scenario
    if scenario and Path(scenario).suffix:
        scenario = str(Path(scenario).resolve())
    return RunConfig(args.command, scenario, out, args.freq, args.freqs, args.probes, args.green, args.pinv_tol,
                     args.phase_steps, args.noise_snr, args.seed, args.threads, args.precision_digits,
                     tuple(args.pair), args.max_probes, args.all)


def _freq_label(f: float) -> str:
    return format(f, "g")


def _backend(cfg: RunConfig, sc: ex.Scenario) -> Backend:
    digits = sc.precision_digits if cfg.precision_digits is None else cfg.precision_digits
    return Backend(digits) if digits else FLOAT64


def _load(cfg: RunConfig) -> ex.Scenario:
    overrides = {}
    if cfg.freqs is not None:
        a, b, s = cfg.freqs
        overrides["frequencies"] = {"start": a, "stop": b, "step": s}
    return ex.load_scenario(cfg.scenario, overrides or None)


def _write(cfg: RunConfig, sc: ex.Scenario, command: str, label: str, table: Table, report: list[str]) -> Path:
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    path = write_csv(table, cfg.out_dir / f"{sc.name}_{command}_{label}.csv")
    report.append(f"wrote {path}")
    return path


def _probes(cfg: RunConfig, sc: ex.Scenario):
    if sc.probes is None:
        raise ConfigError(f"scenario {sc.name!r} defines no probe set", "probes")
    return sc.probes.build(cfg.probes, cfg.green)


def _scan_path(cfg: RunConfig, sc: ex.Scenario):
    if sc.scan is None:
        raise ConfigError(f"scenario {sc.name!r} defines no scan path", "scan")
    return sc.scan.build(None, cfg.green)


def cmd_spectrum(cfg, sc, report):
    if sc.source is None:
        raise ConfigError(f"scenario {sc.name!r} defines no source", "source")
    table = ex.spectrum_sweep(sc.system, sc.source, sc.freqs_ghz, sc.coupling, cfg.threads)
    label = f"{_freq_label(sc.freqs_ghz[0])}-{_freq_label(sc.freqs_ghz[-1])}"
    _write(cfg, sc, "spectrum", label, Table.from_array(["f_ghz", "power"], table), report)
    for p in ex.find_peaks(table, 1e-3):
        width = "n/a" if p.fwhm_ghz is None else f"{p.fwhm_ghz:.2f}"
        report.append(f"peak {p.f_ghz:8.2f} GHz  relative height {p.height / table[:, 1].max():.4f}  FWHM {width}")
    return 0


def cmd_scan(cfg, sc, report):
    f = cfg.freq_ghz or sc.analysis_ghz
    table = ex.line_scan(sc.system, _scan_path(cfg, sc), f, sc.coupling)
    _write(cfg, sc, "scan", _freq_label(f), Table.from_array(["x_mm", "y_mm", "z_mm", "power"], table), report)
    i = int(np.argmax(table[:, 3]))
    report.append(f"maximum power at ({table[i, 0]:.3f}, {table[i, 1]:.3f}, {table[i, 2]:.3f}) mm")
    return 0


def cmd_fringe(cfg, sc, report):
    f = cfg.freq_ghz or sc.analysis_ghz
    probes = _probes(cfg, sc)
    a, b = cfg.pair
    if not (0 <= a < len(probes) and 0 <= b < len(probes)):
        raise ConfigError(f"--pair indices must be below {len(probes)}", "pair")
    rng = np.random.default_rng(cfg.seed)
    sweep = fringe_sweep(sc.system, ghz_to_omega(f), sc.coupling, probes[a], probes[b], cfg.phase_steps,
                         cfg.noise_snr, rng)
    rows = [[np.degrees(phi), w] for phi, w in sweep]
    _write(cfg, sc, "fringe", _freq_label(f), Table(["dphi_deg", "power"], rows), report)
    dc, h = extract_fringe(sweep)
    report.append(f"H_aa + H_bb = {dc:.10g}; H_ab = {abs(h):.10g} at {np.degrees(np.angle(h)):.4f} deg")
    return 0


def cmd_visibility(cfg, sc, report):
    f = cfg.freq_ghz or sc.analysis_ghz
    table = ex.visibility_scan(sc.system, _scan_path(cfg, sc), sc.reference_probe(), f, sc.coupling)
    cols = ["x_mm", "y_mm", "z_mm", "abs_gamma", "arg_gamma_deg"]
    _write(cfg, sc, "visibility", _freq_label(f), Table.from_array(cols, table), report)
    report.append(f"|gamma| ranges from {table[:, 3].min():.4f} to {table[:, 3].max():.4f}")
    return 0


def _recover(cfg, sc, report, f):
    backend = _backend(cfg, sc)
    omega = ghz_to_omega(f)
    probes = _probes(cfg, sc)
    rng = np.random.default_rng(cfg.seed)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", PartialRecoveryWarning)
        H = measure_H(sc.system, omega, probes, sc.coupling, cfg.phase_steps, cfg.noise_snr, rng, backend)
        rec = recover_modes(H, probes, sc.system, omega, sc.coupling, cfg.pinv_tol)
    for w in caught:
        if issubclass(w.category, PartialRecoveryWarning):
            report.append(f"warning: partial recovery: {w.message}")
    ref = direct_modes(sc.system, omega, sc.coupling, backend=backend)
    cmp = compare_modes(ref, rec)
    report.append(f"{len(probes)} probes at {_freq_label(f)} GHz, rank {rec.rank}, "
                  f"max principal angle {cmp.max_angle:.3g} rad, eigenvalue error {cmp.eigenvalue_error:.3g}")
    return H, rec, cmp


def cmd_recover(cfg, sc, report):
    f = cfg.freq_ghz or sc.analysis_ghz
    H, rec, _ = _recover(cfg, sc, report, f)
    res = ex.mode_resonances(sc.system, rec, sc.freqs_ghz, sc.coupling, cfg.threads)
    _write(cfg, sc, "recover", _freq_label(f), h_matrix_table(H, rec, res), report)
    _write(cfg, sc, "modes", _freq_label(f), mode_table(rec), report)
    rel = rec.eigenvalues / rec.eigenvalues[0]
    report.append("relative eigenvalues " + " ".join(f"{v:.4g}" for v in rel))
    report.append("mode resonances GHz  " + " ".join(f"{v:.1f}" for v in res))
    return 0


def cmd_converge(cfg, sc, report):
    f = cfg.freq_ghz or sc.analysis_ghz
    if sc.probes is None:
        raise ConfigError(f"scenario {sc.name!r} defines no probe set", "probes")
    max_probes = cfg.max_probes or (cfg.probes or sc.probes.count) + 3
    gen = (lambda S: sc.probes.build(S, cfg.green)) if sc.probes.fixed_span else sc.probes.build(max_probes,
                                                                                                 cfg.green)
    study = convergence_study(sc.system, ghz_to_omega(f), gen, max_probes, sc.coupling, cfg.pinv_tol,
                              backend=_backend(cfg, sc))
    _write(cfg, sc, "converge", _freq_label(f), Table(["probes", "max_principal_angle_rad"],
                                                      [list(r) for r in study]), report)
    for S, err in study:
        report.append(f"S = {S:3d}  angle {err:.3g}")
    return 0


def _regress_one(cfg, name, report) -> int:
    sc = ex.load_scenario(name) if cfg.freqs is None else _load(cfg)
    result = ex.run_regression(sc, cfg.threads, None if cfg.precision_digits is None else _backend(cfg, sc))
    report.extend(result.lines())
    if sc.probes is not None:
        f = sc.analysis_ghz
        H, rec, _ = _recover(cfg, sc, report, f)
        res = ex.mode_resonances(sc.system, rec, sc.freqs_ghz, sc.coupling, cfg.threads)
        _write(cfg, sc, "regress", _freq_label(f), h_matrix_table(H, rec, res), report)
    return 0 if result.passed else 2


def cmd_regress(cfg, sc, report):
    names = ex.list_scenarios() if cfg.run_all else [cfg.scenario]
    codes = [_regress_one(cfg, n, report) for n in names]
    return max(codes) if codes else 0


COMMAND_FUNCS = {
    "spectrum": cmd_spectrum,
    "scan": cmd_scan,
    "fringe": cmd_fringe,
    "visibility": cmd_visibility,
    "recover": cmd_recover,
    "converge": cmd_converge,
    "regress": cmd_regress,
}


def main(argv: Sequence[str] | None = None) -> int:
    report: list[str] = []
    try:
        cfg = parse_args(argv)
        if cfg.command == "list-scenarios":
            for name in ex.list_scenarios():
                sc = ex.load_scenario(name)
                print(f"{name:22s} {len(sc.system):3d} dipoles  {sc.description.split('. ')[0].rstrip('.')}")
            return 0
        sc = None if cfg.command == "regress" else _load(cfg)
        code = COMMAND_FUNCS[cfg.command](cfg, sc, report)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 1
    except LinAlgError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 1
    print("\n".join(report))
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
