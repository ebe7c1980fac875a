from typing import Optional, Sequence
from pathlib import Path
import argparse
import logging
import sys

from models import ModelParams, SystemState
from core.config import settings
from core.errors import (
    BracketError, ConfigError, IntegrationBlowupError, ParameterValidationError,
    RecordError, TooFewCyclesError
)
from core.lattice import MAX_SEED, init_kink
from cli.config_loader import PROTOCOLS, RunConfig, load_config
from services.observables import energy_breakdown, net_winding, trapped_flux
from services.protocols import (
    critical_coupling_curve, prescan_h_max, relax_with_settings, virgin_then_cycle
)
from utils.record_io import (
    staged_directory, write_metadata, write_model, write_profile, write_scan_results,
    write_sweep_record
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_CONFIG = 2

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def _seed(value: str) -> int:
    try:
        seed = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {value!r}")
    if not 0 <= seed < MAX_SEED:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return seed


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qmsim",
        description="Charge-qubit quantum metamaterial line: relaxation, field sweeps and coupling scans"
    )
    subcommands = parser.add_subparsers(dest="command", required=True)
    for name in PROTOCOLS + ("validate-config",):
        sub = subcommands.add_parser(name)
        sub.add_argument("--config", required=True, help="TOML run configuration (.cfg)")
        sub.add_argument("--out", help="output directory (overrides [output].directory)")
        sub.add_argument("--format", choices=["csv", "json"], help="single output format (overrides [output].formats)")
        sub.add_argument("--seed", type=_seed, help="RNG seed (overrides [model].rng_seed)")
        sub.add_argument("--quiet", action="store_true", help="warnings only, no summary line")
    return parser


def _summary(state: SystemState, params: ModelParams) -> str:
    energies = energy_breakdown(state, params)
    return f"winding={net_winding(state)} phi={trapped_flux(state):.6f} e_total={energies.e_total:.6f}"


def _run_relax(config: RunConfig, out: Path) -> str:
    section = config.relax
    params = config.model
    initial = None
    if section.initial == "kink":
        initial = init_kink(params, center=section.kink_center, polarity=section.kink_polarity)

    report = relax_with_settings(params, section.h_ext, section.relaxation(), initial_state=initial)
    if "csv" in config.output.formats:
        write_profile(report, params, out / "relax.profile.csv")
    if "json" in config.output.formats:
        write_model(report, out / "relax.json")
    write_metadata(out / "relax", params, section.model_dump())

    summary = _summary(report.final_state, params)
    return summary if report.steady else f"{summary} steady=false"


def _run_sweep(config: RunConfig, out: Path) -> str:
    section = config.sweep
    params = config.model
    h_max = section.h_max
    if h_max is None:
        h_max = prescan_h_max(
            params, rate=section.rate, target_winding=section.target_winding,
            h_cap=section.h_cap, record_stride=section.record_stride
        )
    protocol = section.protocol(h_max)

    record, loops = virgin_then_cycle(params, protocol, match_tol=section.match_tol)
    for format in config.output.formats:
        write_sweep_record(record, format, out / f"sweep.{format}")
    write_model(loops, out / "loops.json")
    write_metadata(out / "sweep", params, protocol.model_dump())

    last = record.rows[-1]
    return (
        f"winding={last.winding} phi={last.phi:.6f} e_total={last.e_total:.6f} "
        f"converged={str(loops.converged).lower()}"
    )


def _run_scan(config: RunConfig, out: Path) -> str:
    section = config.scan
    params = config.model
    results = critical_coupling_curve(
        params, section.h_ext, section.s_lo, section.s_hi, tol=section.tol,
        relax=section.relaxation()
    )
    for format in config.output.formats:
        write_scan_results(results, format, out / f"scan.{format}")
    write_metadata(out / "scan", params, section.model_dump())
    return " ".join(f"s*({result.h_ext:g})={result.s_critical:.4f}" for result in results)


RUNNERS = {
    "relax": _run_relax,
    "sweep": _run_sweep,
    "scan": _run_scan,
}


def run(config: RunConfig, quiet: bool = False) -> int:
    """
    Execute the configured protocol and write its outputs.

    Returns:
        Exit status: 0 success, 1 numerical failure, 2 configuration failure
    """
    name = config.protocol_name
    out = Path(config.output.directory)
    try:
        # Nothing reaches out unless every file of the run was written
        with staged_directory(out) as staging:
            summary = RUNNERS[name](config, staging)
    except ConfigError as e:
        for violation in e.violations:
            print(f"config error: {violation}", file=sys.stderr)
        return EXIT_CONFIG
    except IntegrationBlowupError as e:
        logger.error(f"[{name}] {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (BracketError, TooFewCyclesError) as e:
        logger.error(f"[{name}] {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ParameterValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except RecordError as e:
        logger.error(f"[{name}] {e}", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERICAL

    logger.info(f"[{name}] Outputs in {out}")
    if not quiet:
        print(summary)
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING if args.quiet else getattr(logging, settings.log_level.upper(), logging.INFO)
    logging.basicConfig(level=level, format=LOG_FORMAT)

    try:
        config = load_config(args.config).with_overrides(seed=args.seed, out=args.out, format=args.format)
    except ConfigError as e:
        for violation in e.violations:
            print(f"config error: {violation}", file=sys.stderr)
        if e.line is not None:
            print(f"  at line {e.line}, column {e.column}", file=sys.stderr)
        return EXIT_CONFIG

    if args.command == "validate-config":
        if not args.quiet:
            print(f"ok: {config.protocol_name} protocol, N={config.model.n_sites}")
        return EXIT_OK

    if args.command != config.protocol_name:
        print(
            f"config error: '{args.command}' requested but {args.config} configures '{config.protocol_name}'",
            file=sys.stderr
        )
        return EXIT_CONFIG

    return run(config, quiet=args.quiet)
