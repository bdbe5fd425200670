#!/usr/bin/env python3
"""
netlqg experiment runner

Runs bound curves, AWGN / rate / uncertain-A sweeps and Lloyd-Max designs,
writing CSV tables with a JSON run manifest next to them.

Usage:
    netlqg preset fig3
    netlqg rate-sweep --preset fig3 --trials 20 --out fig3.csv
    netlqg bound --grid 1.1,1.5,2,3
"""

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, TextIO

from dotenv import load_dotenv

import bounds
import channel
import riccati
import sim
from model import ARTIFACT_VERSION, ChannelKind, ExperimentConfig, NetLQGError, format_number, with_overrides
from presets import BOUND_RATE_GRID, DEFAULT_FOR_COMMAND, PRESETS, get_preset, preset_names
from validator import U64_MAX, InvalidConfig, load_document, validate, validator

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_ALL_DIVERGED = 2

CSV_HEADER = [
    "control_var",
    "info_bits",
    "sim_cost_mean",
    "sim_cost_stderr",
    "computed_cost",
    "bound_cost",
    "diverged_fraction",
]


@dataclass
class RunManifest:
    config_echo: Dict[str, Any]
    artifact_version: str
    master_seed: int
    timestamp: str
    warnings: List[str] = field(default_factory=list)
    command: str = ""
    grid: List[float] = field(default_factory=list)
    notes: List[str] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


class UsageError(Exception):
    pass


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


class _WarningCollector(logging.Handler):
    """Keeps WARNING+ messages emitted during a run for the manifest"""

    def __init__(self):
        super().__init__(level=logging.WARNING)
        self.messages: List[str] = []

    def emit(self, record: logging.LogRecord) -> None:
        self.messages.append(record.getMessage())

    def unique(self) -> List[str]:
        return list(dict.fromkeys(self.messages))


# Argument types

def _grid(text: str) -> List[float]:
    try:
        values = [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma separated list of numbers, got '{text}'")
    if not values:
        raise argparse.ArgumentTypeError("grid is empty")
    return values


def _u64(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got '{text}'")
    if not 0 <= value <= U64_MAX:
        raise argparse.ArgumentTypeError(f"seed must fit in an unsigned 64-bit integer, got {value}")
    return value


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got '{text}'")
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    output = _ArgumentParser(add_help=False)
    output.add_argument("--out", type=Path, help="Output file (default: standard output)")
    output.add_argument("--verbose", "-v", action="store_true", help="Enable verbose logging")

    experiment = _ArgumentParser(add_help=False)
    experiment.add_argument("--config", type=Path, help="Config JSON or a previous run manifest")
    experiment.add_argument("--preset", help=f"Named config ({', '.join(preset_names())})")
    experiment.add_argument("--seed", type=_u64, help="Master seed (env NETLQG_SEED)")
    experiment.add_argument("--trials", type=_positive_int, help="Monte Carlo trials per grid point")
    experiment.add_argument("--horizon", type=_positive_int, help="Steps per trial")
    experiment.add_argument("--grid", type=_grid, help="Comma separated sweep values")
    experiment.add_argument("--workers", type=_positive_int, help="Worker processes (env NETLQG_WORKERS)")

    parser = _ArgumentParser(prog="netlqg", description="LQG control over AWGN and rate-limited links")
    commands = parser.add_subparsers(dest="command", required=True)

    bound = commands.add_parser("bound", parents=[experiment, output],
                                help="Cost lower bound over a rate (or SNR) grid")
    bound.add_argument("--snr", action="store_true", help="Interpret the grid as SNR values")
    commands.add_parser("awgn-sweep", parents=[experiment, output], help="Simulate over an SNR grid")
    commands.add_parser("rate-sweep", parents=[experiment, output],
                        help="Simulate over quantizer step sizes (or Lloyd-Max level counts)")
    commands.add_parser("uncertain-a-sweep", parents=[experiment, output],
                        help="Rate sweep with a random plant coefficient")

    design = commands.add_parser("quantizer-design", parents=[output], help="Lloyd-Max codebook from a sample file")
    design.add_argument("--samples", type=Path, required=True, help="File of whitespace/comma separated reals")
    design.add_argument("--levels", type=_positive_int, default=16, help="Number of levels (default: 16)")
    design.add_argument("--tol", type=float, default=1e-8, help="Stop when no level moves more than this")
    design.add_argument("--max-iter", type=_positive_int, default=10_000)

    preset = commands.add_parser("preset", parents=[output], help="Print a named config as JSON")
    preset.add_argument("name", choices=preset_names())
    return parser


def configure_logging(verbose: bool) -> None:
    level_name = os.environ.get("NETLQG_LOG_LEVEL", "INFO").upper()
    level = logging.DEBUG if verbose else getattr(logging, level_name, logging.INFO)
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr)
    logging.getLogger().setLevel(level)


# Output

def write_csv(records: Sequence[sim.SweepRecord], manifest: Optional[RunManifest],
              path: Optional[Path]) -> None:
    """CSV table at path plus <path>.manifest.json; to stdout (no manifest) when path is None"""
    if not records:
        raise ValueError("no records to write")

    def _write(handle: TextIO) -> None:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for record in records:
            writer.writerow([format_number(getattr(record, name)) for name in CSV_HEADER])

    if path is None:
        _write(sys.stdout)
        return
    with open(path, "w", newline="", encoding="utf-8") as handle:
        _write(handle)
    if manifest is not None:
        manifest_path = Path(f"{path}.manifest.json")
        manifest_path.write_text(manifest.to_json() + "\n", encoding="utf-8")
        logger.info(f"Wrote {len(records)} rows to {path} (manifest {manifest_path})")


def _write_text(text: str, path: Optional[Path]) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


# Commands

@dataclass
class _Resolved:
    cfg: ExperimentConfig
    document_grid: Optional[List[float]]
    preset_grid: Optional[List[float]]
    source: str


def _resolve(args: argparse.Namespace) -> _Resolved:
    document_grid = preset_grid = None
    if args.config is not None:
        document = load_document(args.config)
        cfg = validator.parse(document)
        if isinstance(document, dict) and "grid" in document:
            document_grid = [float(v) for v in document["grid"]]
        source = str(args.config)
    else:
        name = args.preset or DEFAULT_FOR_COMMAND[args.command]
        chosen = get_preset(name)
        cfg = chosen.config
        preset_grid = list(chosen.grid)
        source = f"preset {name}"

    seed = args.seed
    if seed is None and os.environ.get("NETLQG_SEED"):
        try:
            seed = _u64(os.environ["NETLQG_SEED"])
        except argparse.ArgumentTypeError as e:
            raise UsageError(f"NETLQG_SEED: {e}")
    cfg = validate(with_overrides(cfg, trials=args.trials, horizon=args.horizon, seed=seed))
    logger.info(f"Config from {source}, master_seed={cfg.master_seed}, T={cfg.horizon}, trials={cfg.trials}")
    return _Resolved(cfg=cfg, document_grid=document_grid, preset_grid=preset_grid, source=source)


def _workers(args: argparse.Namespace) -> int:
    if args.workers is not None:
        return args.workers
    try:
        return max(1, int(os.environ.get("NETLQG_WORKERS", "1")))
    except ValueError:
        raise UsageError(f"NETLQG_WORKERS must be an integer, got '{os.environ['NETLQG_WORKERS']}'")


def _run_bound(args: argparse.Namespace, collector: _WarningCollector) -> int:
    resolved = _resolve(args)
    cfg = resolved.cfg
    if args.snr:
        grid = args.grid or resolved.document_grid or list(PRESETS["fig2"].grid)
    else:
        grid = args.grid or resolved.document_grid or list(BOUND_RATE_GRID)
    ctx = bounds.bound_context(cfg.params, cfg.disturbance)
    logger.info(f"b_min={ctx.b_min:.9g} N_w={ctx.N_w:.9g} M={ctx.M:.9g} log2|A|={ctx.log2_abs_a:.9g}")

    records = []
    if args.snr:
        for snr, capacity, bound in bounds.bound_curve_vs_snr(grid, ctx):
            try:
                computed = riccati.computed_cost_per_stage(cfg.params, snr)
            except riccati.Diverged:
                computed = None
            records.append(sim.SweepRecord(snr, capacity, None, None, computed, bound, None))
    else:
        for rate, bits, bound in bounds.bound_curve_vs_rate(grid, ctx):
            records.append(sim.SweepRecord(rate, bits, None, None, None, bound, None))

    notes = [
        f"b_min={format_number(ctx.b_min)}",
        f"entropy_power={format_number(ctx.N_w)}",
        f"rate_threshold={format_number(bounds.data_rate_threshold(cfg.params))}",
        f"snr_threshold={format_number(riccati.stabilizing_snr(cfg.params))}",
    ]
    return _finish(args, cfg, grid, records, collector, notes)


def _run_sweep(args: argparse.Namespace, collector: _WarningCollector) -> int:
    resolved = _resolve(args)
    cfg = resolved.cfg
    grid = args.grid or resolved.document_grid or resolved.preset_grid
    if not grid:
        raise UsageError("no grid: pass --grid")
    workers = _workers(args)
    notes = []
    if args.command == "awgn-sweep":
        records = sim.snr_sweep(cfg, grid, workers=workers)
    elif args.command == "rate-sweep":
        records = sim.rate_sweep(cfg, grid, workers=workers)
    else:
        records = sim.uncertain_a_sweep(cfg, grid, workers=workers)
        notes.append(f"bound_cost is the fixed-A bound at mean A={cfg.uncertain_a.mean}; reference only")
    if cfg.channel.kind is ChannelKind.QUANTIZED:
        notes.append("info_bits is the empirical entropy of the quantizer output")
    return _finish(args, cfg, grid, records, collector, notes)


def _finish(args: argparse.Namespace, cfg: ExperimentConfig, grid: Sequence[float],
            records: List[sim.SweepRecord], collector: _WarningCollector, notes: List[str]) -> int:
    manifest = RunManifest(
        config_echo=cfg.model_dump(mode="json"),
        artifact_version=ARTIFACT_VERSION,
        master_seed=cfg.master_seed,
        timestamp=datetime.now(timezone.utc).isoformat(),
        warnings=collector.unique(),
        command=args.command,
        grid=[float(v) for v in grid],
        notes=notes,
    )
    write_csv(records, manifest, args.out)
    if all(record.diverged_fraction == 1.0 for record in records):
        logger.error("Every grid point diverged")
        return EXIT_ALL_DIVERGED
    return EXIT_OK


def _run_quantizer_design(args: argparse.Namespace, collector: _WarningCollector) -> int:
    samples = channel.read_samples(args.samples)
    design = channel.lloyd_max_design(samples, args.levels, tol=args.tol, max_iter=args.max_iter)
    logger.info(f"K={args.levels}: mse={design.mse:.9g}, {design.iterations} iterations, "
                f"{design.empty_cells_recovered} empty cell(s) re-seeded")
    channel.write_codebook_csv(design.codebook, args.out if args.out is not None else sys.stdout)
    return EXIT_OK


def _run_preset(args: argparse.Namespace, collector: _WarningCollector) -> int:
    chosen = get_preset(args.name)
    logger.info(f"{chosen.name}: {chosen.description} (run with '{chosen.command}')")
    _write_text(chosen.config.dump_json() + "\n", args.out)
    return EXIT_OK


COMMANDS = {
    "bound": _run_bound,
    "awgn-sweep": _run_sweep,
    "rate-sweep": _run_sweep,
    "uncertain-a-sweep": _run_sweep,
    "quantizer-design": _run_quantizer_design,
    "preset": _run_preset,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point; returns the process exit code"""
    load_dotenv()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"netlqg: error: {e}", file=sys.stderr)
        return EXIT_INVALID

    configure_logging(args.verbose)
    collector = _WarningCollector()
    root = logging.getLogger()
    root.addHandler(collector)
    try:
        return COMMANDS[args.command](args, collector)
    except InvalidConfig as e:
        for violation in e.violations:
            print(f"netlqg: invalid config: {violation}", file=sys.stderr)
        return EXIT_INVALID
    except (UsageError, NetLQGError, ValueError, OSError) as e:
        print(f"netlqg: error: {e}", file=sys.stderr)
        return EXIT_INVALID
    finally:
        root.removeHandler(collector)


if __name__ == "__main__":
    sys.exit(main())
