# cycle_queue/cli.py
"""
Command-line entry: `cycle-queue <command> [flags]`.

Parameters are layered defaults < config.yaml < --config file < flags. Every run writes a
CSV report and a JSON mirror of it, and exits 0 when all checks pass, 1 when a check
fails or a computation breaks down, and 2 on usage errors.
"""

import argparse
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import pandas as pd
import yaml
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from . import experiments
from .experiments import Kind, ReportRow, Settings
from .utils import CycleQueueError, NumericError, ReplicateError, UsageError

logger = logging.getLogger(__name__)

# ---------------- Configuration ----------------
DEFAULT_CONFIG = Path(__file__).resolve().parent.parent / "config.yaml"
REPORT_COLUMNS = ["quantity", "analytic", "mc_mean", "mc_stderr", "target_ref", "pass"]
SCHEMA_VERSION = 1
FLOAT_FORMAT = "%.12g"

COMMANDS = ("crp", "walk", "tandem", "mminf", "busy", "tagged", "verify")

# key -> (type, default)
PARAMETERS: Dict[str, Tuple[type, Any]] = {
    "theta": (float, 1.0),
    "k": (int, 2),
    "mu": (float, 1.0),
    "rho": (float, 1.0),
    "c": (int, 0),
    "t": (float, 1.0),
    "z": (float, 1.0),
    "nu": (int, 10_000),
    "n": (int, 6),
    "m": (int, 10_000),
    "n_reps": (int, 100_000),
    "seed": (int, None),
    "checkpoints": (list, [1000, 10_000]),
    "quantity": (list, []),
    "output": (str, "report"),
    "log_level": (str, "INFO"),
    "progress": (bool, False),
}

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2


@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    params: Dict[str, Any] = field(default_factory=dict)
    output_path: Path = Path("report")
    quantities: Tuple[str, ...] = ()

    def settings(self) -> Settings:
        keys = Settings.__dataclass_fields__
        return Settings(**{k: v for k, v in self.params.items() if k in keys})


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _build_parser() -> _Parser:
    common = _Parser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="JSON or YAML parameter file")
    for name in ("theta", "mu", "rho", "t", "z"):
        common.add_argument(f"--{name}", type=float, default=argparse.SUPPRESS)
    for name in ("k", "c", "nu", "n", "m", "seed"):
        common.add_argument(f"--{name}", type=int, default=argparse.SUPPRESS)
    common.add_argument("--n-reps", dest="n_reps", type=int, default=argparse.SUPPRESS)
    common.add_argument("--checkpoints", default=argparse.SUPPRESS, help="comma-separated degrees")
    common.add_argument("--quantity", action="append", default=argparse.SUPPRESS,
                        help="quantity name; repeat or comma-separate for several")
    common.add_argument("--output", default=argparse.SUPPRESS, help="report path without extension")
    common.add_argument("--log-level", dest="log_level", default=argparse.SUPPRESS)
    common.add_argument("--verbose", action="store_const", const="DEBUG", dest="log_level",
                        default=argparse.SUPPRESS)
    common.add_argument("--progress", action="store_true", default=argparse.SUPPRESS)

    parser = _Parser(prog="cycle-queue", description="CRP permutations and infinite-server queues")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    for command in COMMANDS:
        sub.add_parser(command, parents=[common])
    return parser


# --- Config layering ---

def _read_file(path: Path) -> Dict[str, Any]:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise UsageError(f"cannot read config file {path}: {e}") from e
    if path.suffix.lower() == ".json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise UsageError(f"{path}: invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}") from e
    else:
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as e:
            mark = getattr(e, "problem_mark", None)
            where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
            raise UsageError(f"{path}: invalid YAML{where}") from e
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise UsageError(f"{path}: expected a mapping of parameters")
    return {str(k).replace("-", "_"): v for k, v in data.items()}


def _coerce(key: str, value: Any) -> Any:
    if key not in PARAMETERS:
        valid = ", ".join(sorted(PARAMETERS))
        raise UsageError(f"unknown parameter {key!r}; valid keys are: {valid}")
    kind, _ = PARAMETERS[key]
    if value is None:
        return None
    try:
        if kind is list:
            items = value.split(",") if isinstance(value, str) else list(value)
            flat = []
            for item in items:
                flat.extend(str(item).split(",") if isinstance(item, str) else [item])
            flat = [v.strip() if isinstance(v, str) else v for v in flat]
            flat = [v for v in flat if v != ""]
            return [int(v) for v in flat] if key == "checkpoints" else [str(v) for v in flat]
        if kind is bool:
            if isinstance(value, str):
                return value.strip().lower() in ("1", "true", "yes", "on")
            return bool(value)
        if kind is int and isinstance(value, float) and not value.is_integer():
            raise ValueError(f"{value} is not an integer")
        return kind(value)
    except (TypeError, ValueError) as e:
        raise UsageError(f"parameter {key!r}: cannot use {value!r} ({e})") from e


def _validate(params: Dict[str, Any]) -> None:
    for key in ("theta", "mu", "rho"):
        if not (math.isfinite(params[key]) and params[key] > 0):
            raise UsageError(f"{key} must be a positive finite number, got {params[key]}")
    if params["k"] < 1:
        raise UsageError(f"k must be at least 1, got {params['k']}")
    if params["c"] < 0:
        raise UsageError(f"c must be nonnegative, got {params['c']}")
    if params["n_reps"] < 2:
        raise UsageError(f"n_reps must be at least 2, got {params['n_reps']}")
    if params["t"] <= 0 or params["z"] < 0:
        raise UsageError("t must be positive and z nonnegative")
    if params["n"] < 1 or params["nu"] < 1 or params["m"] < 3:
        raise UsageError("n and nu must be positive, m at least 3")
    if not params["checkpoints"] or min(params["checkpoints"]) < 1:
        raise UsageError("checkpoints must be positive integers")
    if logging.getLevelName(str(params["log_level"]).upper()) not in (10, 20, 30, 40, 50):
        raise UsageError(f"unknown log level {params['log_level']!r}")


def parse_config(argv: Sequence[str], base_config: Optional[Path] = DEFAULT_CONFIG) -> ExperimentConfig:
    """Parse flags and merge every configuration layer into one validated config."""
    argv = list(argv)
    parser = _build_parser()
    if not argv:
        raise UsageError(parser.format_usage().strip())
    args = vars(parser.parse_args(argv))
    command = args.pop("command")
    if command is None:
        raise UsageError(parser.format_usage().strip())

    params = {key: default for key, (_, default) in PARAMETERS.items()}
    if base_config is not None and Path(base_config).is_file():
        for key, value in _read_file(Path(base_config)).items():
            params[key] = _coerce(key, value)
    config_file = args.pop("config", None)
    if config_file:
        for key, value in _read_file(Path(config_file)).items():
            params[key] = _coerce(key, value)
    for key, value in args.items():
        params[key] = _coerce(key, value)
    _validate(params)

    try:
        quantities = _select(command, params["quantity"])
    except KeyError as e:
        raise UsageError(f"unknown quantity {e.args[0]!r} for {command}; known: "
                         f"{', '.join(_known(command))}") from e
    if params["seed"] is None and any(q.kind is Kind.STOCHASTIC for _, q in quantities):
        raise UsageError("--seed is required for stochastic quantities")
    return ExperimentConfig(command=command, params=params, output_path=Path(params["output"]),
                            quantities=tuple(params["quantity"]))


def _known(command: str) -> List[str]:
    if command == "verify":
        return [f"{c}:{q}" for c in experiments.QUANTITIES for q in experiments.QUANTITIES[c]]
    return list(experiments.QUANTITIES[command])


def _select(command: str, names: Sequence[str]) -> List[Tuple[str, experiments.Quantity]]:
    """(command, quantity) pairs; `verify` spans every command and takes `cmd:name` selectors."""
    if command != "verify":
        return [(command, q) for q in experiments.resolve(command, names)]
    if not names:
        return [(c, q) for c in experiments.QUANTITIES for q in experiments.resolve(c, [])]
    chosen = []
    for name in names:
        owner, _, short = name.partition(":")
        if owner not in experiments.QUANTITIES:
            raise KeyError(name)
        chosen.extend((owner, q) for q in experiments.resolve(owner, [short] if short else []))
    return chosen


# --- Running and reporting ---

def _report_frame(rows: Sequence[ReportRow]) -> pd.DataFrame:
    return pd.DataFrame([row.as_record() for row in rows], columns=REPORT_COLUMNS)


def write_report(rows: Sequence[ReportRow], output: Path) -> Tuple[Path, Path]:
    """CSV report plus a JSON mirror carrying the schema version."""
    base = output.with_suffix("") if output.suffix.lower() in (".csv", ".json") else output
    csv_path, json_path = base.with_suffix(".csv"), base.with_suffix(".json")
    if base.parent and not base.parent.exists():
        base.parent.mkdir(parents=True, exist_ok=True)
    frame = _report_frame(rows)
    frame["pass"] = frame["pass"].map(lambda v: "" if v is None or v != v else str(bool(v)).lower())
    frame.to_csv(csv_path, index=False, float_format=FLOAT_FORMAT)
    payload = {"schema": SCHEMA_VERSION, "rows": [row.as_record() for row in rows]}
    json_path.write_text(json.dumps(payload, indent=2), encoding="utf-8")
    logger.info(f"wrote {len(rows)} rows to {csv_path} and {json_path}")
    return csv_path, json_path


def _render(rows: Sequence[ReportRow], console: Console) -> None:
    table = Table(title="cycle-queue report")
    for column in REPORT_COLUMNS[:-2] + ["pass"]:
        table.add_column(column, justify="left" if column == "quantity" else "right")

    def fmt(v):
        return "" if v is None else f"{v:.6g}"

    for row in rows:
        status = "" if row.passed is None else ("[green]ok[/]" if row.passed else "[red]FAIL[/]")
        table.add_row(row.quantity, fmt(row.analytic), fmt(row.mc_mean), fmt(row.mc_stderr), status)
    console.print(table)


def run(config: ExperimentConfig, console: Optional[Console] = None) -> int:
    """Compute the selected quantities, write the report and return the exit code."""
    settings = config.settings()
    selected = _select(config.command, config.quantities)
    rows: List[ReportRow] = []
    for owner, quantity in selected:
        computed = experiments.compute(owner, [quantity], settings)
        if config.command == "verify":
            computed = [ReportRow(f"{owner}:{r.quantity}", r.analytic, r.mc_mean, r.mc_stderr, r.target_ref,
                                  r.passed) for r in computed]
        rows.extend(computed)
    write_report(rows, config.output_path)
    if console is not None:
        _render(rows, console)
    failed = [r.quantity for r in rows if r.passed is False]
    if failed:
        logger.error(f"{len(failed)} check(s) failed: {', '.join(failed)}")
        return EXIT_FAILED
    return EXIT_OK


def setup_logging(level: str = "INFO") -> None:
    root = logging.getLogger()
    if not any(isinstance(h, RichHandler) for h in root.handlers):
        handler = RichHandler(console=Console(stderr=True), show_path=False, rich_tracebacks=False)
        handler.setFormatter(logging.Formatter("%(message)s"))
        root.addHandler(handler)
    root.setLevel(str(level).upper())


def main(argv: Optional[Sequence[str]] = None) -> int:
    setup_logging()
    argv = sys.argv[1:] if argv is None else argv
    try:
        config = parse_config(argv)
    except UsageError as e:
        logger.error(str(e))
        return EXIT_USAGE
    setup_logging(config.params["log_level"])
    try:
        return run(config, Console(stderr=True))
    except ReplicateError as e:
        logger.error(f"{e} (seed {config.params['seed']})")
        return EXIT_FAILED
    except NumericError as e:
        bound = f", estimate {e.estimate!r}, error bound {e.error_bound!r}" if e.estimate is not None else ""
        logger.error(f"numerical failure: {e}{bound}")
        return EXIT_FAILED
    except CycleQueueError as e:
        logger.error(str(e))
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
