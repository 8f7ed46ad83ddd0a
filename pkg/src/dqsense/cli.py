"""Command-line front end.

Every subcommand reads an optional YAML (or JSON) config file, applies flag
overrides on top of it and writes either JSON (scalar results) or CSV (sweeps).

Exit codes: 0 on success, 2 when the configuration is invalid, 3 when a
numerical routine fails.

Example::

    dqsense estimate --config run.yaml --seed 7 --out est.json
    dqsense sweep-scaling --trials 100000 --out scaling.csv
    dqsense fisher --set M=1 --set photon_budget=1
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .experiments import (
    RfField,
    RfTask,
    bound_comparison,
    entanglement_sweep,
    phase_mc,
    rf_task,
    run_estimation,
    scaling_sweep,
    task_weights,
)
from .fisher import (
    entangled_max_fisher,
    fisher_fd,
    separable_max_fisher,
    squeezed_displacement_family,
    ub_entangled,
    ub_separable,
)
from .gaussian import NumericalError
from .protocols import (
    Kind,
    SensorNetworkSpec,
    SpecError,
    normalize_weights,
    optimize_allocation,
    phase_precisions,
)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERIC = 3

COMMANDS = ("estimate", "sweep-scaling", "compare-bounds", "fisher", "rf-task",
            "optimize-allocation", "phase")
FISHER_METHODS = ("closed_form", "fidelity_fd", "upper_bound")


class ConfigError(ValueError):
    """Invalid configuration entry; ``field`` names the offending key."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


def _float_list(value):
    if value is None:
        return None
    if np.isscalar(value):
        return [float(value)]
    return [float(v) for v in value]


def _int_list(value):
    if value is None:
        return None
    if np.isscalar(value):
        return [int(value)]
    return [int(v) for v in value]


def _as_bool(value):
    if isinstance(value, str):
        if value.lower() in ("true", "yes", "1"):
            return True
        if value.lower() in ("false", "no", "0"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    return bool(value)


def _optional_str(value):
    return None if value is None else str(value)


@dataclass
class ExperimentConfig:
    """Parameters shared by every subcommand.

    Each command reads the subset it needs. ``weights`` default to uniform and
    are rescaled to ``sum |w| = 1``; ``transmissivities`` default to ``eta`` on
    every node.
    """

    M: int = 2
    weights: list | None = None
    transmissivities: list | None = None
    eta: float = 1.0
    photon_budget: float = 1.0
    photons_per_mode: float = 1.0
    kind: str = "entangled"
    task: str = "displacement"
    trials: int = 10000
    seed: int = 0
    out: str | None = None
    format: str | None = None
    alphas: list | None = None
    m_list: list = field(default_factory=lambda: [1, 2, 4, 8, 16, 32])
    eta_grid: list | None = None
    mc: bool = False
    method: str = "closed_form"
    rf_task: str = "avg_amplitude"
    amplitudes: list | None = None
    phases: list | None = None
    coupling: float = 1.0
    ratio_grid: list | None = None
    theta: float = 0.005

    _COERCE = {
        "M": int, "weights": _float_list, "transmissivities": _float_list,
        "eta": float, "photon_budget": float, "photons_per_mode": float,
        "kind": str, "task": str, "trials": int, "seed": int, "out": _optional_str,
        "format": _optional_str, "alphas": _float_list, "m_list": _int_list,
        "eta_grid": _float_list, "mc": _as_bool, "method": str, "rf_task": str,
        "amplitudes": _float_list, "phases": _float_list, "coupling": float,
        "ratio_grid": _float_list, "theta": float,
    }

    @classmethod
    def keys(cls) -> list:
        return [f.name for f in dataclasses.fields(cls)]

    @classmethod
    def from_dict(cls, data: dict | None) -> "ExperimentConfig":
        """Build a config, rejecting unknown keys and coercing value types."""
        data = dict(data or {})
        known = set(cls.keys())
        for key in data:
            if key not in known:
                raise ConfigError(str(key), "unknown configuration key")
        values = {}
        for key, raw in data.items():
            try:
                values[key] = None if raw is None and key != "m_list" else cls._COERCE[key](raw)
            except (TypeError, ValueError) as exc:
                raise ConfigError(key, f"cannot interpret {raw!r} ({exc})") from None
        cfg = cls(**values)
        cfg.check()
        return cfg

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def check(self):
        if self.trials < 2:
            raise ConfigError("trials", "need at least 2 trials")
        if self.seed < 0 or self.seed >= 2**64:
            raise ConfigError("seed", "must be an unsigned 64-bit integer")
        if self.format not in (None, "csv", "json"):
            raise ConfigError("format", "must be 'csv' or 'json'")
        if self.method not in FISHER_METHODS:
            raise ConfigError("method", f"must be one of {', '.join(FISHER_METHODS)}")
        if self.m_list is None or not self.m_list or min(self.m_list) < 1:
            raise ConfigError("m_list", "need at least one positive node count")
        if not np.isfinite(self.photons_per_mode) or self.photons_per_mode <= 0:
            raise ConfigError("photons_per_mode", "must be > 0")

    # --- derived objects ---------------------------------------------------

    def network(self) -> SensorNetworkSpec:
        """Validated network description (weights rescaled to unit l1 norm)."""
        if self.M < 1:
            raise ConfigError("M", "must be a positive integer")
        w = np.full(self.M, 1.0 / self.M) if self.weights is None else self.weights
        if len(w) != self.M:
            raise ConfigError("weights", f"need {self.M} entries, got {len(w)}")
        try:
            w = normalize_weights(w)
        except ValueError as exc:
            raise ConfigError("weights", str(exc)) from None
        eta = self.transmissivities if self.transmissivities is not None else [self.eta] * self.M
        return SensorNetworkSpec(self.M, w, eta, self.photon_budget, self.kind, self.task)

    def displacements(self) -> np.ndarray:
        if self.alphas is None:
            return np.zeros(self.M)
        if len(self.alphas) != self.M:
            raise ConfigError("alphas", f"need {self.M} entries, got {len(self.alphas)}")
        return np.asarray(self.alphas)


# --- serialisation ----------------------------------------------------------

def _plain(obj):
    """Recursively convert numpy and enum values to JSON-ready Python objects."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
        return obj.value
    if isinstance(obj, SensorNetworkSpec):
        return obj.to_dict()
    return obj


def _cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return str(value)


def format_csv(columns: dict) -> str:
    """Comma-separated table with a header row, LF endings, 17 significant digits."""
    names = list(columns)
    n = len(next(iter(columns.values()), []))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(names)
    for i in range(n):
        writer.writerow([_cell(columns[name][i]) for name in names])
    return buf.getvalue()


def format_json(payload: dict) -> str:
    return json.dumps(_plain(payload), indent=2, sort_keys=False) + "\n"


def _write(text: str, out: str | None):
    if out is None:
        sys.stdout.write(text)
        return
    try:
        Path(out).write_text(text, encoding="utf-8", newline="\n")
    except OSError as exc:
        raise ConfigError("out", f"cannot write {out!r}: {exc.strerror}") from None


def _emit(command: str, cfg: ExperimentConfig, result: dict, columns: dict | None = None,
          timestamp: str | None = None):
    """Write a result in the requested format.

    JSON output embeds the config echo and tool version and carries no
    timestamp, so a fixed seed gives byte-identical files. CSV output goes
    with a ``<out>.meta.json`` sidecar holding the echo, version, run metadata
    and creation time.
    """
    fmt = cfg.format or ("csv" if columns is not None else "json")
    echo = cfg.to_dict()
    if fmt == "json":
        payload = dict(result)
        if columns is not None:
            payload["columns"] = columns
        payload["config"] = echo
        payload["version"] = __version__
        payload["command"] = command
        _write(format_json(payload), cfg.out)
        return
    if columns is None:
        scalars = {k: [v] for k, v in result.items()
                   if isinstance(v, (int, float, str, np.number, np.bool_))}
        columns, meta = scalars, {k: v for k, v in result.items() if k not in scalars}
    else:
        meta = result
    _write(format_csv(columns), cfg.out)
    if cfg.out is not None:
        side = {"tool": "dqsense", "version": __version__, "command": command,
                "config": echo, "metadata": meta}
        if timestamp is not None:
            side["timestamp"] = timestamp
        _write(format_json(side), cfg.out + ".meta.json")


# --- commands ---------------------------------------------------------------

def cmd_estimate(cfg: ExperimentConfig):
    spec = cfg.network()
    res = run_estimation(spec, cfg.displacements(), cfg.trials, cfg.seed)
    out = {k: v for k, v in res.to_dict().items()}
    out["spec"] = spec.to_dict()
    _emit("estimate", cfg, out)


def cmd_sweep_scaling(cfg: ExperimentConfig):
    table = scaling_sweep(cfg.m_list, cfg.photons_per_mode, cfg.eta, cfg.trials, cfg.seed)
    _emit("sweep-scaling", cfg, table.metadata, table.columns, table.timestamp)


def _eta_grid(cfg: ExperimentConfig) -> list:
    if cfg.eta_grid is not None:
        return cfg.eta_grid
    return [round(x, 12) for x in np.linspace(0.5, 1.0, 51)]


def cmd_compare_bounds(cfg: ExperimentConfig):
    if cfg.M < 1:
        raise ConfigError("M", "must be a positive integer")
    if not np.isfinite(cfg.photon_budget) or cfg.photon_budget <= 0:
        raise ConfigError("photon_budget", "must be > 0")
    grid = _eta_grid(cfg)
    if any(not 0.0 <= e <= 1.0 for e in grid):
        raise ConfigError("eta_grid", "entries must lie in [0, 1]")
    trials = cfg.trials if cfg.mc else 0
    table = bound_comparison(cfg.photon_budget, cfg.M, grid, trials, cfg.seed)
    _emit("compare-bounds", cfg, table.metadata, table.columns, table.timestamp)


def cmd_fisher(cfg: ExperimentConfig):
    spec = cfg.network()
    eta = float(spec.transmissivities[0])
    if not np.allclose(spec.transmissivities, eta):
        raise ConfigError("transmissivities", "the fisher command needs identical transmissivities")
    m, n = spec.num_nodes, spec.photon_budget
    entangled = spec.kind is Kind.ENTANGLED
    if cfg.method == "closed_form":
        rep = (entangled_max_fisher if entangled else separable_max_fisher)(m, n, eta)
    elif cfg.method == "upper_bound":
        rep = (ub_entangled if entangled else ub_separable)(m, n, eta)
    else:
        if m != 1:
            raise ConfigError("M", "the fidelity_fd method is single-mode (M=1)")
        rep = fisher_fd(squeezed_displacement_family(n, eta), 0.0)
    result = rep.to_dict()
    result["precision"] = rep.precision
    _emit("fisher", cfg, result)


def cmd_rf_task(cfg: ExperimentConfig):
    spec = cfg.network()
    try:
        task = RfTask(cfg.rf_task)
    except ValueError:
        raise ConfigError("rf_task", f"must be one of {[t.value for t in RfTask]}") from None
    amps = cfg.amplitudes if cfg.amplitudes is not None else [1.0] * cfg.M
    phases = cfg.phases if cfg.phases is not None else [0.0] * cfg.M
    if len(amps) != cfg.M or len(phases) != cfg.M:
        raise ConfigError("amplitudes", f"amplitudes and phases need {cfg.M} entries")
    res = rf_task(RfField(amps, phases, cfg.coupling), spec, task, cfg.trials, cfg.seed)
    grid = cfg.ratio_grid if cfg.ratio_grid is not None else list(np.linspace(0.0, 1.0, 21))
    task_spec = spec.replace(weights=task_weights(task, cfg.M))
    sweeps = {}
    for name, flip in (("flip_0", 0.0), ("flip_pi", np.pi)):
        table = entanglement_sweep(task_spec, grid, flip)
        md = table.metadata
        sweeps[name] = {k: md[k] for k in ("best_ratio", "best_variance", "predicted_ratio",
                                            "optimal_variance")}
        sweeps[name]["variance_sql"] = float(table.column("variance_sql")[0])
    out = res.to_dict()
    out["sweeps"] = sweeps
    _emit("rf-task", cfg, out)


def cmd_optimize_allocation(cfg: ExperimentConfig):
    spec = cfg.network()
    res = optimize_allocation(spec.weights, spec.transmissivities, spec.photon_budget)
    if not res.converged:
        raise NumericalError("allocation optimizer did not converge")
    _emit("optimize-allocation", cfg, {
        "allocation": res.allocation,
        "objective": res.objective,
        "precision": res.precision,
        "converged": res.converged,
        "spec": spec.to_dict(),
    })


def cmd_phase(cfg: ExperimentConfig):
    try:
        kind = Kind(cfg.kind)
    except ValueError:
        raise ConfigError("kind", f"unknown kind {cfg.kind!r}") from None
    if abs(cfg.theta) > 0.01:
        raise ConfigError("theta", "phase estimation is linearised; need |theta| <= 0.01")
    res = phase_mc(cfg.M, cfg.photons_per_mode, cfg.theta, trials=cfg.trials, seed=cfg.seed,
                   kind=kind)
    e, p = phase_precisions(cfg.M, cfg.photons_per_mode)
    out = res.to_dict()
    out["delta_E"], out["delta_P"] = e, p
    _emit("phase", cfg, out)


HANDLERS = {
    "estimate": cmd_estimate,
    "sweep-scaling": cmd_sweep_scaling,
    "compare-bounds": cmd_compare_bounds,
    "fisher": cmd_fisher,
    "rf-task": cmd_rf_task,
    "optimize-allocation": cmd_optimize_allocation,
    "phase": cmd_phase,
}


# --- argument handling ------------------------------------------------------

def _parse_assignment(text: str):
    key, sep, value = text.partition("=")
    if not sep or not key.strip():
        raise ConfigError("--set", f"expected key=value, got {text!r}")
    return key.strip(), yaml.safe_load(value)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dqsense",
                                     description="Distributed quantum sensing simulator.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="YAML or JSON config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--trials", type=int)
        p.add_argument("--out", help="output path (stdout when omitted)")
        p.add_argument("--format", choices=("csv", "json"))
        p.add_argument("--M", dest="M", type=int, help="number of sensor nodes")
        p.add_argument("--photon-budget", dest="photon_budget", type=float)
        p.add_argument("--eta", type=float, help="transmissivity of every node")
        p.add_argument("--kind", choices=[k.value for k in Kind])
        p.add_argument("--set", dest="assignments", action="append", default=[],
                       metavar="KEY=VALUE", help="override any config key (repeatable)")
    return parser


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path!r}: {exc.strerror}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("config", f"not valid YAML/JSON: {exc}") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError("config", "top level must be a mapping")
    return data


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    """File values first, then ``--set`` assignments, then dedicated flags."""
    data = load_config(args.config)
    for text in args.assignments:
        key, value = _parse_assignment(text)
        data[key] = value
    for key in ("seed", "trials", "out", "format", "M", "photon_budget", "eta", "kind"):
        value = getattr(args, key)
        if value is not None:
            data[key] = value
    return ExperimentConfig.from_dict(data)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        HANDLERS[args.command](cfg)
    except (ConfigError, SpecError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError, OverflowError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # keep the exit-code contract for unforeseen failures
        print(f"internal failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
