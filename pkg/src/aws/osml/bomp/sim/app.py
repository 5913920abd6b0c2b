#  Copyright 2023-2026 Amazon.com, Inc. or its affiliates.

"""
Command line entry point ``bomp-sim``. Settings are layered: built-in defaults, then a named
preset, then a ``key = value`` config file, then explicit flags.
"""

import argparse
import logging
import sys
from dataclasses import fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import pandas as pd

from ..errors import BompError, ConfigError, ParameterError
from ..sim_utils import build_logger, db_to_linear, parse_config_file
from ..stopping import ThresholdParams
from .harness import (
    CSV_FLOAT_FORMAT,
    PRESETS,
    ExperimentConfig,
    calibrate_energy,
    parse_rule,
    rows_to_frame,
    run_sweep,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_FAILURE = 3

CALIBRATE = "calibrate"
INT_KEYS = {"trials", "seed", "N", "d", "N_a", "M", "M_ant", "T", "max_iter_guard", "workers", "k", "n_a"}
FLOAT_KEYS = {"p_m", "p_f"}
KEY_ALIASES = {"pm": "p_m", "pf": "p_f", "n": "N", "m": "M", "na": "N_a", "m_ant": "M_ant", "t": "T"}
CALIBRATION_COLUMNS = [
    "snr_db",
    "k",
    "n_a",
    "signal",
    "trials",
    "model_mean",
    "empirical_mean",
    "model_variance",
    "empirical_variance",
    "eta_missed",
    "missed_rate",
    "eta_false",
    "false_rate",
]


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message: str):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(
        prog="bomp-sim", allow_abbrev=False, description="Monte Carlo study of BOMP stopping rules."
    )
    parser.add_argument("scenario", nargs="?", choices=["bomp", "icbomp", CALIBRATE], default=None)
    parser.add_argument("--preset", choices=sorted(PRESETS), help="Named dimension set")
    parser.add_argument("--config", type=Path, help="File of 'key = value' settings")
    parser.add_argument("--snr-db", dest="snr_db", help="Comma separated SNR grid in dB")
    parser.add_argument("--trials", type=int)
    parser.add_argument("--rules", help="Comma separated: derived, relchange[:e1], energy[:e2], maxiter[:K], oracle")
    parser.add_argument("--pm", dest="p_m", type=float, help="Missed-detection probability")
    parser.add_argument("--pf", dest="p_f", type=float, help="False-detection probability")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out", type=Path, help="CSV destination")
    parser.add_argument("--N", dest="N", type=int)
    parser.add_argument("--d", dest="d", type=int)
    parser.add_argument("--M", dest="M", type=int)
    parser.add_argument("--N-a", dest="N_a", type=int)
    parser.add_argument("--M-ant", dest="M_ant", type=int)
    parser.add_argument("--T", dest="T", type=int)
    parser.add_argument("--max-iter-guard", dest="max_iter_guard", type=int)
    parser.add_argument("--workers", type=int)
    parser.add_argument("--no-wall-time", dest="no_wall_time", action="store_true", default=None)
    parser.add_argument("--k", dest="k", type=int, help="calibrate: detected blocks")
    parser.add_argument("--n-a", dest="n_a", type=int, help="calibrate: undetected supporting blocks")
    parser.add_argument("--signal", choices=["gaussian", "qpsk"], help="calibrate: block entry distribution")
    parser.add_argument("--exact-chi2", dest="exact_chi2", action="store_true", default=None)
    parser.add_argument("--log-level", dest="log_level")
    return parser


def _normalize(settings: Dict[str, Any]) -> Dict[str, Any]:
    return {KEY_ALIASES.get(key.lower(), key): value for key, value in settings.items()}


def _coerce(key: str, value: Any) -> Any:
    if not isinstance(value, str):
        return value
    try:
        if key in INT_KEYS:
            return int(value)
        if key in FLOAT_KEYS:
            return float(value)
    except ValueError as err:
        raise ConfigError(f"Setting '{key}' expects a number, got '{value}'") from err
    if key in ("no_wall_time", "exact_chi2"):
        return value.lower() in ("1", "true", "yes", "on")
    if key in ("out", "config"):
        return Path(value)
    return value


def _split(text: str) -> List[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


def resolve_settings(argv: Optional[Sequence[str]] = None) -> Dict[str, Any]:
    """
    Merge defaults, preset, config file and flags into one flat dictionary.

    :param argv: Arguments without the program name; defaults to sys.argv[1:]
    :return: Settings keyed by ExperimentConfig field names plus calibration extras
    """
    args = vars(build_parser().parse_args(argv))
    flags = {key: value for key, value in args.items() if value is not None}

    file_settings: Dict[str, Any] = {}
    if "config" in flags:
        file_settings = _normalize(parse_config_file(flags["config"]))

    preset_name = flags.get("preset", file_settings.get("preset"))
    preset: Dict[str, Any] = {}
    if preset_name is not None:
        if preset_name not in PRESETS:
            raise ConfigError(f"Unknown preset '{preset_name}'")
        preset = dict(PRESETS[preset_name])

    settings: Dict[str, Any] = {"scenario": "bomp", "snr_db": "20", "rules": "derived", "trials": 10}
    for layer in (preset, file_settings, flags):
        settings.update({key: _coerce(key, value) for key, value in layer.items()})
    return settings


def build_config(settings: Dict[str, Any]) -> ExperimentConfig:
    """Turn resolved settings into a validated ExperimentConfig."""
    try:
        snr_db = tuple(float(value) for value in _split(str(settings["snr_db"])))
    except ValueError as err:
        raise ConfigError(f"Bad SNR grid '{settings['snr_db']}'") from err
    known = {f.name for f in fields(ExperimentConfig)}
    values = {key: value for key, value in settings.items() if key in known}
    values["snr_db"] = snr_db
    values["rules"] = tuple(parse_rule(token) for token in _split(str(settings["rules"])))
    values["record_wall_time"] = not settings.get("no_wall_time", False)
    try:
        return ExperimentConfig(**values).validate()
    except ParameterError as err:
        raise ConfigError(str(err)) from err


def run_calibration(settings: Dict[str, Any]) -> pd.DataFrame:
    """
    Residual-energy calibration at each SNR point of the grid: one row with model and empirical
    moments and the miss and false-alarm frequencies at the derived thresholds.
    """
    config = build_config({**settings, "scenario": "bomp"})
    thresholds = ThresholdParams(p_m=config.p_m, p_f=config.p_f)
    signal = settings.get("signal", "gaussian")
    k = int(settings.get("k", 0))
    n_a = int(settings.get("n_a", 1))
    rows = []
    for snr_db in config.snr_db:
        report = calibrate_energy(
            config.M,
            config.d,
            k,
            n_a,
            1.0 / db_to_linear(snr_db),
            thresholds,
            config.trials,
            seed=config.seed,
            signal=signal,
            exact_chi2=bool(settings.get("exact_chi2", False)),
        )
        rows.append(
            {
                "snr_db": snr_db,
                "k": k,
                "n_a": n_a,
                "signal": signal,
                "trials": report.trials,
                "model_mean": report.model_mean,
                "empirical_mean": report.empirical_mean,
                "model_variance": report.model_variance,
                "empirical_variance": report.empirical_variance,
                "eta_missed": report.eta_missed,
                "missed_rate": report.missed_rate,
                "eta_false": report.eta_false,
                "false_rate": report.false_rate,
            }
        )
        logger.info(f"Calibration at {snr_db:g} dB: missed={report.missed_rate:.4f} false={report.false_rate:.4f}")
    frame = pd.DataFrame(rows, columns=CALIBRATION_COLUMNS)
    if config.out is not None:
        Path(config.out).parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(config.out, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
    return frame


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Run the simulator.

    :param argv: Arguments without the program name
    :return: 0 on success, 2 for configuration or parameter errors, 3 for any other failure
    """
    try:
        settings = resolve_settings(argv)
        build_logger(settings.get("log_level"))
        if settings["scenario"] == CALIBRATE:
            frame = run_calibration(settings)
            if settings.get("out") is None:
                print(frame.to_csv(index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n"), end="")
        else:
            rows = run_sweep(build_config(settings))
            if settings.get("out") is None:
                frame = rows_to_frame(rows)
                print(frame.to_csv(index=False, float_format=CSV_FLOAT_FORMAT, na_rep="", lineterminator="\n"), end="")
    except (ConfigError, ParameterError) as err:
        logger.error(f"Invalid configuration: {err}")
        print(f"bomp-sim: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except BompError as err:
        logger.error(f"Simulation failed: {err}", exc_info=True)
        print(f"bomp-sim: {err}", file=sys.stderr)
        return EXIT_FAILURE
    except Exception as err:
        logger.error(f"Unexpected failure: {err}", exc_info=True)
        print(f"bomp-sim: {err}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
