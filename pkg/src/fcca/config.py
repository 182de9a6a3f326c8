"""Run configuration: defaults, INI-style config files, CLI overrides.

Precedence is defaults < config file < CLI flags. Values are validated once,
at construction, so the pipeline can assume a well-formed config.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, fields, replace


class ConfigError(ValueError):
    """Invalid configuration; the CLI maps this to exit code 2."""


@dataclass(frozen=True)
class RunConfig:
    dataset: str = ""
    label_column: str | None = None  # default: last column
    out: str = "fcca_out"
    # target model
    target: str = "gb"  # gb | rf | linear
    n_estimators: int = 100
    learning_rate: float = 0.1
    target_depth: int = 1
    rf_max_features: int | None = None
    linear_epochs: int = 200
    linear_step: float = 0.5
    linear_reg: float = 1e-3
    # M-set probability bounds
    p0: float = 0.5
    p1: float = 1.0
    # counterfactual cost weights and class margin
    lambda0: float = 0.1
    lambda1: float = 1.0
    lambda2: float = 0.0
    margin: float = 1e-4
    # threshold selection
    q: tuple[float, ...] = (0.0,)
    # surrogate trees
    depth: int = 3
    lambda_reg: float | None = None  # None -> 10 / n_train per fold
    max_columns: int = 512
    # evaluation protocol
    folds: int = 5
    cap: int = 5000
    seed: int = 0
    fold_limit: int | None = None  # run only the first N folds
    eps_scope: str = "train"  # train | pool: rows used for feature resolution
    # GTRE baseline
    gtre_prune: bool = False
    gtre_prune_tol: float = 0.01
    gtre_compare_fcca: bool = False

    def __post_init__(self):
        if not 0.5 <= self.p0 <= self.p1 <= 1.0:
            raise ConfigError(f"need 0.5 <= p0 <= p1 <= 1, got p0={self.p0}, p1={self.p1}")
        if self.target not in ("gb", "rf", "linear"):
            raise ConfigError(f"unknown target model kind: {self.target!r}")
        if min(self.lambda0, self.lambda1, self.lambda2) < 0:
            raise ConfigError("lambda weights must be nonnegative")
        if self.margin <= 0:
            raise ConfigError("margin must be positive")
        if not self.q:
            raise ConfigError("at least one Q value is required")
        for qv in self.q:
            if not 0.0 <= qv <= 1.0:
                raise ConfigError(f"Q values must lie in [0, 1], got {qv}")
        if self.depth < 1:
            raise ConfigError("surrogate depth must be >= 1")
        if self.folds < 2:
            raise ConfigError("folds must be >= 2")
        if self.cap < self.folds:
            raise ConfigError("cap must allow at least one row per fold")
        if self.fold_limit is not None and self.fold_limit < 1:
            raise ConfigError("fold_limit must be >= 1")
        if self.eps_scope not in ("train", "pool"):
            raise ConfigError(f"eps_scope must be 'train' or 'pool', got {self.eps_scope!r}")
        if self.n_estimators < 1:
            raise ConfigError("n_estimators must be >= 1")
        if self.target_depth < 1:
            raise ConfigError("target_depth must be >= 1")


_BOOL_KEYS = {"gtre_prune", "gtre_compare_fcca"}
_INT_KEYS = {"n_estimators", "target_depth", "linear_epochs", "depth", "max_columns", "folds", "cap", "seed"}
_OPT_INT_KEYS = {"rf_max_features", "fold_limit"}
_FLOAT_KEYS = {
    "learning_rate", "linear_step", "linear_reg", "p0", "p1",
    "lambda0", "lambda1", "lambda2", "margin", "gtre_prune_tol",
}
_OPT_FLOAT_KEYS = {"lambda_reg"}
_STR_KEYS = {"dataset", "out", "target", "eps_scope"}
_OPT_STR_KEYS = {"label_column"}


def _parse_bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {raw!r}")


def parse_q_list(raw) -> tuple[float, ...]:
    """Accept a single number or a comma-separated list."""
    if isinstance(raw, (int, float)):
        return (float(raw),)
    parts = [p.strip() for p in str(raw).split(",") if p.strip()]
    if not parts:
        raise ConfigError("empty Q list")
    try:
        return tuple(float(p) for p in parts)
    except ValueError as exc:
        raise ConfigError(f"bad Q list {raw!r}") from exc


def _coerce(key: str, raw: str):
    try:
        if key == "q":
            return parse_q_list(raw)
        if key in _BOOL_KEYS:
            return _parse_bool(raw)
        if key in _INT_KEYS:
            return int(raw)
        if key in _OPT_INT_KEYS:
            return None if raw.strip().lower() in ("", "none") else int(raw)
        if key in _FLOAT_KEYS:
            return float(raw)
        if key in _OPT_FLOAT_KEYS:
            return None if raw.strip().lower() in ("", "none") else float(raw)
        if key in _STR_KEYS or key in _OPT_STR_KEYS:
            return raw.strip()
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    raise ConfigError(f"unknown config key: {key!r}")


def load_config_file(path) -> dict:
    """Flat key = value entries under arbitrary [section] headers."""
    parser = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_string("[DEFAULT]\n" + fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config file {path}: {exc}") from exc
    out: dict = {}
    sections = [parser.defaults()] + [parser[s] for s in parser.sections()]
    for sec in sections:
        for key, raw in sec.items():
            out[key] = _coerce(key, raw)
    return out


def build_config(file_path=None, overrides: dict | None = None) -> RunConfig:
    """Merge defaults, an optional config file, and CLI overrides."""
    values: dict = {}
    if file_path is not None:
        values.update(load_config_file(file_path))
    for key, val in (overrides or {}).items():
        if val is None:
            continue
        if key == "q":
            values[key] = parse_q_list(val)
        else:
            values[key] = val
    known = {f.name for f in fields(RunConfig)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def config_to_dict(cfg: RunConfig) -> dict:
    out = {}
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        out[f.name] = list(v) if isinstance(v, tuple) else v
    return out


def with_updates(cfg: RunConfig, **kwargs) -> RunConfig:
    return replace(cfg, **kwargs)
