"""Flat ``key = value`` experiment configuration files.

Lines starting with ``#`` or ``;`` are comments. Keys are case-insensitive.
Every kind needs ``kind``, ``trials`` and ``seed``; the remaining keys and
their defaults are listed in :data:`KIND_KEYS`.
"""
from __future__ import annotations

import configparser
import enum
import os
from dataclasses import dataclass, field

from ..errors import ConfigError


class ExperimentKind(enum.Enum):
    GAUSSIAN_WHITE = "GaussianWhite"
    GAUSSIAN_COLORED = "GaussianColored"
    GAUSSIAN_MISMATCH = "GaussianMismatch"
    GMM_COMPARE = "GmmCompare"
    SPARSE_COMPARE = "SparseCompare"
    BISECTION_STUDY = "BisectionStudy"
    MNIST_CLASSIFY = "MnistClassify"
    CSV_RECOVERY = "CsvRecovery"


REQUIRED = object()

_COMMON = {"trials": (int, REQUIRED), "seed": (int, REQUIRED)}

#: per-kind keys as ``name: (type, default)``; ``REQUIRED`` marks keys without a default
KIND_KEYS = {
    ExperimentKind.GAUSSIAN_WHITE: {
        "n": (int, 100), "sigma": (float, 0.01), "eps": (float, 0.1), "p": (float, 0.95),
        "threshold": (float, 0.7), "noise": (str, "after"),
    },
    ExperimentKind.GAUSSIAN_COLORED: {
        "n": (int, 100), "eps": (float, 0.1), "p": (float, 0.95), "threshold": (float, 0.7),
        "noise": (str, "before"), "noise_scale": (float, 1.0),
    },
    ExperimentKind.GAUSSIAN_MISMATCH: {
        "n": (int, 100), "sigma": (float, 0.01), "eps": (float, 0.1), "rank": (int, 5),
        "measurements": (int, 20),
    },
    ExperimentKind.GMM_COMPARE: {
        "n": (int, 30), "components": (int, 3), "sigma": (float, 0.01), "threshold": (float, 0.7),
        "measurements": (int, 12), "true_weights": (str, "0.3,0.2,0.5"), "mean_scale": (float, 0.0),
        "step_size": (float, 0.2), "eta": (float, 0.01), "mc_samples": (int, 500),
        "max_steps": (int, 50), "methods": (str, "gradient,greedy,random,batch"),
    },
    ExperimentKind.SPARSE_COMPARE: {
        "n": (int, 10), "k0": (int, 5), "sigma": (float, 0.01), "threshold": (float, 0.7),
        "measurements": (int, 5), "tol": (float, 1e-6), "max_iter": (int, 100),
    },
    ExperimentKind.BISECTION_STUDY: {
        "n": (int, 1024), "k": (int, 5), "sigma": (float, 0.0), "eps": (float, 0.05),
        "amplitude_low": (float, 1.0), "amplitude_high": (float, 1.0), "mode": (str, "recover"),
    },
    ExperimentKind.MNIST_CLASSIFY: {
        "train_images": (str, REQUIRED), "train_labels": (str, REQUIRED),
        "test_images": (str, REQUIRED), "test_labels": (str, REQUIRED),
        "train_count": (int, 10000), "sigma": (float, 0.01), "measurements": (int, 40),
        "ridge": (float, 1e-3), "step_size": (float, 0.2), "eta": (float, 0.01),
        "mc_samples": (int, 200), "max_steps": (int, 20), "methods": (str, "gradient,greedy,random"),
    },
    ExperimentKind.CSV_RECOVERY: {
        "csv_path": (str, REQUIRED), "train_rows": (int, 0), "test_row": (int, -1),
        "sigma": (float, 0.01), "measurements": (int, 20), "ridge": (float, 1e-3),
    },
}

_CHOICES = {"noise": ("after", "before"), "mode": ("recover", "info_rate")}


@dataclass
class ExperimentConfig:
    kind: ExperimentKind
    trials: int
    seed: int
    params: dict = field(default_factory=dict)
    source: str | None = None

    def __getattr__(self, name):
        params = self.__dict__.get("params", {})
        if name in params:
            return params[name]
        raise AttributeError(name)

    def replace(self, **overrides) -> "ExperimentConfig":
        """Copy with ``trials``, ``seed`` or parameter overrides, re-validated."""
        values = {"trials": self.trials, "seed": self.seed, **self.params}
        values.update({k: v for k, v in overrides.items() if v is not None})
        return build_config(self.kind.value, values, self.source)

    def as_dict(self) -> dict:
        return {"kind": self.kind.value, "trials": self.trials, "seed": self.seed, **self.params}


def _coerce(key, typ, raw):
    if isinstance(raw, typ) and not (typ is int and isinstance(raw, bool)):
        return raw
    try:
        if typ is int:
            f = float(raw)
            if not f.is_integer():
                raise ValueError
            return int(f)
        return typ(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"key {key!r}: cannot parse {raw!r} as {typ.__name__}") from None


def _validate(kind: ExperimentKind, p: dict) -> None:
    def need(cond, msg):
        if not cond:
            raise ConfigError(msg)

    need(p["trials"] >= 1, "trials must be >= 1")
    need(p["seed"] >= 0, "seed must be a nonnegative integer")
    for key, allowed in _CHOICES.items():
        if key in p:
            need(p[key] in allowed, f"{key} must be one of {allowed}, got {p[key]!r}")
    if "n" in p:
        need(p["n"] >= 1, "n must be >= 1")
    if "sigma" in p:
        need(p["sigma"] >= 0, "sigma must be >= 0")
    if "eps" in p:
        need(p["eps"] > 0, "eps must be > 0")
    if "p" in p:
        need(0 < p["p"] < 1, "p must lie in (0, 1)")
    if "threshold" in p:
        need(0 < p["threshold"] < 1, "threshold must lie in (0, 1)")
    for key in ("measurements", "mc_samples", "max_steps", "max_iter", "train_count", "components"):
        if key in p:
            need(p[key] >= 1, f"{key} must be >= 1")
    for key in ("step_size", "eta", "tol", "noise_scale"):
        if key in p:
            need(p[key] > 0, f"{key} must be > 0")
    if "ridge" in p:
        need(p["ridge"] >= 0, "ridge must be >= 0")
    if kind in (ExperimentKind.GAUSSIAN_WHITE, ExperimentKind.GAUSSIAN_MISMATCH,
                ExperimentKind.GMM_COMPARE, ExperimentKind.SPARSE_COMPARE,
                ExperimentKind.MNIST_CLASSIFY):
        need(p["sigma"] > 0, "sigma must be > 0 for this kind")
    if kind is ExperimentKind.GAUSSIAN_MISMATCH:
        need(1 <= p["rank"] <= p["n"], "rank must lie in [1, n]")
    if kind is ExperimentKind.SPARSE_COMPARE:
        need(1 <= p["k0"] <= p["n"], "k0 must lie in [1, n]")
    if kind is ExperimentKind.BISECTION_STUDY:
        need(1 <= p["k"] <= p["n"], "k must lie in [1, n]")
        need(0 < p["amplitude_low"] <= p["amplitude_high"], "need 0 < amplitude_low <= amplitude_high")
        if p["mode"] == "info_rate":
            need(p["sigma"] == 0, "info_rate mode is noiseless")
    if kind is ExperimentKind.GMM_COMPARE:
        weights = parse_float_list(p["true_weights"], "true_weights")
        need(len(weights) == p["components"], "true_weights needs one entry per component")
        need(all(w >= 0 for w in weights) and abs(sum(weights) - 1) <= 1e-9,
             "true_weights must be a probability vector")
        methods = parse_methods(p["methods"])
        need(set(methods) <= {"gradient", "greedy", "random", "batch", "high_noise"},
             f"unknown GMM methods in {p['methods']!r}")
    if kind is ExperimentKind.MNIST_CLASSIFY:
        need(set(parse_methods(p["methods"])) <= {"gradient", "greedy", "random", "batch", "high_noise"},
             f"unknown MNIST methods in {p['methods']!r}")


def parse_float_list(text: str, key: str = "value") -> list:
    try:
        return [float(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"key {key!r}: expected comma-separated numbers, got {text!r}") from None


def parse_methods(text: str) -> list:
    return [t.strip() for t in str(text).split(",") if t.strip()]


def build_config(kind_name: str, values: dict, source: str | None = None) -> ExperimentConfig:
    """Validate raw ``values`` for ``kind_name`` and fill defaults."""
    try:
        kind = ExperimentKind(kind_name)
    except ValueError:
        names = ", ".join(k.value for k in ExperimentKind)
        raise ConfigError(f"unknown experiment kind {kind_name!r}; expected one of {names}") from None
    schema = {**_COMMON, **KIND_KEYS[kind]}
    unknown = sorted(set(values) - set(schema))
    if unknown:
        raise ConfigError(f"unknown keys for {kind.value}: {', '.join(unknown)}")
    params = {}
    for key, (typ, default) in schema.items():
        if key in values:
            params[key] = _coerce(key, typ, values[key])
        elif default is REQUIRED:
            raise ConfigError(f"missing required key {key!r} for {kind.value}")
        else:
            params[key] = default
    _validate(kind, params)
    trials, seed = params.pop("trials"), params.pop("seed")
    return ExperimentConfig(kind, trials, seed, params, source)


def parse_config_text(text: str, source: str | None = None) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"),
                                       inline_comment_prefixes=("#",), delimiters=("=",))
    try:
        parser.read_string("[experiment]\n" + text, source=source or "<config>")
    except configparser.Error as exc:
        raise ConfigError(f"malformed configuration: {exc}") from None
    values = dict(parser["experiment"])
    if "kind" not in values:
        raise ConfigError("missing required key 'kind'")
    kind = values.pop("kind").strip()
    return build_config(kind, values, source)


def load_config(path) -> ExperimentConfig:
    path = os.fspath(path)
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc.strerror}") from None
    return parse_config_text(text, source=path)
