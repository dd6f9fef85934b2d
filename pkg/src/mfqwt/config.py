"""Flat ``key = value`` experiment configuration."""

from __future__ import annotations

import os
from math import gcd
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any, Mapping, Optional

from .multifractal import resolve_window
from .wavelet import FILTERS

EXPERIMENTS = (
    "fig2_zdensity",
    "fig3_zamplitude",
    "fig4_tauprime_cascade",
    "fig5_tauprime_vs_q",
    "fig6_tau2_cascade",
    "fig7_tau2_eigvecs",
    "fig8_tau2_iterates",
    "fig9_tauprime_vs_n2",
    "cost_table",
    "emulation_demo",
)

OUTPUT_DIR_ENV = "MFQWT_OUTPUT_DIR"
DENSE_N_MAX = 12


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    n: tuple[int, ...] = (10,)
    n1: int = 1
    n2: tuple[int, ...] = (3,)
    p1: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4)
    q: tuple[float, ...] = (2.0,)
    ensemble_size: int = 500
    vectors_per_realization: int = 0
    t: int = 1000
    fit_window: Optional[tuple[int, int]] = None  # None: automatic per-size window
    filter: str = "daub4"
    seed: int = 0
    average: str = "log"
    include_approx: bool = False
    cost_n: tuple[int, ...] = (10, 20, 30)
    shots: int = 100000
    success_threshold: float = 0.8
    output: str = ""
    workers: int = 1

    # keys that never influence numeric output
    RUNTIME_KEYS = ("output", "workers")

    @classmethod
    def defaults(cls, experiment: str) -> "ExperimentConfig":
        if experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {experiment!r}; choose from {', '.join(EXPERIMENTS)}")
        base = cls(experiment)
        per = {
            "fig2_zdensity": dict(n=(10,), q=(2.0, 3.0, 4.0)),
            "fig3_zamplitude": dict(n=(10,), q=(2.0, 3.0, 4.0)),
            "fig4_tauprime_cascade": dict(n=(6, 8, 10, 12, 14, 16), q=(1.0,),
                                          p1=(0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45)),
            "fig5_tauprime_vs_q": dict(n=(10,), n2=(3, 5, 7, 11, 13),
                                       q=tuple(0.5 * k for k in range(11))),
            "fig6_tau2_cascade": dict(n=tuple(range(8, 17)), q=(2.0,)),
            "fig7_tau2_eigvecs": dict(n=(6, 7, 8, 9, 10), n2=(3, 5), q=(2.0,)),
            "fig8_tau2_iterates": dict(n=(6, 7, 8, 9, 10), n2=(3, 5), q=(2.0,), vectors_per_realization=32),
            "fig9_tauprime_vs_n2": dict(n=(6, 7, 8, 9, 10), n2=(3, 5, 7, 11, 13), q=(1.0,),
                                        fit_window=(1, -2), ensemble_size=2048),
            "cost_table": dict(n=(6, 7, 8, 9, 10), n2=(3, 5), q=(2.0,), p1=(0.1, 0.2, 0.3, 0.4),
                               ensemble_size=256, t=1000),
            "emulation_demo": dict(n=(6,), n2=(3,), p1=(0.3,), t=10),
        }[experiment]
        return replace(base, **per)

    def validate(self) -> "ExperimentConfig":
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.filter not in FILTERS:
            raise ConfigError(f"unknown filter {self.filter!r}")
        if self.average not in ("log", "linear"):
            raise ConfigError("average must be 'log' or 'linear'")
        if not self.n or any(k < 2 for k in self.n):
            raise ConfigError("n values must be >= 2")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.ensemble_size < 1:
            raise ConfigError("ensemble_size must be >= 1")
        if self.vectors_per_realization < 0:
            raise ConfigError("vectors_per_realization must be >= 0")
        if self.t < 0:
            raise ConfigError("t must be >= 0")
        if any(not 0.0 < p < 1.0 for p in self.p1):
            raise ConfigError("p1 values must lie in (0, 1)")
        exp = self.experiment
        uses_isrm = exp in ("fig2_zdensity", "fig3_zamplitude", "fig5_tauprime_vs_q", "fig7_tau2_eigvecs",
                            "fig8_tau2_iterates", "fig9_tauprime_vs_n2", "cost_table", "emulation_demo")
        if uses_isrm:
            if self.n1 < 1 or not self.n2:
                raise ConfigError("n1 and n2 must be given")
            for n2 in self.n2:
                if gcd(self.n1, n2) != 1:
                    raise ConfigError(f"n1={self.n1} and n2={n2} are not coprime")
                for n in self.n:
                    if (2**n * self.n1) % n2 == 0:
                        raise ConfigError(f"N*gamma integer for n={n}, n2={n2}")
        if exp in ("fig2_zdensity", "fig3_zamplitude", "fig5_tauprime_vs_q"):
            if len(self.n) != 1:
                raise ConfigError(f"{exp} takes a single n")
        if exp in ("fig2_zdensity", "fig3_zamplitude", "fig5_tauprime_vs_q", "fig7_tau2_eigvecs",
                   "fig9_tauprime_vs_n2", "cost_table"):
            if max(self.n) > DENSE_N_MAX:
                raise ConfigError(f"eigenvector experiments are capped at n <= {DENSE_N_MAX}")
        if exp == "emulation_demo" and max(self.n) > 8:
            raise ConfigError("emulation_demo registers are capped at n <= 8")
        if exp in ("cost_table",) and len(set(self.n)) < 3:
            raise ConfigError("cost_table needs at least 3 sizes to fit alpha and beta")
        if exp not in ("cost_table", "emulation_demo"):
            for n in self.n:
                j_min, j_max = resolve_window(self.fit_window, n)
                if j_min < 0 or j_max > n - 1 or j_max - j_min + 1 < 3:
                    raise ConfigError(f"fit_window {self.fit_window} leaves fewer than 3 levels at n={n}")
        if exp == "fig8_tau2_iterates" and self.vectors_per_realization == 0:
            raise ConfigError("fig8_tau2_iterates needs vectors_per_realization > 0")
        if not 0.0 < self.success_threshold <= 1.0:
            raise ConfigError("success_threshold must lie in (0, 1]")
        if self.shots < 1:
            raise ConfigError("shots must be >= 1")
        return self

    def output_path(self) -> Path:
        if self.output:
            return Path(self.output)
        return Path(os.environ.get(OUTPUT_DIR_ENV, ".")) / f"{self.experiment}.csv"

    def echo_items(self) -> list[tuple[str, str]]:
        """Serialized fields that determine the numeric output."""
        return [(k, v) for k, v in _items(self) if k not in self.RUNTIME_KEYS]


def _format(value: Any) -> str:
    if value is None:
        return "auto"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _items(cfg: ExperimentConfig) -> list[tuple[str, str]]:
    return [(f.name, _format(getattr(cfg, f.name))) for f in fields(cfg)]


def _parse_ints(text: str) -> tuple[int, ...]:
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part:
            lo, hi = part.split("..")
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return tuple(out)


def _parse_floats(text: str) -> tuple[float, ...]:
    return tuple(float(p) for p in text.split(",") if p.strip())


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


_PARSERS = {
    "n": _parse_ints,
    "n2": _parse_ints,
    "cost_n": _parse_ints,
    "p1": _parse_floats,
    "q": _parse_floats,
    "fit_window": lambda s: None if s.strip() == "auto" else tuple(int(p) for p in s.split(",")),
    "include_approx": _parse_bool,
    "n1": int,
    "ensemble_size": int,
    "vectors_per_realization": int,
    "t": int,
    "seed": int,
    "shots": int,
    "success_threshold": float,
    "workers": int,
    "filter": str.strip,
    "average": str.strip,
    "output": str.strip,
    "experiment": str.strip,
}


def apply_overrides(cfg: ExperimentConfig, values: Mapping[str, str]) -> ExperimentConfig:
    updates = {}
    for key, raw in values.items():
        key = key.strip().replace("-", "_")
        if key not in _PARSERS:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            updates[key] = _PARSERS[key](raw)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"bad value for {key}: {raw!r} ({exc})") from None
    if updates.get("fit_window") is not None and len(updates["fit_window"]) != 2:
        raise ConfigError("fit_window takes two integers j_min,j_max")
    return replace(cfg, **updates)


def parse_config(text: str, overrides: Optional[Mapping[str, str]] = None) -> ExperimentConfig:
    """Parse a config file body; unspecified keys take the experiment defaults."""
    values: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        k, v = line.split("=", 1)
        values[k.strip()] = v.strip()
    values.update(overrides or {})
    if "experiment" not in values:
        raise ConfigError("config must name an experiment")
    cfg = ExperimentConfig.defaults(values.pop("experiment").strip())
    return apply_overrides(cfg, values)


def serialize_config(cfg: ExperimentConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in _items(cfg))


def load_config(path, overrides: Optional[Mapping[str, str]] = None) -> ExperimentConfig:
    return parse_config(Path(path).read_text(), overrides)


__all__ = [
    "ConfigError",
    "EXPERIMENTS",
    "ExperimentConfig",
    "OUTPUT_DIR_ENV",
    "apply_overrides",
    "load_config",
    "parse_config",
    "serialize_config",
]
