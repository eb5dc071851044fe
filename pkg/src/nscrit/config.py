"""Flat ``section.key = value`` run configuration.

Blank lines and ``#`` comments are ignored. Every key must appear in
:data:`SCHEMA`; values are parsed to the declared type and missing keys take
their defaults, so the resolved mapping is complete.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

__all__ = ["ConfigError", "SCHEMA", "Config", "parse_config", "load_config"]


class ConfigError(ValueError):
    """Malformed configuration; messages carry the offending line number."""


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _floats(text: str) -> tuple:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _ints(text: str) -> tuple:
    return tuple(int(x) for x in text.split(",") if x.strip())


def _opt_float(text: str):
    return None if text.lower() in ("none", "") else float(text)


def _opt_str(text: str):
    return None if text.lower() in ("none", "") else text


# key: (parser, default)
SCHEMA = {
    "grid.n": (int, 32),
    "grid.box_length": (float, 2 * math.pi),
    "grid.dealias_fraction": (float, 2.0 / 3.0),
    "data.family": (str, "taylor_green"),
    "data.amplitude": (float, 1.0),
    "data.seed": (int, 0),
    "data.spectrum_slope": (float, -2.0),
    "data.offset": (_floats, (0.0, 0.0, 0.0)),
    "data.wavenumber": (int, 1),
    "data.ring_radius": (float, 0.25),
    "data.core_radius": (float, 0.15),
    "data.path": (_opt_str, None),
    "solver.method": (str, "ifrk4"),
    "solver.horizon": (float, 1.0),
    "solver.dt": (float, 1e-3),
    "solver.stride": (int, 10),
    "solver.cfl_limit": (float, 0.5),
    "solver.use_caps": (_bool, True),
    "picard.tol": (float, 1e-10),
    "picard.max_iter": (int, 50),
    "picard.n_intervals": (int, 64),
    "picard.quad_nodes": (int, 16),
    "picard.growth_window": (int, 3),
    "caps.hhalf_factor": (float, 20.0),
    "caps.tail_fraction": (float, 1e-3),
    "caps.x_norm": (_opt_float, None),
    "output.dir": (str, "out"),
    "output.snapshots": (_bool, True),
    "runtime.workers": (int, 1),
    "experiment.lam": (int, 2),
    "experiment.eta_fraction": (float, 0.1),
    "experiment.bracket": (_floats, ()),
    "experiment.tol": (float, 0.05),
    "experiment.perturbation": (str, "modulation"),
    "experiment.perturbation_amplitude": (float, 0.2),
    "experiment.wavenumbers": (_ints, (2, 4, 8, 16)),
    "experiment.k_max": (int, 4),
    "experiment.seeds": (_ints, (0, 1, 2, 3, 4)),
    "probe.center": (_floats, (math.pi / 2, math.pi / 2, math.pi / 2)),
    "probe.radius": (float, 0.5),
    "probe.n_points": (int, 12),
}


@dataclass(frozen=True)
class Config:
    values: dict
    source: str = "<string>"

    def __getitem__(self, key: str):
        return self.values[key]

    def section(self, name: str) -> dict:
        pre = name + "."
        return {k[len(pre):]: v for k, v in self.values.items() if k.startswith(pre)}

    def as_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in sorted(self.values.items())}


def parse_config(text: str, source: str = "<string>") -> Config:
    values = {k: default for k, (_, default) in SCHEMA.items()}
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, _, val = (part.strip() for part in line.partition("="))
        if key not in SCHEMA:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r} (first set on line {seen[key]})")
        seen[key] = lineno
        parser = SCHEMA[key][0]
        try:
            values[key] = parser(val)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from None
    if len(values["data.offset"]) != 3:
        raise ConfigError(f"{source}:{seen.get('data.offset', 0)}: data.offset needs three components")
    if values["solver.method"] not in ("ifrk4", "picard"):
        raise ConfigError(
            f"{source}:{seen.get('solver.method', 0)}: solver.method must be 'ifrk4' or 'picard'"
        )
    if values["runtime.workers"] < 1:
        raise ConfigError(f"{source}:{seen.get('runtime.workers', 0)}: runtime.workers must be >= 1")
    return Config(values, source)


def load_config(path) -> Config:
    path = Path(path)
    return parse_config(path.read_text(), str(path))
