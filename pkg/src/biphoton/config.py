"""Run configuration files (TOML or JSON, same schema).

Every physical key carries its unit as a suffix::

    seed = 7
    threads = 1
    output_dir = "out"

    [geometry]
    lambda_sp_nm = 780.0
    lambda_pd_nm = 776.0
    cell_length_mm = 25.0
    detuning_ghz = [-1.1, 1.0]
    theta_deg = "0:3:0.01"
    collection_angle_deg = 1.4

    [source]              # [source_b] has the same keys; missing ones fall back to [source]
    preset = "paper-2023"
    detected_rate_kcps = 200.0    # or pair_rate_hz
    duration_s = 1.0
    jitter_fwhm_ps = 55.0

    [analysis]
    bin_ps = 100
    tau_min_ps = -10000
    tau_max_ps = 20000
    window_ns = 3.5
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field, replace
from typing import Any

import tomli

from . import presets
from .phasematch import OpticalGeometry, ghz
from .sim import SourceConfig
from .temporal import TemporalMode


class ConfigError(ValueError):
    pass


class ConfigParseError(ConfigError):
    """The file itself is not valid TOML/JSON."""


SOURCE_KEYS = {
    "preset", "pair_rate_hz", "detected_rate_kcps", "duration_s",
    "signal_transmission", "idler_transmission", "signal_noise_hz", "idler_noise_hz",
    "jitter_fwhm_ps", "dead_time_ns", "rise_time_ns", "decay_time_ns",
}
GEOMETRY_KEYS = {"lambda_sp_nm", "lambda_pd_nm", "cell_length_mm", "detuning_ghz", "theta_deg",
                 "collection_angle_deg"}
ANALYSIS_KEYS = {"bin_ps", "tau_min_ps", "tau_max_ps", "window_ns", "window_offset_ns",
                 "hom_bin_ps", "hom_max_delay_ns", "baseline_ns"}
TOP_KEYS = {"seed", "threads", "output_dir", "geometry", "source", "source_b", "analysis"}


@dataclass
class AnalysisParams:
    bin_ps: int = 100
    tau_min_ps: int = -10_000
    tau_max_ps: int = 20_000
    window_ns: float = 3.5
    window_offset_ns: float = 0.0
    hom_bin_ps: int = 100
    hom_max_delay_ns: float = 20.0
    baseline_ns: float = 5.0

    def __post_init__(self):
        if self.bin_ps <= 0 or self.hom_bin_ps <= 0:
            raise ConfigError("bin widths must be positive")
        if self.window_ns <= 0:
            raise ConfigError("window_ns must be positive")
        if self.tau_max_ps <= self.tau_min_ps:
            raise ConfigError("tau_max_ps must exceed tau_min_ps")


@dataclass
class RunConfig:
    geometry: dict[str, Any] = field(default_factory=dict)
    source: dict[str, Any] = field(default_factory=lambda: {"preset": "paper-2023"})
    source_b: dict[str, Any] = field(default_factory=dict)
    analysis: AnalysisParams = field(default_factory=AnalysisParams)
    output_dir: str = "."
    seed: int | None = None
    threads: int = 1

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        unknown = set(d) - TOP_KEYS
        if unknown:
            raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
        for name, allowed in (("geometry", GEOMETRY_KEYS), ("source", SOURCE_KEYS),
                              ("source_b", SOURCE_KEYS), ("analysis", ANALYSIS_KEYS)):
            bad = set(d.get(name, {})) - allowed
            if bad:
                raise ConfigError(f"unknown keys in [{name}]: {sorted(bad)}")
        src = dict(d.get("source", {}))
        src.setdefault("preset", "paper-2023")
        for s in (src, d.get("source_b", {})):
            if "preset" in s and s["preset"] not in presets.PRESETS:
                raise ConfigError(f"unknown preset {s['preset']!r}")
        try:
            analysis = AnalysisParams(**d.get("analysis", {}))
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        seed = d.get("seed")
        if seed is not None and (not isinstance(seed, int) or not 0 <= seed < 2**64):
            raise ConfigError("seed must be a 64-bit unsigned integer")
        threads = int(d.get("threads", 1))
        if threads < 1:
            raise ConfigError("threads must be >= 1")
        return cls(dict(d.get("geometry", {})), src, dict(d.get("source_b", {})), analysis,
                   str(d.get("output_dir", ".")), seed, threads)

    def to_dict(self) -> dict:
        """Resolved settings for provenance; ``threads`` is left out since results do not depend on it."""
        out = {
            "geometry": dict(self.geometry),
            "source": dict(self.source),
            "source_b": dict(self.source_b),
            "analysis": asdict(self.analysis),
            "output_dir": self.output_dir,
        }
        if self.seed is not None:
            out["seed"] = self.seed
        return out

    def optical_geometry(self, detuning_ghz: float = 0.0, theta_deg: float = 0.0) -> OpticalGeometry:
        g = self.geometry
        return OpticalGeometry(
            lambda_sp=float(g.get("lambda_sp_nm", 780.0)) * 1e-9,
            lambda_pd=float(g.get("lambda_pd_nm", 776.0)) * 1e-9,
            cell_length=float(g.get("cell_length_mm", 25.0)) * 1e-3,
            pump_detuning=ghz(detuning_ghz),
            signal_angle=math.radians(theta_deg),
        )

    def source_config(self, which: str = "source", seed: int | None = None) -> SourceConfig:
        d = dict(self.source)
        if which == "source_b":
            d.update(self.source_b)
        return source_from_dict(d, self.seed if seed is None else seed)


def source_from_dict(d: dict, seed: int | None) -> SourceConfig:
    p = presets.get(d.get("preset", "paper-2023"))
    overrides: dict[str, Any] = {}
    table = {
        "signal_transmission": ("signal_transmission", 1.0),
        "idler_transmission": ("idler_transmission", 1.0),
        "signal_noise_hz": ("signal_noise_rate", 1.0),
        "idler_noise_hz": ("idler_noise_rate", 1.0),
        "jitter_fwhm_ps": ("jitter_fwhm", 1e-12),
        "dead_time_ns": ("dead_time", 1e-9),
    }
    for key, (attr, scale) in table.items():
        if key in d:
            overrides[attr] = float(d[key]) * scale
    if "rise_time_ns" in d or "decay_time_ns" in d:
        overrides["mode"] = TemporalMode(float(d.get("rise_time_ns", p.mode.rise_time * 1e9)) * 1e-9,
                                         float(d.get("decay_time_ns", p.mode.decay_time * 1e9)) * 1e-9)
    if "pair_rate_hz" in d and "detected_rate_kcps" in d:
        raise ConfigError("give pair_rate_hz or detected_rate_kcps, not both")
    if "pair_rate_hz" in d:
        pair_rate = float(d["pair_rate_hz"])
    else:
        # convert against the resolved transmissions and mode, not the preset's
        detected = float(d.get("detected_rate_kcps", 200.0)) * 1e3
        resolved = replace(p, **{k: v for k, v in overrides.items()
                                 if k in ("signal_transmission", "idler_transmission", "mode")})
        try:
            pair_rate = resolved.pair_rate_for(detected)
        except ZeroDivisionError as exc:
            raise ConfigError("detected rate needs non-zero transmissions") from exc
    try:
        return p.source(pair_rate=pair_rate, duration=float(d.get("duration_s", 1.0)),
                        seed=0 if seed is None else int(seed), **overrides)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load(path: str | os.PathLike) -> RunConfig:
    path = os.fspath(path)
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        if path.endswith(".json"):
            data = json.loads(raw)
        else:
            data = tomli.loads(raw.decode())
    except (json.JSONDecodeError, tomli.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigParseError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config root must be a table")
    return RunConfig.from_dict(data)
