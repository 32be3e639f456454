"""Plain-text experiment configuration.

The format is ``key = value`` lines grouped under ``[section]`` headers.
``#`` and ``;`` start comment lines.  Every error names the offending line.
Relative paths are resolved against the directory of the config file.
"""

from __future__ import annotations

import dataclasses
import glob
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .sar import SarParams
from .scenes import TIERS, toy_params


class ConfigError(ValueError):
    pass


_SAR_FIELDS = [
    f.name for f in dataclasses.fields(SarParams) if f.name not in ("wavelength", "speed_of_light")
]

# section -> key -> (type, default)
SCHEMA: dict[str, dict[str, tuple[type, Any]]] = {
    "experiment": {
        "seed": (int, 0),
        "out": (str, "results"),
        "azimuth_cells": (int, 32),
        "range_cells": (int, 32),
    },
    "sar": {"preset": (str, "toy"), "aperture_pulses": (float, 24.0), **{k: (float, None) for k in _SAR_FIELDS}},
    "scene": {
        "source": (str, "synthetic"),
        "tier": (str, "sparse"),
        "count": (int, 4),
        "images": (str, ""),
        "noise_sigma": (float, 0.0),
    },
    "pattern": {
        "kind": (str, "uniform"),
        "budget": (float, 0.5),
        "min_spacing": (float, 0.1),
        "path": (str, ""),
    },
    "recon": {
        "method": (str, "modl"),
        "unroll_count": (int, 5),
        "cg_iterations": (int, 10),
        "lam": (float, 1.0),
        "weights": (str, ""),
        "lambda_l1": (float, 0.05),
        "ista_iterations": (int, 100),
    },
    "train": {
        "epochs": (int, 20),
        "count": (int, 8),
        "depth": (int, 4),
        "width": (int, 16),
        "lr_weights": (float, 1e-3),
        "lr_lambda": (float, 1e-3),
        "lr_pattern": (float, 1e-2),
        "train_pattern": (bool, True),
        "through_echo": (bool, True),
    },
    "evaluate": {
        "patterns": (str, "uniform, poisson, staggered"),
        "budgets": (str, "0.5, 0.25, 0.125"),
    },
}

PATTERN_KINDS = ("uniform", "poisson", "staggered", "jittered", "learned")
RECON_METHODS = ("mf", "ista", "modl")


@dataclass
class Entry:
    value: str
    line: int


def parse_config_text(text: str, source: str = "<config>") -> dict[str, dict[str, Entry]]:
    sections: dict[str, dict[str, Entry]] = {}
    current: str | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        if line.startswith("["):
            if not line.endswith("]") or len(line) < 3:
                raise ConfigError(f"{source}:{lineno}: malformed section header {line!r}")
            current = line[1:-1].strip().lower()
            if current not in SCHEMA:
                raise ConfigError(f"{source}:{lineno}: unknown section [{current}]")
            if current in sections:
                raise ConfigError(f"{source}:{lineno}: duplicate section [{current}]")
            sections[current] = {}
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        if current is None:
            raise ConfigError(f"{source}:{lineno}: key outside of any section")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.lower()
        if key not in SCHEMA[current]:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r} in [{current}]")
        if key in sections[current]:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r} in [{current}]")
        sections[current][key] = Entry(value, lineno)
    return sections


def _convert(kind: type, entry: Entry, source: str, where: str):
    text = entry.value
    try:
        if kind is bool:
            low = text.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(text)
        return kind(text)
    except ValueError:
        raise ConfigError(f"{source}:{entry.line}: {where} expects {kind.__name__}, got {text!r}") from None


@dataclass
class ExperimentConfig:
    values: dict[str, dict[str, Any]]
    lines: dict[tuple[str, str], int] = field(default_factory=dict)
    source: str = "<config>"
    base_dir: Path = field(default_factory=Path.cwd)

    def get(self, section: str, key: str):
        return self.values[section][key]

    def set(self, section: str, key: str, value) -> None:
        self.values[section][key] = value

    def where(self, section: str, key: str) -> str:
        line = self.lines.get((section, key))
        return f"{self.source}:{line}" if line else f"{self.source} [{section}] {key}"

    def path(self, section: str, key: str) -> Path:
        p = Path(self.get(section, key))
        return p if p.is_absolute() else self.base_dir / p

    @property
    def seed(self) -> int:
        return int(self.get("experiment", "seed"))

    @property
    def raster(self) -> tuple[int, int]:
        return self.get("experiment", "azimuth_cells"), self.get("experiment", "range_cells")

    def sar_params(self) -> SarParams:
        sar = self.values["sar"]
        preset = sar["preset"]
        if preset == "toy":
            base = toy_params(sar["aperture_pulses"])
        elif preset == "table2":
            base = SarParams.table2()
        else:
            raise ConfigError(f"{self.where('sar', 'preset')}: unknown preset {preset!r} (toy or table2)")
        overrides = {k: sar[k] for k in _SAR_FIELDS if sar.get(k) is not None}
        if not overrides:
            return base
        kwargs = {k: getattr(base, k) for k in _SAR_FIELDS}
        kwargs.update(overrides)
        try:
            return SarParams(**kwargs)
        except ValueError as exc:
            raise ConfigError(f"{self.source}: invalid [sar] overrides: {exc}") from None

    def image_paths(self) -> list[Path]:
        spec = self.get("scene", "images")
        paths: list[Path] = []
        for pattern in (s.strip() for s in spec.split(",")):
            if not pattern:
                continue
            full = pattern if Path(pattern).is_absolute() else str(self.base_dir / pattern)
            matches = sorted(glob.glob(full))
            if not matches:
                raise ConfigError(f"{self.where('scene', 'images')}: no files match {pattern!r}")
            paths += [Path(m) for m in matches]
        return paths

    def validate(self) -> None:
        v = self.values
        na, nr = self.raster
        if na < 2 or nr < 2:
            raise ConfigError(f"{self.where('experiment', 'azimuth_cells')}: raster must be at least 2x2")
        budget = v["pattern"]["budget"]
        if not 0 < budget <= 1:
            raise ConfigError(f"{self.where('pattern', 'budget')}: budget fraction must be in (0, 1], got {budget}")
        if v["pattern"]["min_spacing"] < 0:
            raise ConfigError(f"{self.where('pattern', 'min_spacing')}: min_spacing must be non-negative")
        kind = v["pattern"]["kind"]
        if kind not in PATTERN_KINDS:
            raise ConfigError(f"{self.where('pattern', 'kind')}: unknown pattern kind {kind!r}")
        if kind == "learned":
            if not v["pattern"]["path"]:
                raise ConfigError(f"{self.where('pattern', 'kind')}: learned pattern needs [pattern] path")
            if not self.path("pattern", "path").is_file():
                raise ConfigError(f"{self.where('pattern', 'path')}: file not found: {self.path('pattern', 'path')}")
        method = v["recon"]["method"]
        if method not in RECON_METHODS:
            raise ConfigError(f"{self.where('recon', 'method')}: unknown recon method {method!r}")
        if v["recon"]["weights"] and not self.path("recon", "weights").is_file():
            raise ConfigError(f"{self.where('recon', 'weights')}: file not found: {self.path('recon', 'weights')}")
        for key in ("unroll_count", "cg_iterations", "ista_iterations"):
            if v["recon"][key] < 1:
                raise ConfigError(f"{self.where('recon', key)}: must be at least 1")
        if v["recon"]["lam"] < 0:
            raise ConfigError(f"{self.where('recon', 'lam')}: lam must be non-negative")
        source = v["scene"]["source"]
        if source == "image":
            self.image_paths()
        elif source != "synthetic":
            raise ConfigError(f"{self.where('scene', 'source')}: scene source must be synthetic or image")
        if v["scene"]["tier"] not in TIERS:
            raise ConfigError(f"{self.where('scene', 'tier')}: unknown tier {v['scene']['tier']!r}")
        if v["scene"]["count"] < 1 or v["train"]["count"] < 1:
            raise ConfigError(f"{self.where('scene', 'count')}: scene counts must be positive")
        if v["train"]["epochs"] < 0:
            raise ConfigError(f"{self.where('train', 'epochs')}: epochs must be non-negative")
        for b in self.evaluation_budgets():
            if not 0 < b <= 1:
                raise ConfigError(f"{self.where('evaluate', 'budgets')}: budget {b} outside (0, 1]")
        for k in self.evaluation_patterns():
            if k not in PATTERN_KINDS:
                raise ConfigError(f"{self.where('evaluate', 'patterns')}: unknown pattern kind {k!r}")
        self.sar_params()

    def evaluation_patterns(self) -> list[str]:
        return [s.strip() for s in self.get("evaluate", "patterns").split(",") if s.strip()]

    def evaluation_budgets(self) -> list[float]:
        try:
            return [float(s) for s in self.get("evaluate", "budgets").split(",") if s.strip()]
        except ValueError:
            raise ConfigError(f"{self.where('evaluate', 'budgets')}: budgets must be numbers") from None


def default_config() -> ExperimentConfig:
    return ExperimentConfig({s: {k: d for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()})


def load_config(path=None, text: str | None = None) -> ExperimentConfig:
    """Parse and validate a config file (or literal text); missing keys take defaults."""
    if path is not None:
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        source, base = str(path), path.parent
    else:
        source, base = "<config>", Path.cwd()
    cfg = default_config()
    cfg.source, cfg.base_dir = source, base
    for section, entries in parse_config_text(text or "", source).items():
        for key, entry in entries.items():
            kind = SCHEMA[section][key][0]
            cfg.values[section][key] = _convert(kind, entry, source, f"[{section}] {key}")
            cfg.lines[(section, key)] = entry.line
    cfg.validate()
    return cfg
