"""Simulator configuration.

Text configs are flat ``key = value`` lines with dotted sections::

    geometry.channels = 2
    ftl = learnedftl
    workload.pattern = rand_read

``#`` starts a comment.  A file whose first non-blank character is ``{`` is
read as JSON instead; nested JSON objects are flattened to the same dotted
keys.  Unknown keys are rejected.  The five geometry keys are required,
everything else has a default.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import ConfigError

REQUIRED = (
    "geometry.channels",
    "geometry.ways",
    "geometry.planes",
    "geometry.blocks",
    "geometry.pages",
)

# key -> default; None means "the FTL variant's own default" (or unset)
DEFAULTS: dict[str, Any] = {
    "geometry.page_size": 4096,
    "op_fraction": 0.0625,
    "latency.read_us": 40.0,
    "latency.write_us": 200.0,
    "latency.erase_us": 2000.0,
    "energy.read": 1.0,
    "energy.write": 5.0,
    "energy.erase": 50.0,
    "ftl": "learnedftl",
    "cmt_fraction": None,
    "model.max_pieces": 8,
    "model.epsilon": 0.5,
    "model.predict_us": 0.65,
    "model.sort_train_us": 50.0,
    "model.group_entries": None,
    "gc.free_watermark": 2,
    "gc.t_blocks": None,
    "gc.t_encroach": None,
    "leaftl.epsilon": 4.0,
    "leaftl.buffer_pages": 2048,
    "workload.pattern": "rand_read",
    "workload.io_pages": 1,
    "workload.streams": 1,
    "workload.total_requests": 1000,
    "workload.read_fraction": 0.5,
    "workload.working_set": None,
    "workload.trace": None,
    "workload.trace_scale_num": 1,
    "workload.trace_scale_den": 1,
    "workload.open_loop": False,
    "warmup.multiplier": 0.0,
    "warmup.io_pages": 128,
    "verify": True,
    "seed": 0,
}

_TYPES: dict[str, type] = {
    "geometry.channels": int,
    "geometry.ways": int,
    "geometry.planes": int,
    "geometry.blocks": int,
    "geometry.pages": int,
    "geometry.page_size": int,
    "op_fraction": float,
    "latency.read_us": float,
    "latency.write_us": float,
    "latency.erase_us": float,
    "energy.read": float,
    "energy.write": float,
    "energy.erase": float,
    "ftl": str,
    "cmt_fraction": float,
    "model.max_pieces": int,
    "model.epsilon": float,
    "model.predict_us": float,
    "model.sort_train_us": float,
    "model.group_entries": int,
    "gc.free_watermark": int,
    "gc.t_blocks": int,
    "gc.t_encroach": int,
    "leaftl.epsilon": float,
    "leaftl.buffer_pages": int,
    "workload.pattern": str,
    "workload.io_pages": int,
    "workload.streams": int,
    "workload.total_requests": int,
    "workload.read_fraction": float,
    "workload.working_set": int,
    "workload.trace": str,
    "workload.trace_scale_num": int,
    "workload.trace_scale_den": int,
    "workload.open_loop": bool,
    "warmup.multiplier": float,
    "warmup.io_pages": int,
    "verify": bool,
    "seed": int,
}

KNOWN_KEYS = frozenset(_TYPES)


def _coerce(key: str, value: Any) -> Any:
    kind = _TYPES[key]
    if value is None:
        return None
    if isinstance(value, str):
        text = value.strip()
        if text.lower() in ("none", "null", ""):
            if key in REQUIRED:
                raise ConfigError(f"{key} must be set")
            return None
        if kind is bool:
            if text.lower() in ("true", "yes", "on", "1"):
                return True
            if text.lower() in ("false", "no", "off", "0"):
                return False
            raise ConfigError(f"{key}: expected a boolean, got {value!r}")
        if kind is str:
            return text
        try:
            return kind(text) if kind is float else int(text, 0)
        except ValueError:
            raise ConfigError(f"{key}: expected {kind.__name__}, got {value!r}") from None
    if kind is bool:
        if isinstance(value, bool):
            return value
        raise ConfigError(f"{key}: expected a boolean, got {value!r}")
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return value
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {value!r}")
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"{key}: expected a string, got {value!r}")
    return value


def _flatten(obj: dict, prefix: str = "") -> dict[str, Any]:
    out = {}
    for k, v in obj.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def parse_text(text: str) -> dict[str, Any]:
    """Raw ``key -> value`` pairs from config text (JSON or ``key = value``)."""
    if text.lstrip().startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON config: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("JSON config must be an object")
        return _flatten(data)
    out: dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"config line {lineno}: expected 'key = value'")
        key = key.strip()
        if key in out:
            raise ConfigError(f"config line {lineno}: duplicate key {key}")
        out[key] = value.strip()
    return out


@dataclass
class SimConfig:
    values: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_mapping(cls, raw: dict[str, Any]) -> "SimConfig":
        unknown = sorted(set(raw) - KNOWN_KEYS)
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        missing = [k for k in REQUIRED if k not in raw]
        if missing:
            raise ConfigError(f"missing required config key(s): {', '.join(missing)}")
        values = dict(DEFAULTS)
        for key, value in raw.items():
            values[key] = _coerce(key, value)
        cfg = cls(values)
        cfg.validate()
        return cfg

    @classmethod
    def from_text(cls, text: str) -> "SimConfig":
        return cls.from_mapping(parse_text(text))

    @classmethod
    def load(cls, path: str | Path) -> "SimConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        return cls.from_text(text)

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    def replace(self, **updates: Any) -> "SimConfig":
        """Copy with dotted keys given as ``{"gc.t_blocks": 8}``-style kwargs."""
        raw = dict(self.values)
        for key, value in updates.items():
            if key not in KNOWN_KEYS:
                raise ConfigError(f"unknown config key: {key}")
            raw[key] = value
        return SimConfig.from_mapping(raw)

    def validate(self) -> None:
        from .ftl import FTL_KINDS

        v = self.values
        if v["ftl"] not in FTL_KINDS:
            raise ConfigError(f"ftl must be one of {sorted(FTL_KINDS)}, got {v['ftl']!r}")
        if not 0 <= v["op_fraction"] < 1:
            raise ConfigError("op_fraction must lie in [0, 1)")
        cmt = v["cmt_fraction"]
        if cmt is not None and not 0 < cmt <= 1:
            raise ConfigError("cmt_fraction must lie in (0, 1]")
        for key in ("gc.t_blocks", "gc.t_encroach", "model.group_entries"):
            if v[key] is not None and v[key] < 1:
                raise ConfigError(f"{key} must be >= 1")
        if v["model.max_pieces"] < 1:
            raise ConfigError("model.max_pieces must be >= 1")
        if v["gc.free_watermark"] < 0:
            raise ConfigError("gc.free_watermark must be >= 0")
        if v["warmup.multiplier"] < 0:
            raise ConfigError("warmup.multiplier must be >= 0")

    def geometry(self):
        from .errors import AddressError
        from .geometry import FlashGeometry

        v = self.values
        try:
            return FlashGeometry(v["geometry.channels"], v["geometry.ways"], v["geometry.planes"],
                                 v["geometry.blocks"], v["geometry.pages"], v["geometry.page_size"])
        except AddressError as exc:
            raise ConfigError(str(exc)) from None

    def costs(self):
        from .nand import OpCostTable

        v = self.values
        try:
            return OpCostTable(v["latency.read_us"], v["latency.write_us"], v["latency.erase_us"],
                               v["energy.read"], v["energy.write"], v["energy.erase"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def ftl_kwargs(self) -> dict[str, Any]:
        """Constructor arguments for the selected FTL variant."""
        v = self.values
        kind = v["ftl"]
        kw: dict[str, Any] = {"costs": self.costs(), "op_fraction": v["op_fraction"],
                              "gc_free_watermark": v["gc.free_watermark"]}
        if kind != "ideal" and v["cmt_fraction"] is not None:
            kw["cmt_fraction"] = v["cmt_fraction"]
        if kind == "leaftl":
            kw["epsilon"] = v["leaftl.epsilon"]
            kw["buffer_pages"] = v["leaftl.buffer_pages"]
        elif kind == "learnedftl":
            kw.update(max_pieces=v["model.max_pieces"], epsilon=v["model.epsilon"],
                      group_entries=v["model.group_entries"], t_blocks=v["gc.t_blocks"],
                      t_encroach=v["gc.t_encroach"], predict_us=v["model.predict_us"],
                      sort_train_us=v["model.sort_train_us"])
        return kw

    def make_ftl(self):
        from .ftl import make_ftl

        return make_ftl(self.values["ftl"], self.geometry(), **self.ftl_kwargs())

    def echo(self) -> dict[str, Any]:
        """Every effective setting, defaults included."""
        return dict(sorted(self.values.items()))
