"""Trace-driven SSD simulator comparing demand-mapped and learned flash translation layers."""

from .config import SimConfig
from .engine import Engine, IoRequest, percentile, run
from .errors import (AddressError, CapacityExhausted, ConfigError, ConsistencyError,
                     DeviceRuleViolation, SimError, StatisticsError, TraceParseError)
from .ftl import FTL_KINDS, make_ftl
from .geometry import FlashGeometry
from .nand import OpCostTable
from .report import MetricsReport, build_report
from .workload import GenSpec, generate, parse_trace, warmup

__version__ = "0.1.0"

__all__ = [
    "SimConfig", "Engine", "IoRequest", "percentile", "run", "AddressError", "CapacityExhausted",
    "ConfigError", "ConsistencyError", "DeviceRuleViolation", "SimError", "StatisticsError",
    "TraceParseError", "FTL_KINDS", "make_ftl", "FlashGeometry", "OpCostTable", "MetricsReport",
    "build_report", "GenSpec", "generate", "parse_trace", "warmup",
]
