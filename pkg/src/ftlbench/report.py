"""Metrics reports and their serialisation."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Any

from .engine import percentile
from .ftl.base import CLASSIFICATIONS, UNMAPPED_READ


@dataclass
class LatencySummary:
    count: int = 0
    mean_us: float | None = None
    p50_us: float | None = None
    p99_us: float | None = None
    p999_us: float | None = None
    max_us: float | None = None

    @classmethod
    def of(cls, samples: list[float]) -> "LatencySummary":
        if not samples:
            return cls()
        return cls(len(samples), sum(samples) / len(samples), percentile(samples, 50),
                   percentile(samples, 99), percentile(samples, 99.9), max(samples))


@dataclass
class MetricsReport:
    ftl: str
    seed: int | None
    counters: dict[str, int]
    host_read_pages: int
    host_write_pages: int
    read_counts: dict[str, int]
    read_fractions: dict[str, float | None]
    unmapped_reads: int
    hit_sources: dict[str, int]
    cmt_hit_ratio: float | None
    cmt_capacity: int
    model_hit_ratio: float | None
    model_memory_bytes: int
    gc_count: int
    write_amplification: float | None
    erase_count: int
    latency: LatencySummary
    read_latency: LatencySummary
    write_latency: LatencySummary
    energy: float
    compute_us: float
    sim_end_us: float
    oracle_checked: int
    oracle_mismatches: int
    extra: dict[str, Any] = field(default_factory=dict)
    config: dict[str, Any] = field(default_factory=dict)

    @property
    def single_fraction(self) -> float | None:
        return self.read_fractions["Single"]

    @property
    def double_fraction(self) -> float | None:
        return self.read_fractions["Double"]

    @property
    def triple_fraction(self) -> float | None:
        return self.read_fractions["Triple"]

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def to_json(self) -> str:
        # sorted keys and fixed separators keep the bytes stable across runs
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, allow_nan=False) + "\n"


def build_report(ftl, result, *, config_echo: dict | None = None,
                 seed: int | None = None) -> MetricsReport:
    """Turn an engine ``RunResult`` and the FTL's counters into a report."""
    counts = {c: ftl.class_counts[c] for c in CLASSIFICATIONS}
    classified = sum(counts.values())
    fractions = {c: (n / classified if classified else None) for c, n in counts.items()}
    nand = ftl.nand
    counters = nand.counters
    host_writes = result.host_write_pages
    wa = counters.total_writes / host_writes if host_writes else None
    return MetricsReport(
        ftl=ftl.kind,
        seed=seed,
        counters=counters.as_dict(),
        host_read_pages=result.host_read_pages,
        host_write_pages=host_writes,
        read_counts=counts,
        read_fractions=fractions,
        unmapped_reads=ftl.class_counts[UNMAPPED_READ],
        hit_sources=dict(sorted(ftl.hit_counts.items())),
        cmt_hit_ratio=ftl.cmt_hit_ratio(),
        cmt_capacity=ftl.cmt_capacity(),
        model_hit_ratio=ftl.model_hit_ratio(),
        model_memory_bytes=ftl.model_memory_bytes(),
        gc_count=ftl.gc_count,
        write_amplification=wa,
        erase_count=counters["erase"],
        latency=LatencySummary.of(result.latencies),
        read_latency=LatencySummary.of(result.read_latencies),
        write_latency=LatencySummary.of(result.write_latencies),
        energy=nand.energy,
        compute_us=ftl.compute_us,
        sim_end_us=result.end_us,
        oracle_checked=result.oracle_checked,
        oracle_mismatches=result.oracle_mismatches,
        extra=ftl.extra_metrics(),
        config=dict(config_echo or {}),
    )


SUMMARY_FIELDS = ("single_fraction", "double_fraction", "triple_fraction", "cmt_hit_ratio",
                  "model_hit_ratio", "write_amplification", "gc_count", "p99_us", "p999_us",
                  "mean_us", "energy")


def headline(report: MetricsReport) -> dict[str, Any]:
    """The columns of one ``summary.csv`` row."""
    return {
        "single_fraction": report.single_fraction,
        "double_fraction": report.double_fraction,
        "triple_fraction": report.triple_fraction,
        "cmt_hit_ratio": report.cmt_hit_ratio,
        "model_hit_ratio": report.model_hit_ratio,
        "write_amplification": report.write_amplification,
        "gc_count": report.gc_count,
        "p99_us": report.latency.p99_us,
        "p999_us": report.latency.p999_us,
        "mean_us": report.latency.mean_us,
        "energy": report.energy,
    }
