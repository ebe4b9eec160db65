"""Synthetic workloads, trace parsing and device warmup.

Random choices come from xorshift64* (shifts 12, 25, 27; multiplier
2685821657736338717) seeded through splitmix64, so a seed gives the same
request sequence on every platform.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable

from .engine import Engine, IoRequest
from .errors import ConfigError, TraceParseError

MASK64 = (1 << 64) - 1
XORSHIFT_MULTIPLIER = 2685821657736338717

PATTERNS = ("seq_read", "rand_read", "seq_write", "rand_write", "mixed")


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


class Xorshift64Star:
    def __init__(self, seed: int):
        self.state = splitmix64(seed & MASK64) or 1

    def next_u64(self) -> int:
        x = self.state
        x ^= x >> 12
        x ^= (x << 25) & MASK64
        x ^= x >> 27
        self.state = x
        return (x * XORSHIFT_MULTIPLIER) & MASK64

    def below(self, n: int) -> int:
        """Uniform integer in [0, n) by rejection, without modulo bias."""
        if n < 1:
            raise ValueError("n must be >= 1")
        limit = (1 << 64) - (1 << 64) % n
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n

    def random(self) -> float:
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))


@dataclass
class GenSpec:
    pattern: str = "rand_read"
    io_pages: int = 1
    streams: int = 1
    total_requests: int = 1000
    seed: int = 0
    working_set: int | None = None  # pages; None means the whole logical space
    read_fraction: float = 0.5

    def validate(self, logical_pages: int) -> int:
        if self.pattern not in PATTERNS:
            raise ConfigError(f"unknown pattern {self.pattern!r}; expected one of {PATTERNS}")
        if self.io_pages < 1 or self.streams < 1 or self.total_requests < 0:
            raise ConfigError("io_pages and streams must be >= 1, total_requests >= 0")
        if not 0 <= self.read_fraction <= 1:
            raise ConfigError("read_fraction must lie in [0, 1]")
        ws = logical_pages if self.working_set is None else self.working_set
        if ws > logical_pages:
            raise ConfigError(f"working set of {ws} pages exceeds logical capacity {logical_pages}")
        if ws < self.io_pages:
            raise ConfigError("working set smaller than one request")
        return ws


def generate(spec: GenSpec, logical_pages: int) -> list[IoRequest]:
    """Deterministic request list; request ``i`` belongs to stream ``i % streams``."""
    ws = spec.validate(logical_pages)
    rng = Xorshift64Star(spec.seed)
    io = spec.io_pages
    slots = ws // io
    out = []
    for i in range(spec.total_requests):
        pattern = spec.pattern
        if pattern == "mixed":
            op = "R" if rng.random() < spec.read_fraction else "W"
            lpn = rng.below(ws - io + 1)
        elif pattern.startswith("seq"):
            op = "R" if pattern == "seq_read" else "W"
            lpn = (i % slots) * io
        else:
            op = "R" if pattern == "rand_read" else "W"
            lpn = rng.below(ws - io + 1)
        out.append(IoRequest(0.0, op, lpn, io, i % spec.streams))
    return out


_TRACE_LINE = re.compile(r"(\d+),([RW]),(\d+),(\d+)")


def parse_trace(lines: Iterable[str], logical_pages: int, scale: tuple[int, int] = (1, 1),
                streams: int = 1) -> list[IoRequest]:
    """Parse ``timestamp_us,op,lpn,npages`` records.

    Lines starting with ``#`` and blank lines are skipped.  With ``scale =
    (num, den)`` each LPN becomes ``(lpn * num // den) % logical_pages``.
    """
    num, den = scale
    if num < 1 or den < 1:
        raise ConfigError("trace scale factors must be >= 1")
    out = []
    for lineno, raw in enumerate(lines, 1):
        line = raw.rstrip("\r\n")
        if not line or line.startswith("#"):
            continue
        m = _TRACE_LINE.fullmatch(line)
        if m is None:
            raise TraceParseError(lineno, line, "expected timestamp_us,op,lpn,npages")
        ts, op, lpn, npages = int(m[1]), m[2], int(m[3]), int(m[4])
        if npages < 1:
            raise TraceParseError(lineno, line, "npages must be >= 1")
        if (num, den) != (1, 1):
            lpn = lpn * num // den % logical_pages
        if lpn + npages > logical_pages:
            raise ConfigError(f"trace line {lineno}: LPN range {lpn}+{npages} beyond capacity "
                              f"{logical_pages}")
        out.append(IoRequest(float(ts), op, lpn, npages, len(out) % streams))
    return out


def warmup(ftl, multiplier: float, *, seed: int = 0, engine: Engine | None = None,
           io_pages: int = 128) -> int:
    """Write ``multiplier`` x the logical capacity: one sequential pass, then
    uniformly random requests.  Counters and chip clocks are reset
    afterwards; returns the number of GC runs the warmup caused.
    """
    if multiplier <= 0:
        return 0
    engine = engine or Engine(ftl)
    n = ftl.logical_pages
    io = min(io_pages, n)
    seq = [IoRequest(0.0, "W", lpn, min(io, n - lpn)) for lpn in range(0, n, io)]
    engine.run(seq)
    extra = round((multiplier - 1) * n / io)
    if extra > 0:
        rng = Xorshift64Star(seed ^ 0x5EED)
        engine.run([IoRequest(0.0, "W", rng.below(n - io + 1), io) for _ in range(extra)])
    ftl.flush()
    gc_runs = ftl.gc_count
    ftl.reset_stats()
    return gc_runs
