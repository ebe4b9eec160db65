"""Deterministic discrete-event scheduler.

Each chip is a single resource: an operation starts when both the chip is
free and its data dependencies are met.  Host streams are closed-loop (one
outstanding request each, like psync threads); the stream whose next issue
time is earliest is served next.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from .errors import StatisticsError


class ChipTimeline:
    def __init__(self, n_chips: int):
        self.next_free = [0.0] * n_chips

    def schedule(self, chip: int, earliest_us: float, duration_us: float) -> float:
        nf = self.next_free
        start = nf[chip] if nf[chip] > earliest_us else earliest_us
        done = start + duration_us
        nf[chip] = done
        return done

    def reset(self) -> None:
        self.next_free = [0.0] * len(self.next_free)


def schedule_flash_op(timeline: ChipTimeline, chip: int, earliest_start_us: float,
                      duration_us: float) -> float:
    if duration_us < 0:
        raise ValueError("duration must be >= 0")
    return timeline.schedule(chip, earliest_start_us, duration_us)


def percentile(samples: Sequence[float], p: float) -> float:
    """Nearest-rank percentile: the ceil(p/100 * n)-th smallest sample."""
    if not samples:
        raise StatisticsError("percentile of an empty sample set")
    if not 0 < p <= 100:
        raise StatisticsError(f"percentile rank {p} outside (0, 100]")
    # str() keeps 99.9 exact so the rank is not pushed up by float error
    rank = math.ceil(Fraction(str(p)) * len(samples) / 100)
    return sorted(samples)[max(rank, 1) - 1]


@dataclass(slots=True)
class IoRequest:
    arrival_us: float
    op: str  # "R" or "W"
    start_lpn: int
    npages: int
    stream_id: int = 0


class RunResult:
    """Raw outcome of one engine pass, before it is turned into a report."""

    def __init__(self):
        self.latencies: list[float] = []
        self.read_latencies: list[float] = []
        self.write_latencies: list[float] = []
        self.host_read_pages = 0
        self.host_write_pages = 0
        self.oracle_checked = 0
        self.oracle_mismatches = 0
        self.end_us = 0.0


class Engine:
    """Drives request streams through an FTL.

    ``verify`` keeps a shadow map of the latest token written per LPN and
    compares every read against it.
    """

    def __init__(self, ftl, open_loop: bool = False, verify: bool = False):
        self.ftl = ftl
        self.open_loop = open_loop
        self.verify = verify
        self.shadow: dict[int, int] = {}
        self.next_token = 0

    def _check(self, req: IoRequest) -> None:
        if req.npages < 1 or req.start_lpn < 0 or req.start_lpn + req.npages > self.ftl.logical_pages:
            raise ValueError(f"request {req} outside the logical address space")
        if req.op not in ("R", "W"):
            raise ValueError(f"unknown op {req.op!r}")

    def _serve(self, req: IoRequest, issue: float, result: RunResult) -> float:
        ftl = self.ftl
        if req.op == "R":
            done, outcomes = ftl.read(req.start_lpn, req.npages, issue)
            result.host_read_pages += req.npages
            if self.verify:
                shadow = self.shadow
                for i, outcome in enumerate(outcomes):
                    expected = shadow.get(req.start_lpn + i, -1)
                    result.oracle_checked += 1
                    if outcome.token != expected:
                        result.oracle_mismatches += 1
        else:
            token = self.next_token
            self.next_token += req.npages
            done = ftl.write(req.start_lpn, req.npages, token, issue)
            result.host_write_pages += req.npages
            if self.verify:
                for i in range(req.npages):
                    self.shadow[req.start_lpn + i] = token + i
        return done

    def run(self, requests: Iterable[IoRequest]) -> RunResult:
        result = RunResult()
        requests = list(requests)
        for req in requests:
            self._check(req)
        if self.open_loop:
            order = sorted(range(len(requests)), key=lambda i: (requests[i].arrival_us, i))
            for i in order:
                req = requests[i]
                done = self._serve(req, req.arrival_us, result)
                self._record(req, req.arrival_us, done, result)
            return result

        streams: dict[int, list[IoRequest]] = {}
        for req in requests:
            streams.setdefault(req.stream_id, []).append(req)
        cursor = dict.fromkeys(streams, 0)
        heap = [(reqs[0].arrival_us, sid) for sid, reqs in streams.items()]
        heapq.heapify(heap)
        while heap:
            issue, sid = heapq.heappop(heap)
            idx = cursor[sid]
            req = streams[sid][idx]
            done = self._serve(req, issue, result)
            self._record(req, issue, done, result)
            idx += 1
            cursor[sid] = idx
            if idx < len(streams[sid]):
                heapq.heappush(heap, (done, sid))
        return result

    @staticmethod
    def _record(req: IoRequest, issue: float, done: float, result: RunResult) -> None:
        latency = done - issue
        result.latencies.append(latency)
        if req.op == "R":
            result.read_latencies.append(latency)
        else:
            result.write_latencies.append(latency)
        if done > result.end_us:
            result.end_us = done


def drain(ftl, result: RunResult) -> None:
    """Write back anything the FTL still buffers so the counters cover every host write."""
    result.end_us = max(result.end_us, ftl.flush(result.end_us))


def run(workload: Iterable[IoRequest], ftl, *, verify: bool = False, open_loop: bool = False,
        config_echo: dict | None = None, seed: int | None = None):
    """Run ``workload`` on ``ftl`` from its current state and return a MetricsReport."""
    from .report import build_report

    engine = Engine(ftl, open_loop=open_loop, verify=verify)
    result = engine.run(workload)
    drain(ftl, result)
    return build_report(ftl, result, config_echo=config_echo, seed=seed)
