"""Shared FTL plumbing: construction, counters, read outcomes."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..engine import ChipTimeline
from ..errors import ConfigError
from ..geometry import FlashGeometry
from ..mapping import ENTRIES_PER_TPAGE
from ..nand import NandArray, OpCostTable

SINGLE = "Single"
DOUBLE = "Double"
TRIPLE = "Triple"
UNMAPPED_READ = "Unmapped"
CLASSIFICATIONS = (SINGLE, DOUBLE, TRIPLE)


@dataclass(slots=True)
class ReadOutcome:
    classification: str
    hit_source: str | None
    flash_reads: list = field(default_factory=list)  # (class, chip) in issue order
    token: int = -1
    done: float = 0.0


def logical_pages_for(geom: FlashGeometry, op_fraction: float) -> int:
    if not 0 <= op_fraction < 1:
        raise ConfigError("op_fraction must lie in [0, 1)")
    n = int(geom.total_pages * (1 - op_fraction))
    if n < 1:
        raise ConfigError("no logical capacity left after over-provisioning")
    return n


class BaseFtl:
    """Common state.  Subclasses implement ``read`` and ``write``.

    ``read(lpn, npages, at) -> (done, [ReadOutcome])``;
    ``write(lpn, npages, token_start, at) -> done``.
    """

    kind = "base"

    def __init__(self, geom: FlashGeometry, costs: OpCostTable | None = None,
                 op_fraction: float = 0.0625):
        self.geom = geom
        self.timeline = ChipTimeline(geom.chips)
        self.nand = NandArray(geom, costs, self.timeline)
        self.logical_pages = logical_pages_for(geom, op_fraction)
        self.n_entries = max(1, -(-geom.total_pages // ENTRIES_PER_TPAGE))
        self.class_counts = dict.fromkeys(CLASSIFICATIONS + (UNMAPPED_READ,), 0)
        self.hit_counts: dict[str, int] = {}
        self.gc_count = 0
        self.compute_us = 0.0

    # -- bookkeeping ----------------------------------------------------
    def _outcome(self, classification: str, hit_source: str | None, reads: list,
                 token: int, done: float) -> ReadOutcome:
        self.class_counts[classification] += 1
        if hit_source is not None:
            self.hit_counts[hit_source] = self.hit_counts.get(hit_source, 0) + 1
        return ReadOutcome(classification, hit_source, reads, token, done)

    def _data_read(self, ppn: int, at: float, reads: list) -> tuple[float, int]:
        done, _, token = self.nand.read_page(ppn, "data_read", at)
        reads.append(("data_read", self.nand.chip_of(ppn)))
        return done, token

    def flush(self, at: float = 0.0) -> float:
        return at

    def reset_stats(self) -> None:
        self.nand.reset_stats()
        self.timeline.reset()
        for key in self.class_counts:
            self.class_counts[key] = 0
        self.hit_counts.clear()
        self.gc_count = 0
        self.compute_us = 0.0

    # -- reporting ------------------------------------------------------
    def cmt_capacity(self) -> int:
        return 0

    def cmt_hit_ratio(self) -> float | None:
        return None

    def model_hit_ratio(self) -> float | None:
        return None

    def model_memory_bytes(self) -> int:
        return 0

    def extra_metrics(self) -> dict:
        return {}

    def check_consistency(self) -> None:
        """Raise ConsistencyError if internal structures disagree."""
