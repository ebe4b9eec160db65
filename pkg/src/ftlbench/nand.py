"""NAND array emulation: page states, in-order programming, OOB, erase.

Payloads are not stored.  Each programmed page keeps only its out-of-band
metadata: the owning LPN (or GTD entry index for translation pages), the
write-sequence token standing in for the 4 KB of data, and optionally an
error interval used by the LeaFTL baseline.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

from .errors import DeviceRuleViolation
from .geometry import FlashGeometry

FREE = 0
VALID = 1
INVALID = 2

KIND_DATA = 0
KIND_TRANSLATION = 1

OP_CLASSES = ("data_read", "translation_read", "data_write", "translation_write",
              "gc_read", "gc_write", "erase")
READ_CLASSES = ("data_read", "translation_read", "gc_read")
WRITE_CLASSES = ("data_write", "translation_write", "gc_write")


@dataclass(frozen=True)
class OpCostTable:
    read_us: float = 40.0
    write_us: float = 200.0
    erase_us: float = 2000.0
    read_energy: float = 1.0
    write_energy: float = 5.0
    erase_energy: float = 50.0

    def __post_init__(self):
        for key, value in asdict(self).items():
            if value < 0:
                raise ValueError(f"{key} must be >= 0")


class FlashCounters:
    """Per-class flash operation tallies."""

    def __init__(self):
        self.counts = dict.fromkeys(OP_CLASSES, 0)

    def __getitem__(self, cls: str) -> int:
        return self.counts[cls]

    def reset(self) -> None:
        for key in self.counts:
            self.counts[key] = 0

    def as_dict(self) -> dict:
        return dict(self.counts)

    @property
    def total_reads(self) -> int:
        c = self.counts
        return c["data_read"] + c["translation_read"] + c["gc_read"]

    @property
    def total_writes(self) -> int:
        c = self.counts
        return c["data_write"] + c["translation_write"] + c["gc_write"]


class _FreeTimeline:
    """Stand-in when no engine is attached: every op starts immediately."""

    def schedule(self, chip: int, earliest_us: float, duration_us: float) -> float:
        return earliest_us + duration_us


class NandArray:
    def __init__(self, geom: FlashGeometry, costs: OpCostTable | None = None, timeline=None):
        self.geom = geom
        self.costs = costs or OpCostTable()
        self.timeline = timeline if timeline is not None else _FreeTimeline()
        n = geom.total_pages
        nb = geom.total_blocks
        self.state = bytearray(n)
        self.oob_lpn = [-1] * n
        self.oob_token = [-1] * n
        self.oob_kind = bytearray(n)
        self.oob_err: dict[int, tuple[int, int]] = {}
        self.write_pointer = [0] * nb
        self.erase_count = [0] * nb
        self.valid_count = [0] * nb
        self.invalid_count = [0] * nb
        self.n_valid = 0
        self.n_invalid = 0
        self.counters = FlashCounters()
        self.energy = 0.0
        self._ppb = geom.pages_per_block
        self._ppc = geom.pages_per_chip

    # -- queries --------------------------------------------------------
    def chip_of(self, ppn: int) -> int:
        return ppn // self._ppc

    def page_counts(self) -> tuple[int, int, int]:
        """(free, valid, invalid) over the whole device."""
        total = self.geom.total_pages
        return total - self.n_valid - self.n_invalid, self.n_valid, self.n_invalid

    def reset_stats(self) -> None:
        self.counters.reset()
        self.energy = 0.0

    # -- operations -----------------------------------------------------
    def program_page(self, ppn: int, lpn: int, token: int, cls: str, at: float = 0.0,
                     kind: int = KIND_DATA, error_interval: tuple[int, int] | None = None) -> float:
        if not 0 <= ppn < len(self.state):
            raise DeviceRuleViolation(f"program of PPN {ppn} outside the device")
        if self.state[ppn] != FREE:
            raise DeviceRuleViolation(f"program of non-free page {ppn}")
        block, page = divmod(ppn, self._ppb)
        if page != self.write_pointer[block]:
            raise DeviceRuleViolation(
                f"out-of-order program: page {page} of block {block}, "
                f"write pointer at {self.write_pointer[block]}")
        self.state[ppn] = VALID
        self.oob_lpn[ppn] = lpn
        self.oob_token[ppn] = token
        self.oob_kind[ppn] = kind
        if error_interval is not None:
            self.oob_err[ppn] = error_interval
        self.write_pointer[block] = page + 1
        self.valid_count[block] += 1
        self.n_valid += 1
        self.counters.counts[cls] += 1
        costs = self.costs
        self.energy += costs.write_energy
        return self.timeline.schedule(ppn // self._ppc, at, costs.write_us)

    def read_page(self, ppn: int, cls: str, at: float = 0.0, allow_free: bool = False):
        """Return (completion_us, oob_lpn, oob_token).

        ``allow_free`` permits sensing an erased page, which only a
        misprediction probe may do; it returns lpn and token of -1.
        """
        if not 0 <= ppn < len(self.state):
            raise DeviceRuleViolation(f"read of PPN {ppn} outside the device")
        if self.state[ppn] == FREE and not allow_free:
            raise DeviceRuleViolation(f"read of free page {ppn}")
        self.counters.counts[cls] += 1
        costs = self.costs
        self.energy += costs.read_energy
        done = self.timeline.schedule(ppn // self._ppc, at, costs.read_us)
        return done, self.oob_lpn[ppn], self.oob_token[ppn]

    def invalidate_page(self, ppn: int) -> None:
        if self.state[ppn] != VALID:
            raise DeviceRuleViolation(f"invalidate of page {ppn} in state {self.state[ppn]}")
        self.state[ppn] = INVALID
        block = ppn // self._ppb
        self.valid_count[block] -= 1
        self.invalid_count[block] += 1
        self.n_valid -= 1
        self.n_invalid += 1

    def erase_block(self, block: int, at: float = 0.0) -> float:
        if self.valid_count[block]:
            raise DeviceRuleViolation(
                f"erase of block {block} with {self.valid_count[block]} valid pages")
        start = block * self._ppb
        end = start + self.write_pointer[block]
        state = self.state
        for ppn in range(start, end):
            state[ppn] = FREE
            self.oob_lpn[ppn] = -1
            self.oob_token[ppn] = -1
            self.oob_kind[ppn] = 0
        if self.oob_err:
            for ppn in range(start, end):
                self.oob_err.pop(ppn, None)
        self.n_invalid -= self.invalid_count[block]
        self.invalid_count[block] = 0
        self.write_pointer[block] = 0
        self.erase_count[block] += 1
        self.counters.counts["erase"] += 1
        costs = self.costs
        self.energy += costs.erase_energy
        return self.timeline.schedule(block // (self._ppc // self._ppb), at, costs.erase_us)
