"""Cost model of LeaFTL: learned segments, an LSM-style segment table and a
byte-budgeted model cache.

Writes go to a DRAM data buffer; a full buffer is sorted by LPN and written
out, and one batch of segments is learned per translation-page span.  The
simulator keeps an exact LPN -> PPN table next to the segments so that the
answer of every read is known; segments only decide what a read costs.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass, field

from ..alloc_gc import DynamicAllocator
from ..errors import ConsistencyError
from ..mapping import ENTRIES_PER_TPAGE, TPAGE_SHIFT, UNMAPPED
from ..nand import KIND_TRANSLATION, VALID
from .base import DOUBLE, SINGLE, TRIPLE, UNMAPPED_READ, BaseFtl
from .ideal import DynamicWriteMixin

SEGMENT_BYTES = 11
MAX_SEGMENT_SPAN = 256


@dataclass(eq=False)
class LeaSegment:
    start: int  # S
    slope: float  # K
    length: int  # L: LPN extent beyond S
    intercept: float  # I
    approximate: bool
    level: int = 0
    members: set = field(default_factory=set)

    def predict(self, lpn: int) -> int:
        return round(self.slope * lpn + self.intercept)


def fit_segments(pairs: list[tuple[int, int]], epsilon: float) -> list[tuple[LeaSegment, list]]:
    """Greedy PLR over sorted ``(lpn, ppn)`` pairs; each segment spans < 256 LPNs."""
    out = []
    n = len(pairs)
    i = 0
    while i < n:
        x0, y0 = pairs[i]
        lo, hi = -math.inf, math.inf
        j = i + 1
        while j < n:
            x, y = pairs[j]
            if x - x0 >= MAX_SEGMENT_SPAN:
                break
            dx = x - x0
            nlo = max(lo, (y - epsilon - y0) / dx)
            nhi = min(hi, (y + epsilon - y0) / dx)
            if nlo > nhi:
                break
            lo, hi = nlo, nhi
            j += 1
        slope = 1.0 if j == i + 1 else (lo + hi) / 2
        chunk = pairs[i:j]
        seg = LeaSegment(x0, slope, chunk[-1][0] - x0, y0 - slope * x0, False)
        seg.approximate = any(seg.predict(x) != y for x, y in chunk)
        out.append((seg, chunk))
        i = j
    return out


class LeaFtlSim(DynamicWriteMixin, BaseFtl):
    kind = "leaftl"

    def __init__(self, geom, costs=None, op_fraction=0.0625, cmt_fraction=0.03,
                 epsilon=4.0, buffer_pages=2048, gc_free_watermark=2):
        super().__init__(geom, costs, op_fraction)
        self.alloc = DynamicAllocator(geom, self.nand, self.timeline, gc_free_watermark)
        self._in_gc = False
        self.epsilon = epsilon
        self.buffer_pages = buffer_pages
        self.buffer: dict[int, int] = {}
        self.ppn_of = [UNMAPPED] * self.logical_pages
        self.owner: list[LeaSegment | None] = [None] * self.logical_pages
        n_spans = -(-self.logical_pages // ENTRIES_PER_TPAGE)
        self.span_segs: list[list[LeaSegment]] = [[] for _ in range(n_spans)]
        self.gtd = [UNMAPPED] * n_spans
        # same bytes as a CMT of 8-byte entries
        self.cache_budget = round(self.logical_pages * cmt_fraction) * 8
        self.cache: OrderedDict[int, int] = OrderedDict()
        self.cache_bytes = 0
        self.cache_hits = 0
        self.cache_misses = 0
        self.accurate_hits = 0
        self.seq = 0

    # -- model cache ----------------------------------------------------
    def _span_bytes(self, span: int) -> int:
        return SEGMENT_BYTES * len(self.span_segs[span])

    def _cache_put(self, span: int) -> None:
        size = self._span_bytes(span)
        old = self.cache.pop(span, None)
        if old is not None:
            self.cache_bytes -= old
        if size > self.cache_budget:
            return
        self.cache[span] = size
        self.cache_bytes += size
        while self.cache_bytes > self.cache_budget:
            _, evicted = self.cache.popitem(last=False)
            self.cache_bytes -= evicted

    # -- segment table --------------------------------------------------
    def _detach(self, lpn: int) -> None:
        seg = self.owner[lpn]
        if seg is None:
            return
        seg.members.discard(lpn)
        if not seg.members:
            self.span_segs[lpn >> TPAGE_SHIFT].remove(seg)
        self.owner[lpn] = None

    def _install(self, pairs: list[tuple[int, int]]) -> None:
        """Learn segments for sorted ``(lpn, ppn)`` pairs of one span and
        place them on top of the span's table, demoting overlapped ones."""
        span = pairs[0][0] >> TPAGE_SHIFT
        table = self.span_segs[span]
        for seg, chunk in fit_segments(pairs, self.epsilon):
            lo, hi = seg.start, seg.start + seg.length
            for old in table:
                if old.start <= hi and lo <= old.start + old.length:
                    old.level += 1
            errs = [y - seg.predict(x) for x, y in chunk]
            interval = (min(errs), max(errs))
            for x, y in chunk:
                self._detach(x)
                self.owner[x] = seg
                seg.members.add(x)
                self.nand.oob_err[y] = interval
            table.append(seg)

    def _write_span_tpage(self, span: int, at: float) -> float:
        ppn = self._alloc_page("translation", at)
        self.seq += 1
        done = self.nand.program_page(ppn, span, self.seq, "translation_write", at,
                                      kind=KIND_TRANSLATION)
        if self.gtd[span] != UNMAPPED:
            self.nand.invalidate_page(self.gtd[span])
        self.gtd[span] = ppn
        self._cache_put(span)
        return done

    def _relocate(self, data_moves, trans_moves, at):
        for span, _, new in trans_moves:
            self.gtd[span] = new
        by_span: dict[int, list] = {}
        for lpn, _, new in data_moves:
            self.ppn_of[lpn] = new
            by_span.setdefault(lpn >> TPAGE_SHIFT, []).append((lpn, new))
        done = at
        for span in sorted(by_span):
            self._install(sorted(by_span[span]))
            done = max(done, self._write_span_tpage(span, at))
        return done

    # -- host I/O -------------------------------------------------------
    def flush(self, at: float = 0.0) -> float:
        if not self.buffer:
            return at
        items = sorted(self.buffer.items())
        self.buffer = {}
        done = self._maybe_gc(at)
        nand = self.nand
        by_span: dict[int, list] = {}
        chip = -1
        for lpn, token in items:
            ppn = self.alloc.allocate("data", prefer_chip=chip)
            if ppn is None:
                ppn = self._alloc_page("data", at)
            chip = nand.chip_of(ppn)
            done = max(done, nand.program_page(ppn, lpn, token, "data_write", at))
            old = self.ppn_of[lpn]
            if old != UNMAPPED:
                nand.invalidate_page(old)
            self.ppn_of[lpn] = ppn
            by_span.setdefault(lpn >> TPAGE_SHIFT, []).append((lpn, ppn))
        for span in sorted(by_span):
            # a GC during the flush may already have moved (and re-learned) some pages
            pairs = [(x, y) for x, y in by_span[span] if self.ppn_of[x] == y]
            if pairs:
                self._install(pairs)
            done = max(done, self._write_span_tpage(span, at))
        return done

    def write(self, lpn, npages, token_start, at):
        done = at
        for i in range(npages):
            self.buffer[lpn + i] = token_start + i
            if len(self.buffer) >= self.buffer_pages:
                done = max(done, self.flush(at))
        return done

    def read(self, lpn, npages, at):
        nand = self.nand
        done = at
        outcomes = []
        for x in range(lpn, lpn + npages):
            token = self.buffer.get(x)
            if token is not None:
                outcomes.append(self._outcome(SINGLE, "Buffer", [], token, at))
                continue
            ppn = self.ppn_of[x]
            if ppn == UNMAPPED:
                outcomes.append(self._outcome(UNMAPPED_READ, None, [], -1, at))
                continue
            span = x >> TPAGE_SHIFT
            reads = []
            t = at
            hit = span in self.cache
            if hit:
                self.cache.move_to_end(span)
                self.cache_hits += 1
            else:
                self.cache_misses += 1
                t, _, _ = nand.read_page(self.gtd[span], "translation_read", at)
                reads.append(("translation_read", nand.chip_of(self.gtd[span])))
                self._cache_put(span)
            seg = self.owner[x]
            guess = seg.predict(x)
            if guess != ppn:
                # mispredicted page: its OOB error interval points at the right one
                probe = min(max(guess, 0), self.geom.total_pages - 1)
                t, _, _ = nand.read_page(probe, "data_read", t, allow_free=True)
                reads.append(("data_read", nand.chip_of(probe)))
            elif hit:
                self.accurate_hits += 1
            t, token = self._data_read(ppn, t, reads)
            n = len(reads)
            cls = SINGLE if n == 1 else DOUBLE if n == 2 else TRIPLE
            outcomes.append(self._outcome(cls, "ModelCache" if hit else None, reads, token, t))
            done = max(done, t)
        return done, outcomes

    # -- reporting ------------------------------------------------------
    def segment_count(self) -> int:
        return sum(len(t) for t in self.span_segs)

    def cmt_capacity(self):
        return 0

    def model_hit_ratio(self):
        total = self.cache_hits + self.cache_misses
        return self.accurate_hits / total if total else None

    def model_memory_bytes(self):
        return self.cache_budget

    def reset_stats(self):
        super().reset_stats()
        self.cache_hits = self.cache_misses = self.accurate_hits = 0

    def extra_metrics(self):
        return {
            "segments": self.segment_count(),
            "segment_bytes": SEGMENT_BYTES * self.segment_count(),
            "lsmt_levels": 1 + max((s.level for t in self.span_segs for s in t), default=0),
            "model_cache_hit_ratio": (self.cache_hits / (self.cache_hits + self.cache_misses)
                                      if self.cache_hits + self.cache_misses else None),
            "error_interval": self.epsilon,
            "buffer_pages": self.buffer_pages,
        }

    def check_consistency(self):
        nand = self.nand
        for lpn, ppn in enumerate(self.ppn_of):
            if ppn == UNMAPPED:
                continue
            if nand.state[ppn] != VALID or nand.oob_lpn[ppn] != lpn:
                raise ConsistencyError(f"LPN {lpn} maps to a stale page {ppn}")
            seg = self.owner[lpn]
            if seg is None or lpn not in seg.members:
                raise ConsistencyError(f"LPN {lpn} has no segment")
            if seg.length >= MAX_SEGMENT_SPAN:
                raise ConsistencyError("segment longer than 256 LPNs")
