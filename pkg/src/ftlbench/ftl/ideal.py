"""Full in-memory page table: the cost lower bound."""

from __future__ import annotations

from ..alloc_gc import DynamicAllocator
from ..errors import CapacityExhausted, ConsistencyError
from ..mapping import UNMAPPED
from ..nand import VALID
from .base import SINGLE, UNMAPPED_READ, BaseFtl


class DynamicWriteMixin:
    """Page writes through the dynamic allocator with greedy GC."""

    alloc: DynamicAllocator

    def _gc_once(self, at: float) -> float:
        self._in_gc = True
        try:
            before = self.alloc.gc_count
            done = self.alloc.gc_dynamic(self._relocate, at)
            self.gc_count += self.alloc.gc_count - before
        finally:
            self._in_gc = False
        return done

    def _maybe_gc(self, at: float) -> float:
        done = at
        while self.alloc.needs_gc() and not self._in_gc:
            if self.alloc.select_victim() is None:
                break
            done = max(done, self._gc_once(at))
        return done

    def _alloc_page(self, stream: str, at: float) -> int:
        ppn = self.alloc.allocate(stream, in_gc=self._in_gc)
        while ppn is None:
            if self._in_gc or self.alloc.select_victim() is None:
                raise CapacityExhausted("device full: no free page and nothing to collect")
            self._gc_once(at)
            ppn = self.alloc.allocate(stream, in_gc=self._in_gc)
        return ppn


class IdealFtl(DynamicWriteMixin, BaseFtl):
    kind = "ideal"

    def __init__(self, geom, costs=None, op_fraction=0.0625, gc_free_watermark=2):
        super().__init__(geom, costs, op_fraction)
        self.table = [UNMAPPED] * self.logical_pages
        self.alloc = DynamicAllocator(geom, self.nand, self.timeline, gc_free_watermark)
        self._in_gc = False

    def _relocate(self, data_moves, trans_moves, at):
        for lpn, _, new in data_moves:
            self.table[lpn] = new
        return at

    def read(self, lpn, npages, at):
        done = at
        outcomes = []
        for x in range(lpn, lpn + npages):
            ppn = self.table[x]
            if ppn == UNMAPPED:
                outcomes.append(self._outcome(UNMAPPED_READ, None, [], -1, at))
                continue
            reads = []
            t, token = self._data_read(ppn, at, reads)
            outcomes.append(self._outcome(SINGLE, "Table", reads, token, t))
            done = max(done, t)
        return done, outcomes

    def write(self, lpn, npages, token_start, at):
        done = self._maybe_gc(at)
        nand = self.nand
        for i in range(npages):
            x = lpn + i
            ppn = self._alloc_page("data", at)
            done = max(done, nand.program_page(ppn, x, token_start + i, "data_write", at))
            old = self.table[x]
            if old != UNMAPPED:
                nand.invalidate_page(old)
            self.table[x] = ppn
        return done

    def check_consistency(self):
        nand = self.nand
        for lpn, ppn in enumerate(self.table):
            if ppn != UNMAPPED and (nand.state[ppn] != VALID or nand.oob_lpn[ppn] != lpn):
                raise ConsistencyError(f"LPN {lpn} maps to a stale page {ppn}")
