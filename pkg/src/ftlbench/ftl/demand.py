"""DFTL and TPFTL: demand-cached page mapping with dynamic allocation."""

from __future__ import annotations

from ..alloc_gc import DynamicAllocator
from ..errors import ConsistencyError
from ..mapping import TPAGE_SHIFT, UNMAPPED, DemandMapping
from ..nand import VALID
from .base import DOUBLE, SINGLE, UNMAPPED_READ, BaseFtl
from .ideal import DynamicWriteMixin


def cmt_entries(logical_pages: int, fraction: float) -> int:
    return max(1, round(logical_pages * fraction))


class DemandFtl(DynamicWriteMixin, BaseFtl):
    """DFTL by default.  ``prefetch`` and ``batch_writeback`` turn it into TPFTL."""

    kind = "dftl"

    def __init__(self, geom, costs=None, op_fraction=0.0625, cmt_fraction=0.03,
                 gc_free_watermark=2, prefetch=False, batch_writeback=False):
        super().__init__(geom, costs, op_fraction)
        self.alloc = DynamicAllocator(geom, self.nand, self.timeline, gc_free_watermark)
        self._in_gc = False
        self.prefetch = prefetch
        self.mapping = DemandMapping(self.nand, self.n_entries,
                                     cmt_entries(self.logical_pages, cmt_fraction),
                                     self._alloc_tpage, batch_writeback)

    def _alloc_tpage(self, entry, at):
        return self._alloc_page("translation", at)

    def _relocate(self, data_moves, trans_moves, at):
        for entry, _, new in trans_moves:
            self.mapping.gtd[entry] = new
        if data_moves:
            return self.mapping.relocate([(lpn, new) for lpn, _, new in data_moves], at)
        return at

    def read(self, lpn, npages, at):
        mapping = self.mapping
        done = at
        outcomes = []
        ready: dict[int, float] = {}  # mappings prefetched by this request
        for i in range(npages):
            x = lpn + i
            reads = []
            ppn = mapping.cmt_lookup(x)
            if ppn is not None:
                t, token = self._data_read(ppn, max(at, ready.get(x, at)), reads)
                outcomes.append(self._outcome(SINGLE, "Cmt", reads, token, t))
            else:
                want = npages - i if self.prefetch else 1
                tp_ppn = mapping.gtd[x >> TPAGE_SHIFT]
                t_map, _, ppn = mapping.load_mapping(x, at, prefetch=want)
                if tp_ppn != UNMAPPED:
                    reads.append(("translation_read", self.nand.chip_of(tp_ppn)))
                if ppn == UNMAPPED:
                    outcomes.append(self._outcome(UNMAPPED_READ, None, reads, -1, t_map))
                    done = max(done, t_map)
                    continue
                for other in range(x + 1, x + want):
                    ready[other] = t_map
                t, token = self._data_read(ppn, t_map, reads)
                outcomes.append(self._outcome(DOUBLE, None, reads, token, t))
            done = max(done, t)
        return done, outcomes

    def write(self, lpn, npages, token_start, at):
        done = self._maybe_gc(at)
        nand = self.nand
        mapping = self.mapping
        for i in range(npages):
            x = lpn + i
            ppn = self._alloc_page("data", at)
            done = max(done, nand.program_page(ppn, x, token_start + i, "data_write", at))
            done = max(done, mapping.update_mapping_on_write(x, ppn, at))
        return done

    def cmt_capacity(self):
        return self.mapping.cmt.capacity

    def cmt_hit_ratio(self):
        cmt = self.mapping.cmt
        total = cmt.hits + cmt.misses
        return cmt.hits / total if total else None

    def reset_stats(self):
        super().reset_stats()
        self.mapping.cmt.reset_stats()

    def check_consistency(self):
        nand = self.nand
        for lpn in range(self.logical_pages):
            ppn = self.mapping.current(lpn)
            if ppn != UNMAPPED and (nand.state[ppn] != VALID or nand.oob_lpn[ppn] != lpn):
                raise ConsistencyError(f"LPN {lpn} maps to a stale page {ppn}")


class TpftlFtl(DemandFtl):
    """Request-length prefetch on a miss plus batched write-back of dirty entries."""

    kind = "tpftl"

    def __init__(self, geom, costs=None, op_fraction=0.0625, cmt_fraction=0.03, gc_free_watermark=2):
        super().__init__(geom, costs, op_fraction, cmt_fraction, gc_free_watermark,
                         prefetch=True, batch_writeback=True)
