"""Demand-based mapping: GTD, on-flash translation pages and the CMT."""

from __future__ import annotations

from collections import OrderedDict
from typing import Callable

from .nand import KIND_TRANSLATION, NandArray

ENTRIES_PER_TPAGE = 512
TPAGE_SHIFT = 9
UNMAPPED = -1


class Cmt:
    """LRU cache of individual LPN -> PPN mappings.

    Entries are ``[ppn, dirty]`` lists so callers can patch them in place
    without touching recency.  Dirty LPNs are also indexed by translation
    page for batched write-back.
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("CMT capacity must be >= 1")
        self.capacity = capacity
        self._map: OrderedDict[int, list] = OrderedDict()
        self._dirty: dict[int, set[int]] = {}
        self.hits = 0
        self.misses = 0

    def __len__(self) -> int:
        return len(self._map)

    def __contains__(self, lpn: int) -> bool:
        return lpn in self._map

    def lookup(self, lpn: int) -> int | None:
        entry = self._map.get(lpn)
        if entry is None:
            self.misses += 1
            return None
        self._map.move_to_end(lpn)
        self.hits += 1
        return entry[0]

    def peek(self, lpn: int) -> list | None:
        return self._map.get(lpn)

    def _mark(self, lpn: int, dirty: bool) -> None:
        tp = lpn >> TPAGE_SHIFT
        if dirty:
            self._dirty.setdefault(tp, set()).add(lpn)
        else:
            group = self._dirty.get(tp)
            if group is not None:
                group.discard(lpn)
                if not group:
                    del self._dirty[tp]

    def put(self, lpn: int, ppn: int, dirty: bool) -> list[tuple[int, int, bool]]:
        """Upsert as most recent; returns evicted ``(lpn, ppn, dirty)`` tuples."""
        entry = self._map.get(lpn)
        if entry is not None:
            entry[0] = ppn
            if dirty and not entry[1]:
                entry[1] = True
                self._mark(lpn, True)
            self._map.move_to_end(lpn)
            return []
        self._map[lpn] = [ppn, dirty]
        if dirty:
            self._mark(lpn, True)
        evicted = []
        while len(self._map) > self.capacity:
            vlpn, (vppn, vdirty) = self._map.popitem(last=False)
            if vdirty:
                self._mark(vlpn, False)
            evicted.append((vlpn, vppn, vdirty))
        return evicted

    def patch(self, lpn: int, ppn: int, dirty: bool) -> bool:
        """Change a resident entry without touching recency. False if absent."""
        entry = self._map.get(lpn)
        if entry is None:
            return False
        entry[0] = ppn
        if entry[1] != dirty:
            entry[1] = dirty
            self._mark(lpn, dirty)
        return True

    def dirty_in_tpage(self, tp: int) -> set[int]:
        return self._dirty.get(tp, set())

    def reset_stats(self) -> None:
        self.hits = 0
        self.misses = 0


class DemandMapping:
    """GTD + translation pages + CMT, with flash traffic for misses and write-back.

    ``alloc_tpage(entry, at)`` returns a free PPN for a new copy of the
    translation page of GTD entry ``entry``.  It may run garbage collection.
    """

    def __init__(self, nand: NandArray, n_entries: int, cmt_capacity: int,
                 alloc_tpage: Callable[[int, float], int], batch_writeback: bool = False):
        self.nand = nand
        self.n_entries = n_entries
        self.gtd = [UNMAPPED] * n_entries
        self.tpages: list[list[int] | None] = [None] * n_entries
        self.cmt = Cmt(cmt_capacity)
        self.alloc_tpage = alloc_tpage
        self.batch_writeback = batch_writeback
        self.tpage_seq = 0
        self.writebacks = 0

    # -- views ----------------------------------------------------------
    def slot(self, lpn: int) -> int:
        tp = self.tpages[lpn >> TPAGE_SHIFT]
        return UNMAPPED if tp is None else tp[lpn & (ENTRIES_PER_TPAGE - 1)]

    def current(self, lpn: int) -> int:
        """Authoritative mapping: the CMT entry if resident, else the translation slot."""
        entry = self.cmt.peek(lpn)
        if entry is not None:
            return entry[0]
        return self.slot(lpn)

    # -- flash traffic --------------------------------------------------
    def write_tpage(self, entry: int, at: float, cls: str = "translation_write",
                    flush_all_dirty: bool = True, only: tuple[int, int] | None = None) -> float:
        """Program a fresh copy of translation page ``entry``.

        Folds in dirty CMT entries of the page (all of them, or just ``only``
        when write-back is not batched) and marks them clean.
        """
        slots = self.tpages[entry]
        if slots is None:
            slots = self.tpages[entry] = [UNMAPPED] * ENTRIES_PER_TPAGE
        if only is not None:
            # staged before allocation: a GC run inside alloc_tpage may move this page
            lpn, value = only
            slots[lpn & (ENTRIES_PER_TPAGE - 1)] = value
        ppn = self.alloc_tpage(entry, at)
        if flush_all_dirty:
            cmt = self.cmt
            for lpn in list(cmt.dirty_in_tpage(entry)):
                slots[lpn & (ENTRIES_PER_TPAGE - 1)] = cmt.peek(lpn)[0]
                cmt.patch(lpn, slots[lpn & (ENTRIES_PER_TPAGE - 1)], False)
        old = self.gtd[entry]
        self.tpage_seq += 1
        done = self.nand.program_page(ppn, entry, self.tpage_seq, cls, at, kind=KIND_TRANSLATION)
        if old != UNMAPPED:
            self.nand.invalidate_page(old)
        self.gtd[entry] = ppn
        return done

    def _write_back(self, lpn: int, ppn: int, at: float) -> float:
        """Read-modify-write of the translation page holding an evicted dirty mapping."""
        entry = lpn >> TPAGE_SHIFT
        t = at
        if self.gtd[entry] != UNMAPPED:
            t, _, _ = self.nand.read_page(self.gtd[entry], "translation_read", at)
        self.writebacks += 1
        return self.write_tpage(entry, t, flush_all_dirty=self.batch_writeback, only=(lpn, ppn))

    def cmt_lookup(self, lpn: int) -> int | None:
        return self.cmt.lookup(lpn)

    def cmt_insert(self, lpn: int, ppn: int, dirty: bool, at: float) -> float:
        """Insert and pay for any dirty evictions; returns when write-back finishes."""
        done = at
        for vlpn, vppn, vdirty in self.cmt.put(lpn, ppn, dirty):
            if vdirty:
                done = max(done, self._write_back(vlpn, vppn, at))
        return done

    def load_mapping(self, lpn: int, at: float, prefetch: int = 1) -> tuple[float, float, int]:
        """Fetch a missing mapping from flash.

        Returns ``(read_done, writeback_done, ppn)``; ``ppn`` is UNMAPPED for an
        LPN that was never written.  With ``prefetch > 1`` the following
        mappings of the same translation page come along with the same read.
        """
        entry = lpn >> TPAGE_SHIFT
        tp_ppn = self.gtd[entry]
        if tp_ppn == UNMAPPED:
            return at, at, UNMAPPED
        done, _, _ = self.nand.read_page(tp_ppn, "translation_read", at)
        slots = self.tpages[entry]
        ppn = slots[lpn & (ENTRIES_PER_TPAGE - 1)]
        wb_done = done
        if ppn == UNMAPPED:
            return done, wb_done, UNMAPPED
        last = min(lpn + prefetch, (entry + 1) << TPAGE_SHIFT)
        cmt = self.cmt
        for other in range(lpn + 1, last):
            value = slots[other & (ENTRIES_PER_TPAGE - 1)]
            if value != UNMAPPED and other not in cmt:
                wb_done = max(wb_done, self.cmt_insert(other, value, False, done))
        # write-backs above may have run a GC that moved this page
        ppn = slots[lpn & (ENTRIES_PER_TPAGE - 1)]
        wb_done = max(wb_done, self.cmt_insert(lpn, ppn, False, done))
        return done, wb_done, self.current(lpn)

    def update_mapping_on_write(self, lpn: int, new_ppn: int, at: float) -> float:
        """Record an out-of-place write: invalidate the old copy, upsert dirty."""
        old = self.current(lpn)
        if old != UNMAPPED:
            self.nand.invalidate_page(old)
        return self.cmt_insert(lpn, new_ppn, True, at)

    def relocate(self, moves: list[tuple[int, int]], at: float, cls_read: str = "translation_read",
                 cls_write: str = "translation_write") -> float:
        """Apply GC page moves ``(lpn, new_ppn)`` to the mapping.

        Resident CMT entries are patched in place (dirty, recency unchanged);
        the rest are folded into their translation pages with one
        read-modify-write per page.
        """
        cmt = self.cmt
        pending: dict[int, list[tuple[int, int]]] = {}
        for lpn, ppn in moves:
            entry = cmt.peek(lpn)
            if entry is not None:
                cmt.patch(lpn, ppn, True)
            else:
                pending.setdefault(lpn >> TPAGE_SHIFT, []).append((lpn, ppn))
        done = at
        for tp in sorted(pending):
            t = at
            if self.gtd[tp] != UNMAPPED:
                t, _, _ = self.nand.read_page(self.gtd[tp], cls_read, at)
            slots = self.tpages[tp]
            if slots is None:
                slots = self.tpages[tp] = [UNMAPPED] * ENTRIES_PER_TPAGE
            for lpn, ppn in pending[tp]:
                slots[lpn & (ENTRIES_PER_TPAGE - 1)] = ppn
            done = max(done, self.write_tpage(tp, t, cls=cls_write, flush_all_dirty=False))
        return done
