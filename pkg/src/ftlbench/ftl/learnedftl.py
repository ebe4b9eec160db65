"""LearnedFTL: demand mapping plus per-entry learned models and group allocation."""

from __future__ import annotations

from ..alloc_gc import GC_LOG_HEADER, GroupAllocator, gc_group
from ..errors import CapacityExhausted, ConsistencyError
from ..learned import DEFAULT_MAX_PIECES, MODEL_BYTES, LearnedModel, sequential_init
from ..mapping import ENTRIES_PER_TPAGE, TPAGE_SHIFT, UNMAPPED, DemandMapping
from ..nand import VALID
from .base import DOUBLE, SINGLE, UNMAPPED_READ, BaseFtl
from .demand import cmt_entries

_MASK = ENTRIES_PER_TPAGE - 1


def auto_group_entries(n_entries: int, cap: int = 64, min_groups: int = 32) -> int:
    """Largest power of two <= ``cap`` that still leaves ``min_groups`` groups."""
    g = cap
    while g > 1 and n_entries // g < min_groups:
        g //= 2
    return g


class LearnedFtl(BaseFtl):
    kind = "learnedftl"

    def __init__(self, geom, costs=None, op_fraction=0.0625, cmt_fraction=0.015,
                 max_pieces=DEFAULT_MAX_PIECES, epsilon=0.5, group_entries=None,
                 t_blocks=None, t_encroach=None, gc_free_watermark=2, predict_us=0.65,
                 sort_train_us=50.0):
        super().__init__(geom, costs, op_fraction)
        self.models = [LearnedModel(max_pieces) for _ in range(self.n_entries)]
        self.epsilon = epsilon
        self.predict_us = predict_us
        self.sort_train_us = sort_train_us
        g = group_entries or auto_group_entries(self.n_entries)
        # a group spans at least two runs so that collecting it can hand one back
        run_sb = max(1, g * ENTRIES_PER_TPAGE // (2 * geom.superblock_pages))
        while geom.blocks_per_plane % run_sb:
            run_sb += 1
        run_pages = run_sb * geom.superblock_pages
        self.alloc = GroupAllocator(
            geom, self.nand, self.n_entries, g, run_sb,
            t_blocks=t_blocks or 4 * run_sb * geom.parallel_units,
            t_encroach=t_encroach or run_pages,
            gc_free_watermark=gc_free_watermark,
            popcount_of=self._group_popcount)
        self.mapping = DemandMapping(self.nand, self.n_entries,
                                     cmt_entries(self.logical_pages, cmt_fraction),
                                     self._alloc_tpage, batch_writeback=True)
        self.gc_events = []
        self._in_gc = False
        self.model_predictions = 0
        self.model_mispredictions = 0

    # -- allocation -------------------------------------------------------
    def _group_popcount(self, gid: int) -> int:
        group = self.alloc.groups[gid]
        return sum(self.models[e].popcount() for e in group.entries)

    def _run_gc(self, gid: int, at: float) -> float:
        alloc = self.alloc
        if gid != alloc.tgroup:
            at = self._translation_room(alloc.side_writes(alloc.groups[gid]), at)
        self._in_gc = True
        try:
            event = gc_group(self, gid, at)
        finally:
            self._in_gc = False
        self.gc_count += 1
        self.gc_events.append(event)
        return event.time_us

    def _translation_room(self, need: int, at: float) -> float:
        """Make sure ``need`` translation pages fit in the translation runs
        before a collection starts, compacting them or adding a run."""
        alloc = self.alloc
        tgroup = alloc.groups[alloc.tgroup]
        free = alloc.free_pages(tgroup)
        if free >= need:
            return at
        if free + alloc.gain(tgroup) >= need and alloc.feasible(tgroup):
            return self._run_gc(alloc.tgroup, at)
        if alloc.pool:
            alloc._fresh_run(tgroup)
        return at

    def _alloc(self, gid: int, at: float) -> int:
        alloc = self.alloc
        ppn = alloc.group_allocate(gid, in_gc=self._in_gc)
        if ppn is not None:
            return ppn
        if self._in_gc:
            raise CapacityExhausted("no space for GC write-back")
        ppn = alloc.cross_group_allocate(gid, cold_only=False)
        while ppn is None:
            victim = alloc.victim()
            if victim is None:
                raise CapacityExhausted("device full: no free page and nothing to collect")
            self._run_gc(victim, at)
            ppn = alloc.group_allocate(gid)
            if ppn is None:
                ppn = alloc.cross_group_allocate(gid, cold_only=False)
        return ppn

    def _alloc_tpage(self, entry: int, at: float) -> int:
        return self._alloc(self.alloc.tgroup, at)

    def _background_gc(self, at: float) -> float:
        alloc = self.alloc
        done = at
        while alloc.pending_gc:
            gid = alloc.pending_gc.pop(0)
            if alloc.feasible(alloc.groups[gid]):
                done = max(done, self._run_gc(gid, at))
        if alloc.pool_low():
            # only worth it in the background if a whole run comes back
            victim = alloc.productive_victim(alloc.run_pages)
            if victim is not None:
                done = max(done, self._run_gc(victim, at))
        return done

    # -- host I/O -------------------------------------------------------
    def read(self, lpn, npages, at):
        mapping = self.mapping
        nand = self.nand
        codec = self.alloc.codec
        done = at
        outcomes = []
        for x in range(lpn, lpn + npages):
            reads = []
            ppn = mapping.cmt_lookup(x)
            if ppn is not None:
                t, token = self._data_read(ppn, at, reads)
                outcomes.append(self._outcome(SINGLE, "Cmt", reads, token, t))
                done = max(done, t)
                continue
            vppn = self.models[x >> TPAGE_SHIFT].predict_vppn(x & _MASK)
            if vppn is not None:
                self.model_predictions += 1
                ppn = codec.to_ppn(vppn)
                if ppn != mapping.current(x):
                    self.model_mispredictions += 1
                t, token = self._data_read(ppn, at + self.predict_us, reads)
                outcomes.append(self._outcome(SINGLE, "Model", reads, token, t))
                done = max(done, t)
                continue
            tp_ppn = mapping.gtd[x >> TPAGE_SHIFT]
            t_map, _, ppn = mapping.load_mapping(x, at)
            if tp_ppn != UNMAPPED:
                reads.append(("translation_read", nand.chip_of(tp_ppn)))
            if ppn == UNMAPPED:
                outcomes.append(self._outcome(UNMAPPED_READ, None, reads, -1, t_map))
                done = max(done, t_map)
                continue
            t, token = self._data_read(ppn, t_map, reads)
            outcomes.append(self._outcome(DOUBLE, None, reads, token, t))
            done = max(done, t)
        return done, outcomes

    def write(self, lpn, npages, token_start, at):
        nand = self.nand
        mapping = self.mapping
        alloc = self.alloc
        done = at
        written = []
        for i in range(npages):
            x = lpn + i
            gid = alloc.group_of_lpn(x)
            ppn = self._alloc(gid, at)
            done = max(done, nand.program_page(ppn, x, token_start + i, "data_write", at))
            alloc.note_program(gid, ppn)
            old = mapping.current(x)
            if old == UNMAPPED:
                alloc.mapped[gid] += 1
            else:
                alloc.note_invalidate(gid, old)
            done = max(done, mapping.update_mapping_on_write(x, ppn, at))
            self.models[x >> TPAGE_SHIFT].clear_bit(x & _MASK)
            alloc.groups[gid].written_since_gc = True
            written.append((x, ppn))
        self._sequential_init(written)
        return max(done, self._background_gc(at))

    def _sequential_init(self, written):
        """Offer each per-entry run of consecutive LPNs and VPPNs to its model."""
        codec = self.alloc.codec
        current = self.mapping.current
        run = []
        for x, ppn in written:
            if current(x) != ppn:  # moved by a GC during this request
                self._offer(run)
                run = []
                continue
            v = codec.to_vppn(ppn)
            if run and (x == run[-1][0] + 1 and v == run[-1][1] + 1
                        and x >> TPAGE_SHIFT == run[0][0] >> TPAGE_SHIFT):
                run.append((x, v))
            else:
                self._offer(run)
                run = [(x, v)]
        self._offer(run)

    def _offer(self, run):
        if len(run) < 2:
            return
        x0, v0 = run[0]
        sequential_init(self.models[x0 >> TPAGE_SHIFT], x0 & _MASK, v0, len(run))

    # -- reporting ------------------------------------------------------
    def cmt_capacity(self):
        return self.mapping.cmt.capacity

    def cmt_hit_ratio(self):
        cmt = self.mapping.cmt
        total = cmt.hits + cmt.misses
        return cmt.hits / total if total else None

    def model_hit_ratio(self):
        misses = self.mapping.cmt.misses
        return self.hit_counts.get("Model", 0) / misses if misses else None

    def model_memory_bytes(self):
        return MODEL_BYTES * self.n_entries

    def reset_stats(self):
        super().reset_stats()
        self.mapping.cmt.reset_stats()
        self.gc_events = []
        self.model_predictions = 0
        self.model_mispredictions = 0

    def extra_metrics(self):
        events = self.gc_events
        return {
            "group_entries": self.alloc.group_entries,
            "run_pages": self.alloc.run_pages,
            "model_mispredictions": self.model_mispredictions,
            "gc_max_translation_writes": max((e.translation_writes for e in events), default=0),
            "gc_entries_trained": sum(e.entries_trained for e in events),
        }

    def gc_log_csv(self) -> str:
        return "\n".join([GC_LOG_HEADER] + [e.csv_row() for e in self.gc_events]) + "\n"

    def check_consistency(self):
        nand = self.nand
        codec = self.alloc.codec
        for lpn in range(self.logical_pages):
            ppn = self.mapping.current(lpn)
            if ppn != UNMAPPED and (nand.state[ppn] != VALID or nand.oob_lpn[ppn] != lpn):
                raise ConsistencyError(f"LPN {lpn} maps to a stale page {ppn}")
            model = self.models[lpn >> TPAGE_SHIFT]
            if model.bit(lpn & _MASK):
                if ppn == UNMAPPED or codec.to_ppn(model.predict_vppn(lpn & _MASK)) != ppn:
                    raise ConsistencyError(f"filter bit set for LPN {lpn} but prediction is wrong")
        for model in self.models:
            model.check()
