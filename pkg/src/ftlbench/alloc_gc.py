"""Page allocation and garbage collection.

Two strategies live here:

* ``DynamicAllocator`` -- the baselines' greedy allocation: every page goes
  to the least busy chip, GC reclaims the block with the fewest valid pages.
* ``GroupAllocator`` -- LearnedFTL's group-based allocation.  Consecutive GTD
  entries form a group; a group fills *runs* of contiguous superblocks in
  allocation order, so consecutive allocations get consecutive VPPNs.  GC
  works on a whole group and retrains its models (``gc_group``).
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

from .errors import CapacityExhausted
from .geometry import FlashGeometry, VppnCodec
from .learned import train_entry
from .mapping import ENTRIES_PER_TPAGE, TPAGE_SHIFT, UNMAPPED
from .nand import INVALID, KIND_DATA, KIND_TRANSLATION, VALID, NandArray


@dataclass
class GcEvent:
    time_us: float
    victim: int
    valid_moved: int
    foreign_moved: int = 0
    entries_trained: int = 0
    translation_writes: int = 0
    translation_reads: int = 0
    gc_reads: int = 0
    gc_writes: int = 0
    accuracy: list[float] = field(default_factory=list)

    def csv_row(self) -> str:
        acc = ";".join(f"{a:.4f}" for a in self.accuracy)
        return (f"{self.time_us:.3f},{self.victim},{self.valid_moved},{self.foreign_moved},"
                f"{self.entries_trained},{self.translation_writes},{acc}")


GC_LOG_HEADER = "time_us,victim,valid_moved,foreign_moved,entries_trained,translation_writes,accuracy"


# ---------------------------------------------------------------------------
# dynamic allocation (DFTL / TPFTL / LeaFTL baseline)
# ---------------------------------------------------------------------------

class DynamicAllocator:
    """Least-busy-chip allocation with a data stream and a translation stream.

    Data pages keep one open block per chip.  Translation pages share a
    single open block, kept apart from data blocks.  ``reserve_blocks`` free
    blocks are held back for GC copies and the mapping updates they cause.
    """

    def __init__(self, geom: FlashGeometry, nand: NandArray, timeline,
                 gc_free_watermark: int = 2, reserve_blocks: int = 4):
        self.geom = geom
        self.nand = nand
        self.timeline = timeline
        self.n_chips = geom.chips
        self.ppb = geom.pages_per_block
        self.blocks_per_chip = geom.planes_per_chip * geom.blocks_per_plane
        self.free: list[list[int]] = [
            list(range(c * self.blocks_per_chip, (c + 1) * self.blocks_per_chip))
            for c in range(self.n_chips)]
        for heap in self.free:
            heapq.heapify(heap)
        self.n_free = geom.total_blocks
        self.data_active = [-1] * self.n_chips
        self.trans_active = -1
        self.watermark = gc_free_watermark
        self.reserve = reserve_blocks
        self.gc_count = 0

    def free_blocks(self) -> int:
        return self.n_free

    def is_active(self, block: int) -> bool:
        return block == self.trans_active or block in self.data_active

    def _room(self, block: int) -> bool:
        return block >= 0 and self.nand.write_pointer[block] < self.ppb

    def _open_block(self, chip: int) -> int:
        block = heapq.heappop(self.free[chip])
        self.n_free -= 1
        return block

    def allocate(self, stream: str = "data", in_gc: bool = False, prefer_chip: int = -1) -> int | None:
        """Next PPN for ``stream`` or None when only reserved blocks are left.

        ``prefer_chip`` keeps filling that chip's open data block while it has
        room, which yields runs of consecutive PPNs.
        """
        if prefer_chip >= 0 and stream == "data" and self._room(self.data_active[prefer_chip]):
            block = self.data_active[prefer_chip]
            return block * self.ppb + self.nand.write_pointer[block]
        may_open = self.n_free > self.reserve or (in_gc and self.n_free > 0)
        nf = self.timeline.next_free
        if stream == "translation":
            block = self.trans_active
            if not self._room(block):
                if not may_open:
                    return None
                candidates = [c for c in range(self.n_chips) if self.free[c]]
                chip = min(candidates, key=lambda c: (nf[c], c))
                block = self.trans_active = self._open_block(chip)
            return block * self.ppb + self.nand.write_pointer[block]

        best = -1
        best_key = None
        for chip in range(self.n_chips):
            block = self.data_active[chip]
            if self._room(block):
                key = (nf[chip], chip)
            elif may_open and self.free[chip]:
                # opening a block during GC only when no open block has room
                key = (nf[chip] + (1e18 if in_gc else 0.0), chip)
            else:
                continue
            if best_key is None or key < best_key:
                best, best_key = chip, key
        if best < 0:
            return None
        block = self.data_active[best]
        if not self._room(block):
            block = self.data_active[best] = self._open_block(best)
        return block * self.ppb + self.nand.write_pointer[block]

    def release(self, block: int) -> None:
        heapq.heappush(self.free[block // self.blocks_per_chip], block)
        self.n_free += 1

    def select_victim(self) -> int | None:
        """Written, non-open block with the fewest valid pages (ties: lowest index)."""
        nand = self.nand
        best = None
        best_valid = self.ppb + 1
        for block in range(self.geom.total_blocks):
            if nand.write_pointer[block] == 0 or self.is_active(block):
                continue
            if nand.invalid_count[block] == 0:
                continue
            valid = nand.valid_count[block]
            if valid < best_valid:
                best, best_valid = block, valid
        return best

    def needs_gc(self) -> bool:
        return self.n_free < max(self.watermark, self.reserve + 1)

    def gc_dynamic(self, relocate: Callable[[list, list, float], float], at: float) -> float:
        """Reclaim one victim block.

        Valid pages are copied through ``allocate(..., in_gc=True)``;
        ``relocate(data_moves, trans_moves, t)`` fixes the mapping, where
        moves are ``(lpn_or_entry, old_ppn, new_ppn)``.
        """
        victim = self.select_victim()
        if victim is None:
            return at
        nand = self.nand
        self.gc_count += 1
        start = victim * self.ppb
        data_moves, trans_moves = [], []
        done = at
        for ppn in range(start, start + nand.write_pointer[victim]):
            if nand.state[ppn] != VALID:
                continue
            kind = nand.oob_kind[ppn]
            t, owner, token = nand.read_page(ppn, "gc_read", at)
            new = self.allocate("translation" if kind == KIND_TRANSLATION else "data", in_gc=True)
            if new is None:
                raise CapacityExhausted("no space left for GC copy-back")
            err = nand.oob_err.get(ppn)
            done = max(done, nand.program_page(new, owner, token, "gc_write", t, kind=kind,
                                               error_interval=err))
            nand.invalidate_page(ppn)
            (trans_moves if kind == KIND_TRANSLATION else data_moves).append((owner, ppn, new))
        done = max(done, relocate(data_moves, trans_moves, done))
        done = max(done, nand.erase_block(victim, done))
        self.release(victim)
        return done


# ---------------------------------------------------------------------------
# group-based allocation (LearnedFTL)
# ---------------------------------------------------------------------------

@dataclass
class GroupState:
    group_id: int
    first_entry: int
    n_entries: int
    runs: list[int] = field(default_factory=list)
    open_run: int = -1
    cumulative_blocks: int = 0
    gc_count: int = 0
    written_since_gc: bool = True

    @property
    def entries(self) -> range:
        return range(self.first_entry, self.first_entry + self.n_entries)


def select_victim_group(scores: Mapping[int, int]) -> int | None:
    """Group with the highest positive score (e.g. invalid pages); ties go to the lowest id."""
    best = None
    for gid in sorted(scores):
        count = scores[gid]
        if count > 0 and (best is None or count > scores[best]):
            best = gid
    return best


class GroupAllocator:
    """Run bookkeeping for GTD entry groups.

    A run is ``run_superblocks`` consecutive superblocks, i.e. a contiguous
    VPPN range of ``run_pages`` pages.  ``encroach[(borrower, lender)]`` counts
    pages a hot group placed in a cold group's run.
    """

    def __init__(self, geom: FlashGeometry, nand: NandArray, n_entries: int, group_entries: int,
                 run_superblocks: int, t_blocks: int, t_encroach: int, gc_free_watermark: int = 2,
                 cold_fraction: float = 0.25, popcount_of=None):
        if geom.blocks_per_plane % run_superblocks:
            raise ValueError("blocks_per_plane must be a multiple of run_superblocks")
        self.geom = geom
        self.nand = nand
        self.codec = VppnCodec(geom)
        self.run_superblocks = run_superblocks
        self.run_pages = run_superblocks * geom.superblock_pages
        self.blocks_per_run = run_superblocks * geom.parallel_units
        self.n_runs = geom.blocks_per_plane // run_superblocks
        self.cursor = [0] * self.n_runs
        self.owner = [-1] * self.n_runs
        self.pool = list(range(self.n_runs))
        self.group_entries = group_entries
        self.n_entries = n_entries
        n_groups = -(-n_entries // group_entries)
        self.groups = [GroupState(g, g * group_entries, min(group_entries, n_entries - g * group_entries))
                       for g in range(n_groups)]
        # pseudo-group holding translation pages; it owns no LPNs
        self.tgroup = n_groups
        self.groups.append(GroupState(n_groups, n_entries, 0))
        self.t_blocks = t_blocks
        self.t_encroach = t_encroach
        self.watermark = gc_free_watermark
        self.cold_fraction = cold_fraction
        self.popcount_of = popcount_of or (lambda gid: 0)
        self.encroach: dict[tuple[int, int], int] = {}
        self.pending_gc: list[int] = []
        self.collecting = -1  # victim of the GC in progress
        self.run_blocks = [self._blocks_of(r) for r in range(self.n_runs)]
        # per group: mapped LPNs, and how many of them sit in the group's own runs
        self.mapped = [0] * len(self.groups)
        self.own_in_runs = [0] * len(self.groups)

    # -- geometry helpers -------------------------------------------------
    def _blocks_of(self, run: int) -> list[int]:
        geom = self.geom
        first_sb = run * self.run_superblocks
        return [unit * geom.blocks_per_plane + sb
                for sb in range(first_sb, first_sb + self.run_superblocks)
                for unit in range(geom.parallel_units)]

    def run_of_ppn(self, ppn: int) -> int:
        return self.codec.to_vppn(ppn) // self.run_pages

    def group_of_entry(self, entry: int) -> int:
        return entry // self.group_entries

    def group_of_lpn(self, lpn: int) -> int:
        return (lpn >> TPAGE_SHIFT) // self.group_entries

    def run_invalid(self, run: int) -> int:
        inv = self.nand.invalid_count
        return sum(inv[b] for b in self.run_blocks[run])

    def invalid_pages(self, group: GroupState) -> int:
        return sum(self.run_invalid(r) for r in group.runs)

    def valid_in_runs(self, group: GroupState) -> int:
        vc = self.nand.valid_count
        return sum(vc[b] for r in group.runs for b in self.run_blocks[r])

    def note_program(self, gid: int, ppn: int) -> None:
        """A data page of group ``gid`` was programmed at ``ppn``."""
        if self.owner[self.run_of_ppn(ppn)] == gid:
            self.own_in_runs[gid] += 1

    def note_invalidate(self, gid: int, ppn: int) -> None:
        if self.owner[self.run_of_ppn(ppn)] == gid:
            self.own_in_runs[gid] -= 1

    def net_free(self, group: GroupState) -> int:
        """Pages a collection of ``group`` would leave free: its run capacity
        minus everything that has to be written back into it."""
        gid = group.group_id
        rewrite = self.mapped[gid] + self.valid_in_runs(group) - self.own_in_runs[gid]
        return self.run_pages * len(group.runs) - rewrite

    def side_writes(self, group: GroupState) -> int:
        """Upper bound on translation pages a collection of ``group`` writes:
        one per own entry and one per entry owning a moved foreign page."""
        if group.group_id == self.tgroup:
            return 0
        foreign = self.valid_in_runs(group) - self.own_in_runs[group.group_id]
        return group.n_entries + min(foreign, self.n_entries)

    def feasible(self, group: GroupState) -> bool:
        """Whether a collection of ``group`` is sure to find room for everything it rewrites."""
        gid = group.group_id
        rp = self.run_pages
        if -(-self.mapped[gid] // rp) > len(group.runs) + len(self.pool):
            return False
        tgroup = self.groups[self.tgroup]
        elsewhere = sum(rp - self.cursor[g.open_run] for g in self.groups
                        if g.group_id not in (gid, self.tgroup) and g.open_run >= 0)
        need = self.mapped[gid] + self.valid_in_runs(group) - self.own_in_runs[gid]
        room = rp * (len(group.runs) + len(self.pool)) + elsewhere
        if need > room:
            return False
        if gid == self.tgroup:
            return True
        t_room = self.free_pages(tgroup) + max(self.gain(tgroup), 0) + room - need
        return self.side_writes(group) <= t_room

    def free_pages(self, group: GroupState) -> int:
        return sum(self.run_pages - self.cursor[r] for r in group.runs)

    def gain(self, group: GroupState) -> int:
        """Free pages a collection of ``group`` adds to what is free already."""
        return self.net_free(group) - self.free_pages(group)

    def lent(self, gid: int) -> int:
        return sum(v for (b, l), v in self.encroach.items() if l == gid)

    def borrowed(self, gid: int) -> int:
        return sum(v for (b, l), v in self.encroach.items() if b == gid)

    # -- allocation -------------------------------------------------------
    def _take(self, run: int) -> int:
        page = self.cursor[run]
        self.cursor[run] = page + 1
        return self.codec.to_ppn(run * self.run_pages + page)

    def _fresh_run(self, group: GroupState) -> int:
        # extend the previous run when possible so a long write keeps
        # consecutive VPPNs; translation runs come from the far end
        pool = self.pool
        nxt = group.open_run + 1
        if group.open_run >= 0 and nxt in pool:
            run = nxt
        elif group.group_id == self.tgroup:
            run = max(pool)
        else:
            # start where the following run is free too: an entry then stays
            # within a short VPPN span that binary16 intercepts can express
            free = set(pool)
            run = min((r for r in pool if r + 1 in free), default=pool[0])
        if run == pool[0]:
            heapq.heappop(pool)
        else:
            pool.remove(run)
            heapq.heapify(pool)
        self.owner[run] = group.group_id
        self.cursor[run] = 0
        group.runs.append(run)
        group.open_run = run
        group.cumulative_blocks += self.blocks_per_run
        if group.cumulative_blocks >= self.t_blocks and group.group_id not in self.pending_gc:
            self.pending_gc.append(group.group_id)
        return run

    def _lender(self, borrower: int, cold_only: bool) -> GroupState | None:
        """Open run to borrow from: the coldest group with room, or with
        ``cold_only`` off the one with the most room."""
        best = None
        best_key = None
        for g in self.groups:
            if g.group_id == borrower or g.open_run < 0 or g.group_id == self.tgroup:
                continue
            free = self.run_pages - self.cursor[g.open_run]
            if free <= 0:
                continue
            if cold_only:
                frac = self.popcount_of(g.group_id) / (g.n_entries * ENTRIES_PER_TPAGE)
                if frac >= self.cold_fraction or free <= self.run_pages // 2:
                    continue
                key = (frac, g.group_id)
            else:
                key = (-free, g.group_id)
            if best_key is None or key < best_key:
                best, best_key = g, key
        return best

    def group_allocate(self, gid: int, in_gc: bool = False) -> int | None:
        """Next page for group ``gid``: its open run, then a fresh run, then a
        cold group's open run (any group's during a collection, or for
        translation pages)."""
        group = self.groups[gid]
        run = group.open_run
        if run >= 0 and self.cursor[run] < self.run_pages:
            return self._take(run)
        if self.pool:
            return self._take(self._fresh_run(group))
        return self.cross_group_allocate(gid, cold_only=not (in_gc or gid == self.tgroup))

    def cross_group_allocate(self, gid: int, cold_only: bool = True) -> int | None:
        lender = self._lender(gid, cold_only)
        if lender is None:
            return None
        key = (gid, lender.group_id)
        count = self.encroach.get(key, 0) + 1
        self.encroach[key] = count
        if count >= self.t_encroach:
            for g in key:
                if g not in self.pending_gc:
                    self.pending_gc.append(g)
        return self._take(lender.open_run)

    def pool_low(self) -> bool:
        return len(self.pool) < self.watermark

    def productive_victim(self, min_gain: int | None = None) -> int | None:
        """Feasible group whose collection gains the most free pages, if that
        is at least ``min_gain`` (default a quarter run; ties: lowest id)."""
        if min_gain is None:
            min_gain = self.run_pages // 4
        gain = {g.group_id: self.gain(g) for g in self.groups if g.runs and self.feasible(g)}
        best = select_victim_group(gain)
        return best if best is not None and gain[best] >= min_gain else None

    def victim(self) -> int | None:
        """Last resort: any feasible group that gains a page, else the one
        with the most invalid pages in its runs.

        The latter may gain nothing by itself when its garbage is shadowed
        by pages it parked in other groups' runs, but bringing those pages
        home turns them into garbage the lenders can reclaim.
        """
        return select_victim_group({g.group_id: self.invalid_pages(g) for g in self.groups
                                    if g.runs and self.feasible(g)})

    def release_group_runs(self, group: GroupState, at: float) -> float:
        """Erase every run owned by ``group`` (no valid pages may remain)."""
        done = at
        nand = self.nand
        for run in group.runs:
            for block in self.run_blocks[run]:
                if nand.write_pointer[block]:
                    done = max(done, nand.erase_block(block, at))
            self.owner[run] = -1
            self.cursor[run] = 0
            heapq.heappush(self.pool, run)
        group.runs = []
        group.open_run = -1
        gid = group.group_id
        for key in [k for k in self.encroach if gid in k]:
            del self.encroach[key]
        return done


def gc_group(ftl, gid: int, at: float) -> GcEvent:
    """Collect group ``gid``, rewrite its pages in LPN order and retrain its models.

    Valid pages are staged in controller memory between the reads and the
    write-back, so the group's own runs can be erased and reused as the
    destination.
    """
    alloc: GroupAllocator = ftl.alloc
    nand: NandArray = ftl.nand
    mapping = ftl.mapping
    group = alloc.groups[gid]
    alloc.collecting = gid
    try:
        return _collect(ftl, alloc, nand, mapping, group, gid, at)
    finally:
        alloc.collecting = -1


def _collect(ftl, alloc, nand, mapping, group, gid, at):
    counts = nand.counters.counts
    before = dict(counts)
    event = GcEvent(at, gid, 0)
    owned = set(group.runs)

    # step 1: read the group's translation pages, keep valid translations in LPN order
    t_tp = at
    for entry in group.entries:
        if mapping.gtd[entry] != UNMAPPED:
            done, _, _ = nand.read_page(mapping.gtd[entry], "translation_read", at)
            t_tp = max(t_tp, done)
    own: list[tuple[int, int]] = []
    lo = group.first_entry << TPAGE_SHIFT
    hi = min((group.first_entry + group.n_entries) << TPAGE_SHIFT, ftl.logical_pages)
    for lpn in range(lo, hi):
        ppn = mapping.current(lpn)
        if ppn != UNMAPPED:
            own.append((lpn, ppn))

    # pages of other groups parked in this group's runs
    own_entries = set(group.entries)
    foreign_data: list[tuple[int, int]] = []
    foreign_tp: list[tuple[int, int]] = []
    own_tp_in_runs: list[int] = []
    for run in group.runs:
        for block in alloc.run_blocks[run]:
            if not nand.valid_count[block]:
                continue
            base = block * nand.geom.pages_per_block
            for ppn in range(base, base + nand.write_pointer[block]):
                if nand.state[ppn] != VALID:
                    continue
                owner = nand.oob_lpn[ppn]
                if nand.oob_kind[ppn] == KIND_TRANSLATION:
                    (own_tp_in_runs if owner in own_entries else foreign_tp).append(
                        ppn if owner in own_entries else (owner, ppn))
                elif not lo <= owner < hi:
                    foreign_data.append((owner, ppn))

    # step 2a: stage everything that must survive in controller memory
    staged = []
    t_read = t_tp
    for lpn, ppn in own + foreign_data:
        done, _, token = nand.read_page(ppn, "gc_read", t_tp)
        staged.append(token)
        t_read = max(t_read, done)
        nand.invalidate_page(ppn)
    alloc.own_in_runs[gid] = 0
    for owner, ppn in foreign_tp:
        done, _, _ = nand.read_page(ppn, "gc_read", t_tp)
        t_read = max(t_read, done)
        nand.invalidate_page(ppn)
    for ppn in own_tp_in_runs:
        nand.invalidate_page(ppn)
        mapping.gtd[nand.oob_lpn[ppn]] = UNMAPPED
    t_erase = alloc.release_group_runs(group, t_read)
    group.cumulative_blocks = 0
    if gid in alloc.pending_gc:
        alloc.pending_gc.remove(gid)

    def dest(owner_gid: int) -> int:
        ppn = alloc.group_allocate(owner_gid, in_gc=True)
        if ppn is None:
            raise CapacityExhausted(f"no destination space while collecting group {gid}")
        return ppn

    # step 2b: write own pages back in LPN order -> consecutive VPPNs
    t_done = t_erase
    new_own: list[tuple[int, int]] = []
    for (lpn, _), token in zip(own, staged):
        new = dest(gid)
        t_done = max(t_done, nand.program_page(new, lpn, token, "gc_write", t_read))
        alloc.note_program(gid, new)
        new_own.append((lpn, new))
    event.valid_moved = len(own)

    # steps 3 and 4: train and evaluate each entry's model on the new layout
    codec = alloc.codec
    by_entry: dict[int, tuple[list[int], list[int]]] = {}
    for lpn, new in new_own:
        offs, vppns = by_entry.setdefault(lpn >> TPAGE_SHIFT, ([], []))
        offs.append(lpn & (ENTRIES_PER_TPAGE - 1))
        vppns.append(codec.to_vppn(new))
    for entry in group.entries:
        model = ftl.models[entry]
        if entry in by_entry:
            offs, vppns = by_entry[entry]
            hits = train_entry(model, offs, vppns, ftl.epsilon)
            event.entries_trained += 1
            event.accuracy.append(hits / len(offs))
        else:
            model.reset()

    # foreign pages follow in this group's fresh runs, now lent to their owners
    moves = []
    for (lpn, _), token in zip(foreign_data, staged[len(own):]):
        owner_gid = alloc.group_of_lpn(lpn)
        new = dest(gid)
        key = (owner_gid, gid)
        alloc.encroach[key] = alloc.encroach.get(key, 0) + 1
        t_done = max(t_done, nand.program_page(new, lpn, token, "gc_write", t_read))
        moves.append((lpn, new))
        ftl.models[lpn >> TPAGE_SHIFT].clear_bit(lpn & (ENTRIES_PER_TPAGE - 1))
        alloc.groups[owner_gid].written_since_gc = True

    for owner_entry, _ in foreign_tp:
        new = dest(gid)
        mapping.tpage_seq += 1
        t_done = max(t_done, nand.program_page(new, owner_entry, mapping.tpage_seq, "gc_write",
                                               t_read, kind=KIND_TRANSLATION))
        mapping.gtd[owner_entry] = new

    # fresh translation pages go last so they cannot take space the data needs
    # mapping: new locations are final, so resident CMT entries become clean
    for lpn, new in new_own:
        slots = mapping.tpages[lpn >> TPAGE_SHIFT]
        slots[lpn & (ENTRIES_PER_TPAGE - 1)] = new
        mapping.cmt.patch(lpn, new, False)
    for entry in group.entries:
        if mapping.tpages[entry] is not None:
            t_done = max(t_done, mapping.write_tpage(entry, t_read))

    if moves:
        t_done = max(t_done, mapping.relocate(moves, t_read))
    event.foreign_moved = len(foreign_data) + len(foreign_tp)

    t_done += event.entries_trained * ftl.sort_train_us
    ftl.compute_us += event.entries_trained * ftl.sort_train_us
    group.gc_count += 1
    group.written_since_gc = False
    event.translation_writes = counts["translation_write"] - before["translation_write"]
    event.translation_reads = counts["translation_read"] - before["translation_read"]
    event.gc_reads = counts["gc_read"] - before["gc_read"]
    event.gc_writes = counts["gc_write"] - before["gc_write"]
    event.time_us = t_done
    return event
