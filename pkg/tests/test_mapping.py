import pytest
from hypothesis import given
from hypothesis import strategies as st

from ftlbench import FlashGeometry
from ftlbench.mapping import ENTRIES_PER_TPAGE, UNMAPPED, Cmt, DemandMapping
from ftlbench.nand import VALID, NandArray


class Rig:
    """A DemandMapping over a bump-allocated NAND so every program is in order."""

    def __init__(self, cmt_capacity, n_entries=2, batch=False):
        self.nand = NandArray(FlashGeometry(1, 1, 1, 64, 64))
        self.next = 0
        self.map = DemandMapping(self.nand, n_entries, cmt_capacity, self._bump, batch)

    def _bump(self, entry=None, at=0.0):
        ppn = self.next
        self.next += 1
        return ppn

    def write(self, lpn, token=0):
        ppn = self._bump()
        self.nand.program_page(ppn, lpn, token, "data_write")
        self.map.update_mapping_on_write(lpn, ppn, 0.0)
        return ppn

    def delta(self, before):
        now = self.nand.counters.as_dict()
        return {k: now[k] - before[k] for k in now if now[k] != before[k]}


def test_cmt_hit_after_insert():
    cmt = Cmt(4)
    cmt.put(3, 99, False)
    assert cmt.lookup(3) == 99
    assert (cmt.hits, cmt.misses) == (1, 0)


def test_cmt_miss_when_empty():
    cmt = Cmt(4)
    assert cmt.lookup(3) is None
    assert cmt.misses == 1


def test_cmt_lru_order():
    cmt = Cmt(2)
    cmt.put(1, 10, False)
    cmt.put(2, 20, False)
    cmt.lookup(1)
    assert cmt.put(3, 30, False) == [(2, 20, False)]


def test_cmt_capacity_must_be_positive():
    with pytest.raises(ValueError):
        Cmt(0)


def test_insert_into_non_full_cmt_is_free():
    rig = Rig(4)
    before = rig.nand.counters.as_dict()
    rig.map.cmt_insert(1, 5, False, 0.0)
    assert rig.delta(before) == {}


def test_clean_eviction_is_free():
    rig = Rig(1)
    rig.map.cmt_insert(1, 5, False, 0.0)
    before = rig.nand.counters.as_dict()
    rig.map.cmt_insert(2, 6, False, 0.0)
    assert rig.delta(before) == {}


def test_dirty_eviction_costs_one_read_one_write():
    rig = Rig(2)
    rig.map.write_tpage(0, 0.0)  # the page must already exist on flash to be read back
    rig.write(1)
    rig.map.cmt_insert(2, 7, False, 0.0)
    before = rig.nand.counters.as_dict()
    old_tp = rig.map.gtd[0]
    rig.map.cmt_insert(3, 8, False, 0.0)  # evicts LPN 1, which is dirty
    assert rig.delta(before) == {"translation_read": 1, "translation_write": 1}
    assert rig.map.gtd[0] != old_tp
    assert rig.nand.state[rig.map.gtd[0]] == VALID
    assert rig.nand.state[old_tp] != VALID
    assert rig.map.slot(1) != UNMAPPED


def test_batched_write_back_flushes_siblings():
    rig = Rig(2, batch=True)
    a = rig.write(1)
    b = rig.write(2)
    rig.map.cmt_insert(600, 9, False, 0.0)  # evicts 1; 2 shares its page and is flushed too
    assert rig.map.slot(1) == a and rig.map.slot(2) == b
    assert not rig.map.cmt.peek(2)[1]


def test_miss_path_costs_one_translation_read():
    rig = Rig(1)
    p = rig.write(5)
    rig.map.cmt_insert(700, 1, False, 0.0)  # push 5 out
    before = rig.nand.counters.as_dict()
    _, _, ppn = rig.map.load_mapping(5, 0.0)
    assert ppn == p
    assert rig.delta(before) == {"translation_read": 1}


def test_two_misses_same_page_two_reads():
    rig = Rig(1)
    rig.write(5)
    rig.write(6)
    rig.map.cmt_insert(700, 1, False, 0.0)
    before = rig.nand.counters.as_dict()
    rig.map.load_mapping(5, 0.0)
    rig.map.cmt_insert(701, 1, False, 0.0)
    rig.map.load_mapping(6, 0.0)
    assert rig.delta(before) == {"translation_read": 2}


def test_prefetch_four_with_one_read():
    rig = Rig(8)
    ppns = [rig.write(x) for x in range(10, 14)]
    rig.map.write_tpage(0, 0.0)
    for x in range(10, 14):
        rig.map.cmt._map.pop(x)  # drop the now-clean entries
    before = rig.nand.counters.as_dict()
    _, _, ppn = rig.map.load_mapping(10, 0.0, prefetch=4)
    assert ppn == ppns[0]
    assert rig.delta(before) == {"translation_read": 1}
    assert [rig.map.cmt.lookup(x) for x in range(10, 14)] == ppns


def test_unwritten_lpn_is_unmapped():
    rig = Rig(4)
    assert rig.map.load_mapping(3, 0.0)[2] == UNMAPPED
    rig.write(1)
    rig.map.write_tpage(0, 0.0)
    assert rig.map.load_mapping(3, 0.0)[2] == UNMAPPED


def test_overwrite_invalidates_exactly_one():
    rig = Rig(4)
    first = rig.write(1)
    _, _, invalid = rig.nand.page_counts()
    assert invalid == 0
    rig.write(1)
    assert rig.nand.page_counts()[2] == 1
    assert rig.nand.state[first] != VALID


@given(st.lists(st.tuples(st.sampled_from("wrl"), st.integers(0, 2 * ENTRIES_PER_TPAGE - 1)),
                max_size=150),
       st.integers(1, 4), st.booleans())
def test_mapping_matches_shadow(ops, capacity, batch):
    rig = Rig(capacity, batch=batch)
    shadow = {}
    for op, lpn in ops:
        lpn %= 24  # a narrow range so hits, misses and evictions all happen
        lpn += (lpn % 2) * ENTRIES_PER_TPAGE
        if op == "w":
            shadow[lpn] = rig.write(lpn)
        elif op == "r":
            if rig.map.cmt_lookup(lpn) is None:
                assert rig.map.load_mapping(lpn, 0.0)[2] == shadow.get(lpn, UNMAPPED)
        else:
            rig.map.cmt_insert(1000 + lpn, 0, False, 0.0)
        assert len(rig.map.cmt) <= capacity
        for x, ppn in shadow.items():
            assert rig.map.current(x) == ppn
        for e in range(2):
            if rig.map.gtd[e] != UNMAPPED:
                assert rig.nand.state[rig.map.gtd[e]] == VALID
