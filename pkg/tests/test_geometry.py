import itertools

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ftlbench.errors import AddressError
from ftlbench.geometry import (FlashGeometry, PageAddr, VppnCodec, compose_ppn, decompose_ppn,
                               ppn_to_vppn, vppn_to_ppn)

FIELDS = st.sampled_from([1, 2, 4, 8])


@st.composite
def geometries(draw):
    return FlashGeometry(draw(FIELDS), draw(FIELDS), draw(FIELDS), draw(FIELDS), draw(FIELDS))


def all_addrs(g):
    return itertools.product(range(g.channels), range(g.ways_per_channel), range(g.planes_per_chip),
                             range(g.blocks_per_plane), range(g.pages_per_block))


def test_zero_address_is_ppn_zero(tiny):
    assert compose_ppn(PageAddr(0, 0, 0, 0, 0), tiny) == 0
    assert decompose_ppn(0, tiny) == PageAddr(0, 0, 0, 0, 0)


def test_channel_is_most_significant(tiny):
    # 1 * (2 ways * 1 plane * 2 blocks * 4 pages)
    assert compose_ppn(PageAddr(1, 0, 0, 0, 0), tiny) == 16


def test_last_ppn_is_all_max(tiny):
    assert decompose_ppn(tiny.total_pages - 1, tiny) == PageAddr(1, 1, 0, 1, 3)


def test_compose_round_trip_over_all_addresses(tiny):
    seen = set()
    for addr in all_addrs(tiny):
        ppn = compose_ppn(PageAddr(*addr), tiny)
        assert decompose_ppn(ppn, tiny) == addr
        seen.add(ppn)
    assert seen == set(range(32))


def test_vppn_multiset_is_full_range(tiny):
    assert sorted(ppn_to_vppn(p, tiny) for p in range(tiny.total_pages)) == list(range(32))


def test_vppn_zero(tiny):
    assert ppn_to_vppn(0, tiny) == 0
    assert vppn_to_ppn(0, tiny) == 0


def test_allocation_round_gets_consecutive_vppns(tiny):
    # one round of round-robin allocation: channel fastest, then way, then plane
    for block in range(tiny.blocks_per_plane):
        for page in range(tiny.pages_per_block):
            ppns = [compose_ppn(PageAddr(ch, way, pl, block, page), tiny)
                    for pl in range(tiny.planes_per_chip)
                    for way in range(tiny.ways_per_channel)
                    for ch in range(tiny.channels)]
            vppns = [ppn_to_vppn(p, tiny) for p in ppns]
            assert vppns == list(range(vppns[0], vppns[0] + len(vppns)))


def test_vppn_formula_by_hand(tiny):
    # ch1 w1 pl0 blk1 pg2: ((1*4 + 2)*1 + 0)*2 + 1)*2 + 1
    ppn = compose_ppn(PageAddr(1, 1, 0, 1, 2), tiny)
    assert ppn_to_vppn(ppn, tiny) == (((1 * 4 + 2) * 1 + 0) * 2 + 1) * 2 + 1


@pytest.mark.parametrize("addr", [(2, 0, 0, 0, 0), (0, 2, 0, 0, 0), (0, 0, 1, 0, 0),
                                  (0, 0, 0, 2, 0), (0, 0, 0, 0, 4), (-1, 0, 0, 0, 0)])
def test_out_of_range_field_rejected(tiny, addr):
    with pytest.raises(AddressError):
        compose_ppn(PageAddr(*addr), tiny)


@pytest.mark.parametrize("value", [-1, 32, 1000])
def test_out_of_range_numbers_rejected(tiny, value):
    for fn in (decompose_ppn, ppn_to_vppn, vppn_to_ppn):
        with pytest.raises(AddressError):
            fn(value, tiny)


@pytest.mark.parametrize("kwargs", [dict(channels=0), dict(pages_per_block=-3),
                                    dict(page_size=3000), dict(blocks_per_plane=1.5)])
def test_bad_geometry_rejected(kwargs):
    with pytest.raises(AddressError):
        FlashGeometry(**kwargs)


def test_huge_geometry_must_fit_in_64_bits():
    with pytest.raises(AddressError):
        FlashGeometry(1 << 20, 1 << 20, 1 << 10, 1 << 10, 1 << 10)


def test_default_geometry_counts():
    g = FlashGeometry()
    assert g.chips == 64
    assert g.total_pages == 64 * 256 * 512


@given(geometries(), st.data())
def test_codecs_invert_each_other(g, data):
    ppn = data.draw(st.integers(0, g.total_pages - 1))
    vppn = ppn_to_vppn(ppn, g)
    assert 0 <= vppn < g.total_pages
    assert vppn_to_ppn(vppn, g) == ppn
    assert compose_ppn(decompose_ppn(ppn, g), g) == ppn
    codec = VppnCodec(g)
    assert codec.to_vppn(ppn) == vppn
    assert codec.to_ppn(vppn) == ppn


@given(geometries())
def test_block_is_contiguous_ppn_range(g):
    ppb = g.pages_per_block
    for ppn in range(0, g.total_pages, max(1, g.total_pages // 16)):
        addr = decompose_ppn(ppn, g)
        assert ppn // ppb == g.block_of_ppn(ppn)
        assert addr.page == ppn % ppb
