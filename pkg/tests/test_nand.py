import pytest
from hypothesis import given
from hypothesis import strategies as st

from ftlbench import FlashGeometry, OpCostTable
from ftlbench.errors import DeviceRuleViolation
from ftlbench.nand import FREE, INVALID, OP_CLASSES, VALID, NandArray


@pytest.fixture
def nand():
    return NandArray(FlashGeometry(2, 2, 1, 4, 8))


def test_program_first_page(nand):
    nand.program_page(0, lpn=5, token=1, cls="data_write")
    assert nand.state[0] == VALID
    assert nand.write_pointer[0] == 1


def test_out_of_order_program_rejected(nand):
    nand.program_page(0, 0, 0, "data_write")
    with pytest.raises(DeviceRuleViolation):
        nand.program_page(2, 0, 1, "data_write")


def test_full_block_rejects_one_more():
    g = FlashGeometry(1, 1, 1, 2, 512)
    nand = NandArray(g)
    for p in range(512):
        nand.program_page(p, p, p, "data_write")
    assert nand.write_pointer[0] == 512
    # the next PPN belongs to block 1, so address page 0 of block 0 again
    with pytest.raises(DeviceRuleViolation):
        nand.program_page(0, 0, 999, "data_write")


def test_program_non_free_rejected(nand):
    nand.program_page(0, 0, 0, "data_write")
    with pytest.raises(DeviceRuleViolation):
        nand.program_page(0, 0, 1, "data_write")


def test_read_returns_oob(nand):
    nand.program_page(0, 7, 42, "data_write")
    _, lpn, token = nand.read_page(0, "data_read")
    assert (lpn, token) == (7, 42)


def test_invalid_page_still_readable(nand):
    nand.program_page(0, 7, 42, "data_write")
    nand.invalidate_page(0)
    assert nand.read_page(0, "data_read")[2] == 42


def test_read_free_page_rejected(nand):
    with pytest.raises(DeviceRuleViolation):
        nand.read_page(3, "data_read")


def test_read_counter(nand):
    nand.program_page(0, 0, 0, "data_write")
    for _ in range(3):
        nand.read_page(0, "data_read")
    assert nand.counters["data_read"] == 3


def test_erase_fully_invalid_block():
    g = FlashGeometry(1, 1, 1, 2, 512)
    nand = NandArray(g)
    for p in range(512):
        nand.program_page(p, p, p, "data_write")
        nand.invalidate_page(p)
    nand.erase_block(0)
    assert all(nand.state[p] == FREE for p in range(512))
    assert nand.write_pointer[0] == 0
    assert nand.oob_lpn[0] == -1 and nand.oob_token[0] == -1


def test_erase_with_valid_page_rejected(nand):
    nand.program_page(0, 0, 0, "data_write")
    with pytest.raises(DeviceRuleViolation):
        nand.erase_block(0)


def test_erase_twice_counts(nand):
    nand.erase_block(1)
    nand.erase_block(1)
    assert nand.erase_count[1] == 2
    assert nand.counters["erase"] == 2


def test_invalidate_rules(nand):
    with pytest.raises(DeviceRuleViolation):
        nand.invalidate_page(0)
    nand.program_page(0, 0, 0, "data_write")
    nand.invalidate_page(0)
    assert nand.state[0] == INVALID
    assert nand.valid_count[0] == 0 and nand.invalid_count[0] == 1
    with pytest.raises(DeviceRuleViolation):
        nand.invalidate_page(0)


def test_cost_defaults_and_energy():
    costs = OpCostTable()
    assert (costs.read_us, costs.write_us, costs.erase_us) == (40.0, 200.0, 2000.0)
    nand = NandArray(FlashGeometry(1, 1, 1, 2, 4))
    assert nand.program_page(0, 0, 0, "data_write") == 200.0
    assert nand.read_page(0, "data_read")[0] == 40.0
    nand.invalidate_page(0)
    assert nand.erase_block(0) == 2000.0
    assert nand.energy == costs.write_energy + costs.read_energy + costs.erase_energy


def test_negative_cost_rejected():
    with pytest.raises(ValueError):
        OpCostTable(read_us=-1)


@given(st.lists(st.tuples(st.sampled_from("wie"), st.integers(0, 7), st.integers(0, 31)),
                max_size=200))
def test_accounting_holds_under_random_ops(ops):
    g = FlashGeometry(1, 2, 1, 4, 8)  # 8 blocks of 8 pages
    nand = NandArray(g)
    shadow = {}  # ppn -> state, the independent model
    prev = nand.counters.as_dict()
    for op, block, page in ops:
        base = block * 8
        try:
            if op == "w":
                ppn = base + nand.write_pointer[block]
                if nand.write_pointer[block] < 8:
                    nand.program_page(ppn, page, page, "data_write")
                    shadow[ppn] = VALID
            elif op == "i":
                valid = [p for p in range(base, base + 8) if shadow.get(p) == VALID]
                if valid:
                    nand.invalidate_page(valid[page % len(valid)])
                    shadow[valid[page % len(valid)]] = INVALID
            else:
                nand.erase_block(block)
                for p in range(base, base + 8):
                    shadow.pop(p, None)
        except DeviceRuleViolation:
            assert op == "e" and any(shadow.get(p) == VALID for p in range(base, base + 8))
        free, valid, invalid = nand.page_counts()
        assert free + valid + invalid == g.total_pages
        assert valid == sum(1 for s in shadow.values() if s == VALID)
        assert invalid == sum(1 for s in shadow.values() if s == INVALID)
        for b in range(g.total_blocks):
            assert 0 <= nand.write_pointer[b] <= 8
            assert nand.valid_count[b] + nand.invalid_count[b] <= nand.write_pointer[b]
        now = nand.counters.as_dict()
        assert all(now[k] >= prev[k] for k in OP_CLASSES)
        prev = now
