import io

import numpy as np
import pytest
from scipy.stats import chisquare

from ftlbench import FlashGeometry, GenSpec, generate, make_ftl, parse_trace, warmup
from ftlbench.engine import Engine, IoRequest
from ftlbench.errors import ConfigError, TraceParseError
from ftlbench.workload import Xorshift64Star, splitmix64


def test_splitmix64_reference_value():
    # first output of the reference splitmix64 generator seeded with 0
    assert splitmix64(0) == 0xE220A8397B1DCDAF


def test_xorshift64star_matches_numpy_model():
    with np.errstate(over="ignore"):
        state = np.uint64(splitmix64(42))
        expected = []
        for _ in range(50):
            state ^= state >> np.uint64(12)
            state ^= state << np.uint64(25)
            state ^= state >> np.uint64(27)
            expected.append(int(state * np.uint64(2685821657736338717)))
    rng = Xorshift64Star(42)
    assert [rng.next_u64() for _ in range(50)] == expected


def test_same_seed_same_sequence():
    spec = GenSpec("mixed", 3, 4, 500, seed=99)
    assert generate(spec, 10_000) == generate(spec, 10_000)
    other = GenSpec("mixed", 3, 4, 500, seed=100)
    assert generate(other, 10_000) != generate(spec, 10_000)


def test_seq_write_lpns():
    reqs = generate(GenSpec("seq_write", 1, 1, 6), 100)
    assert [r.start_lpn for r in reqs] == [0, 1, 2, 3, 4, 5]
    assert {r.op for r in reqs} == {"W"}


def test_seq_wraps_and_stripes():
    reqs = generate(GenSpec("seq_read", 2, 2, 6, working_set=8), 100)
    assert [r.start_lpn for r in reqs] == [0, 2, 4, 6, 0, 2]
    assert [r.stream_id for r in reqs] == [0, 1, 0, 1, 0, 1]


def test_rand_read_uniform_chi_square():
    n, buckets, space = 10 ** 6, 64, 64 * 1000
    reqs = generate(GenSpec("rand_read", 1, 1, n, seed=5), space)
    counts = np.bincount([r.start_lpn * buckets // space for r in reqs], minlength=buckets)
    assert chisquare(counts).pvalue > 0.01


def test_mixed_read_fraction():
    reqs = generate(GenSpec("mixed", 1, 1, 20_000, seed=1, read_fraction=0.3), 1000)
    share = sum(r.op == "R" for r in reqs) / len(reqs)
    assert abs(share - 0.3) < 0.02


@pytest.mark.parametrize("spec", [GenSpec(working_set=2000), GenSpec(io_pages=0),
                                  GenSpec(pattern="zigzag"), GenSpec(read_fraction=1.5),
                                  GenSpec(streams=0)])
def test_bad_specs(spec):
    with pytest.raises(ConfigError):
        generate(spec, 1000)


def test_trace_examples():
    reqs = parse_trace(["0,R,100,4\n", "12,W,0,1\n"], 1000)
    assert reqs == [IoRequest(0.0, "R", 100, 4, 0), IoRequest(12.0, "W", 0, 1, 0)]


def test_trace_skips_comments_and_blanks():
    reqs = parse_trace(io.StringIO("# header\n\n5,W,7,2\n"), 1000)
    assert len(reqs) == 1 and reqs[0].start_lpn == 7


@pytest.mark.parametrize("text,lineno", [("x,y\n", 1), ("0,R,1,1\n0, R,1,1\n", 2),
                                         ("0,r,1,1\n", 1), ("0,R,1,0\n", 1), ("-1,R,1,1\n", 1),
                                         ("0,R,1,1,\n", 1)])
def test_trace_parse_errors(text, lineno):
    with pytest.raises(TraceParseError) as err:
        parse_trace(io.StringIO(text), 1000)
    assert err.value.lineno == lineno
    assert f"line {lineno}" in str(err.value)


def test_trace_scaling():
    reqs = parse_trace(["0,R,300,1"], 1000, scale=(7, 2))
    assert reqs[0].start_lpn == 300 * 7 // 2 % 1000


def test_trace_beyond_capacity():
    with pytest.raises(ConfigError):
        parse_trace(["0,W,999,2"], 1000)


def test_warmup_once_writes_every_lpn(small):
    ftl = make_ftl("dftl", small, op_fraction=0.25)
    engine = Engine(ftl, verify=True)
    warmup(ftl, 1, engine=engine)
    assert sorted(engine.shadow) == list(range(ftl.logical_pages))


def test_warmup_six_times_runs_gc():
    ftl = make_ftl("ideal", FlashGeometry(1, 2, 1, 16, 32), op_fraction=0.25)
    assert warmup(ftl, 6, io_pages=16) > 0


def test_counters_zero_after_warmup(small):
    ftl = make_ftl("learnedftl", small, op_fraction=0.25)
    warmup(ftl, 2)
    assert all(v == 0 for v in ftl.nand.counters.as_dict().values())
    assert ftl.gc_count == 0 and ftl.nand.energy == 0
    assert max(ftl.timeline.next_free) == 0


def test_zero_multiplier_is_noop(small):
    ftl = make_ftl("ideal", small)
    assert warmup(ftl, 0) == 0
    assert ftl.nand.page_counts()[1] == 0
