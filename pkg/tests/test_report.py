import json
import math

from ftlbench import Engine, IoRequest, make_ftl, run
from ftlbench.report import SUMMARY_FIELDS, LatencySummary, headline


def test_latency_summary():
    s = LatencySummary.of([40.0, 80.0, 40.0, 120.0])
    assert (s.count, s.mean_us, s.p50_us, s.max_us) == (4, 70.0, 40.0, 120.0)
    assert LatencySummary.of([]).p99_us is None


def test_report_round_trips_through_json(small):
    ftl = make_ftl("tpftl", small, op_fraction=0.25)
    reqs = [IoRequest(0.0, "W", x, 8) for x in range(0, 400, 8)]
    reqs += [IoRequest(0.0, "R", x, 3) for x in range(0, 400, 5)]
    report = run(reqs, ftl, verify=True, config_echo={"ftl": "tpftl"}, seed=1)
    data = json.loads(report.to_json())
    assert data["host_write_pages"] == 400 and data["host_read_pages"] == 240
    assert math.isclose(sum(data["read_fractions"].values()), 1.0)
    assert data["write_amplification"] >= 1.0
    assert data["counters"]["data_write"] == 400
    assert data["config"] == {"ftl": "tpftl"} and data["seed"] == 1
    assert set(headline(report)) == set(SUMMARY_FIELDS)


def test_read_only_run_has_no_write_amplification(small):
    ftl = make_ftl("ideal", small)
    report = run([IoRequest(0.0, "R", 0, 1)], ftl)
    assert report.write_amplification is None
    assert report.unmapped_reads == 1 and report.read_fractions["Single"] is None
    json.loads(report.to_json())
