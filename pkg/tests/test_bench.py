import csv

import numpy as np
import pytest

from periodrep.bench import (CSV_COLUMNS, batch_evaluate, bench_report, direct_objective,
                             draw_candidates, parse_backend)
from periodrep.models import get_model
from periodrep.models import predator_prey as pp
from periodrep.optim import PENALTY, Objective


@pytest.fixture(scope="module")
def problem(pp_system, gains, pp_phi, pp_rk4):
    return Objective(pp_system, gains, pp_phi, pp_rk4[0], stride=10, box=pp.BOX)


def test_parse_backend():
    assert parse_backend("seq") == ("seq", 1)
    assert parse_backend("scan")[0] == "scan"
    assert parse_backend("threads(8)") == ("threads", 8)
    for bad in ("threads(0)", "threads", "gpu"):
        with pytest.raises(ValueError):
            parse_backend(bad)


def test_single_candidate_all_backends(problem):
    lam = [pp.TRUE_LAMBDA]
    vals = [batch_evaluate(problem, lam, b).values[0] for b in ("seq", "scan", "threads(3)")]
    assert vals[0] == vals[2]
    # the value at the truth is a 1e-8 floor, so compare on the scale of the squared data
    assert abs(vals[1] - vals[0]) <= 1e-9 * max(abs(vals[0]), 1.0)


def test_domain_error_flagged(problem):
    bad = pp.TRUE_LAMBDA.copy()
    bad[4] = 0.0
    res = batch_evaluate(problem, [pp.TRUE_LAMBDA, bad], "threads(2)")
    assert res.flagged.tolist() == [False, True]
    assert res.values[1] == PENALTY * (1 + problem.box.distance(bad))


def test_report_thousand_candidates(problem, tmp_path):
    rep = bench_report(problem, 1000, seed=3, workers=4)
    assert [r["backend"] for r in rep.rows] == ["seq", "scan", "threads(4)"]
    assert rep.max_discrepancy <= 1e-9
    np.testing.assert_array_equal(rep.values["threads(4)"], rep.values["seq"])
    path = tmp_path / "bench.csv"
    rep.write_csv(path)
    rows = list(csv.DictReader(path.open()))
    assert len(rows) == 3
    assert tuple(rows[0]) == CSV_COLUMNS
    assert float(rows[0]["speedup_vs_seq"]) == 1.0


def test_report_single_candidate(problem):
    rep = bench_report(problem, 1, seed=0)
    assert all(np.isfinite(r["speedup_vs_seq"]) for r in rep.rows)
    with pytest.raises(ValueError):
        bench_report(problem, 0, seed=0)


def test_same_seed_same_candidates(problem):
    a = draw_candidates(problem, 20, 9)
    b = draw_candidates(problem, 20, 9)
    np.testing.assert_array_equal(a, b)
    va = batch_evaluate(problem, a, "seq").values
    vb = batch_evaluate(problem, b, "seq").values
    np.testing.assert_array_equal(va, vb)


def test_euler_baseline_row(problem):
    direct = direct_objective(problem, get_model("predator_prey").direct_output)
    # the directly stepped trajectory at the truth fits about as well as the representation
    assert direct(pp.TRUE_LAMBDA) < 1e-3
    rep = bench_report(problem, 3, seed=1, workers=2, direct=direct)
    assert rep.rows[-1]["backend"] == "euler"
    assert np.isnan(rep.rows[-1]["max_discrepancy"])
