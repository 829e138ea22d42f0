import csv
import json
import math

import numpy as np
import pytest

from mopc.cli import COMPARE_SCHEMES, SUMMARY_COLUMNS, main
from mopc.model import example_network, load_instance, read_trace, save_instance


def _summary(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def compared(tmp_path_factory):
    out = tmp_path_factory.mktemp("cmp")
    assert main(["compare", "--seed", "5", "--out", str(out)]) == 0
    return out


def test_compare_rows(compared):
    rows = _summary(compared / "summary.csv")
    assert list(rows[0].keys()) == list(SUMMARY_COLUMNS)
    assert [r["scheme"] for r in rows] == list(COMPARE_SCHEMES) and len(rows) == 6
    alpha = load_instance(compared / "instance.json").alpha
    for r in rows:
        obj, delay, fair, load = (float(r[k]) for k in ("obj", "delay", "fairness", "load"))
        assert all(math.isfinite(v) for v in (obj, delay, fair, load))
        assert abs(obj - (delay - fair + alpha * load)) <= 1e-9 * max(1.0, abs(obj))
    flags = {r["scheme"]: r["card_ok"] for r in rows}
    assert flags["mopc"] == flags["fw-projected"] == flags["fw-relaxed-projected"] == "true"
    for s in COMPARE_SCHEMES:
        rep = json.loads((compared / s / "report.json").read_text())
        assert rep["scheme"] == s and (compared / s / "trace.csv").exists()


def test_compare_is_byte_identical(compared, tmp_path):
    assert main(["compare", "--seed", "5", "--out", str(tmp_path)]) == 0
    for name in ("summary.csv", "instance.json", "mopc/report.json", "mopc/trace.csv", "fw/trace.csv"):
        assert (tmp_path / name).read_bytes() == (compared / name).read_bytes()


def test_solve_then_report(tmp_path):
    inst = tmp_path / "inst.json"
    save_instance(example_network(capacities=[4e9, 6e9, 5e9, 3e9, 8e9], flow_sizes=[2e9, 1e9],
                                  cardinality_caps=[1, 1]), inst)
    run = tmp_path / "run"
    assert main(["solve", "--instance", str(inst), "--scheme", "mopc", "--out", str(run)]) == 0
    rep = json.loads((run / "report.json").read_text())
    assert rep["status"] == "converged" and rep["card_ok"] is True
    header, data = read_trace(run / "trace.csv")
    assert header[4] == "y_dif"
    assert np.all(np.diff(data[:, 0]) > 0)
    assert data[-1, header.index("vio")] <= 1e-10
    assert main(["report", "--trace", str(run)]) == 0
    plot_header, plot = read_trace(run / "plot.csv")
    assert plot_header[0] == "iter" and plot.shape[0] == data.shape[0]
    assert plot[-1, plot_header.index("rel_obj_gap")] == 0.0


def test_generate(tmp_path, capsys):
    out = tmp_path / "g.json"
    assert main(["generate", "--seed", "3", "--num-flows", "5", "--out", str(out)]) == 0
    assert load_instance(out).num_flows == 5
    assert "K=5" in capsys.readouterr().out


def test_overrides(tmp_path):
    out = tmp_path / "o"
    assert main(["solve", "--seed", "1", "--scheme", "num", "--alpha", "0", "--max-iters", "50",
                 "--out", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["iterations"] <= 50 and rep["kind"] == "convex"


def test_missing_instance_writes_error(tmp_path):
    out = tmp_path / "e"
    assert main(["solve", "--instance", str(tmp_path / "nope.json"), "--out", str(out)]) == 2
    err = json.loads((out / "error.json").read_text())
    assert err["error"] == "CliError" and err["command"] == "solve"


def test_solver_error_exit_status(tmp_path):
    out = tmp_path / "bad"
    assert main(["solve", "--seed", "1", "--rho0", "-1", "--out", str(out)]) == 1
    assert json.loads((out / "error.json").read_text())["error"] == "ValueError"


def test_unknown_scheme(tmp_path):
    out = tmp_path / "u"
    assert main(["compare", "--seed", "1", "--schemes", "mopc,cg", "--out", str(out)]) == 2
    assert "cg" in json.loads((out / "error.json").read_text())["message"]


def test_report_rejects_unsorted_trace(tmp_path):
    p = tmp_path / "trace.csv"
    p.write_text("iter,rho,mu,p_res,d_res,vio,L_rho,obj\n2,1,1,1,1,0,1,1\n1,1,1,1,1,0,1,1\n")
    assert main(["report", "--trace", str(p), "--out", str(tmp_path / "x.csv")]) == 2
