import csv
import io
import json

import numpy as np
import pytest

from spatial_logarch import ErrorDist
from spatial_logarch.montecarlo import (
    CellResult, McReport, builtin_design, emit_tables, load_design, run_design, table_columns, write_manifest,
)


def small_design(reps=4, **kw):
    return builtin_design("A", replications=reps, seed=11).replace(
        grids=((3, 3), (4, 4)), sizes=((9, 10), (16, 12)), error_dists=(ErrorDist.normal(),), **kw)


def test_builtin_designs():
    assert builtin_design("A").params0(ErrorDist.normal(), 25).psi.tolist() == [[0.5, 0.1], [0.1, 0.5]]
    assert builtin_design("B").params0(ErrorDist.normal(), 25).pi.tolist() == [[0, 0], [0, 0]]
    assert builtin_design("c").params0(ErrorDist.normal(), 25).psi.tolist() == [[0.2, 0.4], [0.4, 0.2]]
    design = builtin_design("A")
    assert design.sizes == ((25, 30), (49, 100), (100, 200))
    assert design.replications == 200
    for model in "ABC":
        builtin_design(model).check()
    with pytest.raises(ValueError):
        builtin_design("Z")


def test_column_header_order():
    assert table_columns(2) == ["a", "psi11", "psi21", "psi12", "psi22", "pi11", "pi21", "pi12", "pi22"]


def test_single_replication_rmse_equals_abs_bias():
    report = run_design(small_design(reps=1))
    for cell in report.cells:
        assert cell.estimates.shape[0] == 1
        np.testing.assert_allclose(cell.rmse, np.abs(cell.bias), rtol=1e-14)


def test_rmse_bias_variance_identity():
    report = run_design(small_design(reps=6))
    for cell in report.cells:
        est = cell.estimates[cell.ok]
        np.testing.assert_allclose(cell.rmse ** 2, cell.bias ** 2 + est.var(axis=0), atol=1e-12)
        bias, rmse = cell.table_stats()
        np.testing.assert_allclose(rmse ** 2, bias ** 2 + np.r_[
            (cell.errors()[:, :2] - bias[0]).ravel().var(), est[:, 2:].var(axis=0)], atol=1e-12)


def test_truth_on_uncentred_scale():
    report = run_design(small_design(reps=1))
    np.testing.assert_allclose(report.cells[0].truth, [1, 1, 0.5, 0.1, 0.1, 0.5, 0.3, 0, 0, 0.3])


def test_csv_round_trip():
    report = run_design(small_design(reps=3))
    rows = list(csv.DictReader(io.StringIO(emit_tables(report, "csv"))))
    assert len(rows) == 4
    for row in rows:
        cell = report.cell("A", row["dist"], int(row["n"]), int(row["T"]))
        bias, rmse = cell.table_stats()
        vals = np.array([float(row[c]) for c in table_columns(2)])
        assert np.array_equal(vals, bias if row["statistic"] == "bias" else rmse)


def test_empty_report_header_only():
    text = emit_tables(McReport(()), "csv")
    assert text.strip().split(",")[:7] == ["statistic", "model", "dist", "n", "T", "replications", "failures"]
    assert text.count("\n") == 1


def test_text_tables_layout():
    text = emit_tables(run_design(small_design(reps=2)))
    assert text.splitlines()[0] == "Average bias"
    assert "RMSE" in text.splitlines()
    assert text.splitlines()[1].split() == table_columns(2)
    assert "Model A, normal errors" in text


def test_workers_do_not_change_results():
    design = small_design(reps=3)
    a, b = run_design(design, workers=1), run_design(design, workers=3)
    assert emit_tables(a, "csv") == emit_tables(b, "csv")
    for ca, cb in zip(a.cells, b.cells):
        assert np.array_equal(ca.estimates, cb.estimates, equal_nan=True)


def test_failures_counted_and_flagged():
    truth = np.zeros(3)
    est = np.array([[0.1, 0.0, 0.0], [np.nan] * 3, [0.3, 0.0, 0.0]])
    cell = CellResult("X", "normal", 4, 5, truth, est, est, np.array([True, False, True]), 1)
    assert cell.replications == 2 and cell.failures == 1 and cell.flagged
    np.testing.assert_allclose(cell.bias, [0.2, 0, 0])


def test_manifest(tmp_path):
    report = run_design(small_design(reps=1))
    write_manifest(tmp_path / "m.json", report, workers=1)
    doc = json.loads((tmp_path / "m.json").read_text())
    assert doc["design"]["model_id"] == "A"
    assert doc["design"]["seed"] == 11
    assert len(doc["cells"]) == 2


def test_load_design(tmp_path):
    path = tmp_path / "d.ini"
    path.write_text("[design]\nmodel_id = X\na0 = 1 0.5\npsi0 = 0.4 0; 0 0.4\npi0 = 0.2 0; 0 0.2\n"
                    "grids = 3x3, 4x4\nT = 10, 20\nerror_dists = normal, t3\nreplications = 7\nseed = 3\n")
    design = load_design(path)
    assert design.sizes == ((9, 10), (16, 20))
    assert [d.label for d in design.error_dists] == ["normal", "t3"]
    assert design.replications == 7
    design.check()


def test_unstable_design_rejected(tmp_path):
    path = tmp_path / "d.ini"
    path.write_text("[design]\npsi0 = 0.5 0; 0 0.5\npi0 = 0.9 0; 0 0.9\ngrids = 3x3\nT = 10\n")
    with pytest.raises(ValueError, match="unstable"):
        run_design(load_design(path))


@pytest.mark.slow
def test_standard_errors_shrink_with_sample_size():
    design = builtin_design("A", replications=50, seed=5)
    report = run_design(design, error_dists=["normal"], sizes=[(25, 30), (100, 200)])
    small = np.nanmean(report.cell("A", "normal", 25, 30).std_errors, axis=0)[2:]
    large = np.nanmean(report.cell("A", "normal", 100, 200).std_errors, axis=0)[2:]
    target = np.sqrt(100 * 200 / (25 * 30))
    ratio = small / large
    assert np.all(np.abs(ratio / target - 1) < 0.3), ratio
