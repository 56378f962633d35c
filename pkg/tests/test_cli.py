"""Command-line behavior: file formats, configuration, exit codes, and
report round-trips."""

import csv
import json

import numpy as np
import pytest

from mvcwm.cli import (
    UsageError,
    fit_result_to_dict,
    ingest,
    load_selection_report,
    main,
    params_from_dict,
    params_to_dict,
    write_long_csv,
)
from mvcwm.densities import Family
from mvcwm.ecm import MatrixData
from mvcwm.simulate import make_truth, sample_cwm


def _write_rows(path, rows, header=("obs", "block", "row", "col", "value")):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


@pytest.fixture()
def small_file(tmp_path):
    """Two observations, Y 2x1 and X 1x1, values chosen by hand."""
    rows = [
        (0, "Y", 0, 0, "1.5"), (0, "Y", 1, 0, "-2.0"), (0, "X", 0, 0, "0.25"),
        (1, "Y", 0, 0, "3.0"), (1, "Y", 1, 0, "4.5"), (1, "X", 0, 0, "-1.0"),
    ]
    path = tmp_path / "small.csv"
    _write_rows(path, rows)
    return path


def test_ingest_handcrafted_round_trip(small_file):
    data = ingest(small_file)
    np.testing.assert_array_equal(data.y, [[[1.5], [-2.0]], [[3.0], [4.5]]])
    np.testing.assert_array_equal(data.x, [[[0.25]], [[-1.0]]])


def test_ingest_missing_cell_names_it(tmp_path, small_file):
    rows = list(csv.reader(open(small_file)))[1:]
    del rows[4]  # the (1, Y, 1, 0) cell
    path = tmp_path / "missing.csv"
    _write_rows(path, rows)
    with pytest.raises(UsageError, match=r"observation 1, block Y, row 1, column 0"):
        ingest(path)


def test_ingest_rejects_bad_header_and_duplicates(tmp_path):
    bad_header = tmp_path / "header.csv"
    _write_rows(bad_header, [], header=("obs", "block", "i", "j", "value"))
    with pytest.raises(UsageError, match="expected header"):
        ingest(bad_header)
    dup = tmp_path / "dup.csv"
    _write_rows(dup, [(0, "Y", 0, 0, "1."), (0, "Y", 0, 0, "2.")])
    with pytest.raises(UsageError, match="duplicate cell"):
        ingest(dup)
    bad_block = tmp_path / "block.csv"
    _write_rows(bad_block, [(0, "Z", 0, 0, "1.")])
    with pytest.raises(UsageError, match="block must be Y or X"):
        ingest(bad_block)
    with pytest.raises(UsageError, match="does not exist"):
        ingest(tmp_path / "absent.csv")


def test_write_ingest_cycle_is_bitwise(tmp_path):
    from mvcwm.densities import SkewTTail, VgTail

    truth = make_truth(Family.VARIANCE_GAMMA, Family.SKEW_T, 10.0,
                       tail_x=VgTail(7.0), tail_y=SkewTTail(10.0))
    data, _ = sample_cwm(truth, 25, 3)
    path = tmp_path / "cycle.csv"
    write_long_csv(data, path)
    back = ingest(path)
    np.testing.assert_array_equal(back.y, data.y)
    np.testing.assert_array_equal(back.x, data.x)


def test_ingest_without_x_block_gives_empty_covariates(tmp_path):
    path = tmp_path / "yonly.csv"
    _write_rows(path, [(0, "Y", 0, 0, "1."), (1, "Y", 0, 0, "2.")])
    data = ingest(path)
    assert data.y.shape == (2, 1, 1)
    assert data.x.shape == (2, 0, 1)


def test_params_dict_round_trip():
    from mvcwm.densities import GhTail, SkewTTail

    truth = make_truth(Family.GENERALIZED_HYPERBOLIC, Family.SKEW_T, 5.0,
                       tail_x=GhTail(-0.5, 3.0), tail_y=SkewTTail(10.0))
    back = params_from_dict(params_to_dict(truth))
    assert back.spec == truth.spec
    for orig, rebuilt in zip(truth.components, back.components):
        assert rebuilt.weight == orig.weight
        np.testing.assert_array_equal(rebuilt.coef, orig.coef)
        np.testing.assert_array_equal(rebuilt.skew_y, orig.skew_y)
        np.testing.assert_array_equal(rebuilt.row_scale_y.matrix,
                                      orig.row_scale_y.matrix)
        np.testing.assert_array_equal(rebuilt.mean_x, orig.mean_x)
        assert rebuilt.tail_y == orig.tail_y
        assert rebuilt.tail_x == orig.tail_x


@pytest.fixture(scope="module")
def cli_data_file(tmp_path_factory):
    """A small two-group dataset on disk, cheap enough for grid fits."""
    rng = np.random.default_rng(7)
    n = 60
    x = rng.normal(size=(n, 1, 2))
    x[n // 2:] += 6.0
    y = 2.0 * x + 1.0 + 0.3 * rng.normal(size=(n, 1, 2))
    path = tmp_path_factory.mktemp("cli") / "two_groups.csv"
    write_long_csv(MatrixData(y=y, x=x), path)
    return path


def _run(argv):
    return main([str(a) for a in argv])


def test_fit_command_writes_schema_valid_result(tmp_path, cli_data_file):
    out = tmp_path / "fit_out"
    code = _run(["fit", "--data", cli_data_file, "--families", "normal-normal",
                 "--g-min", "2", "--starts", "2", "--tol", "1e-4",
                 "--seed", "0", "--out", out])
    assert code == 0
    result = json.loads((out / "normal-normal_G2" / "result.json").read_text())
    assert result["model"] == "normal-normal_G2"
    assert result["params"]["spec"]["n_components"] == 2
    assert len(result["labels"]) == 60
    import jsonschema
    from importlib import resources

    schema = json.loads(
        resources.files("mvcwm").joinpath("schemas/result.schema.json").read_text()
    )
    jsonschema.validate(result, schema)
    # parameters rebuild into a usable model
    params = params_from_dict(result["params"])
    assert params.spec.n_components == 2


def test_select_single_cell_equals_fit(tmp_path, cli_data_file):
    fit_out, sel_out = tmp_path / "f", tmp_path / "s"
    args = ["--data", cli_data_file, "--families", "normal-normal",
            "--g-min", "2", "--g-max", "2", "--starts", "2", "--tol", "1e-4",
            "--seed", "0"]
    assert _run(["fit", *args, "--out", fit_out]) == 0
    assert _run(["select", *args, "--out", sel_out]) == 0
    fit_json = (fit_out / "normal-normal_G2" / "result.json").read_text()
    sel_json = (sel_out / "normal-normal_G2" / "result.json").read_text()
    assert fit_json == sel_json


def test_select_ranks_and_round_trips(tmp_path, cli_data_file):
    out = tmp_path / "sel"
    code = _run(["select", "--data", cli_data_file,
                 "--families", "normal-normal,fmr-normal",
                 "--g-min", "1", "--g-max", "2", "--starts", "2",
                 "--tol", "1e-4", "--seed", "3", "--out", out])
    assert code == 0
    with open(out / "summary.csv") as fh:
        table = list(csv.DictReader(fh))
    assert len(table) == 4
    bics = [float(row["bic"]) for row in table]
    assert bics == sorted(bics, reverse=True)
    report = load_selection_report(out / "selection.json")
    assert {row.model for row in report.rows} == {
        "normal-normal_G1", "normal-normal_G2", "fmr-normal_G1", "fmr-normal_G2",
    }
    # the two-group structure lives in the covariates too, so the full
    # model at G=2 must beat its G=1 version
    by_model = {row.model: row for row in report.rows}
    assert by_model["normal-normal_G2"].bic > by_model["normal-normal_G1"].bic


def test_select_is_deterministic_across_jobs(tmp_path, cli_data_file):
    outs = []
    for jobs, name in ((1, "j1"), (2, "j2")):
        out = tmp_path / name
        code = _run(["select", "--data", cli_data_file,
                     "--families", "fmr-normal", "--g-min", "1", "--g-max", "2",
                     "--starts", "2", "--tol", "1e-4", "--seed", "11",
                     "--jobs", jobs, "--out", out])
        assert code == 0
        outs.append((out / "summary.csv").read_text())
    assert outs[0] == outs[1]


def test_config_twin_and_flag_precedence(tmp_path, cli_data_file):
    out_flag, out_cfg, out_mix = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    config = {"families": "fmr-normal", "g_min": 2, "g_max": 2, "starts": 2,
              "tol": 1e-4, "seed": 0, "data": str(cli_data_file)}
    cfg_path = tmp_path / "run.json"
    cfg_path.write_text(json.dumps(config))
    flag_args = ["fit", "--data", cli_data_file, "--families", "fmr-normal",
                 "--g-min", "2", "--starts", "2", "--tol", "1e-4", "--seed", "0"]
    assert _run([*flag_args, "--out", out_flag]) == 0
    assert _run(["fit", "--config", cfg_path, "--out", out_cfg]) == 0
    assert ((out_flag / "fmr-normal_G2" / "result.json").read_text()
            == (out_cfg / "fmr-normal_G2" / "result.json").read_text())
    # a flag overrides its config twin: G becomes 1
    assert _run(["fit", "--config", cfg_path, "--g-min", "1", "--g-max", "1",
                 "--out", out_mix]) == 0
    assert (out_mix / "fmr-normal_G1" / "result.json").exists()


def test_validation_failures_exit_2(tmp_path, cli_data_file):
    assert _run(["fit", "--data", tmp_path / "nope.csv",
                 "--families", "normal-normal", "--out", tmp_path / "o1"]) == 2
    assert _run(["fit", "--data", cli_data_file, "--families", "normal-cauchy",
                 "--out", tmp_path / "o2"]) == 2
    assert _run(["fit", "--data", cli_data_file, "--families", "normal",
                 "--out", tmp_path / "o3"]) == 2  # pair token required
    assert _run(["select", "--data", cli_data_file, "--families", "fmr-normal",
                 "--g-min", "3", "--g-max", "2", "--out", tmp_path / "o4"]) == 2
    assert _run(["simulate", "--scenario", "not-a-scenario",
                 "--out", tmp_path / "o5"]) == 2
    assert _run(["study", "--kind", "classification", "--families",
                 "fmr-normal", "--replicates", "0", "--out", tmp_path / "o6"]) == 2
    bad_cfg = tmp_path / "bad.json"
    bad_cfg.write_text('{"tol": -1}')
    assert _run(["fit", "--config", bad_cfg, "--data", cli_data_file,
                 "--families", "fmr-normal", "--out", tmp_path / "o7"]) == 2


def test_all_fits_failing_exits_3(tmp_path):
    """A constant covariate makes every regression design singular."""
    n = 30
    y = np.random.default_rng(0).normal(size=(n, 1, 2))
    x = np.ones((n, 1, 2))
    path = tmp_path / "singular.csv"
    write_long_csv(MatrixData(y=y, x=x), path)
    out = tmp_path / "out"
    code = _run(["fit", "--data", path, "--families", "fmr-normal",
                 "--starts", "2", "--seed", "0", "--out", out])
    assert code == 3
    report = load_selection_report(out / "selection.json")
    assert not report.rows
    assert report.failures and "fmr-normal_G1" == report.failures[0][0]


def test_simulate_round_trip_and_truth_file(tmp_path):
    out = tmp_path / "sim"
    code = _run(["simulate", "--scenario", "normal-normal_wide_n200",
                 "--n-obs", "20", "--seed", "5", "--out", out])
    assert code == 0
    data = ingest(out / "data.csv")
    assert data.y.shape == (20, 3, 4)
    assert data.x.shape == (20, 3, 4)
    with open(out / "labels.csv") as fh:
        labels = list(csv.DictReader(fh))
    assert len(labels) == 20
    truth = json.loads((out / "truth.json").read_text())
    assert truth["scenario"] == "normal-normal_wide_n200"
    assert truth["n_obs"] == 20
    params = params_from_dict(truth["params"])
    assert params.spec.n_components == 3
    # same seed regenerates the same file
    out2 = tmp_path / "sim2"
    assert _run(["simulate", "--scenario", "normal-normal_wide_n200",
                 "--n-obs", "20", "--seed", "5", "--out", out2]) == 0
    assert (out / "data.csv").read_text() == (out2 / "data.csv").read_text()


def test_simulate_applies_skewing(tmp_path):
    plain, skewed = tmp_path / "p", tmp_path / "s"
    for out, extra in ((plain, []), (skewed, ["--eps", "0.05"])):
        assert _run(["simulate", "--scenario", "normal-normal_wide_n200",
                     "--n-obs", "10", "--seed", "9", "--out", out, *extra]) == 0
    base = ingest(plain / "data.csv")
    transformed = ingest(skewed / "data.csv")
    np.testing.assert_allclose(
        transformed.y, base.y + np.exp(0.05 * base.y), rtol=1e-12
    )


def test_classification_study_outputs(tmp_path):
    out = tmp_path / "study"
    code = _run(["study", "--kind", "classification", "--families",
                 "normal-normal", "--g-min", "3", "--g-max", "3",
                 "--replicates", "1", "--n-obs", "60", "--starts", "2",
                 "--tol", "1e-4", "--max-iter", "100", "--seed", "1",
                 "--out", out])
    assert code == 0
    study = json.loads((out / "study.json").read_text())
    assert study["kind"] == "classification"
    assert study["rows"][0]["pair"] == "normal-normal"
    assert study["rows"][0]["mean_ari"] > 0.95
    with open(out / "study.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert rows[0]["selection_counts"] == "3:1"


def test_recovery_study_outputs(tmp_path):
    out = tmp_path / "study"
    code = _run(["study", "--kind", "recovery", "--scenario",
                 "nig-normal_far_n200", "--n-obs", "100", "--replicates", "1",
                 "--starts", "2", "--tol", "1e-4", "--max-iter", "150",
                 "--seed", "4", "--out", out])
    assert code == 0
    study = json.loads((out / "study.json").read_text())
    assert study["kind"] == "recovery"
    mse = np.asarray(study["mse"])
    assert mse.shape == (3, 3, 4)
    assert np.all(mse >= 0)
    with open(out / "study.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 36
