from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from rlct_nmf import __version__
from rlct_nmf.bayes_nmf import generate_dataset
from rlct_nmf.cli import default_factors, main
from rlct_nmf.errors import ValidationError
from rlct_nmf.fileio import (
    NegativeEntryError,
    NonNumericCellError,
    RaggedRowError,
    format_matrix_csv,
    load_matrix_csv,
    make_report,
    parse_matrix_csv,
    read_dataset,
    write_dataset,
    write_report_json,
)
from rlct_nmf.rlct_core import TrueStructure

TRUTH = TrueStructure(1, np.array([[1.0], [0.6]]), np.array([[0.8, 1.2]]))


# --- matrix CSV ----------------------------------------------------------------


def test_parse_examples():
    assert np.array_equal(parse_matrix_csv("1,2\n3,4"), [[1.0, 2.0], [3.0, 4.0]])
    with pytest.raises(RaggedRowError, match="row 2"):
        parse_matrix_csv("1,2\n3")
    with pytest.raises(NegativeEntryError):
        parse_matrix_csv("-1")
    with pytest.raises(NonNumericCellError, match="column 2"):
        parse_matrix_csv("1,x")


def test_error_kinds_are_distinct_validation_errors():
    kinds = {RaggedRowError, NegativeEntryError, NonNumericCellError}
    assert len(kinds) == 3 and all(issubclass(k, ValidationError) for k in kinds)
    with pytest.raises(NonNumericCellError):
        parse_matrix_csv("1,nan")
    with pytest.raises(ValidationError):
        parse_matrix_csv("\n\n")


def test_header_and_row_numbers(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text("c0,c1\n1,2\n3\n")
    with pytest.raises(RaggedRowError, match="row 3"):
        load_matrix_csv(p, header=True)
    p.write_text("c0,c1\n1,2\n")
    assert load_matrix_csv(p, header=True).shape == (1, 2)


@settings(max_examples=60)
@given(hnp.arrays(np.float64, hnp.array_shapes(min_dims=2, max_dims=2, max_side=5),
                  elements=st.floats(0, 1e300, allow_nan=False, allow_infinity=False)))
def test_csv_round_trip_is_bit_exact(m):
    for header in (False, True):
        back = parse_matrix_csv(format_matrix_csv(m, header=header), header=header)
        assert np.array_equal(back, m)


def test_report_envelope(tmp_path):
    rep = make_report("x", {"dims": (2, 2), "arr": np.arange(3)}, 42, {"v": np.float64(0.1)})
    path = tmp_path / "r.json"
    write_report_json(path, rep)
    data = json.loads(path.read_text())
    assert data["version"] == __version__ and data["seed"] == 42
    assert data["config"]["arr"] == [0, 1, 2] and data["result"]["v"] == 0.1


@pytest.mark.parametrize("family", ["gaussian", "poisson", "exponential"])
def test_dataset_directory_round_trip(tmp_path, family):
    ds = generate_dataset(family, TRUTH, 12, seed=5)
    write_dataset(tmp_path / "d", ds)
    back = read_dataset(tmp_path / "d")
    assert back.family == ds.family and back.seed == 5
    assert np.array_equal(back.observations, ds.observations)
    assert np.array_equal(back.truth.A, TRUTH.A)


def test_dataset_directory_errors(tmp_path):
    with pytest.raises(ValidationError):
        read_dataset(tmp_path)
    ds = generate_dataset("poisson", TRUTH, 3, seed=5)
    write_dataset(tmp_path / "d", ds)
    (tmp_path / "d" / "obs_0001.csv").write_text("1,2,3\n4,5,6\n")
    with pytest.raises(ValidationError):
        read_dataset(tmp_path / "d")


# --- CLI ------------------------------------------------------------------------


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_rlct_examples(capsys):
    assert run(capsys, "rlct", "--m", "2", "--n", "2", "--h", "1", "--h0", "1")[:2] == \
        (0, "3/2 (exact)\n")
    assert run(capsys, "rlct", "--m", "5", "--n", "5", "--h", "5", "--h0", "5")[:2] == \
        (0, "45/2 (upper bound)\n")
    code, _, err = run(capsys, "rlct", "--m", "2", "--n", "2", "--h", "1", "--h0", "3")
    assert code != 0 and "H0" in err


def test_rlct_verbose(capsys):
    code, out, _ = run(capsys, "rlct", "--m", "4", "--n", "4", "--h", "4", "--h0", "4", "-v")
    lines = out.splitlines()
    assert code == 0 and lines[0] == "14 (upper bound)"
    assert any(line.startswith("rrr (r=4)") for line in lines)
    assert any(line.startswith("regular d/2") for line in lines)


def test_table_csv_and_json(capsys, tmp_path):
    code, out, _ = run(capsys, "table")
    assert code == 0 and out.splitlines()[0] == "block,model,r,M=N=2,M=N=3,M=N=4,M=N=5"
    run(capsys, "table", "--format", "json", "--out", str(tmp_path / "t.json"))
    rows = json.loads((tmp_path / "t.json").read_text())
    assert rows[0]["cells"][0]["text"] == "2"


@pytest.mark.parametrize("cmd", [
    ["volume", "--m", "1", "--n", "1", "--h", "1", "--h0", "0"],
    ["generr", "--m", "2", "--n", "2", "--h", "1", "--h0", "1"],
    ["free-energy", "--m", "2", "--n", "2", "--h", "1", "--h0", "1"],
    ["sbic", "--m", "2", "--n", "2", "--candidates", "1,2"],
    ["gen-data", "--m", "2", "--n", "2", "--h0", "1", "--out-dir", "unused"],
])
def test_randomized_commands_need_seed(capsys, cmd):
    code, _, err = run(capsys, *cmd)
    assert code == 2 and "--seed" in err


def test_volume_report_reproducible(capsys, tmp_path):
    args = ["volume", "--m", "1", "--n", "1", "--h", "1", "--h0", "0", "--seed", "7",
            "--samples", "100000"]
    run(capsys, *args, "--out", str(tmp_path / "a.json"), "--csv", str(tmp_path / "a.csv"))
    run(capsys, *args, "--out", str(tmp_path / "b.json"))
    a = json.loads((tmp_path / "a.json").read_text())
    b = json.loads((tmp_path / "b.json").read_text())
    assert a["result"] == b["result"] and a["seed"] == 7
    assert a["config"]["samples"] == 100000
    assert (tmp_path / "a.csv").read_text().startswith("t,volume,stderr,hits")


def test_seed_auto_is_recorded(capsys):
    code, out, _ = run(capsys, "volume", "--m", "1", "--n", "1", "--h", "1", "--h0", "0",
                       "--seed", "auto", "--samples", "50000")
    data = json.loads(out)
    assert code == 0 and isinstance(data["seed"], int) and 0 <= data["seed"] < 2**64


def test_truth_from_csv(capsys, tmp_path):
    (tmp_path / "A.csv").write_text("1\n0.6\n")
    (tmp_path / "B.csv").write_text("0.8,1.2\n")
    code, out, _ = run(capsys, "volume", "--m", "2", "--n", "2", "--h", "1", "--h0", "1",
                       "--a", str(tmp_path / "A.csv"), "--b", str(tmp_path / "B.csv"),
                       "--seed", "1", "--samples", "100000")
    data = json.loads(out)
    assert code == 0 and data["config"]["truth"]["A"] == [[1.0], [0.6]]
    code, _, err = run(capsys, "volume", "--m", "2", "--n", "2", "--h", "1", "--h0", "1",
                       "--a", str(tmp_path / "A.csv"), "--seed", "1")
    assert code == 2


def test_generr_small(capsys, tmp_path):
    code, _, _ = run(capsys, "generr", "--m", "2", "--n", "2", "--h", "1", "--h0", "1",
                     "--seed", "3", "--n-obs", "40", "--replications", "2", "--burn-in", "300",
                     "--samples", "100", "--test-draws", "500", "--out", str(tmp_path / "g.json"))
    data = json.loads((tmp_path / "g.json").read_text())
    est = data["result"]["estimates"][0]
    assert code == 0 and est["n"] == 40 and est["bound"] == "3/2"


def test_gen_data_then_free_energy_and_sbic(capsys, tmp_path):
    d = tmp_path / "ds"
    code, _, _ = run(capsys, "gen-data", "--m", "2", "--n", "2", "--h0", "1", "--n-obs", "30",
                     "--seed", "3", "--out-dir", str(d))
    assert code == 0 and read_dataset(d).n == 30
    code, out, _ = run(capsys, "free-energy", "--m", "2", "--n", "2", "--h", "1", "--data", str(d),
                       "--seed", "4", "--burn-in", "500", "--samples", "200")
    assert code == 0 and json.loads(out)["result"]["estimate"]["n"] == 30
    code, out, _ = run(capsys, "sbic", "--data", str(d), "--candidates", "1,2", "--seed", "5",
                       "--burn-in", "500", "--samples", "200", "--csv", str(tmp_path / "s.csv"))
    assert code == 0 and json.loads(out)["result"]["selected"][0] in (1, 2)
    assert (tmp_path / "s.csv").read_text().startswith("H,score")


def test_default_factors_have_full_rank():
    for M, N, H0 in [(2, 2, 1), (3, 3, 2), (5, 4, 3)]:
        A, B = default_factors(M, N, H0)
        assert A.shape == (M, H0) and B.shape == (H0, N)
        assert A.min() > 0 and np.linalg.matrix_rank(A @ B) == H0
