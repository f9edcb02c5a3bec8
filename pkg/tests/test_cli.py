import io
import json
import subprocess
import sys

import numpy as np
import pytest

from zpdet.algebra import AlgebraElement, AlgebraShape
from zpdet.cli import UsageError, parse_c, parse_rank_one, run


def call(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = run(list(argv), out, err)
    return code, out.getvalue(), err.getvalue()


def call_json(*argv):
    code, out, err = call(*argv)
    return code, (json.loads(out) if out else None), err


def test_factorize_example():
    code, rep, _ = call_json("factorize", "--shape", "3", "--c", "e11", "--u", "e1xe2", "--v", "e3xe1")
    assert code == 0 and rep["max_residual"] == 0 and rep["witness"]["case"] == "1"


def test_factorize_rank_hypothesis_violation():
    code, rep, err = call_json("factorize", "--shape", "2", "--c", "e11", "--u", "e1xe2", "--v", "e2xe2")
    assert code == 2
    assert "rank hypothesis violated" in err and rep["rank_profile"]["ranks"] == [1]


def test_factorize_random_rank_direct_sum():
    code, rep, _ = call_json("factorize", "--shape", "3,3", "--c", "random-rank:1,1")
    assert code == 0 and rep["passed"]


def test_factorize_with_block_suffix():
    code, rep, _ = call_json("factorize", "--shape", "3,3", "--c", "e11x0", "--u", "e1xe2@1", "--v", "e2xe1@2")
    assert code == 0 and rep["witness"]["case"] == "2.3"
    assert rep["u"]["block"] == 0 and rep["v"]["block"] == 1


def test_zpd_check_examples():
    code, rep, _ = call_json("zpd-check", "--shape", "3", "--c", "e11", "--samples", "1000")
    assert code == 0 and rep["measured_rank"] == rep["expected_rank"] == 72
    code, rep, _ = call_json("zpd-check", "--shape", "2", "--c", "e11")
    assert code == 3 and rep["certificate"]["name"] == "costara"
    code, rep, _ = call_json("zpd-check", "--shape", "2", "--c", "identity")
    assert code == 3 and rep["certificate"]["name"] == "transpose"


def test_zpd_check_too_few_samples_is_precondition():
    code, _, err = call("zpd-check", "--shape", "2", "--c", "e11", "--samples", "10")
    assert code == 2 and "samples" in err


def test_counterexample_values():
    code, rep, _ = call_json("counterexample", "--shape", "2", "--samples", "500")
    assert code == 0 and rep["reproduced"]
    cost, trans = rep["counterexamples"]
    assert cost["value"] == pytest.approx(4, abs=1e-12)
    e21 = AlgebraElement.from_json(trans["value"])
    assert e21 == AlgebraElement.unit((2,), 0, 1, 0)
    code, rep, _ = call_json("counterexample", "--shape", "3", "--construct", "costara", "--samples", "300")
    assert code == 0 and rep["counterexamples"][0]["value"] == pytest.approx(4, abs=1e-12)


def test_counterexample_needs_single_block():
    assert call("counterexample", "--shape", "2,2")[0] == 2


def test_maps_examples():
    code, rep, _ = call_json("maps", "pair", "--shape", "2", "--construct", "inner", "--seed", "7")
    assert code == 0 and rep["rho_error"] <= 1e-9
    code, rep, _ = call_json("maps", "derivation", "--shape", "3,3", "--c", "e11x0")
    assert code == 0 and rep["xi_c_residual"] <= 1e-12 and rep["xi_error"] <= 1e-8
    code, rep, _ = call_json("maps", "single", "--shape", "3", "--construct", "weighted")
    assert code == 0 and rep["h_error"] <= 1e-9


def test_maps_negative_cases():
    assert call("maps", "pair", "--shape", "2", "--construct", "transpose")[0] == 3
    assert call("maps", "--submode", "single", "--shape", "2", "--construct", "transpose")[0] == 3
    assert call("maps", "derivation", "--shape", "2", "--c", "identity", "--construct", "transpose")[0] == 3
    assert call("maps", "pair", "--submode", "single", "--shape", "2")[0] == 2


def test_json_output_is_byte_identical():
    argv = ["zpd-check", "--shape", "2,2", "--c", "e11x0", "--seed", "123"]
    assert call(*argv)[1] == call(*argv)[1]
    argv = ["maps", "pair", "--shape", "2,2", "--seed", "99"]
    assert call(*argv)[1] == call(*argv)[1]


def test_seed_changes_output():
    a = call("factorize", "--shape", "4", "--c", "random-rank:2", "--seed", "1")[1]
    b = call("factorize", "--shape", "4", "--c", "random-rank:2", "--seed", "2")[1]
    assert a != b


@pytest.mark.parametrize("fmt", ["csv", "text"])
def test_other_output_formats(fmt):
    code, out, _ = call("zpd-check", "--shape", "2", "--c", "zero", "--output", fmt)
    assert code == 0 and "measured_rank" in out and "12" in out
    if fmt == "csv":
        assert out.splitlines()[0] == "key,value"


def test_bad_inputs_are_precondition_errors():
    assert call("zpd-check", "--shape", "2", "--c", "bogus")[0] == 2
    assert call("zpd-check", "--shape", "x")[0] == 2
    assert call("zpd-check", "--shape", "2", "--seed", "-1")[0] == 2
    assert call("factorize", "--shape", "3", "--u", "e1xe2")[0] == 2
    assert call("factorize", "--shape", "3", "--u", "e1xe4", "--v", "e1xe1")[0] == 2


def test_parse_c_variants(tmp_path):
    s = AlgebraShape([3, 2])
    c = parse_c("e11x0", s, 0)
    assert c.blocks[0][0, 0] == 1 and np.all(c.blocks[1] == 0)
    c = parse_c("identity-minus-corner", s, 0)
    assert np.allclose(c.blocks[0], np.diag([1, 1, 0])) and np.allclose(c.blocks[1], np.diag([1, 0]))
    c = parse_c("random-rank:2,1", s, 4)
    assert np.linalg.matrix_rank(c.blocks[0]) == 2 and np.linalg.matrix_rank(c.blocks[1]) == 1
    path = tmp_path / "c.json"
    path.write_text(json.dumps(c.to_json()))
    assert parse_c(f"file:{path}", s, 0) == c
    with pytest.raises(UsageError):
        parse_c("e11x0x0", s, 0)


def test_parse_rank_one_file(tmp_path):
    path = tmp_path / "u.json"
    path.write_text(json.dumps({"block": 2, "e": [1, 0], "f": [0, 1]}))
    u = parse_rank_one(f"file:{path}", AlgebraShape([3, 2]))
    assert u.block == 1 and np.allclose(u.matrix(), [[0, 1], [0, 0]])


def test_console_script_entry_point():
    proc = subprocess.run([sys.executable, "-m", "zpdet.cli", "zpd-check", "--shape", "2", "--c", "e11"],
                          capture_output=True, text=True)
    assert proc.returncode == 3
    assert json.loads(proc.stdout)["verdict"] == "not-determined"
