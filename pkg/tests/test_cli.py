import csv
import json
import subprocess
import sys

import pytest

from dendricomm import __version__
from dendricomm.cli import main


def rows(path):
    with open(path) as f:
        return list(csv.DictReader(f))


def test_mesh_k1_eta_column_all_one(tmp_path, capsys):
    code = main(["mesh", "--K", "1", "--out-dir", str(tmp_path), "--check"])
    assert code == 0
    assert {r["eta"] for r in rows(tmp_path / "mesh.csv")} == {"1.0"}
    out = capsys.readouterr().out
    assert "mesh_manifest.json" in out and "PASS" in out


def test_global_flags_before_or_after_subcommand(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["--seed", "3", "--out-dir", str(a), "entropy", "verify", "--trials", "20"]) == 0
    assert main(["entropy", "verify", "--trials", "20", "--seed", "3", "--out-dir", str(b)]) == 0
    assert (a / "entropy.csv").read_bytes() == (b / "entropy.csv").read_bytes()
    cfg = json.loads((a / "entropy_config.json").read_text())
    assert cfg["seed"] == 3 and cfg["params"]["trials"] == 20


def test_flag_beats_set_beats_config_file(tmp_path):
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({"kind": "mesh", "params": {"D": [16], "K": [1, 4, 16]}}))
    out = tmp_path / "o"
    assert main(["mesh", "--config", str(conf), "--set", "D=[64]", "--set", "K=[1,4]",
                 "--K", "1", "16", "--out-dir", str(out), "--name", "x"]) == 0
    got = {(r["D"], r["K"]) for r in rows(out / "x.csv")}
    assert got == {("64", "1"), ("64", "16")}


def test_check_failure_exit_1(tmp_path):
    # an expected parameter count of 5 cannot match
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({"kind": "complexity", "params": {"K": [1]},
                                "expect": {"params": {"1": 5}}}))
    assert main(["complexity", "--config", str(conf), "--out-dir", str(tmp_path)]) == 0
    assert main(["complexity", "--config", str(conf), "--out-dir", str(tmp_path), "--check"]) == 1


def test_usage_error_exit_2(capsys):
    assert main(["mesh", "--mode", "sideways"]) == 2
    assert main([]) == 2
    capsys.readouterr()


def test_unknown_kind_exit_3(tmp_path):
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({"kind": "telepathy"}))
    assert main(["run", str(conf), "--out-dir", str(tmp_path)]) == 3


def test_invalid_values_exit_4(tmp_path, capsys):
    assert main(["mesh", "--D", "15", "--out-dir", str(tmp_path)]) == 4
    assert main(["gemm", "--M", "10", "--block-m", "3", "--out-dir", str(tmp_path)]) == 4
    assert main(["mesh", "--set", "nokey", "--out-dir", str(tmp_path)]) == 4
    assert main(["run", "no-such-recipe"]) == 4
    conf = tmp_path / "w.json"
    conf.write_text(json.dumps({"kind": "wiring"}))
    assert main(["mesh", "--config", str(conf), "--out-dir", str(tmp_path)]) == 4
    assert "error:" in capsys.readouterr().err


def test_unwritable_output_exit_5(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["mesh", "--out-dir", str(blocker / "sub")]) == 5


def test_run_recipe_by_name(tmp_path):
    assert main(["run", "memory-constants", "--out-dir", str(tmp_path), "--check"]) == 0
    bits = {(r["layer"], r["scheme"]): r["bits"] for r in rows(tmp_path / "memory_constants_memory.csv")}
    assert bits[("dendritic", "full")] == "320"
    assert bits[("point", "full")] == "128"
    assert bits[("dendritic", "bitmask")] == "80"


def test_complexity_memory_layers_flag(tmp_path):
    assert main(["complexity", "--mode", "memory", "--layer", "d:4:4:4",
                 "--out-dir", str(tmp_path)]) == 0
    assert main(["complexity", "--mode", "memory", "--layer", "bad"]) == 2


def test_complexity_arch_file(tmp_path):
    from dendricomm.complexity import linear_stack
    arch = tmp_path / "mlp.json"
    arch.write_text(linear_stack(8, [16, 16], 4).to_json())
    assert main(["complexity", "--arch", str(arch), "--K", "1", "4",
                 "--out-dir", str(tmp_path), "--check"]) == 0
    assert main(["complexity", "--arch", str(tmp_path / "none.json")]) == 4


def test_entropy_joint(tmp_path, capsys):
    joint = tmp_path / "j.json"
    joint.write_text(json.dumps({"K": 2, "support": [[0, 0], [0, 1], [1, 0], [1, 1]],
                                 "probs": [0.25] * 4}))
    assert main(["entropy", "joint", str(joint), "--check"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["H_joint"] == 2.0 and out["H_sum"] == 1.5
    assert main(["entropy", "joint"]) == 4
    joint.write_text(json.dumps({"K": 2, "support": [[0, 0]], "probs": [0.5]}))
    assert main(["entropy", "joint", str(joint)]) == 4


def test_recipes_list_show_export(tmp_path, capsys):
    assert main(["recipes"]) == 0
    listing = capsys.readouterr().out.splitlines()
    assert len(listing) >= 6
    assert main(["recipes", "--show", "mesh-eta-map"]) == 0
    assert json.loads(capsys.readouterr().out)["kind"] == "mesh"
    assert main(["recipes", "--show", "missing"]) == 4
    assert main(["recipes", "--export", str(tmp_path / "r")]) == 0
    assert len(list((tmp_path / "r").glob("*.json"))) == len(listing)


def test_rerun_byte_identical(tmp_path):
    args = ["mesh", "--mode", "sparse", "--D", "16", "--K", "1", "4", "--patterns", "3"]
    assert main(args + ["--out-dir", str(tmp_path / "a")]) == 0
    assert main(args + ["--out-dir", str(tmp_path / "b"), "--threads", "3"]) == 0
    for name in ("mesh_sparse.csv", "mesh_sparse.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_console_entry_point():
    out = subprocess.run([sys.executable, "-m", "dendricomm.cli", "--version"],
                         capture_output=True, text=True)
    assert out.returncode == 0 and __version__ in out.stdout
    bad = subprocess.run([sys.executable, "-m", "dendricomm.cli", "bogus"], capture_output=True)
    assert bad.returncode == 2


@pytest.mark.parametrize("cmd", ["wiring", "mesh", "gemm", "complexity", "entropy", "train-toy",
                                 "run", "recipes"])
def test_subcommand_help(cmd, capsys):
    assert main([cmd, "--help"]) == 0
    assert "usage" in capsys.readouterr().out
