import json

import jsonschema
import pytest

from dendricomm import experiments as ex

RECIPE_NAMES = ["memory-constants", "resnet18-complexity", "wiring-emst", "mesh-eta-map",
                "mesh-sparse-slope", "mesh-sparse-sweep", "gemm-dendritic-sweep",
                "gemm-block-grid", "entropy-verify", "toy-parity"]
FAST_RECIPES = ["memory-constants", "resnet18-complexity", "mesh-eta-map", "gemm-dendritic-sweep",
                "gemm-block-grid", "entropy-verify", "toy-parity"]

SMALL = {
    "wiring": {"kind": "wiring", "params": {"D": [16, 64], "K": [1, 4], "trials": 2}},
    "mesh-sparse": {"kind": "mesh", "params": {"mode": "sparse", "D": [16], "K": [1, 4, 16],
                                               "sparsity": [0, 0.85], "patterns": 4}},
    "gemm-grid": {"kind": "gemm", "params": {"mode": "grid", "M": 32, "N": 32, "L": 32,
                                             "K": [1, 4], "Q": 1024, "blocks": [4, 8],
                                             "groups": [1, 2, 4]}},
    "train": {"kind": "train-toy", "params": {"n_samples": 200, "epochs": 2, "seeds": [0, 1]}},
}


def run(raw, overrides=None):
    return ex.run_experiment(ex.resolve_config(raw, overrides))


def assert_artifacts_valid(res):
    for fname, text in res.artifacts.items():
        if fname.endswith(".json"):
            jsonschema.validate(json.loads(text), ex._schema(res.json_schemas[fname]))
        else:
            assert fname.endswith(".csv")
            header = text.splitlines()[0].split(",")
            assert len(header) == len(set(header)) > 1


# configs --------------------------------------------------------------------

def test_defaults_and_precedence():
    cfg = ex.resolve_config({"kind": "mesh", "seed": 4, "params": {"D": [16]}},
                            {"seed": 9, "params": {"K": [1, 4]}})
    assert cfg["seed"] == 9 and cfg["name"] == "mesh" and cfg["threads"] == 1
    assert cfg["params"]["D"] == [16] and cfg["params"]["K"] == [1, 4]
    assert cfg["params"]["patterns"] == ex.DEFAULT_PARAMS["mesh"]["patterns"]


def test_unknown_kind_and_invalid_values():
    with pytest.raises(ex.UnknownKindError):
        ex.resolve_config({"kind": "quantum"})
    with pytest.raises(ex.ConfigError):
        ex.resolve_config({"kind": "mesh", "params": {"D": [-4]}})
    with pytest.raises(ex.ConfigError):
        ex.resolve_config({"kind": "mesh", "params": {"bogus": 1}})
    with pytest.raises(ex.ConfigError):
        ex.resolve_config({"kind": "mesh", "params": 3})
    with pytest.raises(ex.ConfigError):
        ex.resolve_config([1, 2])


def test_load_config_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ex.ConfigError):
        ex.load_config(str(bad))
    with pytest.raises(ex.ConfigError):
        ex.load_config(str(tmp_path / "missing.json"))


def test_config_round_trip_and_hash(tmp_path):
    cfg = ex.resolve_config({"kind": "gemm", "seed": 2})
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg))
    again = ex.load_config(str(path))
    assert again == cfg and ex.config_hash(again) == ex.config_hash(cfg)
    assert ex.config_hash(dict(cfg, seed=3)) != ex.config_hash(cfg)


# recipes --------------------------------------------------------------------

def test_recipe_catalog_is_stable():
    cat = ex.recipes()
    assert list(cat) == RECIPE_NAMES
    for name, r in cat.items():
        assert r["version"] >= 1 and r["description"]
        ex.resolve_config(r["config"])
    with pytest.raises(ex.ConfigError):
        ex.recipe_config("nope")


@pytest.mark.parametrize("name", FAST_RECIPES)
def test_fast_recipes_pass(name):
    res = run(ex.recipe_config(name))
    assert res.checks and res.passed, [c for c in res.checks if not c.passed]
    assert_artifacts_valid(res)


@pytest.mark.parametrize("key", list(SMALL))
def test_small_runs_valid(key):
    res = run(SMALL[key])
    assert res.checks
    assert_artifacts_valid(res)


def test_memory_recipe_values():
    res = run(ex.recipe_config("memory-constants"))
    text = res.artifacts["memory_constants_memory.csv"]
    assert ",320" in text and ",128" in text and ",80" in text


def test_memory_mode_needs_layers():
    with pytest.raises(ex.ConfigError):
        run({"kind": "complexity", "params": {"mode": "memory"}})


def test_failing_expectation_is_reported():
    res = run({"kind": "complexity", "params": {"K": [1]},
               "expect": {"params": {"1": 1}, "tolerance": 0.01}})
    assert not res.passed


def test_gemm_grid_with_no_matching_blocks():
    with pytest.raises(ex.ConfigError):
        run({"kind": "gemm", "params": {"mode": "grid", "M": 12, "N": 12, "L": 12,
                                        "blocks": [5], "K": [1]}})


def test_custom_arch_descriptor():
    from dendricomm.complexity import linear_stack
    arch = linear_stack(8, [16, 16], 4).to_dict()
    res = run({"kind": "complexity", "params": {"arch": arch, "K": [1, 4]}})
    assert res.passed
    with pytest.raises(ex.ConfigError):
        run({"kind": "complexity", "params": {"arch": "vgg99"}})


# determinism ----------------------------------------------------------------

@pytest.mark.parametrize("key", list(SMALL))
def test_rerun_and_threads_byte_identical(key):
    a = run(SMALL[key]).artifacts
    b = run(SMALL[key]).artifacts
    c = run(SMALL[key], {"threads": 4}).artifacts
    assert a == b == c


def test_seed_changes_sampled_outputs():
    a = run(SMALL["mesh-sparse"]).artifacts
    b = run(SMALL["mesh-sparse"], {"seed": 1}).artifacts
    assert a != b


# output ---------------------------------------------------------------------

def test_execute_writes_manifest(tmp_path):
    out = tmp_path / "out"
    cfg = ex.resolve_config({"kind": "mesh", "name": "m", "params": {"D": [16], "K": [1, 4]}})
    res, manifest = ex.execute(cfg, str(out))
    jsonschema.validate(manifest, ex._schema("manifest"))
    on_disk = json.loads((out / "m_manifest.json").read_text())
    assert on_disk == manifest
    assert sorted(o["path"] for o in manifest["outputs"]) == ["m.csv", "m_config.json"]
    assert json.loads((out / "m_config.json").read_text()) == cfg
    assert manifest["config_sha256"] == ex.config_hash(cfg)
    _, again = ex.execute(cfg, str(out))
    assert [o["sha256"] for o in again["outputs"]] == [o["sha256"] for o in manifest["outputs"]]


def test_output_path_is_a_file(tmp_path):
    f = tmp_path / "file"
    f.write_text("x")
    with pytest.raises(ex.OutputError):
        ex.prepare_out_dir(str(f / "sub"))
