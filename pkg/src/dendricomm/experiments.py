"""Experiment configs, the per-kind runners, acceptance checks and run manifests.

A config is a JSON object ``{"kind", "name", "seed", "threads", "params",
"expect"}``. Missing ``params`` keys take the defaults below; the resolved
config is validated against ``schemas/config_<kind>.json``. Every artifact is a
pure function of (resolved config, seed, package version).
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from importlib import resources
import copy
import csv
import hashlib
import io
import json
import math
import os

import jsonschema
import numpy as np

from . import __version__
from . import complexity as cx
from . import entropy as ent
from . import gemm
from . import mesh
from . import training
from . import wiring
from .dendritic import activation_memory_bits

KINDS = ("wiring", "mesh", "gemm", "complexity", "entropy", "train-toy")

DEFAULT_PARAMS = {
    "wiring": {"D": [1024], "K": [1, 4, 16, 64], "dims": [2, 3], "trials": 10},
    "mesh": {"mode": "dense", "D": [16, 64, 256, 1024], "K": [1, 4, 16, 64],
             "sparsity": [0.85], "patterns": 100},
    "gemm": {"mode": "reduction", "M": 256, "N": 256, "L": 256, "K": [1, 4, 16], "Q": 8192,
             "B_M": 8, "B_N": 8, "B_L": 16, "policy": "lru",
             "blocks": [8, 16, 32], "groups": [1, 2, 4, 8, 16, 32]},
    "complexity": {"mode": "table", "arch": "resnet18", "K": [1, 4, 16, 64], "width_factor": 1.0,
                   "layers": [], "bits_per_value": 16, "mask_bits": 1},
    "entropy": {"trials": 1000, "max_K": 4, "max_values": 6},
    "train-toy": dict({"K": [1, 4], "seeds": [0, 1, 2, 3, 4]},
                      **{k: v for k, v in training.ToyConfig().to_dict().items() if k != "K"}),
}


class UnknownKindError(ValueError):
    pass


class ConfigError(ValueError):
    pass


class OutputError(OSError):
    pass


def _schema(name):
    return json.loads(resources.files("dendricomm.schemas").joinpath(f"{name}.json").read_text())


def validate_json(obj, schema_name):
    """Validate ``obj`` against a shipped schema; raises ``ConfigError``."""
    try:
        jsonschema.validate(obj, _schema(schema_name))
    except jsonschema.ValidationError as e:
        path = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"{schema_name}: {path}: {e.message}") from None


def resolve_config(raw, overrides=None):
    """Fill defaults, apply ``overrides`` (top-level keys or ``params``), validate.

    Precedence, lowest first: built-in defaults, ``raw``, ``overrides``.
    """
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    kind = raw.get("kind")
    if kind not in KINDS:
        raise UnknownKindError(f"unknown experiment kind {kind!r}; expected one of {KINDS}")
    cfg = {"kind": kind, "name": kind, "seed": 0, "threads": 1,
           "params": copy.deepcopy(DEFAULT_PARAMS[kind])}
    for src in (raw, overrides or {}):
        for k, v in src.items():
            if k == "params":
                if not isinstance(v, dict):
                    raise ConfigError("params must be an object")
                cfg["params"].update(copy.deepcopy(v))
            elif v is not None:
                cfg[k] = copy.deepcopy(v)
    validate_json(cfg, f"config_{kind}")
    return cfg


def load_config(path, overrides=None):
    try:
        with open(path) as f:
            raw = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: not valid JSON ({e})") from None
    except OSError as e:
        raise ConfigError(f"{path}: {e.strerror}") from None
    return resolve_config(raw, overrides)


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(cfg):
    return hashlib.sha256(canonical_json(cfg).encode()).hexdigest()


def _pmap(fn, items, threads):
    items = list(items)
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(threads) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


def _csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


def _dump(obj):
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


@dataclass
class Check:
    label: str
    passed: bool
    detail: str

    def to_dict(self):
        return {"label": self.label, "passed": bool(self.passed), "detail": self.detail}


@dataclass
class RunResult:
    """Artifacts (file name to text) plus the checks evaluated on them."""

    config: dict
    artifacts: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    json_schemas: dict = field(default_factory=dict)

    def add_json(self, fname, obj, schema):
        validate_json(obj, schema)
        self.artifacts[fname] = _dump(obj)
        self.json_schemas[fname] = schema

    @property
    def passed(self):
        return all(c.passed for c in self.checks)


# --- wiring ---------------------------------------------------------------

def run_wiring(cfg):
    p, seed, threads = cfg["params"], cfg["seed"], cfg["threads"]
    res = RunResult(cfg)
    estimates = [wiring.wiring_cost(D, K, dim, p["trials"], seed, threads)
                 for dim in p["dims"] for D in p["D"] for K in p["K"]]
    res.artifacts[f"{cfg['name']}.csv"] = wiring.estimates_to_csv(estimates)
    fits = []
    for dim in p["dims"]:
        est = [e for e in estimates if e.dim == dim]
        target = (dim - 1) / dim
        try:
            fit = wiring.fit_power_law(est)
        except ValueError as e:
            res.checks.append(Check(f"wiring beta {dim}D", False, str(e)))
            continue
        fits.append({"dim": dim, "alpha": fit.alpha, "beta": fit.beta, "residual": fit.residual})
        res.checks.append(Check(f"wiring beta {dim}D", abs(fit.beta - target) <= 0.05,
                                f"beta={fit.beta:.4f}, target {target:.3f} +/- 0.05"))
    res.add_json(f"{cfg['name']}_fit.json", {"fits": fits}, "wiring_fit")
    return res


# --- mesh -----------------------------------------------------------------

def _mesh_dense(cfg, res):
    p = cfg["params"]
    reports = mesh.eta_map(p["D"], p["K"])
    res.artifacts[f"{cfg['name']}.csv"] = mesh.reports_to_csv(reports)
    Ks = sorted(set(p["K"]))
    for D in sorted(set(p["D"])):
        rows = {r.K: r for r in reports if r.D == D}
        if 1 in rows:
            res.checks.append(Check(f"eta(D={D},K=1)=1", rows[1].eta == 1.0, f"eta={rows[1].eta!r}"))
        if D >= 16 and len(Ks) > 1:
            etas = [rows[K].eta for K in Ks]
            ok = all(a > b for a, b in zip(etas, etas[1:]))
            res.checks.append(Check(f"eta strictly decreasing in K (D={D})", ok,
                                    ", ".join(f"{e:.4f}" for e in etas)))
        for K in Ks:
            if K > 1:
                cfgm = mesh.MeshConfig(D, K)
                b_ag, b_aa = mesh.dendritic_aggregation_bounds(cfgm)
                r = rows[K]
                res.checks.append(Check(f"aggregation bounds (D={D},K={K})",
                                        r.C_AG < b_ag and r.C_AA < b_aa,
                                        f"C_AG={r.C_AG:.4f}<{b_ag:.4f}, C_AA={r.C_AA:.4f}<{b_aa:.4f}"))


def _mesh_sparse(cfg, res):
    p, seed = cfg["params"], cfg["seed"]
    cells = [(D, K, s) for D in p["D"] for s in p["sparsity"] for K in p["K"]]

    def one(cell):
        D, K, s = cell
        return mesh.sparse_delivery_costs(mesh.MeshConfig(D, K), s, p["patterns"], seed)

    costs = _pmap(one, cells, cfg["threads"])
    rows, summary = [], []
    for (D, K, s), c in zip(cells, costs):
        rows.extend((D, K, s, i, float(v)) for i, v in enumerate(c))
        std = float(c.std(ddof=1)) if len(c) > 1 else 0.0
        summary.append({"D": D, "K": K, "sparsity": s, "mean": float(c.mean()), "std": std,
                        "patterns": len(c)})
    res.artifacts[f"{cfg['name']}_sparse.csv"] = _csv(("D", "K", "sparsity", "pattern_id", "cost"), rows)
    slopes = []
    for D in p["D"]:
        for s in p["sparsity"]:
            pts = [(c["K"], c["mean"]) for c in summary if c["D"] == D and c["sparsity"] == s]
            try:
                slope = mesh.fit_k_slope(pts)
            except ValueError:
                slope = None
            slopes.append({"D": D, "sparsity": s, "slope": slope})
            if slope is not None and s > 0:
                res.checks.append(Check(f"sparse slope (D={D}, sparsity={s:g})",
                                        abs(slope + 0.5) <= 0.1, f"slope={slope:.4f}, target -0.5 +/- 0.1"))
    for c in summary:
        if c["sparsity"] == 0:
            exact = mesh.dendritic_delivery_cost(mesh.MeshConfig(c["D"], c["K"]))
            res.checks.append(Check(f"dense degeneracy (D={c['D']},K={c['K']})",
                                    math.isclose(c["mean"], exact, rel_tol=1e-12),
                                    f"mean={c['mean']!r}, closed form={exact!r}"))
    res.add_json(f"{cfg['name']}_sparse.json", {"cells": summary, "slopes": slopes},
                 "mesh_sparse_summary")


def run_mesh(cfg):
    res = RunResult(cfg)
    if cfg["params"]["mode"] == "dense":
        _mesh_dense(cfg, res)
    else:
        _mesh_sparse(cfg, res)
    return res


# --- gemm -----------------------------------------------------------------

def _gemm_reduction(cfg, res):
    p = cfg["params"]
    rows = gemm.dendritic_reduction_sweep(p["M"], p["N"], p["L"], p["K"], p["Q"],
                                          p["B_M"], p["B_N"], p["B_L"], p["policy"])
    res.artifacts[f"{cfg['name']}.csv"] = gemm.rows_to_csv(rows)
    base = rows[0]
    for r in rows:
        s = math.isqrt(r["K"]) / math.isqrt(base["K"])
        res.checks.append(Check(f"write ratio K={r['K']}", r["writes_sim"] * s == base["writes_sim"],
                                f"ratio={r['write_ratio']!r}, expected {1 / s!r}"))
        if r["K"] != base["K"]:
            res.checks.append(Check(f"read ratio K={r['K']}", abs(r["read_ratio"] * s - 1) <= 0.15,
                                    f"ratio={r['read_ratio']:.4f}, expected {1 / s:.4f} +/- 15%"))


def _gemm_grid(cfg, res):
    p = cfg["params"]
    cache = gemm.CacheModel(p["Q"], p["policy"])
    cells = []
    for K in p["K"]:
        shape = gemm.GemmShape(p["M"], p["N"], p["L"], K)
        for B in p["blocks"]:
            if shape.M % B or shape.cols % B:
                continue
            B_L = math.gcd(p["B_L"], shape.inner)
            for G in p["groups"]:
                if (shape.M // B) % G == 0:
                    cells.append((shape, gemm.TilePlan(B, B, B_L, G, "grouped")))
    if not cells:
        raise ConfigError("no (block, group) combination divides the GEMM shape")

    def one(cell):
        shape, plan = cell
        return gemm.simulate_cache(gemm.build_schedule(shape, plan), cache)

    reps = _pmap(one, cells, cfg["threads"])
    rows = []
    for (shape, plan), r in zip(cells, reps):
        rows.append((shape.M, shape.N, shape.L, shape.K, plan.B_M, plan.B_N, plan.G, p["Q"],
                     p["policy"], r.reads_global, r.analytic_reads, r.writes_global, r.analytic_writes))
        floor = shape.M * shape.inner + shape.inner * shape.cols
        ok = r.reads_global >= floor
        if p["policy"] == "none" or p["Q"] == 0:
            ok = ok and r.reads_global == gemm.no_cache_reads(shape, plan)
        if not ok:
            res.checks.append(Check(f"traffic bounds K={shape.K} B={plan.B_M} G={plan.G}", False,
                                    f"reads={r.reads_global}, compulsory={floor}"))
    res.checks.append(Check("gemm grid traffic bounds", all(c.passed for c in res.checks),
                            f"{len(rows)} cells"))
    res.artifacts[f"{cfg['name']}.csv"] = _csv(gemm.SWEEP_COLUMNS, rows)


def run_gemm(cfg):
    res = RunResult(cfg)
    if cfg["params"]["mode"] == "reduction":
        _gemm_reduction(cfg, res)
    else:
        _gemm_grid(cfg, res)
    return res


# --- complexity -----------------------------------------------------------

def _arch(spec):
    if isinstance(spec, str):
        try:
            return cx.load_builtin(spec)
        except FileNotFoundError:
            raise ConfigError(f"no built-in architecture named {spec!r}") from None
    validate_json(spec, "arch")
    return cx.ArchDescriptor.from_dict(spec)


def run_complexity(cfg):
    p, expect = cfg["params"], cfg.get("expect", {})
    res = RunResult(cfg)
    tol = expect.get("tolerance", 0.01)
    if p["mode"] == "memory":
        if not p["layers"]:
            raise ConfigError("memory mode needs at least one entry in params.layers")
        rows, bits = [], {}
        for l in p["layers"]:
            for scheme in ("full", "bitmask"):
                b = activation_memory_bits(l["n_inputs"], l["n_neurons"], l["K"], scheme,
                                           p["bits_per_value"], p["mask_bits"])
                bits[f"{l['name']}/{scheme}"] = b
                rows.append((l["name"], l["n_inputs"], l["n_neurons"], l["K"], scheme, b))
        res.artifacts[f"{cfg['name']}_memory.csv"] = _csv(
            ("layer", "n_inputs", "n_neurons", "K", "scheme", "bits"), rows)
        for key, want in expect.get("bits", {}).items():
            got = bits.get(key)
            res.checks.append(Check(f"memory bits {key}", got == want, f"got {got}, expected {want}"))
        return res
    base = _arch(p["arch"])
    table = cx.complexity_table(base, p["K"], p["width_factor"])
    res.artifacts[f"{cfg['name']}.csv"] = _csv(
        ("K", "psi", "params", "ideal_params", "mmacs"),
        [(r["K"], r["psi"], r["params"], r["ideal_params"], r["mmacs"]) for r in table])
    layer_rows = []
    for K in p["K"]:
        arch = cx.scale_architecture(base, K, p["width_factor"])
        counts = cx.count_macs(arch).by_name()
        base_counts = cx.count_macs(base).by_name()
        for name, c in counts.items():
            b = base_counts[name]
            layer_rows.append((K, name, c.kind, c.K, c.in_channels, c.out_channels,
                               c.params, c.params - b.params, c.macs, c.macs - b.macs))
    res.artifacts[f"{cfg['name']}_layers.csv"] = _csv(
        ("K", "layer", "kind", "dendrites", "in_channels", "out_channels",
         "params", "params_delta", "macs", "macs_delta"), layer_rows)
    for r in table:
        want = p["width_factor"] / math.sqrt(r["K"])
        res.checks.append(Check(f"psi K={r['K']}", abs(r["psi"] / want - 1) <= tol,
                                f"psi={r['psi']:.4f}, expected {want:.4f}"))
        for key, got, unit in (("params", r["params"], ""), ("mmacs", r["mmacs"], " MMACs")):
            want = expect.get(key, {}).get(str(r["K"]))
            if want is not None:
                rel = got / want - 1
                res.checks.append(Check(f"{key} K={r['K']}", abs(rel) <= tol,
                                        f"{got:,.2f}{unit} vs {want:,.2f} ({rel:+.3%})"))
    return res


# --- entropy --------------------------------------------------------------

def run_entropy(cfg):
    p = cfg["params"]
    res = RunResult(cfg)
    rows = ent.verify_trials(cfg["seed"], p["trials"], p["max_K"], p["max_values"])
    res.artifacts[f"{cfg['name']}.csv"] = _csv(
        ("trial", "K", "support", "H_joint", "H_sum", "residual", "lemma1", "bound"),
        [tuple(r.values()) for r in rows])
    worst = max(r["residual"] for r in rows)
    summary = {"trials": p["trials"], "seed": cfg["seed"], "worst_residual": worst,
               "lemma1": all(r["lemma1"] for r in rows), "bound": all(r["bound"] for r in rows)}
    summary["passed"] = summary["lemma1"] and summary["bound"] and worst < 1e-12
    res.add_json(f"{cfg['name']}_summary.json", summary, "entropy_summary")
    res.checks.append(Check("entropy identity residual < 1e-12", worst < 1e-12, f"worst={worst:.3e}"))
    res.checks.append(Check("lemma holds on all joints", summary["lemma1"], f"{p['trials']} joints"))
    res.checks.append(Check("H(sum) <= H(joint)", summary["bound"], f"{p['trials']} joints"))
    return res


# --- train-toy ------------------------------------------------------------

def run_train_toy(cfg):
    p, expect = cfg["params"], cfg.get("expect", {})
    res = RunResult(cfg)
    base = training.ToyConfig(**{k: v for k, v in p.items() if k not in ("K", "seeds")})
    jobs = [(K, s) for K in p["K"] for s in p["seeds"]]
    results = _pmap(lambda j: training.train_toy(replace(base, K=j[0]), j[1]), jobs, cfg["threads"])
    curve, runs = [], []
    for (K, s), r in zip(jobs, results):
        curve.extend((K, s, e, l, a) for e, (l, a) in
                     enumerate(zip(r.losses, r.accuracies), start=1))
        runs.append({"K": K, "seed": s, "status": r.status, "final_accuracy": r.final_accuracy,
                     "initial_accuracy": r.initial_accuracy, "n_params": r.n_params,
                     "epochs_run": len(r.losses)})
    res.artifacts[f"{cfg['name']}.csv"] = _csv(("K", "seed", "epoch", "loss", "accuracy"), curve)
    means = {str(K): float(np.mean([r["final_accuracy"] for r in runs if r["K"] == K]))
             for K in p["K"]}
    res.add_json(f"{cfg['name']}_summary.json", {"runs": runs, "mean_accuracy": means}, "train_summary")
    bad = [f"K={r['K']} seed={r['seed']}" for r in runs if r["status"] != "ok"]
    res.checks.append(Check("training converged", not bad, "diverged: " + ", ".join(bad) if bad else "all runs ok"))
    if "1" in means:
        gap_tol = expect.get("max_gap", 0.02)
        for K, m in means.items():
            if K != "1":
                gap = m - means["1"]
                res.checks.append(Check(f"accuracy parity K={K}", abs(gap) <= gap_tol,
                                        f"point {means['1']:.4f}, dendritic {m:.4f}, gap {gap:+.4f}"))
        if "min_point_accuracy" in expect:
            res.checks.append(Check("point accuracy", means["1"] > expect["min_point_accuracy"],
                                    f"{means['1']:.4f} > {expect['min_point_accuracy']}"))
    return res


RUNNERS = {"wiring": run_wiring, "mesh": run_mesh, "gemm": run_gemm,
           "complexity": run_complexity, "entropy": run_entropy, "train-toy": run_train_toy}


def run_experiment(cfg):
    """Run a resolved config and return its :class:`RunResult`."""
    return RUNNERS[cfg["kind"]](cfg)


# --- output ---------------------------------------------------------------

def prepare_out_dir(out_dir):
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as e:
        raise OutputError(f"cannot create output directory {out_dir!r}: {e.strerror}") from None
    if not os.access(out_dir, os.W_OK | os.X_OK):
        raise OutputError(f"output directory {out_dir!r} is not writable")


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def write_outputs(result, out_dir, started):
    """Write artifacts, the resolved config and a manifest. Returns the manifest dict."""
    cfg = result.config
    files = dict(result.artifacts)
    files[f"{cfg['name']}_config.json"] = _dump(cfg)
    outputs = []
    try:
        for fname in sorted(files):
            data = files[fname].encode()
            with open(os.path.join(out_dir, fname), "wb") as f:
                f.write(data)
            outputs.append({"path": fname, "sha256": hashlib.sha256(data).hexdigest(),
                            "bytes": len(data)})
        manifest = {"tool": "dendricomm", "version": __version__, "kind": cfg["kind"],
                    "name": cfg["name"], "seed": cfg["seed"], "config_sha256": config_hash(cfg),
                    "started": started, "finished": _now(),
                    "checks": [c.to_dict() for c in result.checks], "outputs": outputs}
        validate_json(manifest, "manifest")
        with open(os.path.join(out_dir, f"{cfg['name']}_manifest.json"), "w") as f:
            f.write(_dump(manifest))
    except OSError as e:
        raise OutputError(f"cannot write to {out_dir!r}: {e.strerror}") from None
    return manifest


def execute(cfg, out_dir):
    """Run and write; returns ``(RunResult, manifest)``."""
    prepare_out_dir(out_dir)
    started = _now()
    result = run_experiment(cfg)
    return result, write_outputs(result, out_dir, started)


# --- recipes --------------------------------------------------------------

def recipes():
    """Named, versioned configs, keyed by name."""
    text = resources.files("dendricomm.data").joinpath("recipes.json").read_text()
    return json.loads(text)


def recipe_config(name):
    cat = recipes()
    if name not in cat:
        raise ConfigError(f"no recipe named {name!r}; see `dendricomm recipes`")
    return copy.deepcopy(cat[name]["config"])
