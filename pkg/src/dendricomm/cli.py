"""``dendricomm`` command line.

Each experiment subcommand builds a config from built-in defaults, an optional
``--config`` file, ``--set key=value`` overrides and finally its own flags
(highest precedence), runs it, and writes CSV/JSON artifacts plus a manifest
to ``--out-dir``.

Exit codes:
  0  success
  1  an acceptance check failed (only with --check)
  2  usage error
  3  unknown experiment kind
  4  invalid config or parameter values
  5  output directory not writable
"""

import argparse
import json
import logging
import os
import sys

from . import __version__
from . import entropy as ent
from . import experiments as ex

EXIT_OK = 0
EXIT_CHECK = 1
EXIT_USAGE = 2
EXIT_UNKNOWN_KIND = 3
EXIT_INVALID = 4
EXIT_OUTPUT = 5

S = argparse.SUPPRESS


def _common():
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=S, help="RNG seed (default: config value or 0)")
    g.add_argument("--out-dir", default=S, help="directory for artifacts (default: results)")
    g.add_argument("--check", action="store_true", default=S,
                   help="exit with status 1 if any acceptance check fails")
    g.add_argument("--threads", type=int, default=S, help="worker threads for independent cells")
    return p


def _experiment_parser(sub, common, name, help_text):
    p = sub.add_parser(name, parents=[common], help=help_text, description=help_text)
    p.add_argument("--config", help="JSON config file of the same kind")
    p.add_argument("--name", dest="top_name", help="output file prefix")
    p.add_argument("--set", dest="sets", action="append", default=[], metavar="KEY=VALUE",
                   help="override a params key (VALUE parsed as JSON); repeatable")
    return p


def _layer_arg(text):
    try:
        name, n_in, n_out, k = text.split(":")
        return {"name": name, "n_inputs": int(n_in), "n_neurons": int(n_out), "K": int(k)}
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected NAME:N_INPUTS:N_NEURONS:K, got {text!r}")


def build_parser():
    common = _common()
    parser = argparse.ArgumentParser(
        prog="dendricomm", parents=[common],
        description="Communication, memory and complexity cost models for dendritic networks.",
        epilog=__doc__.split("Exit codes:")[1].join(["Exit codes:", ""]),
        formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    p = _experiment_parser(sub, common, "wiring", "Euclidean MST wiring cost and power-law fit")
    p.add_argument("--D", dest="p_D", type=int, nargs="+")
    p.add_argument("--K", dest="p_K", type=int, nargs="+")
    p.add_argument("--dims", dest="p_dims", type=int, nargs="+", choices=(2, 3))
    p.add_argument("--trials", dest="p_trials", type=int)

    p = _experiment_parser(sub, common, "mesh", "PE-mesh communication costs (dense map or sparse sweep)")
    p.add_argument("--mode", dest="p_mode", choices=("dense", "sparse"))
    p.add_argument("--D", dest="p_D", type=int, nargs="+")
    p.add_argument("--K", dest="p_K", type=int, nargs="+")
    p.add_argument("--sparsity", dest="p_sparsity", type=float, nargs="+")
    p.add_argument("--patterns", dest="p_patterns", type=int)

    p = _experiment_parser(sub, common, "gemm", "Tiled GEMM global-memory traffic")
    p.add_argument("--mode", dest="p_mode", choices=("reduction", "grid"))
    for d in ("M", "N", "L", "Q"):
        p.add_argument(f"--{d}", dest=f"p_{d}", type=int)
    p.add_argument("--K", dest="p_K", type=int, nargs="+")
    p.add_argument("--block-m", dest="p_B_M", type=int)
    p.add_argument("--block-n", dest="p_B_N", type=int)
    p.add_argument("--block-l", dest="p_B_L", type=int)
    p.add_argument("--policy", dest="p_policy", choices=("none", "lru", "belady"))
    p.add_argument("--blocks", dest="p_blocks", type=int, nargs="+", help="square block sizes (grid mode)")
    p.add_argument("--groups", dest="p_groups", type=int, nargs="+", help="group sizes G (grid mode)")

    p = _experiment_parser(sub, common, "complexity", "Parameter/MAC table or activation-memory bits")
    p.add_argument("--mode", dest="p_mode", choices=("table", "memory"))
    p.add_argument("--arch", dest="p_arch", help="built-in name or path to a descriptor JSON")
    p.add_argument("--K", dest="p_K", type=int, nargs="+")
    p.add_argument("--width-factor", dest="p_width_factor", type=float)
    p.add_argument("--layer", dest="p_layers", type=_layer_arg, action="append",
                   metavar="NAME:IN:NEURONS:K", help="layer shape for memory mode; repeatable")
    p.add_argument("--bits-per-value", dest="p_bits_per_value", type=int)

    p = _experiment_parser(sub, common, "entropy", "Entropy identities for sums of dendritic outputs")
    p.add_argument("action", choices=("verify", "joint"), help="verify random joints, or analyse one joint")
    p.add_argument("joint_path", nargs="?", help="joint-distribution JSON (for `joint`)")
    p.add_argument("--trials", dest="p_trials", type=int)
    p.add_argument("--max-k", dest="p_max_K", type=int)
    p.add_argument("--max-values", dest="p_max_values", type=int)

    p = _experiment_parser(sub, common, "train-toy", "Toy SGD comparison of point and dendritic MLPs")
    p.add_argument("--K", dest="p_K", type=int, nargs="+")
    p.add_argument("--seeds", dest="p_seeds", type=int, nargs="+")
    p.add_argument("--epochs", dest="p_epochs", type=int)
    p.add_argument("--lr", dest="p_lr", type=float)
    p.add_argument("--hidden", dest="p_hidden", type=int, nargs="+")
    p.add_argument("--n-samples", dest="p_n_samples", type=int)
    p.add_argument("--blobs-per-class", dest="p_blobs_per_class", type=int)
    p.add_argument("--separation", dest="p_separation", type=float)
    p.add_argument("--cluster-std", dest="p_cluster_std", type=float)

    p = sub.add_parser("run", parents=[common], help="run a config file or a named recipe")
    p.add_argument("config", help="path to a JSON config, or a recipe name")
    p.add_argument("--set", dest="sets", action="append", default=[], metavar="KEY=VALUE")

    p = sub.add_parser("recipes", help="list the named experiment recipes")
    p.add_argument("--show", metavar="NAME", help="print one recipe's config as JSON")
    p.add_argument("--export", metavar="DIR", help="write every recipe config to DIR/<name>.json")
    return parser


def _parse_sets(items):
    params = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ex.ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key = key[len("params."):] if key.startswith("params.") else key
        try:
            params[key] = json.loads(value)
        except json.JSONDecodeError:
            params[key] = value
    return params


def _overrides(args):
    params = _parse_sets(getattr(args, "sets", []))
    for k, v in vars(args).items():
        if k.startswith("p_") and v is not None:
            params[k[2:]] = v
    arch = params.get("arch")
    if isinstance(arch, str) and arch.endswith(".json"):
        try:
            with open(arch) as f:
                params["arch"] = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ex.ConfigError(f"cannot read architecture {arch!r}: {e}") from None
    top = {"params": params}
    for key, attr in (("seed", "seed"), ("threads", "threads"), ("name", "top_name")):
        if getattr(args, attr, None) is not None:
            top[key] = getattr(args, attr)
    return top


def _read_json(path):
    try:
        with open(path) as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise ex.ConfigError(f"{path}: not valid JSON ({e})") from None
    except OSError as e:
        raise ex.ConfigError(f"{path}: {e.strerror}") from None


def _base_config(args, kind):
    if getattr(args, "config", None):
        raw = _read_json(args.config)
        if raw.get("kind") != kind:
            raise ex.ConfigError(f"{args.config}: kind {raw.get('kind')!r} does not match `{kind}`")
        return raw
    return {"kind": kind}


def _report(result, manifest, out_dir):
    for o in manifest["outputs"]:
        print(f"wrote {os.path.join(out_dir, o['path'])}")
    print(f"wrote {os.path.join(out_dir, manifest['name'] + '_manifest.json')}")
    for c in result.checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.label}: {c.detail}")


def _execute(cfg, args):
    out_dir = getattr(args, "out_dir", "results")
    result, manifest = ex.execute(cfg, out_dir)
    _report(result, manifest, out_dir)
    if getattr(args, "check", False) and not result.passed:
        return EXIT_CHECK
    return EXIT_OK


def _entropy_joint(args):
    if not args.joint_path:
        raise ex.ConfigError("`entropy joint` needs a joint-distribution JSON path")
    raw = _read_json(args.joint_path)
    ex.validate_json(raw, "joint")
    j = ent.DiscreteJoint.from_dict(raw)
    out = {"K": j.K, "H_joint": ent.joint_entropy(j), "H_sum": ent.entropy_of_sum(j),
           "H_joint_given_sum": ent.conditional_entropy_given_sum(j, direct=True),
           "residual": ent.theorem_residual(j), "lemma1": ent.verify_lemma1(j),
           "injective_sum": ent.sum_is_injective(j)}
    print(json.dumps(out, indent=2))
    ok = out["residual"] < 1e-12 and out["lemma1"] and out["H_sum"] <= out["H_joint"] + 1e-12
    return EXIT_CHECK if getattr(args, "check", False) and not ok else EXIT_OK


def _recipes(args):
    cat = ex.recipes()
    if args.show:
        if args.show not in cat:
            raise ex.ConfigError(f"no recipe named {args.show!r}")
        print(json.dumps(cat[args.show]["config"], indent=2))
        return EXIT_OK
    if args.export:
        ex.prepare_out_dir(args.export)
        for name, r in cat.items():
            with open(os.path.join(args.export, f"{name}.json"), "w") as f:
                f.write(json.dumps(r["config"], indent=2) + "\n")
        print(f"exported {len(cat)} recipes to {args.export}")
        return EXIT_OK
    width = max(len(n) for n in cat)
    for name, r in cat.items():
        print(f"{name:<{width}}  v{r['version']}  {r['config']['kind']:<10}  {r['description']}")
    return EXIT_OK


def dispatch(args):
    if args.command == "recipes":
        return _recipes(args)
    if args.command == "entropy" and args.action == "joint":
        return _entropy_joint(args)
    if args.command == "run":
        if os.path.exists(args.config):
            raw = _read_json(args.config)
        elif args.config in ex.recipes():
            raw = ex.recipe_config(args.config)
        else:
            raise ex.ConfigError(f"{args.config!r} is neither a config file nor a recipe name")
    else:
        raw = _base_config(args, args.command)
    cfg = ex.resolve_config(raw, _overrides(args))
    return _execute(cfg, args)


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return dispatch(args)
    except ex.UnknownKindError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_UNKNOWN_KIND
    except ex.OutputError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_OUTPUT
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
