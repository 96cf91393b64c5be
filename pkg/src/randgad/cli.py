"""Command-line entry point: inject, pool, train, eval, sweep.

Resolved settings follow default < ``--config`` file < flag. Every
command that writes files also writes ``manifest.json`` with the full
config, the seed and sha256 digests of its inputs.
"""

import argparse
import dataclasses
import hashlib
import json
import logging
import os
import subprocess
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import version_string
from .errors import ArgumentError, ConsistencyError, FormatError, RandError
from .graph import load_graph, save_graph
from .inject import InjectionConfig, inject
from .pool import build_pool
from .rng import stream
from .trainer import TrainConfig, TrainingAborted, ap, auc, fit, write_summary

log = logging.getLogger("randgad")

# CLI flag -> InjectionConfig field
INJECT_FLAGS = {"p": "clique_size", "q": "clique_count", "attr_count": "attr_count", "k": "candidate_pool_size", "seed": "seed"}


# ------------------------------------------------------------------ config


def _parse_bool(text):
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ArgumentError(f"not a boolean: {text!r}")


def _coerce(cls, key, value):
    """Convert a text value to the type of ``cls``'s default for ``key``."""
    fields = {f.name: f for f in dataclasses.fields(cls)}
    if key not in fields:
        raise ArgumentError(f"unknown setting {key!r} for {cls.__name__}")
    default = fields[key].default
    if not isinstance(value, str):
        return tuple(value) if isinstance(default, tuple) else value
    try:
        if isinstance(default, bool):
            return _parse_bool(value)
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float):
            return float(value)
        if isinstance(default, tuple):
            return tuple(s.strip() for s in value.split(",") if s.strip())
    except ValueError:
        raise ArgumentError(f"bad value for {key}: {value!r}") from None
    return value


def read_config_file(path):
    """Flat ``key = value`` lines; ``#`` starts a comment; hyphens in keys become underscores."""
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise FormatError(f"cannot read config {path}: {exc}") from None
    for num, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"{path}:{num}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def resolve(cls, file_values, flag_values, rename=None):
    """Build ``cls`` from defaults, then the config file, then explicit flags."""
    rename = rename or {}
    merged = {}
    for source in (file_values, flag_values):
        for key, value in source.items():
            if value is None:
                continue
            merged[rename.get(key, key)] = value
    kwargs = {k: _coerce(cls, k, v) for k, v in merged.items()}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, RandError):
            raise
        raise ArgumentError(str(exc)) from None


def sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_manifest(out_dir, subcommand, inputs, config, seed, extra=None):
    payload = {
        "subcommand": subcommand,
        "inputs": {k: {"path": str(p), "sha256": sha256(p)} for k, p in inputs.items() if p is not None},
        "output": str(out_dir),
        "config": config,
        "seed": seed,
        "version": version_string(),
    }
    if extra:
        payload.update(extra)
    path = Path(out_dir) / "manifest.json"
    path.write_text(json.dumps(payload, indent=2, sort_keys=True))
    return path


def _graph_inputs(args):
    return {"edges": args.edges, "attrs": args.attrs, "labels": getattr(args, "labels", None)}


def _load(args):
    for name, path in _graph_inputs(args).items():
        if path is not None and not Path(path).is_file():
            raise FormatError(f"{name} file not found: {path}")
    return load_graph(args.edges, args.attrs, getattr(args, "labels", None))


def _file_values(args, cls):
    if not getattr(args, "config", None):
        return {}
    names = {f.name for f in dataclasses.fields(cls)}
    values = read_config_file(args.config)
    if cls is InjectionConfig:
        values = {INJECT_FLAGS.get(k, k): v for k, v in values.items()}
    return {k: v for k, v in values.items() if k in names}


def _flag_values(args, cls, rename=None):
    rename = rename or {}
    names = {f.name for f in dataclasses.fields(cls)}
    out = {}
    for key, value in vars(args).items():
        key = rename.get(key, key)
        if key in names and value is not None:
            out[key] = value
    return out


# ------------------------------------------------------------------ commands


def cmd_inject(args):
    cfg = resolve(InjectionConfig, _file_values(args, InjectionConfig), _flag_values(args, InjectionConfig, INJECT_FLAGS))
    g = _load(args)
    cfg.validate(g.n)
    out, structural, attribute, groups = inject(g, cfg)
    out_dir = Path(args.out)
    paths = save_graph(out, out_dir, binary_attributes=args.binary_attrs)
    sidecar = {
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "structural": [int(i) for i in structural],
        "attribute": [int(i) for i in attribute],
        "cliques": [[int(i) for i in grp] for grp in groups],
        "anomalies": int(out.labels.sum()),
    }
    (out_dir / "inject.json").write_text(json.dumps(sidecar, indent=2))
    write_manifest(out_dir, "inject", _graph_inputs(args), cfg.to_dict(), cfg.seed,
                   {"outputs": {k: str(v) for k, v in paths.items()}})
    print(f"injected {int(out.labels.sum())} anomalies ({len(structural)} structural, {len(attribute)} attribute) -> {out_dir}")
    return 0


def cmd_pool(args):
    cfg = resolve(TrainConfig, _file_values(args, TrainConfig), _flag_values(args, TrainConfig))
    g = _load(args)
    pool = build_pool(g.without_labels(), cfg.pool_config(), stream(cfg.seed, "pool"))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    pool.dump_tsv(out_dir / "pool.tsv")
    pool_cfg = dataclasses.asdict(cfg.pool_config())
    pool_cfg["strategies"] = list(pool_cfg["strategies"])
    write_manifest(out_dir, "pool", _graph_inputs(args), pool_cfg, cfg.seed)
    sizes = {t.name: int(t.indices.size) for t in pool.tables}
    print("pool entries per strategy: " + ", ".join(f"{k}={v}" for k, v in sizes.items()))
    return 0


def _train_one(args, cfg, out_dir):
    g = _load(args)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_manifest(out_dir, "train", _graph_inputs(args), cfg.to_dict(), cfg.seed)
    try:
        params, report = fit(g, cfg, track_auc=g.labels is not None)
    except TrainingAborted as exc:
        ad.save_checkpoint(out_dir / "checkpoint_last_good", exc.last_good)
        log.error("training aborted at epoch %d; last good parameters in %s", exc.epoch, out_dir / "checkpoint_last_good")
        raise
    ad.save_checkpoint(out_dir / "checkpoint", params.named())
    report.write_scores(out_dir / "scores.csv", g.labels)
    report.write_history(out_dir / "history.csv")
    np.save(out_dir / "embeddings.npy", report.embeddings)
    write_summary(out_dir / "summary.json", report, cfg)
    if np.isnan(report.auc):
        print(f"trained {cfg.epochs} epochs -> {out_dir} (no labels, metrics skipped)")
    else:
        print(f"AUC {report.auc:.4f}  AP {report.ap:.4f}  -> {out_dir}")
    return 0


def parse_sweep(text):
    """``name=lo:hi:step`` (inclusive range) or ``name=v1,v2,...``."""
    if "=" not in text:
        raise ArgumentError(f"sweep must look like name=lo:hi:step, got {text!r}")
    name, body = (s.strip() for s in text.split("=", 1))
    name = name.replace("-", "_")
    if ":" in body:
        try:
            lo, hi, step = (float(s) for s in body.split(":"))
        except ValueError:
            raise ArgumentError(f"bad sweep range {body!r}") from None
        if step <= 0 or hi < lo:
            raise ArgumentError(f"bad sweep range {body!r}")
        count = int(np.floor((hi - lo) / step + 1e-9)) + 1
        values = [repr(round(lo + i * step, 12)) for i in range(count)]
    else:
        values = [s.strip() for s in body.split(",") if s.strip()]
    if not values:
        raise ArgumentError(f"empty sweep {text!r}")
    _coerce(TrainConfig, name, values[0])
    return name, values


def _worker_cap():
    raw = os.environ.get("RAND_GAD_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise ArgumentError(f"RAND_GAD_THREADS must be an integer, got {raw!r}") from None
    return os.cpu_count() or 1


def _child_argv(argv, drop=("--sweep", "--param", "--jobs")):
    """Copy of the train argv without sweep-only options (both ``--x v`` and ``--x=v``)."""
    out, skip = [], False
    for tok in argv:
        if skip:
            skip = False
            continue
        head = tok.split("=", 1)[0]
        if head in drop:
            skip = "=" not in tok
            continue
        out.append(tok)
    return out


def run_sweep(args, argv):
    grid = [parse_sweep(s) for s in args.sweep]
    combos = [[]]
    for name, values in grid:
        combos = [c + [(name, v)] for c in combos for v in values]
    base = _child_argv(argv)
    out_root = Path(args.out)
    out_root.mkdir(parents=True, exist_ok=True)
    jobs = []
    for combo in combos:
        tag = "_".join(f"{k}={v}" for k, v in combo)
        child = [sys.executable, "-m", "randgad", "train"] + _remove_out(base) + ["--out", str(out_root / tag)]
        for key, value in combo:
            child += [f"--{key.replace('_', '-')}", value]
        jobs.append((tag, child))
    workers = min(args.jobs or _worker_cap(), _worker_cap(), len(jobs))
    env = dict(os.environ, RAND_GAD_THREADS="1")

    def run(job):
        tag, cmd = job
        proc = subprocess.run(cmd, capture_output=True, text=True, env=env)
        return tag, proc.returncode, proc.stdout.strip(), proc.stderr.strip()

    worst = 0
    index = []
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for tag, code, out, err in pool.map(run, jobs):
            print(f"[{tag}] exit {code} {out}")
            if code:
                sys.stderr.write(err + "\n")
                worst = max(worst, code)
            index.append({"run": tag, "exit": code, "summary": str(out_root / tag / "summary.json")})
    (out_root / "sweep.json").write_text(json.dumps({"runs": index}, indent=2))
    return worst


def _remove_out(argv):
    return _child_argv(argv, drop=("--out", "-o"))


def cmd_train(args, argv):
    if args.sweep:
        return run_sweep(args, argv)
    cfg = resolve(TrainConfig, _file_values(args, TrainConfig), _flag_values(args, TrainConfig))
    return _train_one(args, cfg, args.out)


def _read_scores(path):
    """One score per line, or a CSV with a header containing a ``score`` column."""
    path = Path(path)
    if not path.is_file():
        raise FormatError(f"scores file not found: {path}")
    lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
    if not lines:
        raise FormatError(f"{path}: empty scores file")
    first = [c.strip() for c in lines[0].split(",")]
    try:
        if "score" in first:
            col = first.index("score")
            values = [float(ln.split(",")[col]) for ln in lines[1:]]
        else:
            values = [float(ln.split(",")[-1]) for ln in lines]
    except (ValueError, IndexError):
        raise FormatError(f"{path}: unreadable score value") from None
    scores = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(scores)):
        raise FormatError(f"{path}: non-finite score")
    return scores


def cmd_eval(args):
    from .graph import read_labels

    scores = _read_scores(args.scores)
    if not Path(args.labels).is_file():
        raise FormatError(f"labels file not found: {args.labels}")
    labels = read_labels(args.labels)
    if scores.size != labels.size:
        raise ConsistencyError(f"{scores.size} scores vs {labels.size} labels")
    result = {"auc": auc(scores, labels), "ap": ap(scores, labels), "n": int(scores.size), "anomalies": int(labels.sum())}
    print(f"AUC {result['auc']:.6f}")
    print(f"AP {result['ap']:.6f}")
    if args.json:
        Path(args.json).write_text(json.dumps(result, indent=2))
    return 0


def cmd_sweep(args, argv):
    if not args.sweep:
        raise ArgumentError("sweep needs at least one --param name=values")
    return run_sweep(args, argv)


# ------------------------------------------------------------------ parser


def _add_graph_inputs(p, labels=True):
    p.add_argument("--edges", required=True, help="edge list: whitespace-separated 'src dst' pairs, 0-indexed")
    p.add_argument("--attrs", required=True, help="attribute matrix: headerless CSV or RANDATTR binary")
    if labels:
        p.add_argument("--labels", help="optional 0/1 label file, one line per node")


def _add_train_flags(p):
    d = TrainConfig()
    p.add_argument("--config", help="flat key=value file; explicit flags win")
    p.add_argument("--epochs", type=int, help=f"training epochs (default {d.epochs})")
    p.add_argument("--lr", type=float, help=f"Adam learning rate (default {d.lr})")
    p.add_argument("--seed", type=int, help=f"root seed (default {d.seed})")
    p.add_argument("--hidden", type=int, help=f"embedding size (default {d.hidden})")
    p.add_argument("--mask-rate", dest="mask_rate", type=float, help=f"fraction of nodes masked (default {d.mask_rate})")
    p.add_argument("--alpha", type=float, help=f"attribute weight in loss and score (default {d.alpha})")
    p.add_argument("--lam", type=float, help=f"L2 weight (default {d.lam})")
    p.add_argument("--decoder", help="attribute decoder: gcn | mlp (aliases one-layer-graph-conv, two-layer-perceptron)")
    p.add_argument("--topo-batch", dest="topo_batch", type=int, help="rows per step for the minibatch topology loss (0 = dense)")
    p.add_argument("--p-min", dest="p_min", type=float, help=f"probability floor per strategy (default {d.p_min})")
    p.add_argument("--delta1", type=float, help=f"bandit step scale (default {d.delta1})")
    p.add_argument("--delta2", type=float, help=f"bandit confidence parameter (default {d.delta2})")
    p.add_argument("--T", "--update-every", dest="T", type=int, help=f"epochs between bandit updates (default {d.T})")
    p.add_argument("--U", "--warmup", dest="U", type=int, help=f"warm-up epochs before the first update (default {d.U})")
    p.add_argument("--freeze-bandit", dest="freeze_bandit", action="store_const", const=True,
                   help="keep strategy probabilities uniform (ablation)")
    p.add_argument("--sample-size", dest="sample_size", type=int, help=f"neighbors drawn per node (default {d.sample_size})")
    p.add_argument("--knn-k", dest="knn_k", type=int, help=f"attribute nearest neighbors (default {d.knn_k})")
    p.add_argument("--teleport", type=float, help=f"PPR teleport probability (default {d.teleport})")
    p.add_argument("--ppr-top", dest="ppr_top", type=int, help=f"PPR candidates kept (default {d.ppr_top})")
    p.add_argument("--ppr-tol", dest="ppr_tol", type=float, help=f"PPR L1 tolerance (default {d.ppr_tol})")
    p.add_argument("--strategies", help="comma list from onehop,twohop,knn,ppr")


def build_parser():
    parser = argparse.ArgumentParser(prog="randgad", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"randgad {version_string()}")
    parser.add_argument("--log-level", default="WARNING", help="logging level (default WARNING)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("inject", help="inject clique and attribute anomalies")
    _add_graph_inputs(p)
    p.add_argument("--out", "-o", required=True, help="output directory")
    p.add_argument("--config", help="flat key=value file; explicit flags win")
    p.add_argument("--p", type=int, help="clique size (default 15)")
    p.add_argument("--q", type=int, help="number of cliques (default 5)")
    p.add_argument("--attr-count", dest="attr_count", type=int, help="attribute anomalies (default 75)")
    p.add_argument("--k", type=int, help="candidates per attribute swap (default 50)")
    p.add_argument("--seed", type=int, help="root seed (default 0)")
    p.add_argument("--binary-attrs", action="store_true", help="write attributes in RANDATTR binary")

    p = sub.add_parser("pool", help="build the candidate tables and dump them as TSV")
    _add_graph_inputs(p, labels=False)
    p.add_argument("--out", "-o", required=True, help="output directory")
    _add_train_flags(p)

    for name, text in (("train", "train and score a graph"), ("sweep", "run a grid of train jobs in child processes")):
        p = sub.add_parser(name, help=text)
        _add_graph_inputs(p)
        p.add_argument("--out", "-o", required=True, help="output directory")
        _add_train_flags(p)
        p.add_argument("--sweep", "--param", dest="sweep", action="append", default=[],
                       help="name=lo:hi:step or name=v1,v2 (repeatable; combinations form a grid)")
        p.add_argument("--jobs", type=int, help="parallel child runs (capped by RAND_GAD_THREADS)")

    p = sub.add_parser("eval", help="AUC and AP of a score file against labels")
    p.add_argument("--scores", required=True, help="one score per line, or CSV with a 'score' column")
    p.add_argument("--labels", required=True, help="0/1 label file")
    p.add_argument("--json", help="also write the metrics as JSON here")
    return parser


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    sub_argv = argv[argv.index(args.command) + 1:]
    try:
        if args.command == "inject":
            return cmd_inject(args)
        if args.command == "pool":
            return cmd_pool(args)
        if args.command == "train":
            return cmd_train(args, sub_argv)
        if args.command == "sweep":
            return cmd_sweep(args, sub_argv)
        return cmd_eval(args)
    except RandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
