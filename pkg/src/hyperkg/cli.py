"""Command-line entry point.

Heavy modules are imported after argument parsing so that ``--threads`` can cap
the BLAS thread pools before numpy loads them.
"""
from __future__ import annotations

import argparse
import json
import os
import platform
import sys
import time
from pathlib import Path

MODEL_FLAGS = {
    "d": int, "T": int, "L": int, "posenc": str, "posenc_seed": int, "relgraph_mode": str, "init_seed": int,
}
TRAIN_FLAGS = {
    "negatives": int, "adv_temperature": float, "adv_weighting": str,
    "batch_size": int, "lr": float, "weight_decay": float,
    "epochs": int, "batches_per_epoch": int, "val_every": int, "max_val_facts": int, "patience": int,
}


class UsageError(Exception):
    pass


def _add_run_flags(p: argparse.ArgumentParser, model: bool = True) -> None:
    p.add_argument("--config", help="key=value configuration file")
    flags = dict(TRAIN_FLAGS)
    if model:
        flags.update(MODEL_FLAGS)
    for name, typ in flags.items():
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=typ, default=None)
    p.add_argument("--non-strict", dest="strict", action="store_const", const=False, default=None,
                   help="allow negatives that complete a known fact")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hyperkg", description="Knowledge-hypergraph link prediction")
    parser.add_argument("--seed", type=int, default=None, help="seed for every random choice")
    parser.add_argument("--threads", type=int, default=None, help="cap numeric worker threads")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    rg = sub.add_parser("relgraph", help="relation graph export").add_subparsers(dest="action", required=True)
    p = rg.add_parser("build", help="print relation-graph edges as r1<TAB>r2<TAB>a<TAB>b")
    p.add_argument("--facts", required=True)
    p.add_argument("--mode", choices=["exclude-same-edge", "raw-spmm"], default="exclude-same-edge")
    p.add_argument("--out")

    sp = sub.add_parser("split", help="inductive dataset splits").add_subparsers(dest="action", required=True)
    p = sp.add_parser("generate", help="train/inference split with held-out relations")
    p.add_argument("--facts", required=True)
    p.add_argument("--n-train", type=int, required=True)
    p.add_argument("--n-test", type=int, required=True)
    p.add_argument("--p-rel", type=float, required=True)
    p.add_argument("--p-tri", type=float, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("reify", help="convert a hypergraph into a binary graph")
    p.add_argument("--facts", required=True)
    p.add_argument("--scheme", choices=["pos", "relnode"], required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("corrupt", help="shuffle argument positions of one relation")
    p.add_argument("--facts", required=True)
    p.add_argument("--relation", required=True)
    p.add_argument("--fraction", type=float, default=0.5)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train end to end on one graph")
    p.add_argument("--graph", required=True, help="training facts (also the message-passing graph)")
    p.add_argument("--valid", help="validation facts")
    p.add_argument("--valid-graph", help="graph the validation facts are scored on (default: --graph)")
    p.add_argument("--ckpt", required=True, help="output checkpoint")
    p.add_argument("--log", help="training log (default: next to the checkpoint)")
    _add_run_flags(p)

    p = sub.add_parser("pretrain", help="train on a mix of graphs")
    p.add_argument("--graphs", nargs="+", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--log")
    _add_run_flags(p)

    p = sub.add_parser("finetune", help="continue training a checkpoint on another graph")
    p.add_argument("--from-ckpt", required=True)
    p.add_argument("--graph", required=True)
    p.add_argument("--valid")
    p.add_argument("--valid-graph")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--log")
    _add_run_flags(p, model=False)

    p = sub.add_parser("eval", help="filtered ranking metrics")
    p.add_argument("--graph", required=True, help="inference graph facts")
    p.add_argument("--test", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--known", nargs="*", default=[], help="extra fact files added to the filter")
    p.add_argument("--out")
    p.add_argument("--batch-size", type=int, default=16)

    p = sub.add_parser("stats", help="size and arity table")
    p.add_argument("--facts", required=True)

    p = sub.add_parser("ablate", help="positional-encoding ablation on the synthetic corpus")
    p.add_argument("--out", required=True, help="output directory for the table and the figure")
    p.add_argument("--schemes", nargs="+", default=["sinusoidal", "all-one", "random", "magnitude"])
    _add_run_flags(p)
    return parser


def _require_files(*paths) -> None:
    for path in paths:
        if path is not None and not Path(path).is_file():
            raise FileNotFoundError(f"input file not found: {path}")


def _write_manifest(out_dir: Path, args, config: dict | None) -> None:
    import numpy
    import scipy

    from . import __version__

    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": args.command,
        "argv": sys.argv[1:],
        "seed": args.seed,
        "config": config,
        "versions": {
            "hyperkg": __version__, "python": platform.python_version(),
            "numpy": numpy.__version__, "scipy": scipy.__version__,
        },
        "time": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _run_config(args, model: bool = True) -> dict:
    from .config import load_config, resolve

    file_values = load_config(args.config) if args.config else {}
    keys = list(TRAIN_FLAGS) + (list(MODEL_FLAGS) if model else []) + ["strict"]
    overrides = {k: getattr(args, k) for k in keys}
    overrides["seed"] = args.seed
    overrides["threads"] = args.threads
    return resolve(file_values, overrides)


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _validation(valid_path, graph_path, train_graph):
    from .core import load_facts, read_fact_lines
    from .evalrank import facts_in_graph
    from .training import Validation

    if not valid_path:
        return None
    facts = read_fact_lines(Path(valid_path).read_text(encoding="utf-8"))
    graph = train_graph if graph_path is None else load_facts(graph_path)
    graph = _with_fact_vocab(graph, facts)
    edges = facts_in_graph(graph, facts)
    return Validation(graph, edges, graph.fact_set().update(edges))


def _with_fact_vocab(graph, facts):
    ents = [e for _, es in facts for e in es]
    rels = {}
    for r, es in facts:
        rels.setdefault(r, len(es))
    return graph.with_vocab(ents, rels)


def _train_outputs(args):
    ckpt = Path(args.ckpt)
    log_path = Path(args.log) if args.log else ckpt.with_suffix(".log.tsv")
    return ckpt, log_path


def cmd_relgraph(args) -> int:
    from .core import load_facts
    from .relgraph import build_relation_graph, relation_graph_lines

    _require_files(args.facts)
    g = load_facts(args.facts)
    lines = relation_graph_lines(g, build_relation_graph(g, args.mode))
    _emit("".join(line + "\n" for line in lines), args.out)
    if args.out:
        _write_manifest(Path(args.out).parent, args, {"mode": args.mode})
    return 0


def cmd_split(args) -> int:
    from .core import load_facts
    from .datasets import SplitParams, generate_split

    _require_files(args.facts)
    params = SplitParams(args.n_train, args.n_test, args.p_rel, args.p_tri, args.seed or 0)
    split = generate_split(load_facts(args.facts), params)
    split.write(args.out)
    _write_manifest(Path(args.out), args, vars(params) | {
        "unseen_fraction": split.unseen_fraction, "dropped_valid": split.dropped_valid,
        "dropped_test": split.dropped_test,
    })
    print(f"train\t{len(split.train)}\naux\t{len(split.aux)}\nvalid\t{len(split.valid)}\ntest\t{len(split.test)}")
    print(f"unseen_relation_fraction\t{split.unseen_fraction:.4f}")
    return 0


def cmd_reify(args) -> int:
    from .core import load_facts, serialize
    from .datasets import reify_positional, reify_relnode

    _require_files(args.facts)
    g = load_facts(args.facts)
    kg = reify_positional(g) if args.scheme == "pos" else reify_relnode(g)
    _emit(serialize(kg), args.out)
    _write_manifest(Path(args.out).parent, args, {"scheme": args.scheme})
    return 0


def cmd_corrupt(args) -> int:
    import numpy as np

    from .core import load_facts, serialize
    from .datasets import corrupt_positions

    _require_files(args.facts)
    g = load_facts(args.facts)
    out = corrupt_positions(g, args.relation, args.fraction, np.random.default_rng(args.seed or 0))
    _emit(serialize(out), args.out)
    _write_manifest(Path(args.out).parent, args, {"relation": args.relation, "fraction": args.fraction})
    return 0


def cmd_train(args) -> int:
    from .config import model_config, train_config
    from .core import load_facts
    from .encoders import HyperModel
    from .plotting import plot_training
    from .training import train

    _require_files(args.graph, args.valid, args.valid_graph, args.config)
    cfg = _run_config(args)
    graph = load_facts(args.graph)
    validation = _validation(args.valid, args.valid_graph, graph)
    model = HyperModel(model_config(cfg))
    ckpt, log_path = _train_outputs(args)
    ckpt.parent.mkdir(parents=True, exist_ok=True)
    result = train(model, graph, train_config(cfg), validation, log_path, ckpt)
    plot_training(log_path, ckpt.with_suffix(".loss.png"))
    _write_manifest(ckpt.parent, args, cfg)
    print(f"steps\t{result.steps}\nbest_step\t{result.best_step}\nbest_val_mrr\t{result.best_val_mrr}")
    return 0


def cmd_pretrain(args) -> int:
    from .config import model_config, train_config
    from .core import load_facts
    from .encoders import HyperModel
    from .plotting import plot_training
    from .training import pretrain

    _require_files(*args.graphs, args.config)
    cfg = _run_config(args)
    mix = [(load_facts(p), Path(p).stem) for p in args.graphs]
    model = HyperModel(model_config(cfg))
    ckpt, log_path = _train_outputs(args)
    ckpt.parent.mkdir(parents=True, exist_ok=True)
    result = pretrain(model, mix, train_config(cfg), log_path, ckpt)
    plot_training(log_path, ckpt.with_suffix(".loss.png"))
    _write_manifest(ckpt.parent, args, cfg)
    print(f"steps\t{result.steps}\nbest_step\t{result.best_step}\nbest_val_mrr\t{result.best_val_mrr}")
    return 0


def cmd_finetune(args) -> int:
    from .config import train_config
    from .core import load_facts
    from .plotting import plot_training
    from .training import finetune

    _require_files(args.from_ckpt, args.graph, args.valid, args.valid_graph, args.config)
    cfg = _run_config(args, model=False)
    graph = load_facts(args.graph)
    validation = _validation(args.valid, args.valid_graph, graph)
    ckpt, log_path = _train_outputs(args)
    ckpt.parent.mkdir(parents=True, exist_ok=True)
    _, result = finetune(args.from_ckpt, graph, train_config(cfg), validation, log_path=log_path, ckpt_path=ckpt)
    if log_path.exists():
        plot_training(log_path, ckpt.with_suffix(".loss.png"))
    _write_manifest(ckpt.parent, args, cfg)
    print(f"steps\t{result.steps}\nbest_val_mrr\t{result.best_val_mrr}")
    return 0


def cmd_eval(args) -> int:
    from .core import load_facts, read_fact_lines
    from .encoders import HyperModel
    from .evalrank import evaluate, facts_in_graph, format_metrics

    _require_files(args.graph, args.test, *args.known)
    model, _ = HyperModel.load(args.ckpt)
    test = read_fact_lines(Path(args.test).read_text(encoding="utf-8"))
    extra = [f for p in args.known for f in read_fact_lines(Path(p).read_text(encoding="utf-8"))]
    graph = _with_fact_vocab(load_facts(args.graph), test)
    edges = facts_in_graph(graph, test)
    filt = graph.fact_set().update(edges)
    known = [f for f in extra if all(e in graph.entity_vocab for e in f[1]) and f[0] in graph.relation_vocab]
    filt.update(facts_in_graph(graph, known))
    metrics = evaluate(model, graph, edges, filt, batch_size=args.batch_size)
    _emit(format_metrics(metrics), args.out)
    if args.out:
        _write_manifest(Path(args.out).parent, args, {"ckpt": str(args.ckpt)})
    return 0


def cmd_stats(args) -> int:
    from .core import load_facts
    from .datasets import format_stats, stats

    _require_files(args.facts)
    sys.stdout.write(format_stats(stats(load_facts(args.facts))))
    return 0


def cmd_ablate(args) -> int:
    from .config import model_config, train_config
    from .experiments import run_posenc_ablation
    from .plotting import plot_bars

    _require_files(args.config)
    cfg = _run_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    results = run_posenc_ablation(model_config(cfg), train_config(cfg), args.schemes)
    lines = ["scheme\ttest_mrr\tbest_val_mrr\tseconds"]
    lines += [f"{r.scheme}\t{r.test_mrr:.6f}\t{r.best_val_mrr:.6f}\t{r.seconds:.1f}" for r in results]
    (out / "ablation.tsv").write_text("\n".join(lines) + "\n")
    plot_bars([r.scheme for r in results], [r.test_mrr for r in results], out / "ablation.png",
              title="positional encoding ablation")
    _write_manifest(out, args, cfg)
    print("\n".join(lines))
    return 0


COMMANDS = {
    "relgraph": cmd_relgraph, "split": cmd_split, "reify": cmd_reify, "corrupt": cmd_corrupt,
    "train": cmd_train, "pretrain": cmd_pretrain, "finetune": cmd_finetune, "eval": cmd_eval,
    "stats": cmd_stats, "ablate": cmd_ablate,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)

    import logging

    from .errors import HyperError

    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (HyperError, FileNotFoundError, KeyError, IndexError, ValueError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"hyperkg {args.command}: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
