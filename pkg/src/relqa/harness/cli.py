"""Command-line entry point: ``relqa <subcommand> ...``.

Exit codes: 0 success, 1 validation error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import re
import sys
from pathlib import Path

from relqa.errors import NonFiniteError, RelQAError
from relqa.graphbuild import GraphConfig, build_graph, deserialize_graph, graph_stats, serialize_graph
from relqa.harness.data import SyntheticSpec, dumps_dataset, gen_synthetic, load_dataset
from relqa.harness.grid import run_grid
from relqa.harness.train import RunConfig, evaluate_checkpoint, train

log = logging.getLogger("relqa")


def _read_json(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise RelQAError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    if not isinstance(doc, dict):
        raise RelQAError(f"{path}: expected a JSON object")
    return doc


def _safe_name(instance_id: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]", "_", instance_id)


def cmd_build_graphs(args) -> int:
    config = GraphConfig(use_reasoning=args.reason, use_sentences=args.sents, ner_mode=args.ner,
                         max_path_docs=args.max_path_docs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    instances = load_dataset(args.instances)
    for inst in instances:
        (out / f"{_safe_name(inst.id)}.json").write_bytes(serialize_graph(build_graph(inst, config)))
    print(json.dumps({"graphs": len(instances), "setting": config.setting, "out": str(out)}))
    return 0


def cmd_gen_synthetic(args) -> int:
    spec = SyntheticSpec(**_read_json(args.spec))
    Path(args.out).write_text(dumps_dataset(gen_synthetic(spec)), encoding="utf-8")
    print(json.dumps({"instances": spec.n_instances, "out": args.out}))
    return 0


def _run_config(path, timing: bool) -> RunConfig:
    doc = _read_json(path)
    run = RunConfig.from_dict(doc)
    run.record_time = run.record_time or timing
    return run


def cmd_train(args) -> int:
    run = _run_config(args.config, args.timing)
    if not (run.train_path and run.dev_path and run.out_dir):
        raise RelQAError("train config needs train_path, dev_path and out_dir")
    res = train(run, load_dataset(run.train_path), load_dataset(run.dev_path))
    print(json.dumps({"best_dev_acc": res.best_dev_acc, "best_epoch": res.best_epoch,
                      "epochs_run": res.epochs_run, "out_dir": run.out_dir}, sort_keys=True))
    return 0


def cmd_eval(args) -> int:
    res = evaluate_checkpoint(args.checkpoint, load_dataset(args.data))
    if args.out:
        Path(args.out).write_text(res.predictions_jsonl(), encoding="utf-8")
    print(json.dumps({"accuracy": res.accuracy, "instances": len(res.predictions)}, sort_keys=True))
    return 0


def cmd_grid(args) -> int:
    doc = _read_json(args.spec)
    try:
        axes = doc["axes"]
        base = RunConfig.from_dict(doc.get("base", {}))
        train_set, dev_set = load_dataset(doc["train_path"]), load_dataset(doc["dev_path"])
    except KeyError as exc:
        raise RelQAError(f"{args.spec}: missing key {exc}") from None
    out_dir = args.out or doc.get("out_dir")
    cells, table = run_grid(axes, base, train_set, dev_set, out_dir=out_dir,
                            workers=int(doc.get("workers", 1)))
    sys.stdout.write(table)
    return 0


def cmd_stats(args) -> int:
    files = sorted(Path(args.graph_dir).glob("*.json"))
    graphs = [deserialize_graph(f.read_bytes()) for f in files]
    if not graphs:
        raise RelQAError(f"no graph files in {args.graph_dir}")
    print(json.dumps(graph_stats(graphs), sort_keys=True, indent=1))
    return 0


class _Parser(argparse.ArgumentParser):
    # bad usage is a validation error; exit code 2 is reserved for numerical failure
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="relqa", description="Relational GCN multi-hop QA toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("build-graphs", help="serialise one graph per instance")
    b.add_argument("instances")
    b.add_argument("--out", required=True)
    b.add_argument("--reason", action="store_true", help="add reasoning-entity nodes and relations")
    b.add_argument("--sents", action="store_true", help="add sentence nodes and relations")
    b.add_argument("--ner", choices=("heuristic", "provided"), default="heuristic")
    b.add_argument("--max-path-docs", type=int, default=3)
    b.set_defaults(func=cmd_build_graphs)

    g = sub.add_parser("gen-synthetic", help="write a synthetic dataset")
    g.add_argument("--spec", required=True)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_synthetic)

    t = sub.add_parser("train", help="train one model")
    t.add_argument("--config", required=True)
    t.add_argument("--timing", action="store_true", help="record wall time per epoch in metrics")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--out", help="write per-instance predictions (JSON lines)")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("grid", help="run an ablation grid")
    r.add_argument("--spec", required=True)
    r.add_argument("--out")
    r.set_defaults(func=cmd_grid)

    s = sub.add_parser("stats", help="summarise a directory of graphs")
    s.add_argument("graph_dir")
    s.set_defaults(func=cmd_stats)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except NonFiniteError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except (RelQAError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
