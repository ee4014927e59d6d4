"""``ukge`` command line: one subcommand per pipeline stage.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .evaluation import EvalReport, evaluate, remap_triples
from .fusion import fuse_kgs, load_sameas
from .kg import (
    GraphFormatError,
    NTriplesError,
    ParseStats,
    build_graph,
    graph_stats,
    load_graph,
    open_source,
    parse_ntriples,
    read_dictionary_tsv,
    sidecar,
    write_dictionary_tsv,
    write_graph,
    write_ntriples,
)
from .models import ModelConfig
from .sampling import SplitConfig, aligned_entities, one_hop_subgraph, project_seeds, sample_seed_entities, split_train_test
from .training import CheckpointError, TrainConfig, TrainingError, load_checkpoint, save_checkpoint, train

logger = logging.getLogger("ukge")

EXIT_USAGE = 1
EXIT_DATA = 2

DATA_ERRORS = (GraphFormatError, NTriplesError, CheckpointError, TrainingError, KeyError, OSError)


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass
class RunManifest:
    subcommand: str
    config: dict
    inputs: dict
    outputs: dict
    seeds: dict = field(default_factory=dict)
    tool_version: str = __version__
    duration_s: float = 0.0

    def write(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _config(cls, **kwargs):
    """Build a config dataclass; invalid flag values are usage errors, raised before any I/O."""
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _seed(args) -> int:
    if args.seed is None:
        logger.warning("no --seed given; using 0 (pass --seed to make the choice explicit)")
        return 0
    return args.seed


def _manifest_path(args, primary: str | Path, sub: str) -> Path:
    return Path(args.manifest) if args.manifest else sidecar(primary, f".{sub}.manifest.json")


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# subcommands; each returns (config, inputs, outputs, seeds, manifest path)


def cmd_parse(args):
    stats = ParseStats()
    with open_source(args.input) as fh:
        g = build_graph(parse_ntriples(fh, stats, strict=args.strict))
    write_graph(g, args.out)
    outputs = {"graph": str(args.out)}
    if args.dict_prefix:
        ents, rels = f"{args.dict_prefix}.entities.tsv", f"{args.dict_prefix}.relations.tsv"
        write_dictionary_tsv(g.entities, ents)
        write_dictionary_tsv(g.relations, rels)
        outputs.update(entities=ents, relations=rels)
    print(_dump({"parse": asdict(stats), "graph": graph_stats(g).as_dict()}))
    return {"strict": args.strict}, {"input": str(args.input)}, outputs, {}, _manifest_path(args, args.out, "parse")


def cmd_stats(args):
    g = load_graph(args.graph)
    st = graph_stats(g)
    print(_dump(st.as_dict()) if args.json else str(st))
    return {}, {"graph": str(args.graph)}, {}, {}, _manifest_path(args, args.graph, "stats")


def cmd_fuse(args):
    graphs = [load_graph(args.ref)] + [load_graph(p) for p in args.add]
    with open_source(args.sameas) as fh:
        m = load_sameas(fh)
    merged, report = fuse_kgs(graphs, m)
    write_graph(merged, args.out)
    summary = report.as_dict()
    summary["sameas_skipped_predicates"] = m.skipped_predicates
    outputs = {"graph": str(args.out)}
    if args.report:
        Path(args.report).write_text(_dump(summary) + "\n", encoding="utf-8")
        outputs["report"] = str(args.report)
    print(_dump(summary))
    inputs = {"ref": str(args.ref), "add": [str(p) for p in args.add], "sameas": str(args.sameas)}
    return {}, inputs, outputs, {}, _manifest_path(args, args.out, "fuse")


def cmd_sample(args):
    seed = _seed(args)
    cfg = _config(SplitConfig, seed_fraction=args.fraction, rng_seed=seed)
    g = load_graph(args.graph)
    with open_source(args.sameas) as fh:
        m = load_sameas(fh)
    aligned = aligned_entities(g, m)
    if not aligned:
        raise DataError("no entity of the graph occurs in a sameAs link")
    seeds = sample_seed_entities(g, aligned, cfg)
    sample = one_hop_subgraph(g, seeds)
    write_graph(sample, args.out)
    outputs = {"graph": str(args.out)}
    summary = {"seeds": len(seeds), "sample": graph_stats(sample).as_dict()}
    if args.project:
        other = load_graph(args.project)
        targets = project_seeds((g.entities[i] for i in seeds), m, other.entity_index)
        ids = [other.entity_index[e] for e in targets]
        projected = one_hop_subgraph(other, ids)
        out2 = args.project_out or sidecar(args.project, ".sample.ukg")
        write_graph(projected, out2)
        outputs["projected"] = str(out2)
        summary.update(projected_seeds=len(targets), projected=graph_stats(projected).as_dict())
    print(_dump(summary))
    inputs = {"graph": str(args.graph), "sameas": str(args.sameas), "project": args.project and str(args.project)}
    return asdict(cfg), inputs, outputs, {"rng_seed": seed}, _manifest_path(args, args.out, "sample")


def cmd_split(args):
    seed = _seed(args)
    cfg = _config(SplitConfig, test_ratio=args.test_ratio, rng_seed=seed)
    g = load_graph(args.graph)
    split = split_train_test(g, cfg)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    outputs = {}
    for part, sub in (("train", split.train), ("test", split.test)):
        write_graph(sub, out / f"{args.prefix}{part}.ukg")
        write_ntriples(sub, out / f"{args.prefix}{part}.nt")
        outputs[part] = str(out / f"{args.prefix}{part}.ukg")
    manifest = {"config": asdict(cfg), **split.manifest()}
    (out / f"{args.prefix}split.json").write_text(_dump(manifest) + "\n", encoding="utf-8")
    outputs["split_manifest"] = str(out / f"{args.prefix}split.json")
    print(_dump(manifest))
    mpath = Path(args.manifest) if args.manifest else out / f"{args.prefix}split.manifest.json"
    return asdict(cfg), {"graph": str(args.graph)}, outputs, {"rng_seed": seed}, mpath


def cmd_train(args):
    seed = _seed(args)
    mcfg = _config(
        ModelConfig,
        kind=args.kind,
        dim=args.dim,
        conex_channels=args.channels,
        conex_kernel=args.kernel,
        init_scale=args.init_scale,
        rng_seed=seed,
        qmult_normalize=args.qmult_normalize,
    )
    tcfg = _config(
        TrainConfig,
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        negatives_per_positive=args.negatives,
        optimizer=args.optimizer,
        l2=args.l2,
        rng_seed=seed,
        checkpoint_every=args.checkpoint_every,
        workers=args.workers,
    )
    g = load_graph(args.graph)
    out = Path(args.out)
    table, trace = train(
        g,
        mcfg,
        tcfg,
        checkpoint_path=out,
        on_epoch=lambda e, loss: logger.info("epoch %d loss %.6f", e, loss),
    )
    save_checkpoint(table, out)
    ents, rels, loss_csv = sidecar(out, ".entities.tsv"), sidecar(out, ".relations.tsv"), sidecar(out, ".loss.csv")
    write_dictionary_tsv(g.entities, ents)
    write_dictionary_tsv(g.relations, rels)
    trace.to_csv(loss_csv)
    final = trace.epoch_loss[-1] if trace.epoch_loss else None
    print(_dump({"epochs": len(trace), "final_loss": final, "checkpoint": str(out)}))
    outputs = {"checkpoint": str(out), "entities": str(ents), "relations": str(rels), "loss": str(loss_csv)}
    config = {"model": {**asdict(mcfg), "kind": mcfg.kind.value}, "train": asdict(tcfg)}
    return config, {"graph": str(args.graph)}, outputs, {"model": seed, "train": seed}, _manifest_path(args, out, "train")


def _model_vocab(ckpt: Path) -> tuple[list[str], list[str]]:
    return read_dictionary_tsv(sidecar(ckpt, ".entities.tsv")), read_dictionary_tsv(sidecar(ckpt, ".relations.tsv"))


def format_report(report: EvalReport, metrics: list[str], label: str = "") -> str:
    cols = []
    if "mrr" in metrics:
        cols.append(("MRR", report.mrr))
    if "hits" in metrics:
        cols += [("H@1", report.hits1), ("H@3", report.hits3), ("H@10", report.hits10)]
    head = f"{'':<16}" + "".join(f"{c:>8}" for c, _ in cols)
    row = f"{label:<16}" + "".join(f"{v:>8.3f}" for _, v in cols)
    return head + "\n" + row


def cmd_eval(args):
    metrics = [m.strip() for m in args.metrics.split(",") if m.strip()]
    bad = set(metrics) - {"mrr", "hits"}
    if bad or not metrics:
        raise UsageError(f"--metrics accepts mrr,hits; got {args.metrics!r}")
    if args.filtered and not args.train:
        raise UsageError("--filtered needs --train to know the true triples")
    ckpt = Path(args.model)
    table = load_checkpoint(ckpt)
    entities, relations = _model_vocab(ckpt)
    if len(entities) != table.num_entities or len(relations) != table.num_relations:
        raise DataError("dictionary files do not match the checkpoint")
    test = load_graph(args.test)
    test_ids = remap_triples(test, (entities, relations))
    known = None
    if args.filtered:
        train_ids = remap_triples(load_graph(args.train), (entities, relations))
        known = np.concatenate([train_ids, test_ids])
    report = evaluate(table, test_ids, range(table.num_entities), known_triples=known)
    print(format_report(report, metrics, args.label))
    outputs = {}
    if args.out:
        Path(args.out).write_text(_dump(report.as_dict()) + "\n", encoding="utf-8")
        outputs["report"] = str(args.out)
    inputs = {"model": str(ckpt), "test": str(args.test), "train": args.train and str(args.train)}
    config = {"metrics": metrics, "filtered": args.filtered}
    return config, inputs, outputs, {}, _manifest_path(args, args.out or args.test, "eval")


def cmd_serve(args):
    import uvicorn

    from .service import VectorStore, create_app

    data = args.data or os.environ.get("UKGE_DATA_PATH")
    if not data:
        raise UsageError("--data or UKGE_DATA_PATH is required")
    bind = args.bind or os.environ.get("UKGE_BIND_ADDR", "127.0.0.1:8000")
    host, _, port = bind.rpartition(":")
    if not host or not port.isdigit():
        raise UsageError(f"bind address must be host:port, got {bind!r}")
    token = args.admin_token or os.environ.get("UKGE_ADMIN_TOKEN") or None
    max_batch = args.max_batch or int(os.environ.get("UKGE_MAX_BATCH", 1000))
    try:
        store = VectorStore.from_checkpoint(data, dataset_name=args.dataset)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    uvicorn.run(create_app(store, admin_token=token, max_batch=max_batch), host=host, port=int(port))
    return None


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ukge", description="Fuse knowledge graphs, train and evaluate embeddings, serve vectors.")
    p.add_argument("--version", action="version", version=f"ukge {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, help_):
        sp = sub.add_parser(name, help=help_, description=help_)
        sp.add_argument("--manifest", help="where to write the run manifest (default: next to the main output)")
        return sp

    sp = add("parse", "Parse N-Triples (optionally gzipped) into the binary graph format.")
    sp.add_argument("input", help="input .nt or .nt.gz file")
    sp.add_argument("--out", required=True, help="output .ukg graph")
    sp.add_argument("--strict", action="store_true", help="abort on the first malformed line")
    sp.add_argument("--dict-prefix", help="also write PREFIX.entities.tsv and PREFIX.relations.tsv")
    sp.set_defaults(func=cmd_parse)

    sp = add("stats", "Print entity, relation and triple counts and the average degree.")
    sp.add_argument("graph", help=".ukg or .nt graph")
    sp.add_argument("--json", action="store_true", help="emit JSON")
    sp.set_defaults(func=cmd_stats)

    sp = add("fuse", "Merge graphs into the reference graph through sameAs links.")
    sp.add_argument("--ref", required=True, help="reference graph (its IRIs are kept)")
    sp.add_argument("--add", required=True, action="append", help="graph to merge in; repeatable, merged in order")
    sp.add_argument("--sameas", required=True, help="N-Triples file of owl:sameAs links")
    sp.add_argument("--out", required=True, help="merged .ukg graph")
    sp.add_argument("--report", help="write the fusion report as JSON")
    sp.set_defaults(func=cmd_fuse)

    sp = add("sample", "Sample aligned seed entities and keep their 1-hop neighbourhood.")
    sp.add_argument("--graph", required=True, help="graph to sample from")
    sp.add_argument("--sameas", required=True, help="N-Triples file of owl:sameAs links")
    sp.add_argument("--fraction", type=float, default=0.01, help="share of aligned entities used as seeds (default 0.01)")
    sp.add_argument("--seed", type=int, help="RNG seed")
    sp.add_argument("--out", required=True, help="sampled .ukg graph")
    sp.add_argument("--project", help="second graph: also sample the neighbourhood of the seeds' counterparts there")
    sp.add_argument("--project-out", help="output for the projected sample")
    sp.set_defaults(func=cmd_sample)

    sp = add("split", "Split a graph into train/test with test vocabulary contained in train.")
    sp.add_argument("--graph", required=True, help="graph to split")
    sp.add_argument("--test-ratio", type=float, default=0.2, help="share of triples drawn for test (default 0.2)")
    sp.add_argument("--seed", type=int, help="RNG seed")
    sp.add_argument("--out-dir", required=True, help="directory for train/test files and split.json")
    sp.add_argument("--prefix", default="", help="file name prefix, e.g. 'dbpedia_'")
    sp.set_defaults(func=cmd_split)

    sp = add("train", "Train an embedding model and write a UKE1 checkpoint.")
    sp.add_argument("--graph", required=True, help="training graph")
    sp.add_argument("--kind", default="conex", choices=["distmult", "complex", "qmult", "conex"])
    sp.add_argument("--dim", type=int, default=32, help="real parameters per embedding (default 32)")
    sp.add_argument("--channels", type=int, default=8, help="ConEx convolution channels (default 8)")
    sp.add_argument("--kernel", type=int, default=3, help="ConEx kernel size, odd (default 3)")
    sp.add_argument("--init-scale", type=float, default=0.1, help="uniform init half-width (default 0.1)")
    sp.add_argument("--qmult-normalize", action="store_true", help="normalize QMult relation quaternions")
    sp.add_argument("--epochs", type=int, default=100)
    sp.add_argument("--batch-size", type=int, default=1024)
    sp.add_argument("--lr", type=float, default=0.05, help="learning rate (default 0.05)")
    sp.add_argument("--negatives", type=int, default=10, help="negatives per positive (default 10)")
    sp.add_argument("--optimizer", default="adam", choices=["adam", "sgd"])
    sp.add_argument("--l2", type=float, default=0.0, help="L2 weight (default 0, off)")
    sp.add_argument("--workers", type=int, default=1, help=">1 enables non-deterministic lock-free SGD")
    sp.add_argument("--checkpoint-every", type=int, default=0, help="also save every N epochs (0: only at the end)")
    sp.add_argument("--seed", type=int, help="RNG seed for init and training")
    sp.add_argument("--out", required=True, help="checkpoint path, e.g. model.uke")
    sp.set_defaults(func=cmd_train)

    sp = add("eval", "Link-prediction MRR and Hits@k of a checkpoint on a test graph.")
    sp.add_argument("--model", required=True, help="UKE1 checkpoint (dictionaries are read from its sidecar TSVs)")
    sp.add_argument("--test", required=True, help="test graph")
    sp.add_argument("--train", help="training graph; only needed for --filtered")
    sp.add_argument("--metrics", default="mrr,hits", help="comma list of mrr,hits (default both)")
    sp.add_argument("--filtered", action="store_true", help="remove other known-true candidates")
    sp.add_argument("--label", default="", help="row label in the printed table")
    sp.add_argument("--out", help="write the report as JSON")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("serve", help="Serve entity vectors over HTTP.", description="Serve entity vectors over HTTP.")
    sp.add_argument("--data", help="UKE1 checkpoint (env UKGE_DATA_PATH)")
    sp.add_argument("--dataset", help="dataset name reported by the API (default: checkpoint file stem)")
    sp.add_argument("--bind", help="host:port (env UKGE_BIND_ADDR, default 127.0.0.1:8000)")
    sp.add_argument("--admin-token", help="bearer token for /admin/v1/ingest (env UKGE_ADMIN_TOKEN)")
    sp.add_argument("--max-batch", type=int, help="max IRIs per get_embeddings call (env UKGE_MAX_BATCH, default 1000)")
    sp.set_defaults(func=cmd_serve, manifest=None)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    start = time.perf_counter()
    try:
        result = args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"ukge: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ValueError, *DATA_ERRORS) as exc:
        print(f"ukge: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    if result is not None:
        config, inputs, outputs, seeds, mpath = result
        RunManifest(args.command, config, inputs, outputs, seeds, duration_s=time.perf_counter() - start).write(mpath)
    return 0


if __name__ == "__main__":
    sys.exit(main())
