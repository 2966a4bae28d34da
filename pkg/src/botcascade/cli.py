"""``botcascade`` command line: one subcommand per pipeline step.

Exit codes: 0 success, 1 usage error, 2 data or model error.  Every command
that writes an output also writes ``<out>.config.json`` with the resolved
options and seed.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from typing import Dict, List, Optional

import numpy as np

from . import __version__
from .config import load_config, resolve_seed, section

logger = logging.getLogger("botcascade")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _open_out(path: str):
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    return open(path, "w", encoding="utf-8", newline="")


def _sidecar(out_path: str, command: str, seed: Optional[int], options: dict, config: Optional[dict] = None) -> None:
    doc = {"command": command, "seed": seed, "options": options, "config": config or {}, "version": __version__}
    with _open_out(out_path + ".config.json") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def _options(args, *names) -> dict:
    return {n: getattr(args, n) for n in names}


def _require(path: Optional[str], what: str) -> str:
    if path is None or not os.path.exists(path):
        raise FileNotFoundError(f"{what} not found: {path}")
    return path


def _read_hits(path: str, fmt: str):
    from .ingest import parse_hits
    with open(_require(path, "hit file"), "rb") as fh:
        result = parse_hits(fh, format=fmt)
    if result.skipped:
        logger.warning("%s: skipped %d malformed line(s)", path, result.skipped)
    return result.hits


def _read_sessions(path: str):
    from .ingest import read_sessions
    with open(_require(path, "session file"), encoding="utf-8") as fh:
        return read_sessions(fh)


def _read_truth(path: str) -> Dict[str, str]:
    from .simulate import read_truth
    with open(_require(path, "truth table"), encoding="utf-8") as fh:
        return read_truth(fh)


def _labeling(path: Optional[str]):
    from .groundtruth import LabelingConfig
    doc = load_config(_require(path, "config file") if path else None)
    base = os.path.dirname(os.path.abspath(path)) if path else None
    return LabelingConfig.from_mapping(section(doc, "labeling"), base_dir=base)


# -- commands -------------------------------------------------------------------

def cmd_simulate(args) -> int:
    from .ingest import write_hits
    from .simulate import CorpusSpec, generate_corpus, write_truth
    doc = section(load_config(_require(args.spec, "corpus spec")), "simulate")
    seed = resolve_seed(args.seed, doc.get("seed"))
    doc["seed"] = seed
    if args.sessions is not None:
        doc["n_sessions"] = args.sessions
    spec = CorpusSpec.from_mapping(doc)
    hits, truth = generate_corpus(spec)
    with _open_out(args.out) as fh:
        write_hits(hits, fh, format=args.format)
    if args.truth:
        with _open_out(args.truth) as fh:
            write_truth(truth, fh)
    if args.labeling:
        from .config import dump_table
        from .simulate import default_labeling_mapping
        with _open_out(args.labeling) as fh:
            fh.write(dump_table("labeling", default_labeling_mapping()))
    if args.titles:
        import csv
        site = spec.sitemap
        with _open_out(args.titles) as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["pagename", "title"])
            writer.writerows([page, site.title(page)] for page, _ in site.pages)
    logger.info("simulated %d sessions, %d hits", len(truth), len(hits))
    _sidecar(args.out, "simulate", seed, _options(args, "spec", "out", "truth", "titles", "labeling", "format"),
             spec.to_mapping())
    return 0


def cmd_ingest(args) -> int:
    from .ingest import sessionize, write_sessions
    hits = _read_hits(args.input, args.format)
    sessions = sessionize(hits, idle_timeout=args.idle_timeout)
    with _open_out(args.out) as fh:
        write_sessions(sessions, fh)
    logger.info("%d hits -> %d sessions", len(hits), len(sessions))
    _sidecar(args.out, "ingest", None, _options(args, "input", "format", "out", "idle_timeout"))
    return 0


def cmd_label(args) -> int:
    from .groundtruth import label_sessions
    from .ingest import write_sessions
    cfg = _labeling(args.config)
    sessions = _read_sessions(args.input)
    labeled, report = label_sessions(sessions, cfg)
    with _open_out(args.out) as fh:
        write_sessions(labeled, fh)
    if args.report:
        with _open_out(args.report) as fh:
            json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    logger.info("labels after heuristics: %s", report.enhanced.to_dict())
    _sidecar(args.out, "label", None, _options(args, "input", "config", "out", "report"), cfg.to_mapping())
    return 0


def cmd_train_sgan(args) -> int:
    from .sgan import SganConfig, build_sgan, train_sgan
    from .workflow import sgan_training_data
    doc = section(load_config(_require(args.config, "config file") if args.config else None), "sgan")
    doc["seed"] = resolve_seed(args.seed, doc.get("seed"))
    if args.epochs is not None:
        doc["epochs"] = args.epochs
    cfg = SganConfig.from_mapping(doc)
    sessions = _read_sessions(args.input)
    encoder, labeled, unlabeled = sgan_training_data(sessions)
    model = build_sgan(cfg, encoder.total_width, encoder=encoder)
    train_sgan(model, labeled, unlabeled)
    model.save(args.out)
    logger.info("sgan trained on %d labeled / %d unlabeled hits; final L_C=%.4f",
                len(labeled), len(unlabeled), model.history.classifier_loss[-1] if cfg.epochs else float("nan"))
    from dataclasses import asdict
    _sidecar(args.out, "train-sgan", cfg.seed, _options(args, "input", "config", "out"), asdict(cfg))
    return 0


def _read_titles(path: Optional[str]) -> Dict[str, str]:
    if not path:
        return {}
    import csv
    with open(_require(path, "titles file"), encoding="utf-8", newline="") as fh:
        return {row["pagename"]: row["title"] for row in csv.DictReader(fh)}


def cmd_graphs(args) -> int:
    from .wtgraph import build_graph, compute_metrics, metrics_row, write_graphs, write_metrics_csv
    from .workflow import dgcnn_training_graphs
    sessions = _read_sessions(args.input)
    if args.prefixes:
        graphs = dgcnn_training_graphs(sessions, prefixes=True)
    else:
        graphs = [build_graph(s) for s in sessions]
    with _open_out(args.out) as fh:
        write_graphs(graphs, fh)
    if args.metrics:
        titles = _read_titles(args.titles)
        full = [build_graph(s) for s in sessions]
        with _open_out(args.metrics) as fh:
            write_metrics_csv((metrics_row(g, compute_metrics(g, titles)) for g in full), fh)
    logger.info("wrote %d graphs", len(graphs))
    _sidecar(args.out, "graphs", None, _options(args, "input", "out", "metrics", "titles", "prefixes"))
    return 0


def _read_graph_file(path: str):
    from .wtgraph import read_graphs
    with open(_require(path, "graph file"), encoding="utf-8") as fh:
        return read_graphs(fh)


def cmd_train_dgcnn(args) -> int:
    from dataclasses import asdict
    from .dgcnn import DgcnnConfig, build_dgcnn, fit_node_encoder, train_dgcnn
    doc = section(load_config(_require(args.config, "config file") if args.config else None), "dgcnn")
    doc["seed"] = resolve_seed(args.seed, doc.get("seed"))
    if args.epochs is not None:
        doc["epochs"] = args.epochs
    cfg = DgcnnConfig.from_mapping(doc)
    graphs = _read_graph_file(args.input)
    if args.truth:
        truth = _read_truth(args.truth)
        for g in graphs:
            g.label = truth.get(g.session_id, "unknown")
    train = [g for g in graphs if g.label in ("bot", "human")]
    model = build_dgcnn(cfg, fit_node_encoder(graphs))
    train_dgcnn(model, train)
    model.save(args.out)
    logger.info("dgcnn trained on %d graphs", len(train))
    _sidecar(args.out, "train-dgcnn", cfg.seed, _options(args, "input", "config", "out", "truth"), asdict(cfg))
    return 0


def _load_models(args):
    from .dgcnn import DgcnnModel
    from .sgan import SganModel
    try:
        sgan = SganModel.load(_require(args.sgan, "SGAN model"))
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"cannot load SGAN model {args.sgan}: {exc}") from exc
    try:
        dg = DgcnnModel.load(_require(args.dgcnn, "DGCNN model"))
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"cannot load DGCNN model {args.dgcnn}: {exc}") from exc
    return sgan, dg


def cmd_detect(args) -> int:
    from .pipeline import PipelineConfig, run_stream, write_verdicts
    sgan, dg = _load_models(args)
    doc = load_config(_require(args.config, "config file") if args.config else None)
    detect_doc = section(doc, "detect") if doc else {}
    base = os.path.dirname(os.path.abspath(args.config)) if args.config else None
    from .groundtruth import LabelingConfig
    labeling = LabelingConfig.from_mapping(section(doc, "labeling"), base_dir=base)
    threshold = args.threshold if args.threshold is not None else detect_doc.get("lambda", 0.9)
    max_hits = args.max_session_hits if args.max_session_hits is not None else detect_doc.get("max_session_hits", 200)
    cfg = PipelineConfig(sgan=sgan, dgcnn=dg, labeling=labeling, threshold=float(threshold),
                         max_session_hits=int(max_hits), dgcnn_stride=int(detect_doc.get("dgcnn_stride", 1)))
    hits = _read_hits(args.input, args.format)
    result = run_stream(hits, cfg, jobs=args.jobs)
    with _open_out(args.out) as fh:
        write_verdicts(result.verdicts, fh)
    logger.info("verdicts by stage: %s; undecided: %d", result.stage_counts, result.undecided)
    _sidecar(args.out, "detect", None, _options(args, "input", "sgan", "dgcnn", "out", "config", "jobs"),
             {"lambda": cfg.threshold, "max_session_hits": cfg.max_session_hits,
              "dgcnn_stride": cfg.dgcnn_stride, "labeling": labeling.to_mapping()})
    return 0


def cmd_evaluate(args) -> int:
    from .analysis import score
    from .pipeline import read_verdicts, session_scores, stage_counts
    with open(_require(args.verdicts, "verdict file"), encoding="utf-8") as fh:
        verdicts = [v for v in read_verdicts(fh) if not v.anomaly]
    truth = _read_truth(args.truth)
    scores = session_scores(verdicts)
    report = score(scores.items(), truth, threshold=args.threshold)
    doc = {"sessions": len(scores), "threshold": args.threshold, "session_metrics": report.to_dict(),
           "stage_counts": stage_counts(verdicts)}
    with _open_out(args.out) as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    logger.info("session AUROC %s, F1 %s", report.auroc, report.f1)
    _sidecar(args.out, "evaluate", None, _options(args, "verdicts", "truth", "out", "threshold"))
    return 0


def cmd_importance(args) -> int:
    from .analysis import permutation_importance, write_importance_csv
    from .sgan import SganModel
    model = SganModel.load(_require(args.model, "SGAN model"))
    if model.encoder is None:
        raise ValueError(f"{args.model} has no bound encoder")
    seed = resolve_seed(args.seed)
    hits = [h for s in _read_sessions(args.data) for h in s.hits if h.label in ("bot", "human")]
    if args.sample and len(hits) > args.sample:
        idx = np.sort(np.random.default_rng(seed).choice(len(hits), args.sample, replace=False))
        hits = [hits[i] for i in idx]
    x = model.encoder.encode_many(hits)
    y = np.array([1.0 if h.label == "bot" else 0.0 for h in hits])
    names = model.encoder.feature_names
    rows = {s: permutation_importance(model.p_bot, x, y, k=args.k, scoring=s, seed=seed, feature_names=names)
            for s in ("r2", "negative_mse")}
    with _open_out(args.out) as fh:
        write_importance_csv(rows["r2"], rows["negative_mse"], fh)
    _sidecar(args.out, "importance", seed, _options(args, "model", "data", "k", "out", "sample"))
    return 0


def cmd_size_study(args) -> int:
    from .analysis import study_graphs, write_size_csv
    from .dgcnn import DgcnnModel
    model = DgcnnModel.load(_require(args.model, "DGCNN model"))
    graphs = _read_graph_file(args.graphs)
    truth = _read_truth(args.truth) if args.truth else {g.session_id: g.label for g in graphs}
    rows = study_graphs(model, graphs, truth, max_nodes=args.max_nodes)
    with _open_out(args.out) as fh:
        write_size_csv(rows, fh)
    _sidecar(args.out, "size-study", None, _options(args, "model", "graphs", "truth", "out", "max_nodes"))
    return 0


# -- parser ------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help="random seed (default: config file, then $BOTRACLE_SEED, then 0)")
    common.add_argument("--jobs", type=int, default=1, help="maximum worker processes")
    common.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    parser = _Parser(prog="botcascade", description="Multi-stage web bot detection.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("simulate", parents=[common], help="generate a synthetic hit stream and truth table")
    p.add_argument("--spec", required=True, help="corpus spec (TOML)")
    p.add_argument("--out", required=True)
    p.add_argument("--truth")
    p.add_argument("--titles", help="also write pagename,title CSV for the site")
    p.add_argument("--labeling", help="also write a labeling TOML matching the simulated address plan")
    p.add_argument("--sessions", type=int, help="override n_sessions")
    p.add_argument("--format", choices=["jsonl", "csv"], default="jsonl")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("ingest", parents=[common], help="parse hits and group them into sessions")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--format", choices=["jsonl", "csv"], default="jsonl")
    p.add_argument("--out", required=True)
    p.add_argument("--idle-timeout", type=float, default=1800.0, help="seconds of inactivity ending a session")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("label", parents=[common], help="assumption labels plus bot heuristics")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("train-sgan", parents=[common], help="train the per-hit classifier")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int)
    p.set_defaults(func=cmd_train_sgan)

    p = sub.add_parser("graphs", parents=[common], help="build WT graphs and their metrics")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--metrics")
    p.add_argument("--titles", help="pagename,title CSV used for session topics")
    p.add_argument("--prefixes", action="store_true",
                   help="emit the graph after every hit of each labeled session (graph-classifier training set)")
    p.set_defaults(func=cmd_graphs)

    p = sub.add_parser("train-dgcnn", parents=[common], help="train the graph classifier")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--truth", help="take graph labels from this truth table instead")
    p.add_argument("--epochs", type=int)
    p.set_defaults(func=cmd_train_dgcnn)

    p = sub.add_parser("detect", parents=[common], help="run the cascade over a hit stream")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--format", choices=["jsonl", "csv"], default="jsonl")
    p.add_argument("--sgan", required=True)
    p.add_argument("--dgcnn", required=True)
    p.add_argument("--lambda", dest="threshold", type=float, help="confidence threshold (default 0.9)")
    p.add_argument("--max-session-hits", type=int)
    p.add_argument("--config", help="TOML with [labeling] and optional [detect] tables")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("evaluate", parents=[common], help="session-level metrics against a truth table")
    p.add_argument("--verdicts", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("importance", parents=[common], help="permutation feature importance of the SGAN")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="labeled sessions (JSONL)")
    p.add_argument("--k", type=int, default=50)
    p.add_argument("--sample", type=int, help="score on at most this many labeled hits")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_importance)

    p = sub.add_parser("size-study", parents=[common], help="graph-classifier metrics by graph size")
    p.add_argument("--model", required=True)
    p.add_argument("--graphs", required=True)
    p.add_argument("--truth")
    p.add_argument("--max-nodes", type=int, default=10)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_size_study)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=getattr(logging, args.log_level), stream=sys.stderr,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except (OSError, ValueError, KeyError, FloatingPointError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"botcascade {args.command}: error: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
