"""Command-line front end: ``patentkg <subcommand> [flags]``.

Every output file ``X`` is written with a sidecar ``X.meta.json`` holding
the effective configuration; passing that sidecar back through
``--config`` reproduces ``X`` byte for byte.

Exit codes: 0 ok, 1 usage error, 2 data/format error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from threadpoolctl import threadpool_limits

from . import __version__
from .corpus import first_context_sentences, load_documents, load_lexicon, write_documents, \
    write_lexicon
from .errors import ConfigError, NumericError, PatentKGError
from .evaluation import (BacktestConfig, SynthConfig, backtest, default_cutoffs,
                         generate_synthetic_corpus)
from .kg import GRAPH_FORMAT_VERSION, build_graph, dumps_graph, export_triples, load_graph
from .linkpred import (LINKS_FORMAT_VERSION, PredictedLinkSet, TrainConfig, dumps_model,
                       load_model, predict_links, train)
from .numcore import CHECKPOINT_VERSION
from .patents import (DEFAULT_CLIQUE_CAP, augment_graph, dumps_candidates,
                      enumerate_candidate_patents, future_patent_sets, validate_patent)

logger = logging.getLogger("patentkg.cli")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


_TRAIN_DEFAULTS = dict(epochs=200, lr=0.01, margin=1.0, batch_size=128, dims=64, seed=0,
                       leaky_slope=0.2, layers=1, heads=1)

DEFAULTS = {
    "synth": dict(out_docs=None, out_lexicon=None, seed=42, communities=5,
                  entities_per_community=20, docs_per_year=80, years=6, entities_per_doc=5,
                  mixing=0.1, start_year=2010),
    "build-kg": dict(docs=None, lexicon=None, cutoff=None, out=None, format=None, tsv=None),
    "train": dict(graph=None, method=None, out=None, docs=None, lexicon=None, **_TRAIN_DEFAULTS),
    "predict-links": dict(graph=None, method=None, model=None, out=None, rho=0.1, zeta=None,
                          top_k=None, candidates="2hop"),
    "predict-patents": dict(graph=None, links=None, out=None, future_graph=None, horizon=None,
                            clique_cap=DEFAULT_CLIQUE_CAP),
    "evaluate": dict(docs=None, lexicon=None, synth_seed=None, communities=5,
                     entities_per_community=20, docs_per_year=80, years=6, entities_per_doc=5,
                     mixing=0.1, start_year=2010, cutoffs=None, methods="CNM,GAT,CGAT",
                     out=None, rho=0.1, zeta=None, candidates="2hop", horizon=None,
                     reference_year=None, clique_cap=DEFAULT_CLIQUE_CAP, baseline_seeds=100,
                     **_TRAIN_DEFAULTS),
}

REQUIRED = {
    "synth": ("out_docs", "out_lexicon"),
    "build-kg": ("docs", "lexicon", "cutoff", "out"),
    "train": ("graph", "method", "out"),
    "predict-links": ("graph", "method", "out"),
    "predict-patents": ("graph", "links", "out"),
    "evaluate": ("out",),
}


def _add(p, flag, type=str, help=None, **kw):
    p.add_argument(flag, type=type, default=argparse.SUPPRESS, help=help, **kw)


def _train_flags(p):
    _add(p, "--epochs", int)
    _add(p, "--lr", float, "SGD learning rate")
    _add(p, "--margin", float, "hinge margin gamma")
    _add(p, "--batch-size", int)
    _add(p, "--dims", int, "embedding and encoder width")
    _add(p, "--seed", int)
    _add(p, "--leaky-slope", float)
    _add(p, "--layers", int)
    _add(p, "--heads", int)


def _synth_flags(p):
    _add(p, "--communities", int)
    _add(p, "--entities-per-community", int)
    _add(p, "--docs-per-year", int)
    _add(p, "--years", int)
    _add(p, "--entities-per-doc", int)
    _add(p, "--mixing", float)
    _add(p, "--start-year", int)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="patentkg", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="store_true", help="print versions and exit")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def common(p):
        p.add_argument("--config", default=None, help="JSON file of flag values (or a sidecar)")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--log-level", default="WARNING")

    p = sub.add_parser("synth", help="generate a synthetic corpus and lexicon")
    common(p)
    _add(p, "--out-docs")
    _add(p, "--out-lexicon")
    _add(p, "--seed", int)
    _synth_flags(p)

    p = sub.add_parser("build-kg", help="corpus + lexicon -> graph file")
    common(p)
    _add(p, "--docs")
    _add(p, "--lexicon")
    _add(p, "--cutoff", int)
    _add(p, "--out")
    _add(p, "--format", choices=("jsonl", "csv"))
    _add(p, "--tsv", help="also export head/relation/tail/year triples")

    p = sub.add_parser("train", help="graph -> model checkpoint")
    common(p)
    _add(p, "--graph")
    _add(p, "--method", str.upper, choices=("TRANSE", "GAT", "CGAT"))
    _add(p, "--out")
    _add(p, "--docs", help="corpus for CGAT context sentences")
    _add(p, "--lexicon")
    _train_flags(p)

    p = sub.add_parser("predict-links", help="graph + model -> link file")
    common(p)
    _add(p, "--graph")
    _add(p, "--method", str.upper, choices=("CNM", "TRANSE", "GAT", "CGAT"))
    _add(p, "--model")
    _add(p, "--out")
    _add(p, "--rho", float)
    _add(p, "--zeta", int)
    _add(p, "--top-k", int)
    _add(p, "--candidates", choices=("2hop", "all"))

    p = sub.add_parser("predict-patents", help="graph + links -> candidate patents")
    common(p)
    _add(p, "--graph")
    _add(p, "--links")
    _add(p, "--out")
    _add(p, "--future-graph", help="later graph whose patents validate the candidates")
    _add(p, "--horizon", int)
    _add(p, "--clique-cap", int)

    p = sub.add_parser("evaluate", help="temporal backtest -> report CSV")
    common(p)
    _add(p, "--docs")
    _add(p, "--lexicon")
    _add(p, "--synth-seed", int, "generate the synthetic corpus with this seed instead of --docs")
    _synth_flags(p)
    _add(p, "--cutoffs", help="comma-separated years; default all but the last corpus year")
    _add(p, "--methods", help="comma-separated subset of CNM,TRANSE,GAT,CGAT")
    _add(p, "--out")
    _add(p, "--rho", float)
    _add(p, "--zeta", int)
    _add(p, "--candidates", choices=("2hop", "all"))
    _add(p, "--horizon", int)
    _add(p, "--reference-year", int)
    _add(p, "--clique-cap", int)
    _add(p, "--baseline-seeds", int)
    _train_flags(p)
    return parser


def _effective_config(command: str, ns: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS[command])
    if ns.config:
        with open(ns.config, encoding="utf-8") as fh:
            loaded = json.load(fh)
        if isinstance(loaded, dict) and "command" in loaded and "config" in loaded:
            if loaded["command"] != command:
                raise ConfigError(f"config file is for {loaded['command']!r}, not {command!r}")
            loaded = loaded["config"]
        loaded = {k.replace("-", "_"): v for k, v in loaded.items()}
        unknown = sorted(set(loaded) - set(cfg))
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        cfg.update(loaded)
    skip = {"command", "config", "threads", "log_level", "version"}
    cfg.update({k: v for k, v in vars(ns).items() if k not in skip})
    missing = [k for k in REQUIRED[command] if cfg.get(k) is None]
    if missing:
        raise ConfigError("missing required option(s): "
                          + ", ".join("--" + k.replace("_", "-") for k in missing))
    return cfg


def _write(path, text: str, command: str, cfg: dict, extra: dict | None = None):
    Path(path).write_text(text, encoding="utf-8")
    _sidecar(path, command, cfg, extra)


def _sidecar(path, command: str, cfg: dict, extra: dict | None = None):
    side = {"command": command, "config": cfg, "versions": _versions()}
    if extra:
        side.update(extra)
    Path(f"{path}.meta.json").write_text(json.dumps(side, sort_keys=True, indent=2) + "\n",
                                         encoding="utf-8")


def _versions() -> dict:
    return {"patentkg": __version__, "graph_format": GRAPH_FORMAT_VERSION,
            "checkpoint_format": CHECKPOINT_VERSION, "links_format": LINKS_FORMAT_VERSION}


def _train_config(cfg: dict) -> TrainConfig:
    return TrainConfig(epochs=cfg["epochs"], learning_rate=cfg["lr"], margin=cfg["margin"],
                       batch_size=cfg["batch_size"], seed=cfg["seed"], dims=cfg["dims"],
                       leaky_slope=cfg["leaky_slope"], layers=cfg["layers"], heads=cfg["heads"])


def _synth_config(cfg: dict, seed: int) -> SynthConfig:
    return SynthConfig(num_communities=cfg["communities"],
                       entities_per_community=cfg["entities_per_community"],
                       docs_per_year=cfg["docs_per_year"], years=cfg["years"],
                       entities_per_doc=cfg["entities_per_doc"], mixing=cfg["mixing"],
                       seed=seed, start_year=cfg["start_year"])


def cmd_synth(cfg):
    docs, lex, _ = generate_synthetic_corpus(_synth_config(cfg, cfg["seed"]))
    write_documents(docs, cfg["out_docs"])
    write_lexicon(lex, cfg["out_lexicon"])
    for path in (cfg["out_docs"], cfg["out_lexicon"]):
        _sidecar(path, "synth", cfg)


def cmd_build_kg(cfg):
    docs = load_documents(cfg["docs"], cfg["format"])
    lex = load_lexicon(cfg["lexicon"])
    kg = build_graph(docs, lex, cfg["cutoff"])
    _write(cfg["out"], dumps_graph(kg), "build-kg", cfg,
           {"summary": {"entities": kg.num_entities, "edges": len(kg.edges),
                        "patents": len(kg.patents)}})
    if cfg["tsv"]:
        export_triples(kg, cfg["tsv"])


def cmd_train(cfg):
    kg = load_graph(cfg["graph"])
    contexts = None
    if cfg["method"] == "CGAT" and cfg["docs"]:
        if not cfg["lexicon"]:
            raise ConfigError("--docs for CGAT contexts also needs --lexicon")
        docs = [d for d in load_documents(cfg["docs"]) if d.year <= kg.cutoff_year]
        contexts = first_context_sentences(docs, load_lexicon(cfg["lexicon"]), kg.entities)
    model = train(cfg["method"], kg, _train_config(cfg), contexts)
    trace = model.loss_trace
    _write(cfg["out"], dumps_model(model), "train", cfg,
           {"loss": {"initial": trace[0] if trace else None,
                     "final": trace[-1] if trace else None}})


def cmd_predict_links(cfg):
    kg = load_graph(cfg["graph"])
    model = None
    if cfg["method"] != "CNM":
        if not cfg["model"]:
            raise ConfigError(f"--model is required for {cfg['method']}")
        model = load_model(cfg["model"])
    links = predict_links(cfg["method"], kg, model, rho=cfg["rho"], candidates=cfg["candidates"],
                          top_k=cfg["top_k"], zeta=cfg["zeta"])
    _write(cfg["out"], links.to_json(), "predict-links", cfg, {"count": len(links)})


def cmd_predict_patents(cfg):
    kg = load_graph(cfg["graph"])
    links = PredictedLinkSet.from_json(Path(cfg["links"]).read_text(encoding="utf-8"), kg)
    aug = augment_graph(kg, links)
    cands = enumerate_candidate_patents(aug, links.method, cfg["clique_cap"])
    valid = None
    extra = {"count": len(cands)}
    if cfg["future_graph"]:
        future = load_graph(cfg["future_graph"])
        until = None if cfg["horizon"] is None else kg.cutoff_year + cfg["horizon"]
        futures = future_patent_sets(future, kg.cutoff_year, until)
        valid = [validate_patent(c, futures) for c in cands]
        extra["valid"] = sum(valid)
    _write(cfg["out"], dumps_candidates(cands, valid), "predict-patents", cfg, extra)


def cmd_evaluate(cfg):
    if cfg["synth_seed"] is not None:
        docs, lex, _ = generate_synthetic_corpus(_synth_config(cfg, cfg["synth_seed"]))
    elif cfg["docs"] and cfg["lexicon"]:
        docs, lex = load_documents(cfg["docs"]), load_lexicon(cfg["lexicon"])
    else:
        raise ConfigError("evaluate needs --docs and --lexicon, or --synth-seed")
    if cfg["cutoffs"]:
        try:
            cutoffs = [int(c) for c in str(cfg["cutoffs"]).split(",") if c.strip()]
        except ValueError:
            raise ConfigError(f"bad --cutoffs {cfg['cutoffs']!r}") from None
    else:
        cutoffs = default_cutoffs(docs)
    methods = [m.strip().upper() for m in str(cfg["methods"]).split(",") if m.strip()]
    bt = BacktestConfig(train=_train_config(cfg), rho=cfg["rho"], zeta=cfg["zeta"],
                        candidates=cfg["candidates"], horizon=cfg["horizon"],
                        reference_year=cfg["reference_year"], clique_cap=cfg["clique_cap"],
                        baseline_seeds=cfg["baseline_seeds"])
    report = backtest(docs, lex, cutoffs, methods, bt)
    _write(cfg["out"], report.to_csv(), "evaluate", cfg,
           {"report": json.loads(report.sidecar())})


COMMANDS = {
    "synth": cmd_synth,
    "build-kg": cmd_build_kg,
    "train": cmd_train,
    "predict-links": cmd_predict_links,
    "predict-patents": cmd_predict_patents,
    "evaluate": cmd_evaluate,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    if ns.version:
        print(" ".join(f"{k}={v}" for k, v in _versions().items()))
        return EXIT_OK
    if not ns.command:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=getattr(logging, str(ns.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = _effective_config(ns.command, ns)
        with threadpool_limits(limits=max(1, ns.threads)):
            COMMANDS[ns.command](cfg)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (PatentKGError, OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        print(f"error: [{ns.command}] {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
