"""Command-line entry point: ``ontokgc <command> [options]``.

Exit status is 0 on success, 1 on usage or configuration errors and 2 on
data or validation errors.  Every run writes a JSON manifest (config hash,
seeds, SHA-256 of inputs and outputs) next to its main output, or to
``--manifest``.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .config import Manifest, RunConfig
from .errors import ConfigError, OntoKGCError
from .kg import Split, dump_labeled, labeled_split, load_graph, load_labeled, read_jsonl


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _err(msg):
    print(msg, file=sys.stderr)


# -- shared loading -----------------------------------------------------------------


def _config(args, man=None) -> RunConfig:
    cfg = RunConfig.load(args.config)
    if man is not None:
        man.data["config"] = str(cfg.path)
        man.data["config_hash"] = cfg.hash
        man.input(cfg.path)
    return cfg


def _graph(cfg: RunConfig, man: Manifest):
    paths = {k: cfg.data_path(k) for k in ("train", "valid", "test", "descriptions")}
    if paths["train"] is None:
        raise ConfigError("config has no data.train path")
    for p in paths.values():
        man.input(p)
    return load_graph(paths["train"], paths["valid"], paths["test"], paths["descriptions"])


def _ontology(cfg: RunConfig, graph, man: Manifest, required=False):
    from .ontology import Ontology, parse_ontology

    path = cfg.ontology_path
    if path is None:
        if required:
            raise ConfigError("config has no ontology path")
        return Ontology([])
    man.input(path)
    onto, report = parse_ontology(path, graph)
    for lineno, pred in report.unknown_predicates:
        _err(f"warning: {path}:{lineno}: unsupported predicate {pred}")
    if report.unresolved:
        _err(f"warning: {path}: {len(report.unresolved)} axiom symbol(s) not in the graph")
    return onto


def _labeled(cfg: RunConfig, graph, split: str, man: Manifest):
    path = cfg.labeled_path(split)
    if path is not None:
        man.input(path)
        return load_labeled(path, graph)
    neg = cfg.negatives
    seed = int(neg[f"{split}_seed"])
    man.seed(f"negatives_{split}", seed)
    return labeled_split(graph, Split(split), neg["ratio"], neg["strategy"], seed)


def _table(path, graph, man):
    from .kge.model import check_table_matches, load_table

    if path is None:
        return None
    man.input(path)
    table = load_table(path)
    check_table_matches(table, graph)
    return table


def _thresholds(path, graph, man):
    from .kge.thresholds import ThresholdTable

    if path is None:
        return None
    man.input(path)
    rid = {s: i for i, s in enumerate(graph.relations.symbols)}
    return ThresholdTable.from_json(Path(path).read_text(encoding="utf-8"), rid)


def _templates(cfg, man):
    from .verbalizer import DEFAULT_TEMPLATES, load_templates

    path = cfg.templates_path
    if path is None:
        return DEFAULT_TEMPLATES
    man.input(path)
    return load_templates(path)


def _endpoint(cfg):
    from .llm import EndpointConfig

    sec = cfg.section("endpoint")
    if not sec:
        raise ConfigError("config has no endpoint section")
    if sec.get("cache_dir"):
        sec["cache_dir"] = str(cfg.resolve(sec["cache_dir"]))
    return EndpointConfig.from_dict(sec)


def _triples_from_file(path, graph):
    """Symbol triples from JSON lines (h, r, t) or a three-column TSV."""
    path = Path(path)
    if path.suffix == ".jsonl":
        return load_labeled(path, graph)
    from .kg import KnowledgeGraph, LabeledTriple, load_triples

    tmp = KnowledgeGraph()
    load_triples(path, tmp)
    out = []
    for t in tmp.triples():
        h, r, tl = tmp.to_symbols(t)
        try:
            out.append(LabeledTriple(graph.from_symbols(h, r, tl), None))
        except KeyError as exc:
            raise OntoKGCError(f"{path}: {exc.args[0]}") from None
    return out


# -- commands -----------------------------------------------------------------------


def cmd_ingest(args, man):
    cfg = _config(args, man)
    graph = _graph(cfg, man)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stats = graph.stats()
    (out / "stats.json").write_text(json.dumps(stats, indent=2) + "\n", encoding="utf-8")
    man.output(out / "stats.json")
    for split in ("train", "valid", "test"):
        if graph.triples(Split(split)):
            p = out / f"labeled_{split}.jsonl"
            dump_labeled(p, graph, _labeled(cfg, graph, split, man))
            man.output(p)
    for k, v in stats.items():
        print(f"{k:>22}: {v}")
    return out / "manifest.json"


def cmd_mine(args, man):
    from .extractor import (
        mine_compositions,
        mine_domain_range,
        mine_equivalence_disjointness,
        parse_llm_axioms,
        write_candidates,
    )

    cfg = _config(args, man)
    graph = _graph(cfg, man)
    onto = _ontology(cfg, graph, man)
    cands = []
    cands += mine_domain_range(graph, onto, args.theta)
    cands += mine_compositions(graph, args.min_support, args.min_confidence)
    cands += mine_equivalence_disjointness(graph, args.high, 0.0, args.min_support, onto)
    texts = []
    if args.llm_output:
        man.input(args.llm_output)
        texts.append(Path(args.llm_output).read_text(encoding="utf-8"))
    if args.generate:
        from .llm import generate_ontology_text

        from .verbalizer import resource_path

        template = args.template or resource_path("ontology_prompt.txt")
        man.input(template)
        sample = "\n".join("\t".join(graph.to_symbols(t)) for t in graph.triples()[: args.sample])
        comp = generate_ontology_text(_endpoint(cfg), sample, Path(template).read_text(encoding="utf-8"))
        texts.append(comp.text)
    for text in texts:
        found, report = parse_llm_axioms(text)
        for lineno, msg in report.diagnostics:
            _err(f"warning: model output line {lineno}: {msg}")
        cands += found
    write_candidates(cands, args.out)
    man.output(args.out)
    print(f"{len(cands)} candidate axioms written to {args.out}")
    return args.out


def cmd_review_merge(args, man):
    from .extractor import read_candidates, read_review, review_merge
    from .ontology import serialize_ontology

    man.input(args.candidates)
    cands = read_candidates(args.candidates)
    decisions = []
    if args.review:
        man.input(args.review)
        decisions = read_review(args.review)
    onto = review_merge(cands, decisions, args.default)
    Path(args.out).write_text(serialize_ontology(onto), encoding="utf-8")
    man.output(args.out)
    print(f"{len(onto)} axioms kept of {len(cands)} candidates")
    return args.out


def cmd_materialize(args, man):
    from .reasoner import derive

    cfg = _config(args, man)
    graph = _graph(cfg, man)
    onto = _ontology(cfg, graph, man, required=True)
    records = derive(graph, onto, args.max_rounds)
    out = Path(args.out)
    out.write_text("".join("\t".join(rec.triple) + "\n" for rec in records), encoding="utf-8")
    prov = out.with_name(out.name + ".provenance.jsonl")
    with prov.open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps({"triple": list(rec.triple), "axiom": rec.axiom.line(),
                                 "premises": [list(p) for p in rec.premises]}) + "\n")
    man.output(out)
    man.output(prov)
    print(f"{len(records)} inferred triples")
    return out


def cmd_train_kge(args, man):
    from .kge.model import TrainConfig, save_table, train

    cfg = _config(args, man)
    graph = _graph(cfg, man)
    kc = cfg.section("kge")
    for key in ("epochs", "seed", "scorer", "dim"):
        if getattr(args, key) is not None:
            kc[key] = getattr(args, key)
    config = TrainConfig.from_dict(kc)
    man.seed("kge", config.seed)
    man.data["kge_config"] = asdict(config)
    backend = None if args.backend == "auto" else args.backend

    def log(epoch, loss):
        if args.verbose and (epoch % 50 == 0 or epoch == config.epochs - 1):
            _err(f"epoch {epoch:5d}  loss {loss:.6f}")

    res = train(graph, config, backend=backend, log=log)
    save_table(res.table, args.out, res.loss_trace)
    man.output(args.out)
    print(f"trained {config.scorer} d={config.dim} for {config.epochs} epochs; "
          f"loss {res.loss_trace[0]:.4f} -> {res.loss_trace[-1]:.4f}")
    return args.out


def cmd_tune(args, man):
    from .kge.thresholds import tune_thresholds

    cfg = _config(args, man)
    graph = _graph(cfg, man)
    table = _table(args.embeddings, graph, man)
    thr = tune_thresholds(table, _labeled(cfg, graph, "valid", man))
    thr.save(args.out, graph.relations.symbols)
    man.output(args.out)
    print(f"global threshold {thr.global_threshold:.6f}; {len(thr.per_relation)} relation thresholds")
    return args.out


def cmd_train_fusion(args, man):
    from .fusion import FusionConfig, save_fusion, train_fusion
    from .reasoner import Reasoner

    cfg = _config(args, man)
    graph = _graph(cfg, man)
    table = _table(args.embeddings, graph, man)
    thr = _thresholds(args.thresholds, graph, man)
    onto = _ontology(cfg, graph, man)
    fc = cfg.section("fusion")
    if args.seed is not None:
        fc["seed"] = args.seed
    try:
        config = FusionConfig(**fc)
    except TypeError as exc:
        raise ConfigError(f"fusion section: {exc}") from None
    man.seed("fusion", config.seed)
    fit = _labeled(cfg, graph, "valid", man)
    monitor = _labeled(cfg, graph, "train", man)
    reasoner = Reasoner(graph, onto) if not args.no_ontology else None
    res = train_fusion(graph, table, reasoner, fit, monitor, config, thresholds=thr,
                       use_ontology=not args.no_ontology, use_structure=not args.no_structure)
    save_fusion(res, args.out)
    trace = Path(str(args.out) + ".trace.json")
    trace.write_text(json.dumps(res.trace, indent=1) + "\n", encoding="utf-8")
    man.output(args.out)
    man.output(trace)
    last = res.trace[-1]
    print(f"fusion: train loss {last['train_loss']:.4f}, monitor accuracy {last['valid_accuracy']:.4f}")
    return args.out


def _query_triples(args, cfg, graph, man):
    if getattr(args, "triple", None):
        from .kg import LabeledTriple

        return [LabeledTriple(graph.from_symbols(*args.triple), None)]
    if args.input:
        man.input(args.input)
        return _triples_from_file(args.input, graph)
    return _labeled(cfg, graph, "test", man)


def cmd_verbalize(args, man):
    from .verbalizer import DEFAULT_INSTRUCTION, build_prompt, select_relevant

    cfg = _config(args, man)
    graph = _graph(cfg, man)
    onto = _ontology(cfg, graph, man)
    templates = _templates(cfg, man)
    instruction = cfg.raw.get("instruction") or DEFAULT_INSTRUCTION
    lines = []
    for lt in _query_triples(args, cfg, graph, man):
        sym = graph.to_symbols(lt.triple)
        axioms = select_relevant(onto, onto.closure, sym, args.max_axioms)
        lines.append(build_prompt(instruction, sym, graph.descriptions, axioms, templates).to_json())
    text = "".join(line + "\n" for line in lines)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        man.output(args.out)
    else:
        sys.stdout.write(text)
    return args.out


def cmd_classify(args, man):
    cfg = _config(args, man)
    graph = _graph(cfg, man)
    queries = _query_triples(args, cfg, graph, man)
    triples = [lt.triple for lt in queries]
    extra = [{} for _ in triples]
    explanations = None
    if args.backend == "kge":
        from .kge.thresholds import classify_many

        table = _table(args.embeddings, graph, man)
        thr = _thresholds(args.thresholds, graph, man)
        if table is None or thr is None:
            raise ConfigError("kge backend needs --embeddings and --thresholds (run train-kge and tune-thresholds first)")
        labels = [bool(x) for x in classify_many(table, thr, triples)]
        for e, s in zip(extra, table.scores(np.asarray([tuple(t) for t in triples]))):
            e["score"] = float(s)
    elif args.backend == "fused":
        from .fusion import classify_fused, load_fusion
        from .reasoner import Reasoner

        table = _table(args.embeddings, graph, man)
        thr = _thresholds(args.thresholds, graph, man)
        if table is None or thr is None or args.adapter is None:
            raise ConfigError("fused backend needs --embeddings, --thresholds and --adapter (run train-fusion first)")
        man.input(args.adapter)
        res = load_fusion(args.adapter)
        reasoner = Reasoner(graph, _ontology(cfg, graph, man))
        labels, explanations = [], []
        for t, e in zip(triples, extra):
            pred = classify_fused(res.weights, res.decoder, table, reasoner, None, thr, t)
            labels.append(pred.label)
            e["probability"] = pred.probability
            explanations.append(pred.explanation)
    else:
        from .llm import classify_many_with_llm
        from .verbalizer import DEFAULT_INSTRUCTION, build_prompt, select_relevant

        onto = _ontology(cfg, graph, man)
        templates = _templates(cfg, man)
        instruction = cfg.raw.get("instruction") or DEFAULT_INSTRUCTION
        bundles = []
        for t in triples:
            sym = graph.to_symbols(t)
            bundles.append(build_prompt(instruction, sym, graph.descriptions,
                                        select_relevant(onto, onto.closure, sym), templates))
        answers = classify_many_with_llm(_endpoint(cfg), bundles)
        labels = [a.label.as_bool() for a in answers]
        for e, a in zip(extra, answers):
            e.update(raw=a.raw, cache_hit=a.cache_hit)
    dump_labeled(args.out, graph, list(zip(triples, labels)), extra)
    man.output(args.out)
    if explanations is not None and args.explain:
        Path(args.explain).write_text("".join(json.dumps(x) + "\n" for x in explanations), encoding="utf-8")
        man.output(args.explain)
    n_abstain = sum(label is None for label in labels)
    print(f"{len(labels)} triples classified with {args.backend}"
          + (f" ({n_abstain} unparseable)" if n_abstain else ""))
    return args.out


def cmd_eval(args, man):
    from .metrics import evaluate, format_table, to_csv

    man.input(args.pred)
    man.input(args.gold)
    pred = read_jsonl(args.pred)
    gold = read_jsonl(args.gold)
    if len(pred) != len(gold):
        raise OntoKGCError(f"{len(pred)} predictions for {len(gold)} gold records")
    for i, (p, g) in enumerate(zip(pred, gold), 1):
        if (p["h"], p["r"], p["t"]) != (g["h"], g["r"], g["t"]):
            raise OntoKGCError(f"record {i}: prediction and gold triples differ")
        if g.get("label") is None:
            raise OntoKGCError(f"gold record {i} has no label")
    m = evaluate([p.get("label") for p in pred], [g["label"] for g in gold])
    print(format_table([(args.name, m)]))
    print(f"TP={m.tp} FP={m.fp} FN={m.fn} TN={m.tn} abstained={m.abstained}")
    if args.csv:
        Path(args.csv).write_text(to_csv([{"name": args.name, **m.as_dict()}]), encoding="utf-8")
        man.output(args.csv)
    return args.csv or Path(str(args.pred) + ".eval")


def cmd_ablate(args, man):
    from .ablation import AblationSpec, Artifacts, fraction_sweep, run_ablation, standard_specs
    from .fusion import FusionConfig
    from .metrics import pct, to_csv

    cfg = _config(args, man)
    graph = _graph(cfg, man)
    onto = _ontology(cfg, graph, man)
    if args.spec:
        man.input(args.spec)
        raw = json.loads(Path(args.spec).read_text(encoding="utf-8"))
        specs = [AblationSpec.from_dict(d) for d in (raw if isinstance(raw, list) else [raw])]
    else:
        specs = standard_specs(args.backend)
    fc = cfg.section("fusion")
    fc.pop("seed", None)
    art = Artifacts(
        table=_table(args.embeddings, graph, man),
        thresholds=_thresholds(args.thresholds, graph, man),
        fusion_train=_labeled(cfg, graph, "valid", man),
        fusion_valid=_labeled(cfg, graph, "train", man),
        test=_labeled(cfg, graph, "test", man),
        fusion_config=FusionConfig(**fc),
        descriptions=graph.descriptions,
        templates=_templates(cfg, man),
        instruction=cfg.raw.get("instruction"),
    )
    if any(s.backend == "llm" for s in specs):
        art.endpoint = _endpoint(cfg)
    seeds = args.seeds
    man.seed("ablation", seeds)
    if args.sweep:
        fracs = [float(x) for x in args.sweep.split(",")]
        rows = fraction_sweep(graph, onto, fracs, seeds, art, args.backend)
        print(f"{'fraction':>8} {'Acc+O':>7} {'Acc-O':>7} {'F1+O':>7} {'F1-O':>7}")
        for r in rows:
            print(f"{r['fraction']:>8.2f} {pct(r['acc_with']):>7} {pct(r['acc_without']):>7} "
                  f"{pct(r['f1_with']):>7} {pct(r['f1_without']):>7}")
    else:
        rows = [run_ablation(graph, onto, s, seeds, art).record() for s in specs]
        print(f"{'model':<28} {'Acc':>7} {'P':>7} {'F1':>7}")
        for r in rows:
            print(f"{r['name']:<28} {pct(r['accuracy']):>7} {pct(r['precision']):>7} {pct(r['f1']):>7}")
    if args.out:
        Path(args.out).write_text(to_csv(rows), encoding="utf-8")
        man.output(args.out)
    return args.out or Path("ablation")


def cmd_synth(args, man):
    from .synthetic import make_benchmark, write_benchmark

    man.seed("benchmark", args.seed)
    bench = make_benchmark(args.seed, n_per_class=args.n_per_class)
    path = write_benchmark(bench, args.out_dir)
    for p in sorted(Path(args.out_dir).iterdir()):
        if p.name != "manifest.json":
            man.output(p)
    print(f"synthetic benchmark written to {args.out_dir} (config {path})")
    return Path(args.out_dir) / "manifest.json"


# -- parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ontokgc", description="Ontology-enhanced knowledge graph completion toolkit.")
    sub = p.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--manifest", help="manifest path (default: next to the main output)")

    def add(name, func, help_, config=True):
        sp = sub.add_parser(name, help=help_, parents=[common])
        if config:
            sp.add_argument("--config", required=True, help="run config JSON")
        sp.set_defaults(func=func)
        return sp

    sp = add("ingest", cmd_ingest, "load splits, report statistics, write labelled sets")
    sp.add_argument("--out-dir", required=True)

    sp = add("mine-ontology", cmd_mine, "mine candidate axioms from the train split")
    sp.add_argument("--out", required=True)
    sp.add_argument("--theta", type=float, default=0.9, help="domain/range coverage")
    sp.add_argument("--min-support", type=int, default=2)
    sp.add_argument("--min-confidence", type=float, default=0.8)
    sp.add_argument("--high", type=float, default=0.9, help="overlap for equivalence")
    sp.add_argument("--llm-output", help="file with model-generated axioms to parse")
    sp.add_argument("--generate", action="store_true", help="ask the configured endpoint for axioms")
    sp.add_argument("--template", help="prompt template for --generate ({summary} is filled in); defaults to the packaged one")
    sp.add_argument("--sample", type=int, default=50, help="triples shown to the model")

    sp = add("review-merge", cmd_review_merge, "merge reviewed candidates into an ontology", config=False)
    sp.add_argument("--candidates", required=True)
    sp.add_argument("--review")
    sp.add_argument("--default", choices=("accept", "reject"), default="accept")
    sp.add_argument("--out", required=True)

    sp = add("materialize", cmd_materialize, "write entailed triples with provenance")
    sp.add_argument("--out", required=True)
    sp.add_argument("--max-rounds", type=int, default=10)

    sp = add("train-kge", cmd_train_kge, "train structural embeddings")
    sp.add_argument("--out", required=True)
    sp.add_argument("--backend", choices=("auto", "numba", "numpy"), default="auto")
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--dim", type=int)
    sp.add_argument("--scorer", choices=("rotate", "transe"))
    sp.add_argument("-v", "--verbose", action="store_true")

    sp = add("tune-thresholds", cmd_tune, "tune per-relation thresholds on validation")
    sp.add_argument("--embeddings", required=True)
    sp.add_argument("--out", required=True)

    sp = add("train-fusion", cmd_train_fusion, "fit the prefix adapter and decoder")
    sp.add_argument("--embeddings", required=True)
    sp.add_argument("--thresholds", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--no-ontology", action="store_true")
    sp.add_argument("--no-structure", action="store_true")

    sp = add("verbalize", cmd_verbalize, "render prompts for triples")
    sp.add_argument("--triple", nargs=3, metavar=("H", "R", "T"))
    sp.add_argument("--input", help="triples as .jsonl or TSV (default: labelled test set)")
    sp.add_argument("--out")
    sp.add_argument("--max-axioms", type=int)

    sp = add("classify", cmd_classify, "classify triples")
    sp.add_argument("--backend", choices=("kge", "fused", "llm"), default="kge")
    sp.add_argument("--embeddings")
    sp.add_argument("--thresholds")
    sp.add_argument("--adapter")
    sp.add_argument("--triple", nargs=3, metavar=("H", "R", "T"))
    sp.add_argument("--input", help="triples as .jsonl or TSV (default: labelled test set)")
    sp.add_argument("--out", required=True)
    sp.add_argument("--explain", help="explanation records (fused backend)")

    sp = add("eval", cmd_eval, "score predictions against gold labels", config=False)
    sp.add_argument("--pred", required=True)
    sp.add_argument("--gold", required=True)
    sp.add_argument("--csv")
    sp.add_argument("--name", default="model")

    sp = add("ablate", cmd_ablate, "run ablations or an ontology-fraction sweep")
    sp.add_argument("--spec", help="AblationSpec JSON (object or list); default: the four standard runs")
    sp.add_argument("--backend", choices=("kge", "fused", "llm"), default="fused")
    sp.add_argument("--embeddings")
    sp.add_argument("--thresholds")
    sp.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    sp.add_argument("--sweep", help="comma-separated ontology fractions, e.g. 0,0.5,1")
    sp.add_argument("--out", help="CSV report")

    sp = add("synth", cmd_synth, "write a synthetic benchmark with a known ontology", config=False)
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--n-per-class", type=int, default=25)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    man = Manifest(args.command, argv)
    try:
        out = args.func(args, man)
    except ConfigError as exc:
        _err(f"configuration error: {exc}")
        return 1
    except (OntoKGCError, KeyError, ValueError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        _err(f"error: {msg}")
        return 2
    target = Path(args.manifest) if args.manifest else (
        Path(out) if Path(str(out)).name == "manifest.json" else Path(str(out) + ".manifest.json"))
    man.write(target)
    return 0


if __name__ == "__main__":
    sys.exit(main())
