"""Command-line entry point wiring the whole pipeline.

Subcommands: train-disc, train-editor, simplify, evaluate, baseline, toy-run.
Exit codes: 0 success, 1 usage or config error, 2 runtime failure,
3 acceptance failure (toy-run only).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from pathlib import Path

from . import corpus as corpus_mod
from .baselines import FeatureKind, build_frequency_table, threshold_cwi, tune_threshold
from .config import ConfigError, RunConfig, load_config, with_overrides
from .corpus import (
    AnnotatedInstance,
    CorpusError,
    SentenceTokens,
    default_toy_spec,
    generate_toy_corpus,
    load_annotated,
    load_nonparallel,
    load_toy_spec,
    save_annotated,
    save_nonparallel,
    split_dev,
)
from .discriminator import StyleDiscriminator, pretrain_discriminator
from .edit_predictor import EditPredictor, parse_edits, serialize_edits
from .encoder import EncoderError, Vocabulary
from .evaluation import MetricReport, cwi_metrics, ls_metrics, report, sg_metrics
from .filling import ToyMaskedLmFiller, instruction_tokens, simplify_sentence, train_toy_filler
from .llm_oracle import HttpOracleClient, OracleCache, OracleError, mock_oracle
from .training import EditorTrainResult, train_editor
from .utils import TrainingError, set_global_seed


class UsageError(Exception):
    """Bad command-line usage; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _require_file(path: str, what: str) -> Path:
    if not path:
        raise ConfigError(f"{what} is not configured")
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"{what} not found: {p}")
    return p


def _resolve_config(args) -> RunConfig:
    config = load_config(args.config) if args.config else RunConfig()
    overrides = {}
    for key in ("seed", "out_dir", "threshold", "lambda1", "lambda2", "lambda3", "alpha"):
        overrides[key] = getattr(args, key.replace("-", "_"), None)
    return with_overrides(config, **overrides)


def _out_dir(config: RunConfig) -> Path:
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _encoder_config(config: RunConfig, seed_offset: int):
    return dataclasses.replace(config.encoder, seed=config.seed + seed_offset)


def _build_vocab(corpus) -> Vocabulary:
    extra = tuple(t.lower() for t in instruction_tokens())
    return Vocabulary.from_corpus(corpus, extra_words=extra)


def _oracle_client(config: RunConfig, lexicon=None):
    settings = config.oracle
    if settings.mode == "mock":
        if lexicon is None:
            path = _require_file(settings.lexicon_path, "oracle lexicon_path (mock mode)")
            lexicon = {line.strip().lower() for line in path.read_text().splitlines() if line.strip()}
        return mock_oracle(lexicon, flip_rate=settings.flip_rate, seed=config.seed)
    return HttpOracleClient(
        base_url=settings.base_url,
        model=settings.model,
        api_key_env=settings.api_key_env,
        timeout=settings.timeout,
    )


def _oracle_cache(config: RunConfig, out: Path) -> OracleCache:
    path = config.oracle.cache_path or str(out / "oracle_cache.jsonl")
    return OracleCache(path)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_train_disc(config: RunConfig) -> int:
    complex_path = _require_file(config.data.complex_path, "data.complex_path")
    simple_path = _require_file(config.data.simple_path, "data.simple_path")
    out = _out_dir(config)
    set_global_seed(config.seed)
    corpus = load_nonparallel(complex_path, simple_path)
    vocab = _build_vocab(corpus)
    sched = config.discriminator_schedule
    result = pretrain_discriminator(
        corpus,
        _encoder_config(config, seed_offset=1),
        vocab=vocab,
        epochs=sched.epochs,
        batch_size=sched.batch_size,
        learning_rate=sched.learning_rate,
        patience=sched.patience,
        dev_fraction=config.data.dev_fraction,
        seed=config.seed,
    )
    disc = result.discriminator
    disc.save(out / "discriminator.pt")
    digest = disc.freeze_checksum()
    (out / "discriminator.digest").write_text(digest + "\n")
    print(f"discriminator dev accuracy: {result.dev_accuracy:.4f}")
    print(f"checkpoint: {out / 'discriminator.pt'}")
    print(f"digest: {digest}")
    return 0


def cmd_train_editor(config: RunConfig) -> int:
    complex_path = _require_file(config.data.complex_path, "data.complex_path")
    out = _out_dir(config)
    disc_path = _require_file(str(out / "discriminator.pt"), "discriminator checkpoint")
    set_global_seed(config.seed)
    disc = StyleDiscriminator.load(disc_path)
    digest_file = out / "discriminator.digest"
    if digest_file.exists():
        recorded = digest_file.read_text().strip()
        if recorded != disc.freeze_checksum():
            raise TrainingError("discriminator checkpoint does not match its recorded digest")
    sentences = list(corpus_mod._read_sentence_file(complex_path))
    oracle = _oracle_client(config)
    cache = _oracle_cache(config, out)
    predictor = EditPredictor(disc.vocab, _encoder_config(config, seed_offset=2))
    schedule = dataclasses.replace(config.editor_schedule, seed=config.seed)
    result = train_editor(
        predictor, disc, sentences, oracle, cache,
        weights=config.weights,
        schedule=schedule,
        dev_fraction=config.data.dev_fraction,
        decode_threshold=config.threshold,
        retries=config.oracle.retries,
        log_path=out / "editor_train_log.jsonl",
    )
    predictor.save(out / "editor.pt")
    print(f"editor best dev F1 (vs pseudo labels): {result.best_dev_f1:.4f}")
    print(f"checkpoint: {out / 'editor.pt'}")
    return 0


def _read_plain_sentences(path: Path) -> list[SentenceTokens]:
    sentences = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            tokens = corpus_mod.tokenize(line)
            if tokens:
                sentences.append(SentenceTokens(tokens))
    return sentences


def _write_predictions(results, path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for res in results:
            record = {
                "original": res.original.text(),
                "edits": serialize_edits(res.edits),
                "masked": res.masked.text(),
                "mask_positions": list(res.edits.mask_positions()),
                "candidates": [[[w, s] for w, s in cand] for cand in res.candidates],
                "final": res.final.text(),
            }
            fh.write(json.dumps(record) + "\n")


def cmd_simplify(config: RunConfig, args) -> int:
    out = _out_dir(config)
    editor_path = _require_file(args.editor or str(out / "editor.pt"), "editor checkpoint")
    filler_path = _require_file(args.filler or str(out / "filler.pt"), "filler checkpoint")
    if bool(args.input) == bool(args.annotated):
        raise UsageError("pass exactly one of --input or --annotated")
    set_global_seed(config.seed)
    predictor = EditPredictor.load(editor_path)
    filler = ToyMaskedLmFiller.load(filler_path)
    if args.input:
        sentences = _read_plain_sentences(_require_file(args.input, "input file"))
    else:
        instances = load_annotated(_require_file(args.annotated, "annotated file"))
        sentences = [inst.sentence for inst in instances]
    results = [
        simplify_sentence(s, predictor, filler, k=config.filler.top_k, threshold=config.threshold)
        for s in sentences
    ]
    output = Path(args.output) if args.output else out / "predictions.jsonl"
    _write_predictions(results, output)
    print(f"wrote {len(results)} records to {output}")
    return 0


def _evaluate_records(records: list[dict], instances: list[AnnotatedInstance]):
    cwi_preds, cwi_gold = [], []
    sg_preds, sg_gold = [], []
    ls_preds, ls_gold = [], []
    for record, inst in zip(records, instances):
        edits = parse_edits(record["edits"])
        positions = set(edits.mask_positions())
        cwi_preds.append(positions)
        cwi_gold.append({inst.complex_index})
        candidates_by_pos = dict(zip(record["mask_positions"], record["candidates"]))
        gold_cands = candidates_by_pos.get(inst.complex_index, [])
        sg_preds.append([w for w, _ in gold_cands])
        sg_gold.append(set(inst.gold_substitutions))
        final_tokens = record["final"].split()
        ls_preds.append({(pos, final_tokens[pos]) for pos in positions})
        ls_gold.append({inst.complex_index: set(inst.gold_substitutions)})
    return {
        "cwi": cwi_metrics(cwi_preds, cwi_gold),
        "sg": sg_metrics(sg_preds, sg_gold),
        "ls": ls_metrics(ls_preds, ls_gold),
    }


def cmd_evaluate(config: RunConfig, args) -> int:
    out = _out_dir(config)
    predictions_path = _require_file(args.predictions or str(out / "predictions.jsonl"), "predictions file")
    annotated_path = _require_file(args.annotated, "annotated file")
    instances = load_annotated(annotated_path)
    with open(predictions_path, encoding="utf-8") as fh:
        records = [json.loads(line) for line in fh if line.strip()]
    if len(records) != len(instances):
        raise CorpusError(
            f"{len(records)} prediction records do not align with {len(instances)} annotated instances"
        )
    metrics = _evaluate_records(records, instances)
    tasks = ["cwi", "sg", "ls"] if args.task == "all" else [args.task]
    dataset = Path(annotated_path).stem
    table = {args.system: {dataset: {t: metrics[t] for t in tasks}}}
    text, payload = report(table)
    print(text)
    report_path = out / "report.json"
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
    print(f"report written to {report_path}")
    return 0


def _parse_grid(spec: str) -> list[float]:
    if ":" in spec:
        parts = spec.split(":")
        if len(parts) != 3:
            raise UsageError("grid must be start:stop:step or a comma list")
        start, stop, step = (float(x) for x in parts)
        if step <= 0:
            raise UsageError("grid step must be positive")
        grid = []
        value = start
        while value <= stop + 1e-12:
            grid.append(round(value, 10))
            value += step
        return grid
    return [float(x) for x in spec.split(",") if x.strip()]


def cmd_baseline(config: RunConfig, args) -> int:
    kind = FeatureKind(args.kind)
    annotated_path = _require_file(args.annotated, "annotated file")
    instances = load_annotated(annotated_path)
    freq = None
    disc = None
    if kind is FeatureKind.CORPUS_FREQUENCY:
        simple_path = _require_file(config.data.simple_path, "data.simple_path (frequency table source)")
        freq = build_frequency_table(list(corpus_mod._read_sentence_file(simple_path)))
    if kind is FeatureKind.ATTENTION:
        out = _out_dir(config)
        disc = StyleDiscriminator.load(_require_file(str(out / "discriminator.pt"), "discriminator checkpoint"))
    if args.tune:
        grid = _parse_grid(args.tune)
        threshold, f1 = tune_threshold(instances, kind, grid, freq=freq, discriminator=disc)
        print(f"best threshold: {threshold}")
        print(f"dev CWI F1: {f1:.4f}")
    else:
        if args.feature_threshold is None:
            raise UsageError("pass --threshold-value or --tune")
        threshold = args.feature_threshold
    lines = []
    preds = []
    for inst in instances:
        edits = threshold_cwi(inst.sentence, kind, threshold, freq=freq, discriminator=disc)
        lines.append(serialize_edits(edits))
        preds.append(set(edits.mask_positions()))
    rep = cwi_metrics(preds, [{inst.complex_index} for inst in instances])
    if args.output:
        Path(args.output).write_text("\n".join(lines) + "\n")
        print(f"edit sequences written to {args.output}")
    print(f"CWI P/R/F1 at threshold {threshold}: {rep.precision:.3f} / {rep.recall:.3f} / {rep.f1:.3f}")
    return 0


# ---------------------------------------------------------------------------
# Toy run
# ---------------------------------------------------------------------------

def _recovery_rate(results, instances) -> float:
    hits = 0
    for res, inst in zip(results, instances):
        planted = inst.gold_substitutions[0]
        if res.final.tokens[inst.complex_index] == planted:
            hits += 1
    return hits / len(instances)


def run_toy_pipeline(config: RunConfig, ablate: str | None = None) -> dict:
    """Run the self-contained toy experiment and return its summary dict."""
    started = time.monotonic()
    out = _out_dir(config)
    set_global_seed(config.seed)

    if config.toy.spec_path:
        spec = load_toy_spec(config.toy.spec_path)
    else:
        spec = default_toy_spec(
            seed=config.seed,
            sentences_per_side=config.toy.sentences_per_side,
            annotated_count=config.toy.annotated_count,
            n_pairs=config.toy.n_pairs,
        )
    corpus, annotated = generate_toy_corpus(spec)
    save_nonparallel(corpus, out / "toy_complex.txt", out / "toy_simple.txt")
    save_annotated(annotated, out / "toy_annotated.tsv")

    vocab = _build_vocab(corpus)
    sched = config.discriminator_schedule
    pre = pretrain_discriminator(
        corpus,
        _encoder_config(config, seed_offset=1),
        vocab=vocab,
        epochs=sched.epochs,
        batch_size=sched.batch_size,
        learning_rate=sched.learning_rate,
        patience=sched.patience,
        dev_fraction=config.data.dev_fraction,
        seed=config.seed,
    )
    disc = pre.discriminator
    disc.save(out / "discriminator.pt")
    digest_before = disc.freeze_checksum()
    (out / "discriminator.digest").write_text(digest_before + "\n")

    weights = config.weights
    if ablate:
        field_by_name = {"llm": "lambda3", "confusion": "lambda1", "invariance": "lambda2"}
        if ablate not in field_by_name:
            raise UsageError(f"unknown ablation {ablate!r}; pick from {sorted(field_by_name)}")
        weights = dataclasses.replace(weights, **{field_by_name[ablate]: 0.0})

    oracle = mock_oracle(set(spec.complex_lexicon), flip_rate=config.toy.flip_rate, seed=config.seed)
    cache = _oracle_cache(config, out)
    predictor = EditPredictor(vocab, _encoder_config(config, seed_offset=2))
    schedule = dataclasses.replace(config.editor_schedule, seed=config.seed)
    train_result = train_editor(
        predictor, disc, list(corpus.complex_sentences), oracle, cache,
        weights=weights,
        schedule=schedule,
        dev_fraction=config.data.dev_fraction,
        decode_threshold=config.threshold,
        retries=config.oracle.retries,
        log_path=out / "editor_train_log.jsonl",
    )
    predictor.save(out / "editor.pt")
    digest_after = disc.freeze_checksum()

    filler = train_toy_filler(
        corpus, vocab, _encoder_config(config, seed_offset=3),
        epochs=config.filler.epochs,
        batch_size=config.filler.batch_size,
        learning_rate=config.filler.learning_rate,
        mask_rate=config.filler.mask_rate,
        seed=config.seed,
    )
    filler.save(out / "filler.pt")

    results = [
        simplify_sentence(inst.sentence, predictor, filler,
                          k=config.filler.top_k, threshold=config.threshold)
        for inst in annotated
    ]
    _write_predictions(results, out / "predictions.jsonl")

    with open(out / "predictions.jsonl", encoding="utf-8") as fh:
        records = [json.loads(line) for line in fh if line.strip()]
    metrics = _evaluate_records(records, annotated)
    recovery = _recovery_rate(results, annotated)
    runtime = time.monotonic() - started

    summary = {
        "seed": config.seed,
        "ablate": ablate,
        "weights": dataclasses.asdict(weights),
        "discriminator_dev_accuracy": pre.dev_accuracy,
        "editor_dev_f1_vs_pseudo": train_result.best_dev_f1,
        "cwi_f1": metrics["cwi"].f1,
        "cwi_precision": metrics["cwi"].precision,
        "cwi_recall": metrics["cwi"].recall,
        "sg_f1": metrics["sg"].f1,
        "ls_f1": metrics["ls"].f1,
        "recovery": recovery,
        "digest_before": digest_before,
        "digest_after": digest_after,
        "digest_unchanged": digest_before == digest_after,
        "runtime_seconds": runtime,
    }
    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
    return summary


def cmd_toy_run(config: RunConfig, args) -> int:
    summary = run_toy_pipeline(config, ablate=args.ablate)
    gated = args.ablate is None
    criteria = [
        ("discriminator dev accuracy >= 0.95",
         summary["discriminator_dev_accuracy"] >= 0.95,
         f"{summary['discriminator_dev_accuracy']:.4f}"),
        ("editor held-out CWI F1 >= 0.80",
         summary["cwi_f1"] >= 0.80,
         f"{summary['cwi_f1']:.4f}"),
        ("planted-synonym recovery >= 0.70",
         summary["recovery"] >= 0.70,
         f"{summary['recovery']:.4f}"),
        ("discriminator frozen (digest unchanged)",
         summary["digest_unchanged"],
         summary["digest_after"][:12]),
        ("runtime < 600 s",
         summary["runtime_seconds"] < 600.0,
         f"{summary['runtime_seconds']:.1f}s"),
    ]
    print(f"toy run summary (seed {summary['seed']}, ablate={summary['ablate']}):")
    all_ok = True
    for name, ok, value in criteria:
        verdict = "PASS" if ok else "FAIL"
        if not gated and name.split()[0] in ("editor", "planted-synonym"):
            verdict = "INFO"
        else:
            all_ok &= ok
        print(f"  [{verdict}] {name}: {value}")
    print(f"  SG F1 {summary['sg_f1']:.4f} | LS F1 {summary['ls_f1']:.4f} | "
          f"dev-vs-pseudo F1 {summary['editor_dev_f1_vs_pseudo']:.4f}")
    if not all_ok:
        return 3
    return 0


# ---------------------------------------------------------------------------
# Parser and dispatch
# ---------------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog="lexedit", description=__doc__)
    parser.add_argument("--config", help="YAML run configuration")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out-dir", dest="out_dir", default=None)
    parser.add_argument("--threshold", type=float, default=None,
                        help="decode threshold for keep probabilities")
    parser.add_argument("--lambda1", type=float, default=None, help="confusion loss weight")
    parser.add_argument("--lambda2", type=float, default=None, help="invariance loss weight")
    parser.add_argument("--lambda3", type=float, default=None, help="pseudo-label loss weight")
    parser.add_argument("--alpha", type=float, default=None, help="unconfident style score target")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("train-disc", help="pretrain the style discriminator")
    sub.add_parser("train-editor", help="train the edit predictor against the frozen discriminator")

    p_simplify = sub.add_parser("simplify", help="run the full pipeline over sentences")
    p_simplify.add_argument("--input", help="plain text, one sentence per line")
    p_simplify.add_argument("--annotated", help="annotated TSV; its sentences are simplified")
    p_simplify.add_argument("--editor", help="editor checkpoint (default <out>/editor.pt)")
    p_simplify.add_argument("--filler", help="filler checkpoint (default <out>/filler.pt)")
    p_simplify.add_argument("--output", help="output JSON-lines path")

    p_eval = sub.add_parser("evaluate", help="score predictions against an annotated set")
    p_eval.add_argument("--predictions", help="simplify output (default <out>/predictions.jsonl)")
    p_eval.add_argument("--annotated", required=True)
    p_eval.add_argument("--task", choices=["cwi", "sg", "ls", "all"], default="all")
    p_eval.add_argument("--system", default="editor", help="system name for the report")

    p_base = sub.add_parser("baseline", help="feature-threshold complex word identification")
    p_base.add_argument("--kind", required=True, choices=[k.value for k in FeatureKind])
    p_base.add_argument("--threshold-value", dest="feature_threshold", type=float, default=None)
    p_base.add_argument("--tune", help="threshold grid: start:stop:step or comma list")
    p_base.add_argument("--annotated", required=True)
    p_base.add_argument("--output", help="write edit sequences here")

    p_toy = sub.add_parser("toy-run", help="self-contained end-to-end toy experiment")
    p_toy.add_argument("--ablate", choices=["llm", "confusion", "invariance"], default=None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        config = _resolve_config(args)
        if args.command == "train-disc":
            return cmd_train_disc(config)
        if args.command == "train-editor":
            return cmd_train_editor(config)
        if args.command == "simplify":
            return cmd_simplify(config, args)
        if args.command == "evaluate":
            return cmd_evaluate(config, args)
        if args.command == "baseline":
            return cmd_baseline(config, args)
        if args.command == "toy-run":
            return cmd_toy_run(config, args)
        raise UsageError(f"unknown command {args.command!r}")
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (CorpusError, EncoderError, TrainingError, OracleError, ValueError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
