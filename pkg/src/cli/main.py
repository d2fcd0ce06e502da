import argparse
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import torch

from src import __version__
from src.cli.run_config import RunConfig, Stage, resolve_run_config
from src.common.errors import ConfigError, TargetAugError
from src.common.utils import Timer, file_sha256, get_logger, set_log_level, to_json
from src.corpus import (
    ParallelDocument,
    ParallelInstance,
    Side,
    Unit,
    Vocabulary,
    build_vocab,
    load_corpus,
    load_multiref,
    make_instances,
    make_multiref_instances,
    make_synonym_corpus,
    write_corpus,
    write_multiref,
)
from src.corpus.vocab import VocabularyError
from src.decode import translate
from src.latent import AugmentMode, Direction
from src.metrics import MetricInputError, MetricReport, cross_validated_ppl, d_bleu, diversity, s_bleu, set_deviation
from src.neural import Role, TranslationModel, load_checkpoint, read_checkpoint_header, save_checkpoint
from src.pipeline import (
    AugmentedCorpus,
    AugmentSide,
    Origin,
    both_augment,
    build_da_training_set,
    check_vocabularies,
    da_vocabularies,
    gold_corpus,
    read_augmented,
    required_positions,
    sized_config,
    source_augment,
    swap_roles,
    target_augment,
    train_da,
    train_mt,
    write_augmented,
)

logger = get_logger(__name__)

METRICS = ("s_bleu", "d_bleu", "deviation", "diversity")


class ArgumentParser(argparse.ArgumentParser):
    """Usage errors become validation errors (exit code 1)."""

    def error(self, message: str):
        raise ConfigError(f"{self.prog}: {message}", [message])


def _pair(value: str, cast, flag: str) -> Tuple[Any, Any]:
    parts = value.split(",")
    if len(parts) != 2:
        raise ConfigError(f"{flag} expects two comma-separated values, got {value!r}", [flag])
    try:
        return cast(parts[0]), cast(parts[1])
    except ValueError as e:
        raise ConfigError(f"{flag}: {e}", [flag]) from e


def flag_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    overrides = {
        "run.seed": args.seed,
        "run.threads": args.threads,
        "run.output_dir": args.output_dir,
        "corpus.unit": args.unit,
        "augment.mode": args.mode,
        "augment.direction": args.direction,
        "augment.num_samples": args.m,
        "augment.beam_size": args.beam,
        "ppl.samples": getattr(args, "samples", None),
    }
    if args.beta:
        overrides["augment.beta_a"], overrides["augment.beta_b"] = _pair(args.beta, float, "--beta")
    if args.ngram:
        overrides["augment.ngram_min"], overrides["augment.ngram_max"] = _pair(args.ngram, int, "--ngram")
    if args.drop_gold:
        overrides["train.drop_gold"] = True
    return overrides


class RunContext:
    """Resolved config plus the artifact layout of one output directory."""

    def __init__(self, config: RunConfig, verify: bool = False):
        self.config = config
        self.verify = verify
        self.output_dir = Path(config.run.output_dir)
        self.config_sha256 = config.config_sha256()
        self.seed = config.run.seed

    def path(self, name: str) -> Path:
        return self.output_dir / name

    def da_checkpoint(self, mode: AugmentMode, side: AugmentSide) -> Path:
        suffix = ".reverse" if side is AugmentSide.SOURCE else ""
        return self.path(f"da.{AugmentMode(mode).value}{suffix}.ckpt")

    def augmented_path(self) -> Path:
        a = self.config.augment
        return self.path(f"augmented.{a.mode.value}.{a.direction.value}.m{a.num_samples}.jsonl")

    def vocabularies(self) -> Tuple[Vocabulary, Vocabulary]:
        src_path, tgt_path = self.path("vocab.src"), self.path("vocab.tgt")
        if not src_path.is_file() or not tgt_path.is_file():
            raise VocabularyError(f"Vocabulary files missing in {self.output_dir}; run build-vocab first")
        return Vocabulary.load(src_path), Vocabulary.load(tgt_path)

    def corpus_path(self, split: str) -> str:
        path = getattr(self.config.corpus, split)
        if not path:
            raise ConfigError(f"corpus.{split} is not configured", [f"corpus.{split}"])
        return path

    def instances(self, split: str, src_vocab: Vocabulary, tgt_vocab: Vocabulary) -> List[ParallelInstance]:
        corpus = self.config.corpus
        docs = load_corpus(self.corpus_path(split), corpus.unit)
        return make_instances(docs, corpus.unit, src_vocab, tgt_vocab, corpus.max_len)

    def stage_sha256(self, stage: Stage) -> str:
        return self.config.stage_sha256(stage)

    def check_recorded_hash(self, what: str, recorded: Optional[str], stage: Stage) -> None:
        """Compare a recorded hash with this config's hash of the stage that produced the artifact."""
        if not self.verify:
            return
        expected = self.stage_sha256(stage)
        if recorded != expected:
            logger.error(f"{what}: recorded {Stage(stage).value} config hash {recorded} differs from {expected}")
            raise ConfigError(f"--verify: {what} was produced under a different configuration", [what])

    def check_recorded_inputs(self, what: str, inputs: Dict[str, Optional[str]]) -> None:
        """Re-hash the files an artifact was produced from."""
        if not self.verify:
            return
        for path, recorded in inputs.items():
            if recorded is None:
                continue
            if not Path(path).is_file():
                raise ConfigError(f"--verify: {what} was produced from {path}, which is missing", [path])
            actual = file_sha256(path)
            if actual != recorded:
                logger.error(f"{what}: {path} hashes to {actual[:12]}, recorded {recorded[:12]}")
                raise ConfigError(f"--verify: {path} changed since {what} was produced", [path])

    def augmented_inputs(self, corpus: AugmentedCorpus) -> Dict[str, Optional[str]]:
        meta = corpus.meta
        return {
            str(self.da_checkpoint(meta.mode, AugmentSide.TARGET)): meta.da_checkpoint_sha256,
            str(self.da_checkpoint(meta.mode, AugmentSide.SOURCE)): meta.reverse_da_checkpoint_sha256,
        }

    def load_model(self, path: Path, src_vocab: Vocabulary, tgt_vocab: Vocabulary
                   ) -> Tuple[TranslationModel, Dict[str, Any]]:
        model, header = load_checkpoint(path)
        check_vocabularies(model, src_vocab, tgt_vocab)
        extra = header.get("extra", {})
        stage = extra.get("stage", Stage.MT.value if model.role is Role.MT else Stage.DA.value)
        self.check_recorded_hash(str(path), header.get("config_sha256"), Stage(stage))
        self.check_recorded_inputs(str(path), extra.get("inputs", {}))
        return model, header


def _emit(report: Dict[str, Any], out: Optional[str]) -> None:
    text = to_json(report, indent=2)
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text + "\n", encoding="utf-8")
        logger.info(f"Wrote report to {out}")
    else:
        print(text)


def cmd_make_synth(ctx: RunContext, args: argparse.Namespace) -> Dict[str, Any]:
    corpus = make_synonym_corpus(ctx.config.synth, ctx.seed)
    written = {}
    for split in ("train", "dev", "test"):
        path = ctx.corpus_path(split)
        write_corpus(path, getattr(corpus, split))
        written[split] = path
    path = ctx.corpus_path("multiref")
    write_multiref(path, corpus.multiref)
    written["multiref"] = path
    return written


def cmd_build_vocab(ctx: RunContext, args: argparse.Namespace) -> Dict[str, Any]:
    corpus = ctx.config.corpus
    docs = load_corpus(ctx.corpus_path("train"), corpus.unit)
    if corpus.vocab_side == "joint":
        src_vocab = tgt_vocab = build_vocab(docs, Side.JOINT, corpus.min_freq)
    else:
        src_vocab = build_vocab(docs, Side.SRC, corpus.min_freq)
        tgt_vocab = build_vocab(docs, Side.TGT, corpus.min_freq)
    return {
        "src": src_vocab.save(ctx.path("vocab.src")),
        "tgt": tgt_vocab.save(ctx.path("vocab.tgt")),
    }


def _sides(direction: Direction) -> List[AugmentSide]:
    if direction is Direction.BOTH:
        return [AugmentSide.TARGET, AugmentSide.SOURCE]
    return [AugmentSide(direction.value)]


def cmd_train_da(ctx: RunContext, args: argparse.Namespace) -> Dict[str, Any]:
    config = ctx.config
    src_vocab, tgt_vocab = ctx.vocabularies()
    train_instances = ctx.instances("train", src_vocab, tgt_vocab)
    dev_instances = ctx.instances("dev", src_vocab, tgt_vocab) if config.corpus.dev else []
    positions = required_positions(config.corpus.max_len, config.augment)
    written = {}
    for side in _sides(config.augment.direction):
        in_vocab, out_vocab, span_map = da_vocabularies(src_vocab, tgt_vocab, side)
        train_side, dev_side = train_instances, dev_instances
        if side is AugmentSide.SOURCE:
            train_side = [swap_roles(i) for i in train_instances]
            dev_side = [swap_roles(i) for i in dev_instances]

        records = build_da_training_set(train_side, config.augment, ctx.seed, side=side, span_map=span_map)
        dev_records = build_da_training_set(dev_side, config.augment, ctx.seed, side=side,
                                            stream=f"latent-dev:{side.value}", span_map=span_map) if dev_side else None
        model_config = sized_config(config.model, in_vocab, out_vocab, positions)
        model, curve = train_da(records, model_config, config.train, dev_records)
        model.vocab_sha256 = {"src": in_vocab.sha256(), "tgt": out_vocab.sha256()}
        path = ctx.da_checkpoint(config.augment.mode, side)
        written[str(path)] = save_checkpoint(
            path, model, ctx.seed, config_sha256=ctx.stage_sha256(Stage.DA),
            extra={"mode": config.augment.mode.value, "side": side.value, "stage": Stage.DA.value,
                   "best_epoch": curve.best_epoch, "epochs_run": len(curve.train_loss)},
        )
    return written


def cmd_augment(ctx: RunContext, args: argparse.Namespace) -> Dict[str, Any]:
    config = ctx.config
    augment = config.augment
    src_vocab, tgt_vocab = ctx.vocabularies()
    instances = ctx.instances("train", src_vocab, tgt_vocab)
    threads = config.run.threads
    augment_sha = ctx.stage_sha256(Stage.AUGMENT)

    models, hashes, span_maps = {}, {}, {}
    for side in _sides(augment.direction):
        path = ctx.da_checkpoint(augment.mode, side)
        in_vocab, out_vocab, span_maps[side] = da_vocabularies(src_vocab, tgt_vocab, side)
        models[side], _ = ctx.load_model(path, in_vocab, out_vocab)
        hashes[side] = file_sha256(path)

    with Timer("Augmentation", logger):
        if augment.direction is Direction.TARGET:
            corpus = target_augment(instances, models[AugmentSide.TARGET], augment, ctx.seed, threads,
                                    hashes[AugmentSide.TARGET], augment_sha, span_maps[AugmentSide.TARGET])
        elif augment.direction is Direction.SOURCE:
            corpus = source_augment(instances, models[AugmentSide.SOURCE], augment, ctx.seed, threads,
                                    hashes[AugmentSide.SOURCE], augment_sha, span_maps[AugmentSide.SOURCE])
        else:
            corpus = both_augment(instances, models[AugmentSide.TARGET], models[AugmentSide.SOURCE], augment,
                                  ctx.seed, threads, hashes[AugmentSide.TARGET], hashes[AugmentSide.SOURCE],
                                  augment_sha, span_maps[AugmentSide.TARGET], span_maps[AugmentSide.SOURCE])
    out = Path(args.out) if args.out else ctx.augmented_path()
    return {str(out): write_augmented(out, corpus, src_vocab, tgt_vocab)}


def cmd_train_mt(ctx: RunContext, args: argparse.Namespace) -> Dict[str, Any]:
    config = ctx.config
    src_vocab, tgt_vocab = ctx.vocabularies()
    inputs: Dict[str, str] = {}
    if args.gold_only:
        corpus = gold_corpus(ctx.instances("train", src_vocab, tgt_vocab), ctx.seed, ctx.stage_sha256(Stage.AUGMENT))
    else:
        path = Path(args.augmented) if args.augmented else ctx.augmented_path()
        corpus = read_augmented(path, src_vocab, tgt_vocab)
        ctx.check_recorded_hash(str(path), corpus.meta.config_sha256, Stage.AUGMENT)
        ctx.check_recorded_inputs(str(path), ctx.augmented_inputs(corpus))
        inputs[str(path)] = file_sha256(path)
    dev_instances = ctx.instances("dev", src_vocab, tgt_vocab) if config.corpus.dev else None

    model, curve = train_mt(corpus, sized_config(config.model, src_vocab, tgt_vocab), config.train, dev_instances)
    model.vocab_sha256 = {"src": src_vocab.sha256(), "tgt": tgt_vocab.sha256()}
    out = Path(args.out) if args.out else ctx.path("mt.gold.ckpt" if args.gold_only else "mt.ckpt")
    digest = save_checkpoint(out, model, ctx.seed, config_sha256=ctx.stage_sha256(Stage.MT),
                             extra={"M": corpus.M, "drop_gold": config.train.drop_gold, "stage": Stage.MT.value,
                                    "inputs": inputs, "best_epoch": curve.best_epoch,
                                    "epochs_run": len(curve.train_loss)})
    return {str(out): digest}


def _fit_sentences(sentences: List[List[str]], count: int) -> List[List[str]]:
    """Force a generated document onto the source's sentence count."""
    sentences = [list(s) for s in sentences]
    if len(sentences) > count >= 1:
        tail = [tok for s in sentences[count - 1:] for tok in s]
        return sentences[:count - 1] + [tail]
    return sentences + [[] for _ in range(count - len(sentences))]


def translate_documents(ctx: RunContext, model: TranslationModel, docs: Sequence[ParallelDocument],
                        src_vocab: Vocabulary, tgt_vocab: Vocabulary) -> List[ParallelDocument]:
    corpus, augment = ctx.config.corpus, ctx.config.augment
    instances = make_instances(docs, corpus.unit, src_vocab, tgt_vocab, max_len=model.config.max_len)
    outputs = translate(model, instances, augment.beam_size, augment.max_len_a, augment.max_len_b)
    by_doc: Dict[str, List[List[str]]] = {}
    for instance, sentences in zip(instances, outputs):
        doc_id = instance.instance_id.rsplit("#", 1)[0] if corpus.unit is Unit.SENTENCE else instance.instance_id
        decoded = [tgt_vocab.decode(s, strip_specials=True) for s in sentences]
        by_doc.setdefault(doc_id, []).extend(decoded)
    return [
        ParallelDocument(doc_id=doc.doc_id, src_sentences=doc.src_sentences,
                         tgt_sentences=_fit_sentences(by_doc.get(doc.doc_id, []), len(doc.src_sentences)))
        for doc in docs
    ]


def cmd_translate(ctx: RunContext, args: argparse.Namespace) -> Dict[str, Any]:
    src_vocab, tgt_vocab = ctx.vocabularies()
    model, _ = ctx.load_model(Path(args.model) if args.model else ctx.path("mt.ckpt"), src_vocab, tgt_vocab)
    docs = load_corpus(args.input or ctx.corpus_path("test"), ctx.config.corpus.unit)
    hyps = translate_documents(ctx, model, docs, src_vocab, tgt_vocab)
    out = Path(args.out) if args.out else ctx.path("hyp.jsonl")
    write_corpus(out, hyps)
    return {str(out): file_sha256(out)}


def _augmentation_scores(ctx: RunContext, path: str) -> Dict[str, Any]:
    src_vocab, tgt_vocab = ctx.vocabularies()
    corpus = read_augmented(path, src_vocab, tgt_vocab)
    ctx.check_recorded_hash(path, corpus.meta.config_sha256, Stage.AUGMENT)
    ctx.check_recorded_inputs(path, ctx.augmented_inputs(corpus))
    generated, gold, diversities = [], [], []
    for group in corpus.by_instance().values():
        reference = next(p for p in group if p.origin is Origin.GOLD)
        for side in (AugmentSide.TARGET, AugmentSide.SOURCE):
            pick = (lambda p: p.translation) if side is AugmentSide.TARGET else (lambda p: p.source)
            own = [pick(p) for p in group if p.origin is Origin.GENERATED and p.side is side]
            generated.extend(own)
            gold.extend([pick(reference)] * len(own))
            if len(own) >= 2:
                diversities.append(diversity(own))
    scores: Dict[str, Any] = {}
    if generated:
        scores["deviation"], scores["deviation_mean"] = set_deviation(generated, gold)
    if diversities:
        scores["diversity"] = sum(diversities) / len(diversities)
    return scores


def cmd_evaluate(ctx: RunContext, args: argparse.Namespace) -> Dict[str, Any]:
    requested = set(args.metrics.split(",")) if args.metrics else {"s_bleu", "d_bleu"}
    if args.augmented and not args.metrics:
        requested |= {"deviation", "diversity"}
    unknown = requested - set(METRICS)
    if unknown:
        raise ConfigError(f"unknown metrics: {sorted(unknown)}", sorted(unknown))

    report: Dict[str, Any] = {}
    if requested & {"s_bleu", "d_bleu"}:
        refs = load_corpus(args.ref or ctx.corpus_path("test"))
        if args.hyp:
            hyps = load_corpus(args.hyp, allow_empty=True)
        elif args.model:
            src_vocab, tgt_vocab = ctx.vocabularies()
            model, _ = ctx.load_model(Path(args.model), src_vocab, tgt_vocab)
            hyps = translate_documents(ctx, model, refs, src_vocab, tgt_vocab)
        else:
            raise ConfigError("evaluate needs --hyp or --model for BLEU", ["--hyp"])
        if [d.doc_id for d in hyps] != [d.doc_id for d in refs]:
            raise MetricInputError("hypothesis and reference documents are not aligned")
        hyp_sents = [s for d in hyps for s in d.tgt_sentences]
        ref_sents = [s for d in refs for s in d.tgt_sentences]
        if "s_bleu" in requested:
            report["s_bleu"] = s_bleu(hyp_sents, ref_sents)
        if "d_bleu" in requested:
            report["d_bleu"] = d_bleu([d.tgt_sentences for d in hyps], [d.tgt_sentences for d in refs])
        report["counts"] = {"documents": len(hyps), "sentences": len(hyp_sents),
                            "tokens": sum(len(s) for s in hyp_sents)}
    if requested & {"deviation", "diversity"}:
        if not args.augmented:
            raise ConfigError("deviation and diversity need --augmented", ["--augmented"])
        scores = _augmentation_scores(ctx, args.augmented)
        if "deviation" not in requested:
            scores.pop("deviation", None)
            scores.pop("deviation_mean", None)
        if "diversity" not in requested:
            scores.pop("diversity", None)
        report.update(scores)

    result = MetricReport(**report).model_dump(exclude_none=True)
    _emit(result, args.out)
    return result


def cmd_ppl_eval(ctx: RunContext, args: argparse.Namespace) -> Dict[str, Any]:
    config = ctx.config
    src_vocab, tgt_vocab = ctx.vocabularies()
    path = Path(args.model) if args.model else ctx.da_checkpoint(config.augment.mode, AugmentSide.TARGET)
    mode = AugmentMode(read_checkpoint_header(path).get("extra", {}).get("mode", config.augment.mode.value))
    in_vocab, out_vocab, span_map = da_vocabularies(src_vocab, tgt_vocab)
    model, _ = ctx.load_model(path, in_vocab, out_vocab)
    items = make_multiref_instances(load_multiref(ctx.corpus_path("multiref")), config.corpus.unit,
                                    src_vocab, tgt_vocab)
    augment = config.augment.model_copy(update={"mode": mode})
    ppl = cross_validated_ppl(model, items, config.ppl.samples, augment, ctx.seed, span_map)
    result = MetricReport(ppl=ppl, counts={"items": len(items), "samples": config.ppl.samples}).model_dump(
        exclude_none=True)
    result["mode"] = mode.value
    _emit(result, args.out)
    return result


def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run config merged over the packaged defaults")
    common.add_argument("--env", help="Environment block of the packaged config to apply (e.g. smoke)")
    common.add_argument("--seed", type=int, help="Master seed for every random decision")
    common.add_argument("--threads", type=int, help="Worker cap for augmentation")
    common.add_argument("--output-dir", dest="output_dir", help="Artifact directory")
    common.add_argument("--unit", choices=["sentence", "document"])
    common.add_argument("--mode", choices=["posterior", "prior"])
    common.add_argument("--direction", choices=["target", "source", "both"])
    common.add_argument("--m", type=int, help="Generated translations per instance")
    common.add_argument("--beam", type=int, help="Beam size")
    common.add_argument("--beta", help="Observed-ratio Beta shape as a,b")
    common.add_argument("--ngram", help="Span length range as lo,hi")
    common.add_argument("--drop-gold", dest="drop_gold", action="store_true", help="Train MT on generated pairs only")
    common.add_argument("--verify", action="store_true", help="Refuse inputs produced under another config")
    common.add_argument("--log-level", dest="log_level", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    return common


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="target-aug", description="Target-side data augmentation for translation")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=ArgumentParser)
    common = _common_flags()

    def add(name: str, handler, help_text: str) -> ArgumentParser:
        sub = commands.add_parser(name, parents=[common], help=help_text)
        sub.set_defaults(handler=handler)
        return sub

    add("make-synth", cmd_make_synth, "Write the synthetic synonym corpus to the configured corpus paths")
    add("build-vocab", cmd_build_vocab, "Build source/target vocabularies from the training corpus")
    add("train-da", cmd_train_da, "Train the DA model(s) for the configured mode and direction")

    sub = add("augment", cmd_augment, "Generate the augmented corpus")
    sub.add_argument("--out")

    sub = add("train-mt", cmd_train_mt, "Train the MT model on an augmented corpus")
    sub.add_argument("--augmented", help="Augmented JSONL (default: this run's augment output)")
    sub.add_argument("--gold-only", dest="gold_only", action="store_true", help="Baseline on gold pairs only")
    sub.add_argument("--out")

    sub = add("translate", cmd_translate, "Translate a corpus with an MT checkpoint")
    sub.add_argument("--model")
    sub.add_argument("--input")
    sub.add_argument("--out")

    sub = add("evaluate", cmd_evaluate, "Score hypotheses and augmented data")
    sub.add_argument("--hyp")
    sub.add_argument("--model")
    sub.add_argument("--ref")
    sub.add_argument("--augmented")
    sub.add_argument("--metrics", help=f"Comma-separated subset of {','.join(METRICS)}")
    sub.add_argument("--out")

    sub = add("ppl-eval", cmd_ppl_eval, "Cross-validated Monte-Carlo perplexity of a DA model")
    sub.add_argument("--model")
    sub.add_argument("--samples", type=int)
    sub.add_argument("--out")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.log_level:
            set_log_level(args.log_level)
        config = resolve_run_config(args.config, flag_overrides(args), args.env)
        torch.set_num_threads(1)
        ctx = RunContext(config, verify=args.verify)
        logger.info(f"{args.command}: config {ctx.config_sha256[:12]}, seed {ctx.seed}")
        args.handler(ctx, args)
        return 0
    except TargetAugError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return getattr(e, "exit_code", 2)
    except Exception as e:
        logger.exception(f"Unexpected failure: {e}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
