from pathlib import Path
from typing import Union

from pydantic import ValidationError

from src.common.errors import RecordSchemaError
from src.common.schema import parse_line, validate_record
from src.common.utils import canonical_json, file_sha256, get_logger
from src.corpus.vocab import Vocabulary
from src.pipeline.types import AugmentedCorpus, AugmentedPair, AugmentMeta, AugmentSide, Origin, PipelineError

logger = get_logger(__name__)


def pair_record(pair: AugmentedPair, src_vocab: Vocabulary, tgt_vocab: Vocabulary) -> dict:
    record = {
        "instance_id": pair.instance_id,
        "src": src_vocab.decode(pair.source),
        "tgt": tgt_vocab.decode(pair.translation),
        "origin": pair.origin.value,
    }
    if pair.origin is Origin.GENERATED:
        record["side"] = pair.side.value
        record["alpha"] = pair.alpha
        record["spans"] = [list(span) for span in pair.spans]
        record["beam_score"] = pair.beam_score
        record["unfinished"] = pair.unfinished
    return record


def write_augmented(path: Union[str, Path], corpus: AugmentedCorpus, src_vocab: Vocabulary,
                    tgt_vocab: Vocabulary) -> str:
    """Header line plus one pair per line; returns the file's sha256."""
    corpus.check_cardinality()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {"_meta": corpus.meta.model_dump(mode="json")}
    validate_record("augmented.meta.v1", header)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(canonical_json(header) + "\n")
        for pair in corpus.pairs:
            f.write(canonical_json(pair_record(pair, src_vocab, tgt_vocab)) + "\n")
    digest = file_sha256(path)
    logger.info(f"Wrote {len(corpus.pairs)} augmented pairs to {path}")
    return digest


def read_augmented(path: Union[str, Path], src_vocab: Vocabulary, tgt_vocab: Vocabulary) -> AugmentedCorpus:
    """Validate every line, rebuild the corpus and check the cardinality law."""
    path = Path(path)
    if not path.is_file():
        raise PipelineError(f"Augmented corpus not found: {path}")
    meta = None
    pairs = []
    with open(path, "r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            if meta is None:
                header = parse_line("augmented.meta.v1", line, line_number)
                meta = AugmentMeta.model_validate(header["_meta"])
                continue
            record = parse_line("augmented.pair.v1", line, line_number)
            try:
                pairs.append(AugmentedPair(
                    instance_id=record["instance_id"],
                    source=src_vocab.encode(record["src"]),
                    translation=tgt_vocab.encode(record["tgt"]),
                    origin=Origin(record["origin"]),
                    side=AugmentSide(record["side"]) if "side" in record else None,
                    alpha=record.get("alpha"),
                    spans=[tuple(s) for s in record["spans"]] if "spans" in record else None,
                    beam_score=record.get("beam_score"),
                    unfinished=record.get("unfinished", False),
                ))
            except ValidationError as e:
                raise RecordSchemaError(f"line {line_number}: {e.errors()[0]['msg']}", line_number=line_number) from e
    if meta is None:
        raise PipelineError(f"{path}: missing _meta header line")
    corpus = AugmentedCorpus(meta=meta, pairs=pairs)
    corpus.check_cardinality()
    logger.info(f"Read {len(pairs)} augmented pairs from {path}")
    return corpus
