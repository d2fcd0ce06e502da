from pathlib import Path
from typing import Iterable, List, Union

from pydantic import ValidationError

from src.common.errors import RecordSchemaError, TargetAugError, ValidationFailure
from src.common.schema import parse_line
from src.common.utils import get_logger, to_json
from src.corpus.types import MultiRefDocument, ParallelDocument, Unit

logger = get_logger(__name__)


class CorpusError(ValidationFailure, TargetAugError):
    """Custom exception for corpus-related errors."""
    pass


class CorpusParseError(CorpusError):
    """Custom exception for corpus lines that cannot be parsed."""
    def __init__(self, message: str, line_number: int):
        super().__init__(message)
        self.line_number = line_number


class AlignmentError(CorpusError):
    """Custom exception for documents whose source and target sentences do not align."""
    def __init__(self, message: str, doc_id: str):
        super().__init__(message)
        self.doc_id = doc_id


def tokenize(sentence: str) -> List[str]:
    """Whitespace tokenization of pre-tokenized text."""
    return sentence.split()


def _tokenize_all(sentences: List[str], doc_id: str, side: str, line_number: int,
                  allow_empty: bool = False) -> List[List[str]]:
    tokens = [tokenize(s) for s in sentences]
    if allow_empty:
        return tokens
    for k, toks in enumerate(tokens, start=1):
        if not toks:
            raise CorpusParseError(
                f"line {line_number}: document {doc_id} has an empty {side} sentence at position {k}",
                line_number,
            )
    return tokens


def _read_lines(path: Union[str, Path]):
    path = Path(path)
    if not path.is_file():
        raise CorpusError(f"Corpus file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            if line.strip():
                yield line_number, line


def load_corpus(path: Union[str, Path], unit: Unit = Unit.SENTENCE,
                allow_empty: bool = False) -> List[ParallelDocument]:
    """
    Load a document-aligned JSONL corpus in file order.
    The unit does not change parsing; alignment is validated for both units.
    allow_empty admits empty target sentences (hypothesis files).
    """
    docs: List[ParallelDocument] = []
    for line_number, line in _read_lines(path):
        try:
            record = parse_line("corpus.document.v1", line, line_number)
        except RecordSchemaError as e:
            logger.error(f"Malformed corpus line in {path}: {e}")
            raise CorpusParseError(str(e), line_number) from e

        doc_id = record["doc_id"]
        if len(record["src"]) != len(record["tgt"]):
            message = (
                f"line {line_number}: document {doc_id} has {len(record['src'])} source "
                f"and {len(record['tgt'])} target sentences"
            )
            logger.error(message)
            raise AlignmentError(message, doc_id)

        docs.append(ParallelDocument(
            doc_id=doc_id,
            src_sentences=_tokenize_all(record["src"], doc_id, "source", line_number),
            tgt_sentences=_tokenize_all(record["tgt"], doc_id, "target", line_number, allow_empty),
        ))
    logger.info(f"Loaded {len(docs)} documents from {path} ({Unit(unit).value} unit)")
    return docs


def load_multiref(path: Union[str, Path]) -> List[MultiRefDocument]:
    """Load multi-reference documents; every reference must align with the source."""
    docs: List[MultiRefDocument] = []
    for line_number, line in _read_lines(path):
        try:
            record = parse_line("corpus.multiref.v1", line, line_number)
        except RecordSchemaError as e:
            raise CorpusParseError(str(e), line_number) from e
        doc_id = record["doc_id"]
        for r, ref in enumerate(record["refs"], start=1):
            if len(ref) != len(record["src"]):
                raise AlignmentError(
                    f"line {line_number}: reference {r} of document {doc_id} has {len(ref)} sentences, "
                    f"source has {len(record['src'])}",
                    doc_id,
                )
        try:
            docs.append(MultiRefDocument(
                doc_id=doc_id,
                src_sentences=_tokenize_all(record["src"], doc_id, "source", line_number),
                references=[_tokenize_all(ref, doc_id, "reference", line_number) for ref in record["refs"]],
            ))
        except ValidationError as e:
            raise CorpusParseError(f"line {line_number}: {e}", line_number) from e
    logger.info(f"Loaded {len(docs)} multi-reference documents from {path}")
    return docs


def write_corpus(path: Union[str, Path], docs: Iterable[ParallelDocument]) -> int:
    """Write documents in the corpus JSONL format. Returns the number of lines."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for doc in docs:
            f.write(to_json({
                "doc_id": doc.doc_id,
                "src": [" ".join(s) for s in doc.src_sentences],
                "tgt": [" ".join(s) for s in doc.tgt_sentences],
            }) + "\n")
            count += 1
    return count


def write_multiref(path: Union[str, Path], docs: Iterable[MultiRefDocument]) -> int:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for doc in docs:
            f.write(to_json({
                "doc_id": doc.doc_id,
                "src": [" ".join(s) for s in doc.src_sentences],
                "refs": [[" ".join(s) for s in ref] for ref in doc.references],
            }) + "\n")
            count += 1
    return count
