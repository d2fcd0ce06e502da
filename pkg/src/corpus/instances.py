from typing import List, Optional, Sequence, Tuple

from pydantic import BaseModel, Field

from src.common.utils import get_logger
from src.corpus.types import MultiRefDocument, MultiRefInstance, ParallelDocument, ParallelInstance, Unit
from src.corpus.vocab import SEP_ID, Vocabulary

logger = get_logger(__name__)

DEFAULT_MAX_LEN = 512


class SkipRecord(BaseModel):
    instance_id: str
    source_length: int
    target_length: int
    max_len: int
    reason: str = "too long"


class SkipReport(BaseModel):
    """Instances dropped for being empty or exceeding the configured length."""
    skipped: List[SkipRecord] = Field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.skipped)


def join_sentences(sentences: Sequence[Sequence[int]], sep_id: int = SEP_ID) -> Tuple[List[int], List[int]]:
    """Document-unit layout: sentences joined by sep; the sep keeps the tag of the sentence it closes."""
    ids: List[int] = []
    tags: List[int] = []
    for k, sent in enumerate(sentences, start=1):
        ids.extend(sent)
        tags.extend([k] * len(sent))
        if k < len(sentences):
            ids.append(sep_id)
            tags.append(k)
    return ids, tags


def tags_from_separators(ids: Sequence[int], sep_id: int = SEP_ID) -> List[int]:
    """Recover group tags of a document-unit sequence by counting separators."""
    tags = []
    tag = 1
    for token in ids:
        tags.append(tag)
        if token == sep_id:
            tag += 1
    return tags


def split_sentences(ids: Sequence[int], sep_id: int = SEP_ID) -> List[List[int]]:
    """Inverse of join_sentences."""
    sentences: List[List[int]] = [[]]
    for token in ids:
        if token == sep_id:
            sentences.append([])
        else:
            sentences[-1].append(token)
    return sentences


def content_segments(ids: Sequence[int], tags: Sequence[int], sep_id: int = SEP_ID) -> List[Tuple[int, int]]:
    """Half-open (start, end) ranges of non-separator tokens, one per group."""
    segments: List[Tuple[int, int]] = []
    start = None
    for pos, token in enumerate(ids):
        boundary = token == sep_id or (pos > 0 and tags[pos] != tags[pos - 1])
        if boundary and start is not None:
            segments.append((start, pos))
            start = None
        if token != sep_id and start is None:
            start = pos
    if start is not None:
        segments.append((start, len(ids)))
    return segments


def make_instances(docs: Sequence[ParallelDocument], unit: Unit, vocab_src: Vocabulary, vocab_tgt: Vocabulary,
                   max_len: int = DEFAULT_MAX_LEN, report: Optional[SkipReport] = None) -> List[ParallelInstance]:
    """
    Encode documents into model instances.
    Sentence unit yields one instance per sentence pair (tags all 1); document unit one per document.
    """
    unit = Unit(unit)
    report = report if report is not None else SkipReport()
    instances: List[ParallelInstance] = []

    def emit(instance_id: str, src: List[int], src_tags: List[int], tgt: List[int], tgt_tags: List[int]):
        if not src or not tgt:
            logger.warning(f"Skipping {instance_id}: empty source or target")
            report.skipped.append(SkipRecord(
                instance_id=instance_id, source_length=len(src), target_length=len(tgt), max_len=max_len,
                reason="empty",
            ))
            return
        if len(src) > max_len or len(tgt) > max_len:
            logger.warning(f"Skipping {instance_id}: lengths {len(src)}/{len(tgt)} exceed max_len={max_len}")
            report.skipped.append(SkipRecord(
                instance_id=instance_id, source_length=len(src), target_length=len(tgt), max_len=max_len,
            ))
            return
        instances.append(ParallelInstance(
            instance_id=instance_id, source=src, target=tgt,
            src_group_tags=src_tags, tgt_group_tags=tgt_tags, unit=unit,
        ))

    for doc in docs:
        src_sents = [vocab_src.encode(s) for s in doc.src_sentences]
        tgt_sents = [vocab_tgt.encode(s) for s in doc.tgt_sentences]
        if unit is Unit.SENTENCE:
            for k, (src, tgt) in enumerate(zip(src_sents, tgt_sents), start=1):
                emit(f"{doc.doc_id}#{k}", src, [1] * len(src), tgt, [1] * len(tgt))
        else:
            src, src_tags = join_sentences(src_sents)
            tgt, tgt_tags = join_sentences(tgt_sents)
            emit(doc.doc_id, src, src_tags, tgt, tgt_tags)

    if report.count:
        logger.warning(f"{report.count} instances skipped for length")
    logger.info(f"Built {len(instances)} {unit.value}-unit instances from {len(docs)} documents")
    return instances


def make_multiref_instances(docs: Sequence[MultiRefDocument], unit: Unit, vocab_src: Vocabulary,
                            vocab_tgt: Vocabulary) -> List[MultiRefInstance]:
    """Sentence unit: one item per sentence with that sentence from every reference."""
    unit = Unit(unit)
    items: List[MultiRefInstance] = []
    for doc in docs:
        src_sents = [vocab_src.encode(s) for s in doc.src_sentences]
        ref_sents = [[vocab_tgt.encode(s) for s in ref] for ref in doc.references]
        if unit is Unit.SENTENCE:
            for k, src in enumerate(src_sents):
                refs = [ref[k] for ref in ref_sents]
                items.append(MultiRefInstance(
                    instance_id=f"{doc.doc_id}#{k + 1}", source=src, src_group_tags=[1] * len(src),
                    references=refs, reference_tags=[[1] * len(r) for r in refs], unit=unit,
                ))
        else:
            src, src_tags = join_sentences(src_sents)
            joined = [join_sentences(ref) for ref in ref_sents]
            items.append(MultiRefInstance(
                instance_id=doc.doc_id, source=src, src_group_tags=src_tags,
                references=[ids for ids, _ in joined], reference_tags=[tags for _, tags in joined], unit=unit,
            ))
    logger.info(f"Built {len(items)} multi-reference {unit.value}-unit items from {len(docs)} documents")
    return items
