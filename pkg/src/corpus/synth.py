from typing import List

import numpy as np
from pydantic import BaseModel, Field, model_validator

from src.common.utils import derive_rng, get_logger
from src.corpus.types import MultiRefDocument, ParallelDocument

logger = get_logger(__name__)


class SynthSettings(BaseModel):
    source_vocab: int = Field(50, ge=2)
    synonyms: int = Field(2, ge=2, description="Valid target tokens per source token")
    documents: int = Field(500, ge=1)
    sentences: int = Field(4, ge=1)
    min_sentence_len: int = Field(4, ge=1)
    max_sentence_len: int = Field(8, ge=1)
    references: int = Field(3, ge=2)
    register_strength: float = Field(0.8, ge=0.0, le=1.0,
                                     description="Probability a token uses its document's preferred synonym")
    dev_documents: int = Field(50, ge=1)
    test_documents: int = Field(50, ge=1)
    multiref_documents: int = Field(40, ge=1)

    @model_validator(mode="after")
    def check_lengths(self):
        if self.min_sentence_len > self.max_sentence_len:
            raise ValueError("min_sentence_len must not exceed max_sentence_len")
        return self


class SynthCorpus(BaseModel):
    train: List[ParallelDocument]
    dev: List[ParallelDocument]
    test: List[ParallelDocument]
    multiref: List[MultiRefDocument]


def _source_sentences(settings: SynthSettings, rng: np.random.Generator) -> List[List[int]]:
    sentences = []
    for _ in range(settings.sentences):
        length = int(rng.integers(settings.min_sentence_len, settings.max_sentence_len + 1))
        sentences.append([int(t) for t in rng.integers(0, settings.source_vocab, size=length)])
    return sentences


def _render_target(sentences: List[List[int]], register: int, settings: SynthSettings,
                   rng: np.random.Generator) -> List[List[str]]:
    target = []
    for sentence in sentences:
        tokens = []
        for s in sentence:
            k = register
            if rng.random() >= settings.register_strength:
                k = int(rng.choice([j for j in range(settings.synonyms) if j != register]))
            tokens.append(f"t{s}_{k}")
        target.append(tokens)
    return target


def _parallel(split: str, count: int, settings: SynthSettings, seed: int) -> List[ParallelDocument]:
    docs = []
    for d in range(count):
        rng = derive_rng(seed, f"synth:{split}", d)
        register = int(rng.integers(settings.synonyms))
        src = _source_sentences(settings, rng)
        docs.append(ParallelDocument(
            doc_id=f"{split}-{d:04d}",
            src_sentences=[[f"s{t}" for t in sent] for sent in src],
            tgt_sentences=_render_target(src, register, settings, rng),
        ))
    return docs


def _multiref(count: int, settings: SynthSettings, seed: int) -> List[MultiRefDocument]:
    docs = []
    for d in range(count):
        rng = derive_rng(seed, "synth:multiref", d)
        register = int(rng.integers(settings.synonyms))
        src = _source_sentences(settings, rng)
        docs.append(MultiRefDocument(
            doc_id=f"multiref-{d:04d}",
            src_sentences=[[f"s{t}" for t in sent] for sent in src],
            references=[_render_target(src, register, settings, rng) for _ in range(settings.references)],
        ))
    return docs


def make_synonym_corpus(settings: SynthSettings, seed: int) -> SynthCorpus:
    """
    Monotone word-for-word corpus: source token s{i} translates to one of t{i}_0..t{i}_{k-1}.
    Each document prefers one synonym index, so observed target tokens reveal how the
    rest of the document is worded. Multi-reference documents share a register across
    their references.
    """
    corpus = SynthCorpus(
        train=_parallel("train", settings.documents, settings, seed),
        dev=_parallel("dev", settings.dev_documents, settings, seed),
        test=_parallel("test", settings.test_documents, settings, seed),
        multiref=_multiref(settings.multiref_documents, settings, seed),
    )
    logger.info(f"Synthesized {len(corpus.train)}/{len(corpus.dev)}/{len(corpus.test)} documents "
                f"and {len(corpus.multiref)} multi-reference documents (seed={seed})")
    return corpus
