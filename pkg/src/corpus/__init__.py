from src.corpus.instances import (
    SkipReport,
    content_segments,
    join_sentences,
    make_instances,
    make_multiref_instances,
    split_sentences,
    tags_from_separators,
)
from src.corpus.reader import (
    AlignmentError,
    CorpusError,
    CorpusParseError,
    load_corpus,
    load_multiref,
    write_corpus,
    write_multiref,
)
from src.corpus.synth import SynthCorpus, SynthSettings, make_synonym_corpus
from src.corpus.types import MultiRefDocument, MultiRefInstance, ParallelDocument, ParallelInstance, Side, Unit
from src.corpus.vocab import Vocabulary, VocabularyError, build_vocab

__all__ = [
    "AlignmentError", "CorpusError", "CorpusParseError", "MultiRefDocument", "MultiRefInstance", "ParallelDocument",
    "ParallelInstance", "Side", "SkipReport", "SynthCorpus", "SynthSettings", "Unit", "Vocabulary", "VocabularyError",
    "build_vocab", "content_segments", "join_sentences", "load_corpus", "load_multiref", "make_instances",
    "make_multiref_instances", "make_synonym_corpus", "split_sentences", "tags_from_separators", "write_corpus",
    "write_multiref",
]
