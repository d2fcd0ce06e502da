from collections import Counter
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

from src.common.utils import compute_sha256, get_logger
from src.corpus.reader import CorpusError
from src.corpus.types import ParallelDocument, Side

logger = get_logger(__name__)

PAD, BOS, EOS, UNK, SEP = "<pad>", "<s>", "</s>", "<unk>", "<sep>"
SPECIALS = (PAD, BOS, EOS, UNK, SEP)
PAD_ID, BOS_ID, EOS_ID, UNK_ID, SEP_ID = range(len(SPECIALS))


class VocabularyError(CorpusError):
    """Custom exception for malformed vocabulary files."""
    pass


class Vocabulary:
    """
    Token/id mapping with the five reserved specials at ids 0..4.
    Ordinary tokens follow in file order (frequency desc, then lexicographic).
    """

    pad_id = PAD_ID
    bos_id = BOS_ID
    eos_id = EOS_ID
    unk_id = UNK_ID
    sep_id = SEP_ID

    def __init__(self, entries: Sequence[Tuple[str, int]]):
        self._entries: List[Tuple[str, int]] = [(tok, int(freq)) for tok, freq in entries]
        self.itos: List[str] = list(SPECIALS) + [tok for tok, _ in self._entries]
        self.stoi: Dict[str, int] = {tok: i for i, tok in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise VocabularyError("vocabulary contains duplicate tokens")

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Vocabulary) and self._entries == other._entries

    def encode(self, tokens: Iterable[str]) -> List[int]:
        return [self.stoi.get(tok, UNK_ID) for tok in tokens]

    def decode(self, ids: Iterable[int], strip_specials: bool = False) -> List[str]:
        out = []
        for i in ids:
            if strip_specials and i in (PAD_ID, BOS_ID, EOS_ID):
                continue
            out.append(self.itos[i] if 0 <= i < len(self.itos) else UNK)
        return out

    def extended_with(self, other: "Vocabulary") -> "Vocabulary":
        """This vocabulary followed by the tokens of `other` it lacks; existing ids are unchanged."""
        extra = [(tok, freq) for tok, freq in other._entries if tok not in self.stoi]
        return Vocabulary(self._entries + extra)

    def id_map(self, into: "Vocabulary") -> List[int]:
        """For every id here, the id of the same token in `into` (unk when absent)."""
        return [into.stoi.get(tok, UNK_ID) for tok in self.itos]

    def to_text(self) -> str:
        return "".join(f"{tok}\t{freq}\n" for tok, freq in self._entries)

    def sha256(self) -> str:
        return compute_sha256(self.to_text())

    def save(self, path: Union[str, Path]) -> str:
        """Write the vocabulary file; returns its sha256."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        text = self.to_text()
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        logger.info(f"Saved vocabulary with {len(self)} ids to {path}")
        return compute_sha256(text)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Vocabulary":
        path = Path(path)
        if not path.is_file():
            raise VocabularyError(f"Vocabulary file not found: {path}")
        entries = []
        with open(path, "r", encoding="utf-8") as f:
            for line_number, line in enumerate(f, start=1):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 2 or not parts[1].isdigit():
                    raise VocabularyError(f"{path}: line {line_number} is not 'token<TAB>frequency'")
                entries.append((parts[0], int(parts[1])))
        return cls(entries)


def count_tokens(docs: Iterable[ParallelDocument], side: Side) -> Counter:
    counts: Counter = Counter()
    for doc in docs:
        if side in (Side.SRC, Side.JOINT):
            for sent in doc.src_sentences:
                counts.update(sent)
        if side in (Side.TGT, Side.JOINT):
            for sent in doc.tgt_sentences:
                counts.update(sent)
    return counts


def build_vocab(docs: Iterable[ParallelDocument], side: Side = Side.JOINT, min_freq: int = 1,
                extra_counts: Optional[Counter] = None) -> Vocabulary:
    """Frequency-thresholded vocabulary with deterministic id order."""
    if min_freq < 1:
        raise VocabularyError(f"min_freq must be >= 1, got {min_freq}")
    counts = count_tokens(docs, Side(side))
    if extra_counts:
        counts.update(extra_counts)
    for special in SPECIALS:
        counts.pop(special, None)
    kept = sorted(
        ((tok, freq) for tok, freq in counts.items() if freq >= min_freq),
        key=lambda item: (-item[1], item[0]),
    )
    logger.info(f"Built {Side(side).value} vocabulary: {len(kept)} of {len(counts)} tokens kept (min_freq={min_freq})")
    return Vocabulary(kept)
