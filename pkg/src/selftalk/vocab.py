"""Tokenization, vocabulary construction and integer encoding.

The same tokenizer is used for training corpora, generated questions and
metric evaluation, so surface forms stay comparable end to end.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

START = "<start>"
END = "<end>"
UNK = "<unk>"

SPECIALS = (START, END, UNK)

START_ID = 0
END_ID = 1
UNK_ID = 2

_STRIP = {ord(c): None for c in "?.,!"}


def tokenize(text: str) -> list[str]:
    """Lowercase, drop the characters ``? . , !`` and split on whitespace."""
    return text.lower().translate(_STRIP).split()


@dataclass(frozen=True)
class Vocabulary:
    """Dense word <-> id mapping with START/END/UNK at ids 0, 1, 2."""

    words: tuple[str, ...]
    index: dict[str, int] = field(repr=False)

    @property
    def size(self) -> int:
        return len(self.words)

    def id_of(self, word: str) -> int:
        return self.index.get(word, UNK_ID)

    def word_of(self, word_id: int) -> str:
        if not 0 <= word_id < len(self.words):
            raise ValueError(f"word id {word_id} out of range for vocabulary of size {len(self.words)}")
        return self.words[word_id]

    def __contains__(self, word: str) -> bool:
        return word in self.index

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.words == other.words

    def __hash__(self):
        return hash(self.words)


@dataclass
class TokenSequence:
    """Integer-encoded sentence, optionally with its original surface."""

    ids: list[int]
    surface: str | None = None

    def __len__(self) -> int:
        return len(self.ids)

    def __iter__(self):
        return iter(self.ids)


def _from_words(words: list[str]) -> Vocabulary:
    return Vocabulary(words=tuple(words), index={w: i for i, w in enumerate(words)})


def build_vocab(corpus: list[str], min_count: int = 1) -> Vocabulary:
    """Build a vocabulary from raw sentences.

    Ids are assigned deterministically: the three specials first, then
    corpus tokens in descending frequency, ties broken lexicographically.
    Tokens with frequency below ``min_count`` are excluded, as is any
    corpus token that collides with a special surface form.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts = Counter()
    for sentence in corpus:
        counts.update(tokenize(sentence))
    kept = [
        w for w, c in counts.items()
        if c >= min_count and w not in SPECIALS
    ]
    kept.sort(key=lambda w: (-counts[w], w))
    return _from_words(list(SPECIALS) + kept)


def vocab_from_words(words: list[str]) -> Vocabulary:
    """Rebuild a vocabulary from a serialized word list (checkpoint load)."""
    if tuple(words[:3]) != SPECIALS:
        raise ValueError(f"word list does not start with the specials {SPECIALS}")
    if len(set(words)) != len(words):
        raise ValueError("word list contains duplicates")
    return _from_words(list(words))


def encode(vocab: Vocabulary, text: str) -> TokenSequence:
    """Encode raw text; out-of-vocabulary tokens map to UNK."""
    return TokenSequence([vocab.id_of(t) for t in tokenize(text)], surface=text)


def decode(vocab: Vocabulary, ids) -> str:
    """Render ids as a space-joined string; fails on out-of-range ids."""
    return " ".join(vocab.word_of(i) for i in ids)
