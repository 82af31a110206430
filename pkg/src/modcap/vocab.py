"""Vocabulary and the six subcategory word lists."""

from __future__ import annotations

import json
import os
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

BOS, EOS, UNK, PAD = "<bos>", "<eos>", "<unk>", "<pad>"
RESERVED = (BOS, EOS, UNK, PAD)

# order matters: it is the slot order of the module attention
MODULE_NAMES = ("color", "count", "size", "spatial", "semantic")


class VocabularyError(ValueError):
    pass


@dataclass
class Vocabulary:
    tokens: list[str]
    index: dict[str, int] = field(init=False)

    def __post_init__(self):
        if tuple(self.tokens[:4]) != RESERVED:
            raise VocabularyError(f"reserved tokens must lead the vocabulary, got {self.tokens[:4]}")
        if len(set(self.tokens)) != len(self.tokens):
            raise VocabularyError("duplicate tokens in vocabulary")
        self.index = {tok: i for i, tok in enumerate(self.tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    bos_id = property(lambda self: 0)
    eos_id = property(lambda self: 1)
    unk_id = property(lambda self: 2)
    pad_id = property(lambda self: 3)

    def lookup(self, key):
        """Token -> id (unknowns map to ``<unk>``), or id -> token."""
        if isinstance(key, str):
            return self.index.get(key, self.unk_id)
        return self.tokens[int(key)]

    def encode(self, tokens: Sequence[str]) -> list[int]:
        return [self.lookup(t.lower()) for t in tokens]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.tokens[int(i)] for i in ids]


def build_vocabulary(
    corpus: Sequence[Sequence[str]],
    min_count: int = 5,
    extra_tokens: Iterable[str] = (),
) -> Vocabulary:
    """Lowercase, count and keep tokens seen at least ``min_count`` times.

    Kept tokens are ordered by descending frequency, ties alphabetically.
    ``extra_tokens`` are appended unconditionally (e.g. lexicon members).
    """
    if min_count < 1:
        raise VocabularyError(f"min_count must be >= 1, got {min_count}")
    if not corpus:
        raise VocabularyError("cannot build a vocabulary from an empty corpus")
    counts = Counter(tok.lower() for sentence in corpus for tok in sentence)
    for tok in RESERVED:
        counts.pop(tok, None)
    kept = sorted((t for t, c in counts.items() if c >= min_count), key=lambda t: (-counts[t], t))
    tokens = list(RESERVED) + kept
    seen = set(tokens)
    for tok in extra_tokens:
        tok = tok.lower()
        if tok not in seen:
            tokens.append(tok)
            seen.add(tok)
    return Vocabulary(tokens)


@dataclass(frozen=True)
class SubcategoryLexicon:
    object_set: tuple[str, ...]
    color_set: tuple[str, ...]
    count_set: tuple[str, ...]
    size_set: tuple[str, ...]
    spatial_set: tuple[str, ...]
    semantic_set: tuple[str, ...]

    def __post_init__(self):
        groups = self.sets()
        owner: dict[str, str] = {}
        for name, words in groups.items():
            if len(set(words)) != len(words):
                raise VocabularyError(f"duplicate words inside the {name} set")
            for w in words:
                if w in owner:
                    raise VocabularyError(f"{w!r} appears in both {owner[w]} and {name} sets")
                owner[w] = name
        object.__setattr__(self, "_owner", owner)

    def sets(self) -> dict[str, tuple[str, ...]]:
        return {
            "object": self.object_set,
            "color": self.color_set,
            "count": self.count_set,
            "size": self.size_set,
            "spatial": self.spatial_set,
            "semantic": self.semantic_set,
        }

    def module_labels(self, module: str) -> tuple[str, ...]:
        if module not in MODULE_NAMES:
            raise VocabularyError(f"unknown attribute module {module!r}")
        return getattr(self, f"{module}_set")

    @property
    def module_sizes(self) -> tuple[int, ...]:
        return tuple(len(self.module_labels(m)) for m in MODULE_NAMES)

    @property
    def n_objects(self) -> int:
        return len(self.object_set)

    def category_of(self, token: str) -> str | None:
        return self._owner.get(token)

    def object_lemma(self, token: str) -> str | None:
        """Map ``cats`` or ``cat`` to ``cat``; None for non-object tokens."""
        if token in self.object_set:
            return token
        if token.endswith("s") and token[:-1] in self.object_set:
            return token[:-1]
        return None

    def all_tokens(self) -> list[str]:
        out = []
        for words in self.sets().values():
            out.extend(words)
        return out

    def to_dict(self) -> dict[str, list[str]]:
        return {name: list(words) for name, words in self.sets().items()}

    @classmethod
    def from_dict(cls, data: dict) -> "SubcategoryLexicon":
        return cls(**{f"{name}_set": tuple(data[name]) for name in ("object", *MODULE_NAMES)})

    def check_vocabulary(self, vocab: Vocabulary) -> None:
        missing = [w for w in self.all_tokens() if w not in vocab]
        if missing:
            raise VocabularyError(f"lexicon words missing from vocabulary: {missing}")


def save_lexicon(path: str | os.PathLike, lexicon: SubcategoryLexicon) -> None:
    with open(path, "w") as fh:
        json.dump(lexicon.to_dict(), fh, indent=2)
        fh.write("\n")


def load_lexicon(path: str | os.PathLike) -> SubcategoryLexicon:
    with open(path) as fh:
        return SubcategoryLexicon.from_dict(json.load(fh))
