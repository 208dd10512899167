"""Token vocabularies with the four reserved special tokens."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

PAD, BOS, EOS, UNK = 0, 1, 2, 3
RESERVED = ("<pad>", "<bos>", "<eos>", "<unk>")


class VocabError(ValueError):
    pass


@dataclass(frozen=True)
class Vocabulary:
    tokens: tuple[str, ...]
    _lookup: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        tokens = tuple(self.tokens)
        object.__setattr__(self, "tokens", tokens)
        if tokens[:4] != RESERVED:
            raise VocabError(f"first four tokens must be {RESERVED}, got {tokens[:4]}")
        lookup = {}
        for i, tok in enumerate(tokens):
            if tok in lookup:
                raise VocabError(f"duplicate token {tok!r} at index {i}")
            lookup[tok] = i
        object.__setattr__(self, "_lookup", lookup)

    @classmethod
    def from_words(cls, words) -> "Vocabulary":
        """Build a vocabulary from content words, prepending the reserved tokens."""
        return cls(RESERVED + tuple(w for w in words if w not in RESERVED))

    @classmethod
    def synthetic(cls, size: int) -> "Vocabulary":
        # content tokens are named w4, w5, ... so that index == numeric suffix
        return cls(RESERVED + tuple(f"w{i}" for i in range(4, size)))

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, tok: str) -> bool:
        return tok in self._lookup

    def index(self, tok: str) -> int:
        return self._lookup[tok]

    def get(self, tok: str, default: int = UNK) -> int:
        return self._lookup.get(tok, default)

    def encode(self, words) -> list[int]:
        return [self._lookup.get(w, UNK) for w in words]

    def decode(self, ids) -> list[str]:
        return [self.tokens[i] for i in ids]

    def content_indices(self) -> range:
        return range(len(RESERVED), len(self.tokens))

    def save(self, path) -> None:
        Path(path).write_text("".join(t + "\n" for t in self.tokens), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        return cls(tuple(lines))
