"""Byte-level and whitespace tokenizers.

Byte-level is the default: 256 byte ids, plus an optional EOS id 256.
Whitespace vocabularies are derived from a corpus; the id right after the
corpus words is the unknown-word slot, followed by EOS when enabled.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

from .core import FlyError, Vocabulary

UNK = "<unk>"
EOS = "<eos>"


class IngestionError(FlyError, ValueError):
    pass


def read_text(path) -> str:
    try:
        with open(path, "rb") as fh:
            return fh.read().decode("utf-8")
    except UnicodeDecodeError as exc:
        raise IngestionError(f"{path}: not valid UTF-8 ({exc.reason} at byte {exc.start})") from exc


@dataclass(frozen=True)
class Tokenizer:
    kind: str = "byte"
    words: Tuple[str, ...] = ()
    with_eos: bool = False

    def __post_init__(self):
        if self.kind not in ("byte", "whitespace"):
            raise IngestionError(f"unknown tokenizer kind {self.kind!r}")
        if self.kind == "whitespace" and not self.words:
            raise IngestionError("whitespace vocabulary is empty")

    @classmethod
    def byte_level(cls, with_eos: bool = False) -> "Tokenizer":
        return cls("byte", (), with_eos)

    @classmethod
    def from_corpus(cls, text: str, with_eos: bool = False) -> "Tokenizer":
        """Whitespace tokenizer whose words appear in first-seen order."""
        seen: Dict[str, None] = {}
        for w in text.split():
            seen.setdefault(w, None)
        seen.pop(UNK, None)
        seen.pop(EOS, None)
        return cls("whitespace", tuple(seen), with_eos)

    @property
    def unk_id(self) -> Optional[int]:
        return len(self.words) if self.kind == "whitespace" else None

    @property
    def eos_id(self) -> Optional[int]:
        if not self.with_eos:
            return None
        return 256 if self.kind == "byte" else len(self.words) + 1

    @property
    def vocabulary(self) -> Vocabulary:
        if self.kind == "byte":
            size = 256 + self.with_eos
            rendering = None
        else:
            size = len(self.words) + 1 + self.with_eos
            rendering = dict(enumerate(self.words))
            rendering[self.unk_id] = UNK
            if self.with_eos:
                rendering[self.eos_id] = EOS
        return Vocabulary(size, rendering, self.eos_id)

    def tokenize(self, text: str) -> List[int]:
        if self.kind == "byte":
            try:
                return list(text.encode("utf-8"))
            except UnicodeEncodeError as exc:
                raise IngestionError(f"text is not valid UTF-8: {exc.reason}") from exc
        index = self._index()
        unk = self.unk_id
        return [index.get(w, unk) for w in text.split()]

    def detokenize(self, tokens: Sequence[int]) -> str:
        eos = self.eos_id
        if self.kind == "byte":
            data = bytes(t for t in tokens if t != eos)
            return data.decode("utf-8", errors="replace")
        unk = self.unk_id
        return " ".join(EOS if t == eos else UNK if t == unk else self.words[t] for t in tokens)

    def _index(self) -> Dict[str, int]:
        idx = self.__dict__.get("_idx")
        if idx is None:
            idx = {w: i for i, w in enumerate(self.words)}
            object.__setattr__(self, "_idx", idx)
        return idx

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "with_eos": self.with_eos}
        if self.kind == "whitespace":
            d["words"] = list(self.words)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Tokenizer":
        return cls(d.get("kind", "byte"), tuple(d.get("words", ())), bool(d.get("with_eos", False)))
