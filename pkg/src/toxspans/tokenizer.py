"""Offset-preserving rule tokenizer and vocabulary.

Text is split on whitespace into words; each word is split further into
letter runs, digit runs and single punctuation/symbol characters. Every
token keeps its ``(start, end)`` character span in the source text.
"""

from __future__ import annotations

import os
import unicodedata
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

PAD, UNK, CLS, SEP, QUESTION = "[PAD]", "[UNK]", "[CLS]", "[SEP]", "offense"
RESERVED = (PAD, UNK, CLS, SEP, QUESTION)
PAD_ID, UNK_ID, CLS_ID, SEP_ID, QUESTION_ID = range(len(RESERVED))


@dataclass(frozen=True)
class Token:
    surface: str
    char_span: tuple[int, int] | None  # None marks a special (sentinel) token
    word_index: int = -1
    is_word_start: bool = False

    @property
    def is_sentinel(self) -> bool:
        return self.char_span is None


def special(surface: str) -> Token:
    return Token(surface, None)


def _char_class(ch: str) -> int:
    if ch.isdigit():
        return 1
    if ch.isalpha() or unicodedata.category(ch).startswith("M"):
        return 0
    return 2


def _split_word(word: str) -> list[tuple[int, int]]:
    pieces: list[tuple[int, int]] = []
    start = 0
    for i in range(1, len(word) + 1):
        if i == len(word):
            pieces.append((start, i))
            break
        prev, cur = _char_class(word[i - 1]), _char_class(word[i])
        if prev != cur or cur == 2:
            pieces.append((start, i))
            start = i
    return pieces


class Tokenizer:
    """Deterministic tokenizer.

    With ``subword_pieces`` set, each rule token absent from the piece set
    is broken into greedy longest-match pieces (single characters always
    match), which exercises multi-token words.
    """

    def __init__(self, subword_pieces: Iterable[str] | None = None, max_piece_len: int = 6):
        self.subword_pieces = frozenset(subword_pieces) if subword_pieces is not None else None
        self.max_piece_len = max_piece_len

    def _subword(self, surface: str) -> list[tuple[int, int]]:
        if self.subword_pieces is None or surface in self.subword_pieces:
            return [(0, len(surface))]
        out, i = [], 0
        while i < len(surface):
            for j in range(min(len(surface), i + self.max_piece_len), i, -1):
                if j - i == 1 or surface[i:j] in self.subword_pieces:
                    out.append((i, j))
                    i = j
                    break
        return out

    def tokenize(self, text: str) -> list[Token]:
        tokens: list[Token] = []
        word_index = -1
        i, n = 0, len(text)
        while i < n:
            if text[i].isspace():
                i += 1
                continue
            j = i
            while j < n and not text[j].isspace():
                j += 1
            word_index += 1
            first = True
            for ps, pe in _split_word(text[i:j]):
                for ss, se in self._subword(text[i + ps:i + pe]):
                    a, b = i + ps + ss, i + ps + se
                    tokens.append(Token(text[a:b], (a, b), word_index, first))
                    first = False
            i = j
        return tokens


def tokenize(text: str) -> list[Token]:
    return Tokenizer().tokenize(text)


def learn_subword_pieces(texts: Iterable[str], max_pieces: int = 2000, max_piece_len: int = 6) -> list[str]:
    """Most frequent character n-grams (2..max_piece_len) of rule tokens."""
    counts: Counter[str] = Counter()
    base = Tokenizer()
    for text in texts:
        for tok in base.tokenize(text):
            s = tok.surface.lower()
            for n in range(2, min(max_piece_len, len(s)) + 1):
                for k in range(len(s) - n + 1):
                    counts[s[k:k + n]] += 1
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return [piece for piece, _ in ranked[:max_pieces]]


class Vocabulary:
    """Token string to id map. Ids 0-4 are reserved: see ``RESERVED``."""

    def __init__(self, tokens: Sequence[str] = (), lowercase: bool = True):
        self.lowercase = lowercase
        self.itos: list[str] = list(RESERVED)
        self.stoi: dict[str, int] = {t: i for i, t in enumerate(self.itos)}
        for t in tokens:
            if t not in self.stoi:
                self.stoi[t] = len(self.itos)
                self.itos.append(t)

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, surface: str) -> bool:
        return self.norm(surface) in self.stoi

    def norm(self, surface: str) -> str:
        return surface.lower() if self.lowercase else surface

    def id(self, surface: str) -> int:
        return self.stoi.get(self.norm(surface), UNK_ID)

    def encode(self, tokens: Iterable[Token]) -> list[int]:
        ids = []
        for tok in tokens:
            ids.append(self.stoi[tok.surface] if tok.is_sentinel else self.id(tok.surface))
        return ids

    @property
    def content_tokens(self) -> list[str]:
        return self.itos[len(RESERVED):]

    def save(self, path: str | os.PathLike) -> None:
        from .corpus import atomic_write_text

        atomic_write_text(path, "".join(f"{t}\t{i}\n" for i, t in enumerate(self.itos)))

    @classmethod
    def load(cls, path: str | os.PathLike, lowercase: bool = True) -> "Vocabulary":
        rows = []
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if not line:
                continue
            tok, idx = line.rsplit("\t", 1)
            rows.append((int(idx), tok))
        rows.sort()
        if [i for i, _ in rows] != list(range(len(rows))) or tuple(t for _, t in rows[:len(RESERVED)]) != RESERVED:
            raise ValueError(f"{path}: ids must be dense from 0 and start with the reserved tokens")
        return cls([t for _, t in rows[len(RESERVED):]], lowercase=lowercase)


def build_vocab(split, min_count: int = 1, tokenizer: Tokenizer | None = None, lowercase: bool = True) -> Vocabulary:
    """Vocabulary of surfaces seen at least ``min_count`` times, in first-seen order."""
    tokenizer = tokenizer or Tokenizer()
    counts: Counter[str] = Counter()
    order: dict[str, None] = {}
    for sample in split:
        for tok in tokenizer.tokenize(sample.text):
            s = tok.surface.lower() if lowercase else tok.surface
            counts[s] += 1
            order.setdefault(s, None)
    return Vocabulary([s for s in order if counts[s] >= min_count], lowercase=lowercase)
