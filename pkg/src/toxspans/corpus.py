"""Span-annotated text corpora: loading, validation, cleaning and splitting.

Gold annotations are sets of character offsets into ``text``. Offsets index
unicode code points (Python ``str`` positions), never bytes.
"""

from __future__ import annotations

import csv
import os
import string
import tempfile
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

Span = tuple[int, int]

ASCII_PUNCT = frozenset(string.punctuation)


class CorpusError(ValueError):
    """Base class for dataset loading problems."""


class OffsetParseError(CorpusError):
    def __init__(self, row: int, cell: str):
        super().__init__(f"row {row}: cannot parse offset list {cell!r}")
        self.row = row


class OffsetBoundsError(CorpusError):
    def __init__(self, row: int, offset: int, length: int):
        super().__init__(f"row {row}: offset {offset} >= text length {length}" if offset >= 0
                         else f"row {row}: negative offset {offset}")
        self.row = row
        self.offset = offset


@dataclass(frozen=True)
class TextSample:
    id: int
    text: str
    gold_offsets: tuple[int, ...] = ()

    def __post_init__(self):
        offs = tuple(self.gold_offsets)
        object.__setattr__(self, "gold_offsets", offs)
        n = len(self.text)
        prev = -1
        for o in offs:
            if o <= prev:
                raise ValueError(f"sample {self.id}: gold offsets must be strictly increasing")
            if not 0 <= o < n:
                raise ValueError(f"sample {self.id}: offset {o} out of bounds for length {n}")
            prev = o

    @property
    def spans(self) -> list[Span]:
        return offsets_to_spans(self.gold_offsets)


@dataclass(frozen=True)
class DatasetSplit:
    name: str
    samples: tuple[TextSample, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        ids = [s.id for s in self.samples]
        if len(set(ids)) != len(ids):
            raise ValueError(f"split {self.name!r}: duplicate sample ids")

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def by_id(self) -> dict[int, TextSample]:
        return {s.id: s for s in self.samples}


def parse_offsets(cell: str, row: int = -1) -> list[int]:
    """Parse a ``[1, 2, 3]`` cell. Whitespace is tolerated anywhere."""
    s = cell.strip()
    if len(s) < 2 or s[0] != "[" or s[-1] != "]":
        raise OffsetParseError(row, cell)
    body = s[1:-1].strip()
    if not body:
        return []
    try:
        return [int(tok) for tok in body.split(",")]
    except ValueError:
        raise OffsetParseError(row, cell) from None


def format_offsets(offsets: Iterable[int]) -> str:
    return "[" + ", ".join(str(o) for o in offsets) + "]"


def load_dataset(path: str | os.PathLike, has_gold: bool = True, name: str | None = None) -> DatasetSplit:
    """Read a ``spans,text`` (or ``text``-only) CSV file.

    Sample ids are row indices in file order. Offsets are sorted and
    de-duplicated; out-of-range offsets raise :class:`OffsetBoundsError`.
    """
    path = Path(path)
    samples = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        if "text" not in fields:
            raise CorpusError(f"{path}: missing 'text' column (header: {fields})")
        read_gold = has_gold and "spans" in fields
        for row, rec in enumerate(reader):
            text = rec["text"] or ""
            offsets: list[int] = []
            if read_gold:
                offsets = parse_offsets(rec["spans"] or "", row)
                for o in offsets:
                    if not 0 <= o < len(text):
                        raise OffsetBoundsError(row, o, len(text))
                offsets = sorted(set(offsets))
            samples.append(TextSample(row, text, tuple(offsets)))
    return DatasetSplit(name or path.stem, tuple(samples))


def atomic_write_text(path: str | os.PathLike, content: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(content)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_dataset(split: DatasetSplit, path: str | os.PathLike, with_gold: bool = True) -> None:
    import io

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["spans", "text"] if with_gold else ["text"])
    for s in split.samples:
        writer.writerow([format_offsets(s.gold_offsets), s.text] if with_gold else [s.text])
    atomic_write_text(path, buf.getvalue())


def offsets_to_spans(offsets: Sequence[int]) -> list[Span]:
    """Maximal runs of consecutive offsets as half-open ``(start, end)`` spans."""
    spans: list[Span] = []
    prev = None
    for o in offsets:
        if prev is not None and o <= prev:
            raise ValueError(f"offsets must be sorted and unique (saw {o} after {prev})")
        if spans and o == prev + 1:
            spans[-1] = (spans[-1][0], o + 1)
        else:
            spans.append((o, o + 1))
        prev = o
    return spans


def spans_to_offsets(spans: Iterable[Span]) -> list[int]:
    out: set[int] = set()
    for start, end in spans:
        out.update(range(start, end))
    return sorted(out)


def is_punct(ch: str) -> bool:
    return ch in ASCII_PUNCT or unicodedata.category(ch).startswith("P")


def _words(text: str) -> list[Span]:
    words, start = [], None
    for i, ch in enumerate(text):
        if ch.isspace():
            if start is not None:
                words.append((start, i))
                start = None
        elif start is None:
            start = i
    if start is not None:
        words.append((start, len(text)))
    return words


def _clean_span(text: str, span: Span, words: list[Span]) -> set[int]:
    a, b = span
    while a < b and (text[a].isspace() or is_punct(text[a])):
        a += 1
    while b > a and (text[b - 1].isspace() or is_punct(text[b - 1])):
        b -= 1
    if a >= b:
        return set()
    keep = set(range(a, b))
    for ws, we in words:
        if we <= a or ws >= b:
            continue
        if a <= ws and we <= b:
            continue
        overlap = min(b, we) - max(a, ws)
        if 2 * overlap > we - ws:
            keep.update(range(ws, we))
        else:
            keep.difference_update(range(max(a, ws), min(b, we)))
    if not keep:
        return keep
    # dropping an edge word exposes the whitespace next to it
    lo, hi = min(keep), max(keep)
    while lo <= hi and text[lo].isspace():
        keep.discard(lo)
        lo += 1
    while hi >= lo and text[hi].isspace():
        keep.discard(hi)
        hi -= 1
    return keep


def clean_spans(sample: TextSample) -> TextSample:
    """Trim edge whitespace/punctuation of each gold span, then snap partial words.

    A partially covered word joins the span when strictly more than half of
    its characters are covered and leaves it otherwise. Words are maximal
    non-whitespace runs.

    The trim-and-snap pass is repeated until the offsets stop changing. A
    word added whole may carry edge punctuation; trimming it again can drop
    its coverage to half, so a single pass is not idempotent. After the
    first pass the offsets are a union of whole words and later passes only
    remove edge words, so the loop terminates.
    """
    words = _words(sample.text)
    current = tuple(sample.gold_offsets)
    while True:
        cleaned: set[int] = set()
        for span in offsets_to_spans(current):
            cleaned |= _clean_span(sample.text, span, words)
        nxt = tuple(sorted(cleaned))
        if nxt == current:
            return TextSample(sample.id, sample.text, nxt)
        current = nxt


def clean_split(split: DatasetSplit) -> DatasetSplit:
    return DatasetSplit(split.name, tuple(clean_spans(s) for s in split.samples))


def merge_splits(a: DatasetSplit, b: DatasetSplit, name: str | None = None) -> DatasetSplit:
    """Concatenate two splits, renumbering ids 0..n-1 in order a then b."""
    merged = [TextSample(i, s.text, s.gold_offsets) for i, s in enumerate((*a.samples, *b.samples))]
    return DatasetSplit(name or f"{a.name}+{b.name}", tuple(merged))
