"""Data model and ingestion for tweet-level and aspect-level sentiment data.

Two on-disk formats are supported:

* tweet TSV: UTF-8, ``text<TAB>label`` per line, no header, lowercase labels;
* ABSA JSONL: one object per line with fields ``id, sentence_id, lang, text,
  aspect, span_start, span_end, polarity`` and optional ``perturbation,
  source_id``.  Spans are character offsets, end-exclusive.

All loaders are pure and everything here is safe to share across threads.
"""

from __future__ import annotations

import enum
import json
import logging
import os
import random
from dataclasses import dataclass, field

from .errors import (
    DataError,
    DuplicateIdError,
    EmptyDataError,
    MalformedLineError,
    MissingFieldError,
    SpanOutOfBoundsError,
    UnknownLabelError,
)

logger = logging.getLogger(__name__)

# Table-4 language codes plus English; anything else is accepted with a warning.
KNOWN_LANGS = frozenset({
    "af", "am", "ha", "ig", "ln", "lug", "nso", "nya", "run",
    "rw", "sn", "so", "st", "tn", "xh", "yo", "zu", "en",
})

PERTURBATION_KINDS = ("none", "revtgt", "revnon", "adddiff")


class Label(enum.Enum):
    """Three-way sentiment polarity.  Class order (used for argmax
    tie-breaking everywhere) is positive < negative < neutral."""

    POSITIVE = "positive"
    NEGATIVE = "negative"
    NEUTRAL = "neutral"

    @classmethod
    def parse(cls, s: str, *, path: str | None = None, line: int | None = None) -> "Label":
        try:
            return cls(s)
        except ValueError:
            raise UnknownLabelError(f"unknown label {s!r}", path=path, line=line) from None

    @property
    def index(self) -> int:
        return _LABEL_ORDER.index(self)

    def flipped(self) -> "Label":
        if self is Label.POSITIVE:
            return Label.NEGATIVE
        if self is Label.NEGATIVE:
            return Label.POSITIVE
        return Label.NEUTRAL


_LABEL_ORDER = (Label.POSITIVE, Label.NEGATIVE, Label.NEUTRAL)
LABELS = _LABEL_ORDER
NUM_CLASSES = 3


def label_from_index(i: int) -> Label:
    return _LABEL_ORDER[i]


@dataclass(frozen=True)
class LabeledText:
    id: str
    text: str
    label: Label
    lang: str
    domain: str = "original"  # original | paraphrased

    def __post_init__(self):
        if not self.text.strip():
            raise DataError("empty text", item_id=self.id)
        if self.domain not in ("original", "paraphrased"):
            raise DataError(f"bad domain {self.domain!r}", item_id=self.id)


@dataclass(frozen=True)
class AbsaInstance:
    id: str
    sentence_id: str
    lang: str
    text: str
    aspect: str
    span: tuple[int, int]  # character offsets, end-exclusive
    polarity: Label
    perturbation: str = "none"
    source_id: str | None = None

    def __post_init__(self):
        start, end = self.span
        if not (0 <= start < end <= len(self.text)):
            raise SpanOutOfBoundsError(
                f"span ({start},{end}) outside text of length {len(self.text)}",
                item_id=self.id)
        if self.perturbation not in PERTURBATION_KINDS:
            raise DataError(f"bad perturbation {self.perturbation!r}", item_id=self.id)
        if self.perturbation != "none" and not self.source_id:
            raise DataError("perturbed instance missing source_id", item_id=self.id)

    @property
    def span_text(self) -> str:
        return self.text[self.span[0]:self.span[1]]


@dataclass
class Dataset:
    kind: str  # tweet | absa
    items: list
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("tweet", "absa"):
            raise DataError(f"bad dataset kind {self.kind!r}")
        want = LabeledText if self.kind == "tweet" else AbsaInstance
        seen: set[str] = set()
        for it in self.items:
            if not isinstance(it, want):
                raise DataError(f"heterogeneous dataset: found {type(it).__name__} "
                                f"in a {self.kind} dataset")
            if it.id in seen:
                raise DuplicateIdError("duplicate id", item_id=it.id)
            seen.add(it.id)

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    def labels(self) -> list[Label]:
        key = "label" if self.kind == "tweet" else "polarity"
        return [getattr(it, key) for it in self.items]

    def by_sentence_id(self) -> dict[str, list[AbsaInstance]]:
        if self.kind != "absa":
            raise DataError("sentence grouping only applies to absa datasets")
        groups: dict[str, list[AbsaInstance]] = {}
        for it in self.items:
            groups.setdefault(it.sentence_id, []).append(it)
        return groups


def _warn_lang(lang: str, path: str | None, line: int | None) -> None:
    if lang not in KNOWN_LANGS:
        logger.warning("unrecognized language code %r (path=%s line=%s); accepting",
                       lang, path, line)


def load_tweets(path: str, lang: str) -> Dataset:
    """Load a two-column tweet TSV.  Ids are ``<filename>:<line-number>``."""
    name = os.path.basename(path)
    _warn_lang(lang, path, None)
    items: list[LabeledText] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            cols = line.split("\t")
            if len(cols) != 2:
                raise MalformedLineError(
                    f"expected 2 tab-separated columns, got {len(cols)}",
                    path=path, line=lineno)
            text, label_str = cols
            if not text.strip():
                raise MalformedLineError("empty text column", path=path, line=lineno)
            label = Label.parse(label_str.strip(), path=path, line=lineno)
            items.append(LabeledText(id=f"{name}:{lineno}", text=text.strip(),
                                     label=label, lang=lang))
    if not items:
        raise EmptyDataError("no usable lines", path=path)
    return Dataset(kind="tweet", items=items,
                   provenance={"source": path, "lang": lang, "format": "tsv"})


def save_tweets(dataset: Dataset, path: str) -> None:
    if dataset.kind != "tweet":
        raise DataError("save_tweets requires a tweet dataset")
    with open(path, "w", encoding="utf-8") as fh:
        for it in dataset.items:
            if "\t" in it.text or "\n" in it.text:
                raise DataError("text contains tab/newline, not TSV-serializable",
                                item_id=it.id)
            fh.write(f"{it.text}\t{it.label.value}\n")


_ABSA_REQUIRED = ("id", "sentence_id", "lang", "text", "aspect",
                  "span_start", "span_end", "polarity")


def load_absa(path: str) -> Dataset:
    """Load ABSA JSONL; validates spans against text length per line."""
    items: list[AbsaInstance] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as e:
                raise MalformedLineError(f"invalid JSON: {e.msg}",
                                         path=path, line=lineno) from None
            for key in _ABSA_REQUIRED:
                if key not in obj:
                    raise MissingFieldError("missing required field",
                                            path=path, line=lineno, field=key)
            _warn_lang(obj["lang"], path, lineno)
            polarity = Label.parse(obj["polarity"], path=path, line=lineno)
            try:
                inst = AbsaInstance(
                    id=str(obj["id"]),
                    sentence_id=str(obj["sentence_id"]),
                    lang=obj["lang"],
                    text=obj["text"],
                    aspect=obj["aspect"],
                    span=(int(obj["span_start"]), int(obj["span_end"])),
                    polarity=polarity,
                    perturbation=obj.get("perturbation", "none"),
                    source_id=obj.get("source_id"),
                )
            except DataError as e:
                raise type(e)(str(e), path=path, line=lineno) from None
            items.append(inst)
    if not items:
        raise EmptyDataError("no usable lines", path=path)
    return Dataset(kind="absa", items=items,
                   provenance={"source": path, "format": "jsonl"})


def absa_to_obj(inst: AbsaInstance) -> dict:
    obj = {
        "id": inst.id,
        "sentence_id": inst.sentence_id,
        "lang": inst.lang,
        "text": inst.text,
        "aspect": inst.aspect,
        "span_start": inst.span[0],
        "span_end": inst.span[1],
        "polarity": inst.polarity.value,
    }
    if inst.perturbation != "none":
        obj["perturbation"] = inst.perturbation
    if inst.source_id is not None:
        obj["source_id"] = inst.source_id
    return obj


def save_absa(items, path: str) -> None:
    """Write AbsaInstances (any iterable, or an absa Dataset) as JSONL."""
    if isinstance(items, Dataset):
        if items.kind != "absa":
            raise DataError("save_absa requires an absa dataset")
        items = items.items
    with open(path, "w", encoding="utf-8") as fh:
        for inst in items:
            fh.write(json.dumps(absa_to_obj(inst), ensure_ascii=False) + "\n")


def make_combined(d1: Dataset, d2: Dataset, seed: int) -> Dataset:
    """Union of two equal-sized same-kind datasets, deterministically shuffled.

    The 50-50 mix is exact because the paraphrased domain is a 1:1 image of
    the original, so the plain union is already half-and-half.
    """
    if d1.kind != d2.kind:
        raise DataError(f"kind mismatch: {d1.kind} vs {d2.kind}")
    if len(d1) != len(d2):
        raise DataError(f"size mismatch: {len(d1)} vs {len(d2)}")
    items = list(d1.items) + list(d2.items)
    random.Random(seed).shuffle(items)
    return Dataset(kind=d1.kind, items=items, provenance={
        "source_a": d1.provenance.get("source"),
        "source_b": d2.provenance.get("source"),
        "seed": seed,
        "combined": True,
    })


def _largest_remainder(n: int, ratios) -> list[int]:
    # Ties broken toward earlier parts (train first).
    exact = [n * r for r in ratios]
    sizes = [int(x) for x in exact]
    short = n - sum(sizes)
    order = sorted(range(len(ratios)), key=lambda i: (-(exact[i] - sizes[i]), i))
    for i in order[:short]:
        sizes[i] += 1
    return sizes


def split(d: Dataset, ratios: tuple[float, float, float], seed: int,
          stratify_by_label: bool = False) -> tuple[Dataset, Dataset, Dataset]:
    """Partition into (train, val, test) with largest-remainder sizing.

    With stratification, the per-label allocation uses largest remainder
    within each label, so each split's label counts are within one item of
    proportional.  Deterministic given the seed; for two datasets of equal
    length (and, when stratified, identical positional labels) the same seed
    yields the same index partition — this is what keeps original/paraphrased
    splits aligned in the CDA harness.
    """
    if any(r <= 0 for r in ratios):
        raise DataError(f"ratios must be positive, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise DataError(f"ratios must sum to 1, got {sum(ratios)!r}")
    if len(d) < 3:
        raise DataError(f"dataset too small to split ({len(d)} items)")
    return _split_impl(d, ratios, seed, stratify_by_label)


def _split_impl(d, ratios, seed, stratify_by_label):
    n = len(d)
    rng = random.Random(seed)
    parts: list[list[int]] = [[], [], []]
    if stratify_by_label:
        by_label: dict[Label, list[int]] = {lab: [] for lab in LABELS}
        for i, lab in enumerate(d.labels()):
            by_label[lab].append(i)
        for lab in LABELS:
            idxs = by_label[lab]
            if not idxs:
                continue
            rng.shuffle(idxs)
            sizes = _largest_remainder(len(idxs), ratios)
            pos = 0
            for p, sz in enumerate(sizes):
                parts[p].extend(idxs[pos:pos + sz])
                pos += sz
    else:
        idxs = list(range(n))
        rng.shuffle(idxs)
        sizes = _largest_remainder(n, ratios)
        pos = 0
        for p, sz in enumerate(sizes):
            parts[p] = idxs[pos:pos + sz]
            pos += sz
    names = ("train", "val", "test")
    out = []
    for name, idx_list in zip(names, parts):
        prov = dict(d.provenance)
        prov.update({"split": name, "split_seed": seed,
                     "split_ratios": list(ratios),
                     "stratified": stratify_by_label})
        out.append(Dataset(kind=d.kind, items=[d.items[i] for i in idx_list],
                           provenance=prov))
    return tuple(out)
