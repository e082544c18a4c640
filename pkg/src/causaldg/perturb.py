"""ARTS-style perturbation suites for aspect-sentiment data.

Three perturbations, driven by a sentiment lexicon with antonym pairs:

* RevTgt — flip sentiment terms near the target aspect; gold flips;
* RevNon — flip sentiment terms near non-target (sibling) aspects; gold
  unchanged; the target's window is never edited;
* AddDiff — append distractor clauses of polarity different from gold;
  gold unchanged.

Scoping is window-based (+/- ``window`` tokens around an aspect mention),
a parser-free approximation of dependency scoping; this is known to be
coarse for free-word-order languages.  Skipped instances are data, not
errors.  The Aspect Robustness Score counts a group correct only when the
original and every variant are predicted correctly.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, replace

from .corpus import AbsaInstance, Dataset, Label
from .errors import (
    DataError,
    EmptyDistractorPoolError,
    LexiconValidationError,
    MissingFieldError,
    MissingPredictionError,
)
from .text import TokenSeq, normalize_token, preprocess

DEFAULT_WINDOW = 5
MAX_ADDED_CLAUSES = 3


def _norm_term(term: str) -> str:
    return " ".join(normalize_token(t) for t in term.split())


@dataclass(frozen=True)
class LexiconEntry:
    term: str
    polarity: Label
    antonym: str


class SentimentLexicon:
    """term -> (polarity, antonym); antonyms must exist in the lexicon with
    the opposite polarity (validated).  Terms may be multi-token."""

    def __init__(self, entries: list[LexiconEntry]):
        self.entries: dict[str, LexiconEntry] = {}
        for e in entries:
            if e.polarity is Label.NEUTRAL:
                raise LexiconValidationError(
                    f"lexicon term {e.term!r} has neutral polarity")
            self.entries[_norm_term(e.term)] = e
        for key, e in self.entries.items():
            anto = self.entries.get(_norm_term(e.antonym))
            if anto is None:
                raise LexiconValidationError(
                    f"antonym {e.antonym!r} of {e.term!r} not in lexicon")
            if anto.polarity is e.polarity:
                raise LexiconValidationError(
                    f"antonym {e.antonym!r} of {e.term!r} has same polarity")
        self.max_term_tokens = max((len(k.split()) for k in self.entries), default=1)

    def __len__(self) -> int:
        return len(self.entries)

    def lookup(self, tokens: tuple[str, ...]) -> LexiconEntry | None:
        return self.entries.get(" ".join(tokens))

    @classmethod
    def load(cls, path: str) -> "SentimentLexicon":
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
        if "entries" not in obj:
            raise MissingFieldError("lexicon JSON missing 'entries'", path=path,
                                    field="entries")
        entries = []
        for i, e in enumerate(obj["entries"]):
            for k in ("term", "polarity", "antonym"):
                if k not in e:
                    raise MissingFieldError("lexicon entry missing field",
                                            path=path, line=i, field=k)
            entries.append(LexiconEntry(term=e["term"],
                                        polarity=Label.parse(e["polarity"], path=path),
                                        antonym=e["antonym"]))
        return cls(entries)


@dataclass(frozen=True)
class DistractorEntry:
    aspect: str
    clause: str
    polarity: Label


def load_distractors(path: str) -> list[DistractorEntry]:
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    if "distractors" not in obj:
        raise MissingFieldError("distractor JSON missing 'distractors'",
                                path=path, field="distractors")
    out = []
    for i, e in enumerate(obj["distractors"]):
        for k in ("aspect", "clause", "polarity"):
            if k not in e:
                raise MissingFieldError("distractor entry missing field",
                                        path=path, line=i, field=k)
        out.append(DistractorEntry(aspect=e["aspect"], clause=e["clause"],
                                   polarity=Label.parse(e["polarity"], path=path)))
    return out


@dataclass(frozen=True)
class Skipped:
    source_id: str
    kind: str
    reason: str


@dataclass(frozen=True)
class PerturbationGroup:
    original: AbsaInstance
    variants: tuple[AbsaInstance, ...]


def _aspect_token_range(tseq: TokenSeq, span: tuple[int, int]) -> tuple[int, int] | None:
    """Indices (first, last) of tokens overlapping the aspect char span."""
    hits = [i for i, (s, e) in enumerate(tseq.token_char_spans)
            if s < span[1] and e > span[0]]
    if not hits:
        return None
    return hits[0], hits[-1]


def _find_matches(tseq: TokenSeq, lex: SentimentLexicon, allowed: set[int]):
    """Leftmost-longest lexicon matches over contiguous allowed tokens."""
    matches = []
    i = 0
    L = len(tseq.tokens)
    while i < L:
        if i not in allowed:
            i += 1
            continue
        found = None
        for n in range(min(lex.max_term_tokens, L - i), 0, -1):
            idxs = range(i, i + n)
            if all(j in allowed for j in idxs):
                entry = lex.lookup(tseq.tokens[i:i + n])
                if entry is not None:
                    found = (i, i + n - 1, entry)
                    break
        if found:
            matches.append(found)
            i = found[1] + 1
        else:
            i += 1
    return matches


def _apply_replacements(text: str, repls: list[tuple[tuple[int, int], str]],
                        aspect_span: tuple[int, int]) -> tuple[str, tuple[int, int]]:
    """Splice replacements (disjoint, outside the aspect span) into the text
    and shift the aspect span accordingly."""
    repls = sorted(repls, key=lambda r: r[0][0])
    out = []
    pos = 0
    shift_before_aspect = 0
    for (s, e), new in repls:
        if s < aspect_span[1] and e > aspect_span[0]:
            raise ValueError("replacement overlaps the aspect span")
        out.append(text[pos:s])
        out.append(new)
        pos = e
        if e <= aspect_span[0]:
            shift_before_aspect += len(new) - (e - s)
    out.append(text[pos:])
    new_span = (aspect_span[0] + shift_before_aspect,
                aspect_span[1] + shift_before_aspect)
    return "".join(out), new_span


def _window_indices(rng_pair: tuple[int, int], width: int, n_tokens: int) -> set[int]:
    lo, hi = rng_pair
    return set(range(max(0, lo - width), min(n_tokens, hi + width + 1)))


def rev_tgt(inst: AbsaInstance, lex: SentimentLexicon,
            window: int = DEFAULT_WINDOW) -> AbsaInstance | Skipped:
    """Reverse the target aspect's sentiment: replace every lexicon term
    within the window around the aspect with its antonym; gold flips.
    Neutral-gold targets are skipped rather than guessed."""
    if inst.polarity is Label.NEUTRAL:
        return Skipped(inst.id, "revtgt", "neutral_target")
    tseq = preprocess(inst.text)
    arange = _aspect_token_range(tseq, inst.span)
    if arange is None:
        return Skipped(inst.id, "revtgt", "aspect_tokens_not_found")
    own = set(range(arange[0], arange[1] + 1))
    allowed = _window_indices(arange, window, len(tseq.tokens)) - own
    matches = _find_matches(tseq, lex, allowed)
    if not matches:
        return Skipped(inst.id, "revtgt", "no_sentiment_term")
    repls = [((tseq.token_char_spans[i][0], tseq.token_char_spans[j][1]), m.antonym)
             for i, j, m in matches]
    new_text, new_span = _apply_replacements(inst.text, repls, inst.span)
    return replace(inst, id=f"{inst.id}:revtgt", text=new_text, span=new_span,
                   polarity=inst.polarity.flipped(), perturbation="revtgt",
                   source_id=inst.id)


def rev_non(inst: AbsaInstance, siblings: list[AbsaInstance], lex: SentimentLexicon,
            window: int = DEFAULT_WINDOW) -> AbsaInstance | Skipped:
    """Reverse sentiment around each non-target sibling aspect.  Tokens in
    the target's window are never edited (overlaps resolve to the target);
    gold is unchanged."""
    siblings = [s for s in siblings
                if s.sentence_id == inst.sentence_id and s.id != inst.id]
    if not siblings:
        return Skipped(inst.id, "revnon", "no_non_target")
    tseq = preprocess(inst.text)
    n_tok = len(tseq.tokens)
    arange = _aspect_token_range(tseq, inst.span)
    if arange is None:
        return Skipped(inst.id, "revnon", "aspect_tokens_not_found")
    protected = _window_indices(arange, window, n_tok)
    matches = []
    claimed: set[int] = set()
    for sib in siblings:
        if sib.span[1] > len(inst.text):
            continue  # sibling annotated against a different text; cannot scope
        srange = _aspect_token_range(tseq, sib.span)
        if srange is None:
            continue
        own = set(range(srange[0], srange[1] + 1))
        allowed = _window_indices(srange, window, n_tok) - protected - own - claimed
        for i, j, entry in _find_matches(tseq, lex, allowed):
            matches.append((i, j, entry))
            claimed.update(range(i, j + 1))
    if not matches:
        return Skipped(inst.id, "revnon", "no_sentiment_term")
    repls = [((tseq.token_char_spans[i][0], tseq.token_char_spans[j][1]), m.antonym)
             for i, j, m in matches]
    new_text, new_span = _apply_replacements(inst.text, repls, inst.span)
    return replace(inst, id=f"{inst.id}:revnon", text=new_text, span=new_span,
                   perturbation="revnon", source_id=inst.id)


def _join_clauses(clauses: list[str]) -> str:
    if len(clauses) == 1:
        return clauses[0]
    return ", ".join(clauses[:-1]) + " and " + clauses[-1]


def add_diff(inst: AbsaInstance, distractors: list[DistractorEntry], seed: int = 0,
             max_clauses: int = MAX_ADDED_CLAUSES) -> AbsaInstance:
    """Append up to ``max_clauses`` distractor clauses whose polarity differs
    from gold (opposite polarity; for neutral gold, any non-neutral).  Gold
    and the aspect span are unchanged; selection is a seeded draw emitted in
    pool order."""
    if inst.polarity is Label.NEUTRAL:
        eligible = [d for d in distractors
                    if d.aspect != inst.aspect and d.polarity is not Label.NEUTRAL]
    else:
        eligible = [d for d in distractors
                    if d.aspect != inst.aspect and d.polarity is inst.polarity.flipped()]
    if not eligible:
        raise EmptyDistractorPoolError(
            "no usable distractors (need a different aspect and polarity)",
            item_id=inst.id)
    rng = random.Random(seed)
    k = min(max_clauses, len(eligible))
    chosen = sorted(rng.sample(range(len(eligible)), k))
    clauses = [eligible[i].clause for i in chosen]
    body, tail = (inst.text[:-1], ".") if inst.text.endswith(".") else (inst.text, "")
    new_text = body + ", but " + _join_clauses(clauses) + tail
    return replace(inst, id=f"{inst.id}:adddiff", text=new_text,
                   perturbation="adddiff", source_id=inst.id)


def ars(groups: list[PerturbationGroup], predictions: dict[str, Label]) -> float:
    """Aspect Robustness Score: fraction of groups whose original AND every
    variant are predicted correctly."""
    if not groups:
        raise DataError("cannot score an empty group list")
    correct = 0
    for g in groups:
        for item in (g.original, *g.variants):
            if item.id not in predictions:
                raise MissingPredictionError("missing prediction", item_id=item.id)
        ok = predictions[g.original.id] is g.original.polarity and all(
            predictions[v.id] is v.polarity for v in g.variants)
        correct += ok
    return correct / len(groups)


@dataclass
class SuiteResult:
    revtgt: list[AbsaInstance]
    revnon: list[AbsaInstance]
    adddiff: list[AbsaInstance]
    skips: list[Skipped]
    groups: list[PerturbationGroup]


def build_suites(dataset: Dataset, lex: SentimentLexicon,
                 distractors: list[DistractorEntry], window: int = DEFAULT_WINDOW,
                 seed: int = 0, max_clauses: int = MAX_ADDED_CLAUSES) -> SuiteResult:
    """Generate all three suites over a dataset.  Sibling instances are
    discovered by sentence_id.  Each instance's AddDiff draw is seeded from
    (seed, position) so whole-suite generation is deterministic."""
    by_sentence = dataset.by_sentence_id()
    result = SuiteResult([], [], [], [], [])
    for pos, inst in enumerate(dataset.items):
        variants = []
        rt = rev_tgt(inst, lex, window)
        if isinstance(rt, Skipped):
            result.skips.append(rt)
        else:
            result.revtgt.append(rt)
            variants.append(rt)
        rn = rev_non(inst, by_sentence[inst.sentence_id], lex, window)
        if isinstance(rn, Skipped):
            result.skips.append(rn)
        else:
            result.revnon.append(rn)
            variants.append(rn)
        try:
            ad = add_diff(inst, distractors, seed=seed + pos, max_clauses=max_clauses)
            result.adddiff.append(ad)
            variants.append(ad)
        except EmptyDistractorPoolError:
            result.skips.append(Skipped(inst.id, "adddiff", "empty_pool"))
        result.groups.append(PerturbationGroup(original=inst, variants=tuple(variants)))
    return result
