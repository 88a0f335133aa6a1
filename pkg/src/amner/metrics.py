"""Entity-level evaluation in three styles, plus annotator agreement.

* CoNLL: a predicted span counts only on an exact (start, end, type)
  match; precision/recall/F1 per type and micro-averaged overall.
* MUC: matched span pairs are classified COR / INC / PAR, unmatched gold
  spans are MIS, unmatched predictions SPU; partial matches earn half
  credit.
* SemEval: one matching pass scored four ways (strict, exact, partial,
  type).

Span matching for MUC/SemEval is greedy one-to-one: exact
boundary-plus-type pairs first, then exact-boundary pairs, then
remaining overlapping pairs by decreasing overlap (ties toward the
earlier gold start, then the earlier predicted start).  Scores are kept
as ratios in [0, 1]; rendering converts to percent.

Empty denominators follow the usual NER convention: precision or recall
is 0 when its denominator is 0, and F1 is 0 when precision + recall is 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .corpus import EntitySpan, Sentence, TagScheme, extract_spans


def f1_from_pr(p: float, r: float) -> float:
    """Harmonic mean; works for ratios and percentages alike."""
    if p + r == 0:
        return 0.0
    return 2.0 * p * r / (p + r)


def _safe_ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


def _check_aligned(gold: Sequence[Sentence], pred: Sequence[Sentence]) -> None:
    if len(gold) != len(pred):
        raise ValueError(
            f"corpora disagree: {len(gold)} gold sentences vs {len(pred)} predicted"
        )
    for idx, (g, p) in enumerate(zip(gold, pred)):
        if g.surfaces != p.surfaces:
            raise ValueError(f"sentence {idx}: token structure differs between corpora")


# ---------------------------------------------------------------------------
# CoNLL


@dataclass
class ConllTally:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def precision(self) -> float:
        return _safe_ratio(self.tp, self.tp + self.fp)

    @property
    def recall(self) -> float:
        return _safe_ratio(self.tp, self.tp + self.fn)

    @property
    def f1(self) -> float:
        return f1_from_pr(self.precision, self.recall)


@dataclass
class ConllResult:
    per_type: dict[str, ConllTally]
    overall: ConllTally


def conll_evaluate(
    gold: Sequence[Sentence],
    pred: Sequence[Sentence],
    scheme: TagScheme = TagScheme.IOB2,
) -> ConllResult:
    """Exact-match entity scoring over aligned corpora."""
    _check_aligned(gold, pred)
    per_type: dict[str, ConllTally] = {}
    overall = ConllTally()
    for g_sentence, p_sentence in zip(gold, pred):
        g_spans = set(extract_spans(g_sentence, scheme))
        p_spans = set(extract_spans(p_sentence, scheme))
        for span in p_spans:
            tally = per_type.setdefault(span.etype, ConllTally())
            if span in g_spans:
                tally.tp += 1
                overall.tp += 1
            else:
                tally.fp += 1
                overall.fp += 1
        for span in g_spans - p_spans:
            per_type.setdefault(span.etype, ConllTally()).fn += 1
            overall.fn += 1
    return ConllResult(dict(sorted(per_type.items())), overall)


# ---------------------------------------------------------------------------
# Span matching shared by MUC and SemEval


def _overlap(a: EntitySpan, b: EntitySpan) -> int:
    return max(0, min(a.end, b.end) - max(a.start, b.start))


def match_spans(
    gold: Sequence[EntitySpan], pred: Sequence[EntitySpan]
) -> tuple[list[tuple[EntitySpan, EntitySpan]], list[EntitySpan], list[EntitySpan]]:
    """Greedy one-to-one matching; returns (pairs, missed gold, spurious pred)."""
    gold = sorted(gold)
    pred = sorted(pred)
    gold_free = set(range(len(gold)))
    pred_free = set(range(len(pred)))
    pairs: list[tuple[EntitySpan, EntitySpan]] = []

    def take(gi: int, pi: int) -> None:
        gold_free.discard(gi)
        pred_free.discard(pi)
        pairs.append((gold[gi], pred[pi]))

    by_bounds = {(span.start, span.end): pi for pi, span in enumerate(pred)}
    for gi, g_span in enumerate(gold):  # exact boundary + type
        pi = by_bounds.get((g_span.start, g_span.end))
        if pi is not None and pi in pred_free and pred[pi].etype == g_span.etype:
            take(gi, pi)
    for gi in sorted(gold_free):  # exact boundary, any type
        pi = by_bounds.get((gold[gi].start, gold[gi].end))
        if pi is not None and pi in pred_free:
            take(gi, pi)

    candidates = sorted(
        (
            (-_overlap(gold[gi], pred[pi]), gold[gi].start, pred[pi].start, gi, pi)
            for gi in gold_free
            for pi in pred_free
            if _overlap(gold[gi], pred[pi]) > 0
        ),
    )
    for _, _, _, gi, pi in candidates:
        if gi in gold_free and pi in pred_free:
            take(gi, pi)

    missed = [gold[gi] for gi in sorted(gold_free)]
    spurious = [pred[pi] for pi in sorted(pred_free)]
    return pairs, missed, spurious


# ---------------------------------------------------------------------------
# MUC


@dataclass
class MucTally:
    cor: int = 0
    inc: int = 0
    par: int = 0
    mis: int = 0
    spu: int = 0

    @property
    def possible(self) -> int:
        return self.cor + self.inc + self.par + self.mis

    @property
    def actual(self) -> int:
        return self.cor + self.inc + self.par + self.spu

    @property
    def precision(self) -> float:
        return _safe_ratio(self.cor + 0.5 * self.par, self.actual)

    @property
    def recall(self) -> float:
        return _safe_ratio(self.cor + 0.5 * self.par, self.possible)

    @property
    def f1(self) -> float:
        return f1_from_pr(self.precision, self.recall)


def muc_evaluate(
    gold: Sequence[Sentence],
    pred: Sequence[Sentence],
    scheme: TagScheme = TagScheme.IOB2,
) -> MucTally:
    """MUC categories over aligned corpora.

    A matched pair is COR when boundaries and type agree, INC when the
    boundaries agree but the type does not, and PAR when the boundaries
    merely overlap.
    """
    _check_aligned(gold, pred)
    tally = MucTally()
    for g_sentence, p_sentence in zip(gold, pred):
        pairs, missed, spurious = match_spans(
            extract_spans(g_sentence, scheme), extract_spans(p_sentence, scheme)
        )
        for g_span, p_span in pairs:
            same_bounds = (g_span.start, g_span.end) == (p_span.start, p_span.end)
            if same_bounds and g_span.etype == p_span.etype:
                tally.cor += 1
            elif same_bounds:
                tally.inc += 1
            else:
                tally.par += 1
        tally.mis += len(missed)
        tally.spu += len(spurious)
    return tally


# ---------------------------------------------------------------------------
# SemEval


SEMEVAL_MODES = ("strict", "exact", "partial", "type")


@dataclass
class SemevalReport:
    modes: dict[str, MucTally] = field(default_factory=dict)

    def precision(self, mode: str) -> float:
        return self.modes[mode].precision

    def recall(self, mode: str) -> float:
        return self.modes[mode].recall

    def f1(self, mode: str) -> float:
        return self.modes[mode].f1


def semeval_evaluate(
    gold: Sequence[Sentence],
    pred: Sequence[Sentence],
    scheme: TagScheme = TagScheme.IOB2,
) -> SemevalReport:
    """Score one matching pass four ways.

    strict: boundaries and type must agree.  exact: boundaries must
    agree, type is ignored.  partial: exact boundaries count fully,
    overlapping boundaries earn half credit.  type: the types must agree
    on any overlapping pair.
    """
    _check_aligned(gold, pred)
    report = SemevalReport({mode: MucTally() for mode in SEMEVAL_MODES})
    for g_sentence, p_sentence in zip(gold, pred):
        pairs, missed, spurious = match_spans(
            extract_spans(g_sentence, scheme), extract_spans(p_sentence, scheme)
        )
        for g_span, p_span in pairs:
            same_bounds = (g_span.start, g_span.end) == (p_span.start, p_span.end)
            same_type = g_span.etype == p_span.etype

            strict = report.modes["strict"]
            if same_bounds and same_type:
                strict.cor += 1
            else:
                strict.inc += 1

            exact = report.modes["exact"]
            if same_bounds:
                exact.cor += 1
            else:
                exact.inc += 1

            partial = report.modes["partial"]
            if same_bounds:
                partial.cor += 1
            else:
                partial.par += 1

            typed = report.modes["type"]
            if same_type:
                typed.cor += 1
            else:
                typed.inc += 1
        for tally in report.modes.values():
            tally.mis += len(missed)
            tally.spu += len(spurious)
    return report


# ---------------------------------------------------------------------------
# Cohen's kappa


@dataclass
class AgreementTable:
    """Square confusion matrix of two annotators over the same items."""

    labels: list[str]
    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        n = len(self.labels)
        if self.counts.shape != (n, n):
            raise ValueError(f"counts must be {n}x{n}, got {self.counts.shape}")
        if np.any(self.counts < 0):
            raise ValueError("counts must be non-negative")

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def observed_agreement(self) -> float:
        return float(np.trace(self.counts)) / self.total

    @property
    def chance_agreement(self) -> float:
        total = self.total
        rows = self.counts.sum(axis=1) / total
        cols = self.counts.sum(axis=0) / total
        return float(rows @ cols)


def agreement_from_labels(a: Sequence[str], b: Sequence[str]) -> AgreementTable:
    """Confusion table for two annotators' label sequences over the same items."""
    if len(a) != len(b):
        raise ValueError(f"annotators labeled {len(a)} vs {len(b)} items")
    labels = sorted(set(a) | set(b))
    index = {label: i for i, label in enumerate(labels)}
    counts = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for la, lb in zip(a, b):
        counts[index[la], index[lb]] += 1
    return AgreementTable(labels, counts)


def cohen_kappa(table: AgreementTable) -> float:
    """(p_o - p_e) / (1 - p_e) for a two-annotator confusion table."""
    if table.total < 1:
        raise ValueError("agreement table is empty")
    p_e = table.chance_agreement
    if p_e >= 1.0:
        raise ValueError("agreement by chance is total: kappa is undefined")
    return (table.observed_agreement - p_e) / (1.0 - p_e)


_KAPPA_BANDS = (
    (0.21, "Slight agreement"),
    (0.41, "Fair agreement"),
    (0.61, "Moderate agreement"),
    (0.81, "Substantial agreement"),
    (1.0, "Near perfect agreement"),
)


def interpret_kappa(k: float) -> str:
    """Band label for a kappa value; bands are half-open at the top."""
    if k > 1.0:
        raise ValueError(f"kappa {k} exceeds 1")
    if k <= 0.0:
        return "Agreement equivalent to chance"
    for upper, label in _KAPPA_BANDS:
        if k < upper:
            return label
    return "Perfect agreement"


# ---------------------------------------------------------------------------
# Rendering


def _pct(value: float) -> str:
    return f"{100.0 * value:.2f}"


def render_conll(result: ConllResult, fmt: str = "text") -> str:
    lines: list[str] = []
    if fmt == "kv":
        for etype, tally in result.per_type.items():
            lines.append(f"type.{etype}.tp {tally.tp}")
            lines.append(f"type.{etype}.fp {tally.fp}")
            lines.append(f"type.{etype}.fn {tally.fn}")
            lines.append(f"type.{etype}.precision {tally.precision!r}")
            lines.append(f"type.{etype}.recall {tally.recall!r}")
            lines.append(f"type.{etype}.f1 {tally.f1!r}")
        o = result.overall
        lines.extend(
            [
                f"overall.tp {o.tp}", f"overall.fp {o.fp}", f"overall.fn {o.fn}",
                f"overall.precision {o.precision!r}",
                f"overall.recall {o.recall!r}",
                f"overall.f1 {o.f1!r}",
            ]
        )
    elif fmt == "text":
        width = max([7] + [len(t) for t in result.per_type])
        lines.append(f"{'type':<{width}}  {'prec':>7}  {'recall':>7}  {'f1':>7}  {'tp':>5} {'fp':>5} {'fn':>5}")
        for etype, tally in result.per_type.items():
            lines.append(
                f"{etype:<{width}}  {_pct(tally.precision):>7}  {_pct(tally.recall):>7}  "
                f"{_pct(tally.f1):>7}  {tally.tp:>5} {tally.fp:>5} {tally.fn:>5}"
            )
        o = result.overall
        lines.append(
            f"{'overall':<{width}}  {_pct(o.precision):>7}  {_pct(o.recall):>7}  "
            f"{_pct(o.f1):>7}  {o.tp:>5} {o.fp:>5} {o.fn:>5}"
        )
    else:
        raise ValueError(f"unknown format {fmt!r}")
    return "\n".join(lines) + "\n"


def _muc_kv(prefix: str, tally: MucTally) -> list[str]:
    return [
        f"{prefix}cor {tally.cor}",
        f"{prefix}inc {tally.inc}",
        f"{prefix}par {tally.par}",
        f"{prefix}mis {tally.mis}",
        f"{prefix}spu {tally.spu}",
        f"{prefix}possible {tally.possible}",
        f"{prefix}actual {tally.actual}",
        f"{prefix}precision {tally.precision!r}",
        f"{prefix}recall {tally.recall!r}",
        f"{prefix}f1 {tally.f1!r}",
    ]


def render_muc(tally: MucTally, fmt: str = "text") -> str:
    if fmt == "kv":
        return "\n".join(_muc_kv("", tally)) + "\n"
    if fmt == "text":
        lines = [
            f"COR {tally.cor}  INC {tally.inc}  PAR {tally.par}  "
            f"MIS {tally.mis}  SPU {tally.spu}",
            f"possible {tally.possible}  actual {tally.actual}",
            f"precision {_pct(tally.precision)}  recall {_pct(tally.recall)}  f1 {_pct(tally.f1)}",
        ]
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown format {fmt!r}")


def render_semeval(report: SemevalReport, fmt: str = "text") -> str:
    if fmt == "kv":
        lines: list[str] = []
        for mode in SEMEVAL_MODES:
            lines.extend(_muc_kv(f"{mode}.", report.modes[mode]))
        return "\n".join(lines) + "\n"
    if fmt == "text":
        lines = [f"{'mode':<8}  {'prec':>7}  {'recall':>7}  {'f1':>7}"]
        for mode in SEMEVAL_MODES:
            tally = report.modes[mode]
            lines.append(
                f"{mode:<8}  {_pct(tally.precision):>7}  {_pct(tally.recall):>7}  {_pct(tally.f1):>7}"
            )
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown format {fmt!r}")
