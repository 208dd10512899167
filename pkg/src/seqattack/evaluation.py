"""Attack metrics: sentence BLEU, changed words, and report aggregation."""

from __future__ import annotations

import csv
import io
import math
from collections import Counter
from dataclasses import dataclass

CSV_HEADER = ("id", "mode", "k", "success", "bleu", "changed", "iters")


def _ngrams(seq, n):
    return Counter(tuple(seq[i : i + n]) for i in range(len(seq) - n + 1))


def bleu(candidate, reference, max_n: int = 4) -> float:
    """Sentence BLEU with add-one smoothing on orders 2 and above.

    Orders for which the candidate has no n-grams are left out of the
    geometric mean. A zero unigram precision gives 0.
    """
    candidate, reference = list(candidate), list(reference)
    if not candidate or not reference:
        return 0.0
    logs = []
    for n in range(1, max_n + 1):
        cand = _ngrams(candidate, n)
        total = sum(cand.values())
        if total == 0:
            continue
        ref = _ngrams(reference, n)
        match = sum(min(c, ref[g]) for g, c in cand.items())
        if n > 1:
            match, total = match + 1, total + 1
        if match == 0:
            return 0.0
        logs.append(math.log(match / total))
    c, r = len(candidate), len(reference)
    bp = 1.0 if c > r else math.exp(1.0 - r / c)
    return bp * math.exp(sum(logs) / len(logs))


def changed_words(original, adversarial) -> int:
    if len(original) != len(adversarial):
        raise ValueError(
            f"length mismatch: original {len(original)} vs adversarial {len(adversarial)}"
        )
    return sum(a != b for a, b in zip(original, adversarial))


@dataclass(frozen=True)
class SampleRow:
    id: str
    mode: str
    k: int
    success: bool
    bleu: float
    changed: int
    iters: int


@dataclass(frozen=True)
class AttackReport:
    rows: tuple[SampleRow, ...]
    success_rate: float
    mean_bleu: float
    mean_changed: float
    mean_iters: float
    successful_only: bool = False

    @property
    def success_pct(self) -> float:
        return 100.0 * self.success_rate

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.rows:
            w.writerow([r.id, r.mode, r.k, int(r.success), repr(r.bleu), r.changed, r.iters])
        modes = {r.mode for r in self.rows}
        ks = {r.k for r in self.rows}
        w.writerow(
            [
                "ALL",
                modes.pop() if len(modes) == 1 else "mixed",
                ks.pop() if len(ks) == 1 else "mixed",
                repr(self.success_rate),
                repr(self.mean_bleu),
                repr(self.mean_changed),
                repr(self.mean_iters),
            ]
        )
        return buf.getvalue()


def _mean(values):
    values = list(values)
    return math.fsum(values) / len(values) if values else float("nan")


def aggregate(rows, successful_only: bool = False) -> AttackReport:
    """Success rate over all rows; BLEU/changed/iteration means over all
    rows, or over successful rows only when ``successful_only``."""
    rows = tuple(rows)
    if not rows:
        raise ValueError("cannot aggregate an empty report")
    basis = [r for r in rows if r.success] if successful_only else rows
    return AttackReport(
        rows=rows,
        success_rate=sum(r.success for r in rows) / len(rows),
        mean_bleu=_mean(r.bleu for r in basis),
        mean_changed=_mean(r.changed for r in basis),
        mean_iters=_mean(r.iters for r in basis),
        successful_only=successful_only,
    )


def read_report_csv(text: str):
    """Parse a report CSV into ``(sample rows, aggregate dict)``."""
    reader = csv.DictReader(io.StringIO(text))
    rows, agg = [], None
    for rec in reader:
        if rec["id"] == "ALL":
            agg = {k: rec[k] for k in CSV_HEADER}
            continue
        rows.append(
            SampleRow(
                id=rec["id"],
                mode=rec["mode"],
                k=int(rec["k"]),
                success=rec["success"] == "1",
                bleu=float(rec["bleu"]),
                changed=int(rec["changed"]),
                iters=int(rec["iters"]),
            )
        )
    return rows, agg
