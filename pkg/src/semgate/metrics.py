"""Utility-centric evaluation of a decision log against ground truth.

All four rates condition on what actually reached the user (the routed
label), not on raw gate behaviour alone. Rates with an empty denominator
are reported as absent (None), never as zero.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .types import Decision, StreamRecord


class MetricsError(ValueError):
    """Decisions and records do not describe the same stream."""


@dataclass(frozen=True)
class EvalReport:
    """Rates plus every numerator/denominator behind them.

    ca:  P(routed = true | clean)
    asr: P(routed = target | poisoned, true != target)
    tpr: fraction of effective attacks (poisoned, victim predicted the
         target) that the gate rejected
    fpr: fraction of correctly-victim-classified clean samples the gate
         rejected
    """

    ca: float | None
    asr: float | None
    tpr: float | None
    fpr: float | None
    counts: Mapping[str, int] = field(default_factory=dict)


def _rate(num: int, den: int) -> float | None:
    return num / den if den > 0 else None


def evaluate(
    decisions: Sequence[Decision],
    records: Iterable[StreamRecord],
    target_label: int,
) -> EvalReport:
    """Score decisions against annotated records, aligned 1:1 by id."""
    by_id: dict[str, StreamRecord] = {}
    for rec in records:
        if rec.id in by_id:
            raise MetricsError(f"duplicate record id {rec.id!r}")
        by_id[rec.id] = rec
    seen = set()
    for d in decisions:
        if d.record_id not in by_id:
            raise MetricsError(f"decision {d.record_id!r} has no matching record")
        if d.record_id in seen:
            raise MetricsError(f"duplicate decision id {d.record_id!r}")
        seen.add(d.record_id)
    if len(seen) != len(by_id):
        missing = sorted(set(by_id) - seen)[:3]
        raise MetricsError(f"records without decisions, e.g. {missing}")

    excluded = 0
    clean = clean_routed_true = 0
    asr_den = asr_num = 0
    effective = effective_rejected = 0
    victim_correct_clean = victim_correct_rejected = 0

    for d in decisions:
        rec = by_id[d.record_id]
        if rec.eval_true_label is None or rec.eval_is_poisoned is None:
            excluded += 1
            continue
        true = rec.eval_true_label
        if rec.eval_is_poisoned:
            if true != target_label:
                asr_den += 1
                if d.routed_label == target_label:
                    asr_num += 1
            if d.victim_label == target_label:
                effective += 1
                if not d.accepted:
                    effective_rejected += 1
        else:
            clean += 1
            if d.routed_label == true:
                clean_routed_true += 1
            if d.victim_label == true:
                victim_correct_clean += 1
                if not d.accepted:
                    victim_correct_rejected += 1

    counts = {
        "records": len(decisions),
        "excluded_missing_eval": excluded,
        "clean": clean,
        "clean_routed_true": clean_routed_true,
        "asr_den": asr_den,
        "asr_num": asr_num,
        "effective_attacks": effective,
        "effective_rejected": effective_rejected,
        "victim_correct_clean": victim_correct_clean,
        "victim_correct_rejected": victim_correct_rejected,
    }
    return EvalReport(
        ca=_rate(clean_routed_true, clean),
        asr=_rate(asr_num, asr_den),
        tpr=_rate(effective_rejected, effective),
        fpr=_rate(victim_correct_rejected, victim_correct_clean),
        counts=counts,
    )


def format_report(report: EvalReport) -> str:
    """Human-readable summary lines followed by a machine-readable
    key=value block."""
    def show(rate):
        return "undefined" if rate is None else f"{rate:.4f}"

    lines = [
        f"clean accuracy        {show(report.ca)}"
        f"  ({report.counts['clean_routed_true']}/{report.counts['clean']})",
        f"attack success rate   {show(report.asr)}"
        f"  ({report.counts['asr_num']}/{report.counts['asr_den']})",
        f"true positive rate    {show(report.tpr)}"
        f"  ({report.counts['effective_rejected']}/{report.counts['effective_attacks']})",
        f"false positive rate   {show(report.fpr)}"
        f"  ({report.counts['victim_correct_rejected']}/{report.counts['victim_correct_clean']})",
        "",
    ]
    for name in ("ca", "asr", "tpr", "fpr"):
        value = getattr(report, name)
        lines.append(f"{name}={'' if value is None else repr(value)}")
    for key in sorted(report.counts):
        lines.append(f"count_{key}={report.counts[key]}")
    return "\n".join(lines)
