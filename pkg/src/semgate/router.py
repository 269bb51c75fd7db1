"""Margin gating and the selective feedback loop.

decide() is read-only on RouterState and safe to run concurrently across a
batch; feedback() returns a new state and is applied serially in record
order. Both moments and prototypes learn from accepted records only.
"""
from __future__ import annotations

import math
import sys
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .stats import MomentState, accumulate, adaptive_threshold, summarize, warmup_weight
from .teacher import (
    AnchorBank,
    PrototypeState,
    fuse,
    minmax_normalize,
    proto_scores,
    text_scores,
    update_prototypes,
)
from .types import (
    ConfigError,
    Decision,
    Phase,
    RecordError,
    RouterConfig,
    SkippedRecord,
    StreamRecord,
    argmax_label,
    as_logits,
    as_unit,
)

# exp() underflows to 0.0 below ~ -745; margins must stay strictly positive
_MIN_POSITIVE = 5e-324


@dataclass(frozen=True)
class RouterState:
    """Everything the gate learns online, plus the static anchor bank.

    anchors may be None when every record carries auditor_text_logits;
    embedding-only records then fail validation.
    """

    config: RouterConfig
    anchors: AnchorBank | None
    moments: tuple[MomentState, ...]
    protos: PrototypeState
    records_seen: int = 0


def init_state(config: RouterConfig, anchors: AnchorBank | None = None) -> RouterState:
    if anchors is not None:
        if anchors.num_classes != config.num_classes:
            raise ConfigError(
                f"anchor bank has {anchors.num_classes} classes, config says "
                f"{config.num_classes}"
            )
        if anchors.embed_dim != config.embed_dim:
            raise ConfigError(
                f"anchor bank dim {anchors.embed_dim} != config embed_dim "
                f"{config.embed_dim}"
            )
    return RouterState(
        config=config,
        anchors=anchors,
        moments=tuple(MomentState() for _ in range(config.num_classes)),
        protos=PrototypeState.empty(config.num_classes, config.embed_dim),
        records_seen=0,
    )


def margin(s_vlm: np.ndarray, victim_label: int) -> float:
    """Exponential gap between the victim's class score and the auditor's
    best other class: exp(s[y] - max_{i != y} s[i]).

    Always positive; > 1 exactly when the victim's class is the auditor's
    strict argmax; = 1 on a tie.
    """
    if s_vlm.shape[0] < 2:
        raise ValueError("margin needs at least two classes")
    others = np.delete(s_vlm, victim_label)
    gap = float(s_vlm[victim_label]) - float(others.max())
    try:
        delta = math.exp(gap)
    except OverflowError:
        return sys.float_info.max
    # exp underflows to 0.0 below ~-745; clamp both ends into the open
    # interval so downstream strict comparisons stay meaningful.
    return delta if delta > 0.0 else _MIN_POSITIVE


def _validate(record: StreamRecord, config: RouterConfig) -> None:
    as_logits(record.victim_logits, config.num_classes)
    if record.auditor_embedding is not None:
        as_unit(record.auditor_embedding, config.embed_dim)
    if record.auditor_text_logits is not None:
        as_logits(record.auditor_text_logits, config.num_classes)


def auditor_scores(record: StreamRecord, state: RouterState) -> np.ndarray:
    """Fused auditor score vector for one record.

    Text stream: the record's own text-side scores when present (min-max
    rescaled for generative sources), otherwise anchor cosines. Prototype
    stream: cosine against learned centroids, falling back to the text score
    for classes without a prototype; only blended when an embedding exists.
    """
    cfg = state.config
    if record.auditor_text_logits is not None:
        s_text = record.auditor_text_logits
        if cfg.generative_scores:
            s_text = minmax_normalize(s_text)
    else:
        if state.anchors is None:
            raise RecordError(
                f"record {record.id!r} is embedding-only but no anchor bank is loaded"
            )
        s_text = text_scores(record.auditor_embedding, state.anchors)
    if record.auditor_embedding is None:
        return s_text
    s_proto = proto_scores(record.auditor_embedding, state.protos, s_text)
    return fuse(s_text, s_proto, cfg.lambda_proto)


def class_thresholds(state: RouterState) -> list[float]:
    """Current acceptance threshold per class: the cold-start margin for
    classes with no accepted samples, else the skew-adjusted threshold with
    per-class warm-up dampening."""
    cfg = state.config
    out = []
    for ms in state.moments:
        if ms.n == 0:
            out.append(cfg.cold_margin)
        else:
            summary = summarize(ms, cfg)
            alpha = warmup_weight(ms.n, cfg)
            out.append(adaptive_threshold(summary, cfg.zeta, alpha))
    return out


def decide(
    record: StreamRecord,
    state: RouterState,
    _thresholds: Sequence[float] | None = None,
) -> Decision:
    """Gate one record against the current state; no mutation.

    _thresholds lets process_batch pin thresholds at batch start; values are
    identical to a fresh computation on the same state.
    """
    cfg = state.config
    _validate(record, cfg)
    victim_label = argmax_label(record.victim_logits)
    s_vlm = auditor_scores(record, state)
    auditor_label = argmax_label(s_vlm)
    delta = margin(s_vlm, victim_label)
    thresholds = class_thresholds(state) if _thresholds is None else _thresholds
    tau = float(thresholds[victim_label])
    accepted = delta > tau
    phase = Phase.WARMUP if state.records_seen < cfg.warmup_window else Phase.ADAPTIVE
    return Decision(
        record_id=record.id,
        victim_label=victim_label,
        auditor_label=auditor_label,
        margin=delta,
        threshold=tau,
        accepted=accepted,
        routed_label=victim_label if accepted else auditor_label,
        state_updated=accepted,
        phase=phase,
    )


def feedback(state: RouterState, record: StreamRecord, decision: Decision) -> RouterState:
    """Fold an accepted record into the state; rejected records only advance
    the stream counter."""
    if not decision.accepted:
        return replace(state, records_seen=state.records_seen + 1)
    k = decision.victim_label
    moments = list(state.moments)
    moments[k] = accumulate(moments[k], [decision.margin])
    protos = state.protos
    if record.auditor_embedding is not None:
        protos = update_prototypes(protos, {k: record.auditor_embedding[None, :]})
    return replace(
        state,
        moments=tuple(moments),
        protos=protos,
        records_seen=state.records_seen + 1,
    )


def process_batch(
    state: RouterState, batch: Sequence[StreamRecord]
) -> tuple[list[Decision | SkippedRecord], RouterState]:
    """Decide a whole batch against the batch-start state, then apply
    feedback in record order. Malformed records become SkippedRecord entries
    and leave the state untouched."""
    if len(batch) == 0:
        raise ValueError("batch must be non-empty")
    thresholds = class_thresholds(state)
    entries: list[Decision | SkippedRecord] = []
    decided: list[tuple[StreamRecord, Decision]] = []
    for rec in batch:
        try:
            d = decide(rec, state, _thresholds=thresholds)
        except RecordError as err:
            entries.append(SkippedRecord(record_id=str(getattr(rec, "id", "?")), error=str(err)))
            continue
        entries.append(d)
        decided.append((rec, d))
    new_state = state
    for rec, d in decided:
        new_state = feedback(new_state, rec, d)
    return entries, new_state


def run_stream(
    state: RouterState,
    records: Sequence[StreamRecord],
    batch_size: int = 256,
) -> tuple[list[Decision | SkippedRecord], RouterState]:
    """Convenience driver: process a record sequence in consecutive batches."""
    if batch_size < 1:
        raise ConfigError("batch_size must be >= 1")
    entries: list[Decision | SkippedRecord] = []
    for start in range(0, len(records), batch_size):
        out, state = process_batch(state, records[start : start + batch_size])
        entries.extend(out)
    return entries, state
