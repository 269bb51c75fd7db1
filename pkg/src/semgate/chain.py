"""Two-stage trust chain: a weak-but-trusted generalist audits a strong
specialist, then the (possibly sanitized) specialist audits the victim.

Stage 1 treats the specialist's argmax as the suspicious prediction and the
generalist as the auditor. When stage 1 rejects, the specialist's verdict is
either replaced by the generalist's fused score vector ("replace" mode) or
the record is quarantined without a stage-2 hearing ("drop" mode). Stage 2
is the ordinary router run over victim logits with the effective specialist
scores as the text channel.

A colluding specialist that confirms the victim's backdoor gets caught at
stage 1, so its endorsement never reaches stage 2 unsanitized; a single
router wired straight to the specialist would wave those records through.

Stage-1 acceptance also gates stage-2 prototype updates: only records whose
specialist verdict survived the audit may teach stage 2 what classes look
like. Margin moments at stage 2 follow stage-2 acceptance as usual.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .router import (
    RouterState,
    auditor_scores,
    class_thresholds,
    decide,
    feedback,
    init_state,
)
from .sim import SimConfig, ScenarioSpec, make_geometry, gen_record, record_rng
from .teacher import AnchorBank
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

CHAIN_MODES = ("replace", "drop")


@dataclass(frozen=True, eq=False)
class ChainRecord:
    """One stream element for the chained pipeline.

    specialist_scores is the untrusted auditor's full score vector (it is
    the thing on trial at stage 1); at least one generalist channel must be
    present to audit it.
    """

    id: str
    victim_logits: np.ndarray
    specialist_scores: np.ndarray
    generalist_embedding: np.ndarray | None = None
    generalist_scores: np.ndarray | None = None
    specialist_embedding: np.ndarray | None = None
    eval_true_label: int | None = None
    eval_is_poisoned: bool | None = None

    def __post_init__(self):
        if not isinstance(self.id, str) or not self.id:
            raise RecordError("record id must be a non-empty string")
        object.__setattr__(self, "victim_logits", as_logits(self.victim_logits))
        k = self.victim_logits.shape[0]
        object.__setattr__(
            self, "specialist_scores", as_logits(self.specialist_scores, k)
        )
        if self.generalist_scores is not None:
            object.__setattr__(
                self, "generalist_scores", as_logits(self.generalist_scores, k)
            )
        for name in ("generalist_embedding", "specialist_embedding"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, as_unit(value))
        if self.generalist_embedding is None and self.generalist_scores is None:
            raise RecordError(
                f"record {self.id!r} carries no generalist channel to audit with"
            )

    def without_eval(self) -> "ChainRecord":
        if self.eval_true_label is None and self.eval_is_poisoned is None:
            return self
        return ChainRecord(
            id=self.id,
            victim_logits=self.victim_logits,
            specialist_scores=self.specialist_scores,
            generalist_embedding=self.generalist_embedding,
            generalist_scores=self.generalist_scores,
            specialist_embedding=self.specialist_embedding,
        )


@dataclass(frozen=True)
class ChainConfig:
    mode: str = "replace"
    freeze_stage1: bool = False
    # Bypass the stage-1 gate entirely; with the gate open the chain must
    # reproduce a single router over the specialist channel exactly.
    stage1_always_accept: bool = False

    def __post_init__(self):
        if self.mode not in CHAIN_MODES:
            raise ConfigError(f"mode must be one of {CHAIN_MODES}, got {self.mode!r}")


@dataclass(frozen=True)
class ChainState:
    stage1: RouterState
    stage2: RouterState
    chain_config: ChainConfig


@dataclass(frozen=True)
class ChainOutcome:
    """Per-record result: the outward decision plus stage-1 diagnostics."""

    final: Decision
    stage1: Decision | None
    sanitized: bool


def init_chain_state(
    config: RouterConfig,
    generalist_anchors: AnchorBank | None = None,
    chain_config: ChainConfig = ChainConfig(),
) -> ChainState:
    return ChainState(
        stage1=init_state(config, generalist_anchors),
        stage2=init_state(config, None),
        chain_config=chain_config,
    )


def _stage1_record(record: ChainRecord) -> StreamRecord:
    # The specialist's verdict plays the victim role at stage 1.
    return StreamRecord(
        id=record.id,
        victim_logits=record.specialist_scores,
        auditor_embedding=record.generalist_embedding,
        auditor_text_logits=record.generalist_scores,
    )


def _stage2_record(record: ChainRecord, effective_scores: np.ndarray) -> StreamRecord:
    return StreamRecord(
        id=record.id,
        victim_logits=record.victim_logits,
        auditor_embedding=record.specialist_embedding,
        auditor_text_logits=effective_scores,
    )


def to_direct_record(record: ChainRecord) -> StreamRecord:
    """The unchained baseline: specialist audits the victim, nobody audits
    the specialist."""
    return StreamRecord(
        id=record.id,
        victim_logits=record.victim_logits,
        auditor_embedding=record.specialist_embedding,
        auditor_text_logits=record.specialist_scores,
        eval_true_label=record.eval_true_label,
        eval_is_poisoned=record.eval_is_poisoned,
    )


def _quarantine_decision(record: ChainRecord, s1: Decision, state: ChainState) -> Decision:
    # Drop mode, stage-1 reject: no stage-2 hearing. The outward decision
    # carries the stage-1 evidence and routes to the generalist's argmax.
    phase = (
        Phase.WARMUP
        if state.stage2.records_seen < state.stage2.config.warmup_window
        else Phase.ADAPTIVE
    )
    return Decision(
        record_id=record.id,
        victim_label=argmax_label(record.victim_logits),
        auditor_label=s1.auditor_label,
        margin=s1.margin,
        threshold=s1.threshold,
        accepted=False,
        routed_label=s1.auditor_label,
        state_updated=False,
        phase=phase,
    )


def chain_decide(
    record: ChainRecord,
    state: ChainState,
    _s1_thresholds: np.ndarray | None = None,
    _s2_thresholds: np.ndarray | None = None,
) -> ChainOutcome:
    """Route one record through both stages without mutating state."""
    cfg = state.chain_config
    if cfg.stage1_always_accept:
        s1_decision = None
        sanitized = False
        effective = record.specialist_scores
    else:
        s1_decision = decide(_stage1_record(record), state.stage1, _s1_thresholds)
        sanitized = not s1_decision.accepted
        if sanitized:
            if cfg.mode == "drop":
                return ChainOutcome(
                    final=_quarantine_decision(record, s1_decision, state),
                    stage1=s1_decision,
                    sanitized=True,
                )
            # Generalist's fused score vector replaces the tainted verdict.
            effective = auditor_scores(_stage1_record(record), state.stage1)
        else:
            effective = record.specialist_scores
    final = decide(_stage2_record(record, effective), state.stage2, _s2_thresholds)
    return ChainOutcome(final=final, stage1=s1_decision, sanitized=sanitized)


def chain_feedback(state: ChainState, record: ChainRecord, outcome: ChainOutcome) -> ChainState:
    """Fold one routed record back into both stages' learned state."""
    cfg = state.chain_config
    stage1 = state.stage1
    if outcome.stage1 is not None and not cfg.freeze_stage1:
        stage1 = feedback(stage1, _stage1_record(record), outcome.stage1)

    stage2 = state.stage2
    if outcome.stage1 is None or outcome.stage1.accepted or cfg.mode == "replace":
        # The record got a stage-2 hearing. Folding reads only the stored
        # margin and the embedding channel, and prototype learning
        # additionally requires that the specialist itself passed the audit,
        # so an untrusted specialist's embedding is stripped here.
        stage1_passed = outcome.stage1 is None or outcome.stage1.accepted
        s2_record = _stage2_record(
            record, record.specialist_scores
        ) if stage1_passed else StreamRecord(
            id=record.id,
            victim_logits=record.victim_logits,
            auditor_embedding=None,
            auditor_text_logits=record.specialist_scores,
        )
        stage2 = feedback(stage2, s2_record, outcome.final)
    return ChainState(stage1=stage1, stage2=stage2, chain_config=cfg)


def chain_process_batch(
    state: ChainState, batch: Sequence[ChainRecord]
) -> tuple[list[ChainOutcome | SkippedRecord], ChainState]:
    """Batch contract mirrors the single router: thresholds for both stages
    are pinned at batch start, decisions read batch-start state, feedback is
    folded in record order."""
    s1_thresholds = class_thresholds(state.stage1)
    s2_thresholds = class_thresholds(state.stage2)
    start = state
    entries: list[ChainOutcome | SkippedRecord] = []
    for record in batch:
        try:
            entries.append(chain_decide(record, start, s1_thresholds, s2_thresholds))
        except RecordError as err:
            entries.append(SkippedRecord(getattr(record, "id", "<unknown>"), str(err)))
    for record, entry in zip(batch, entries):
        if isinstance(entry, ChainOutcome):
            state = chain_feedback(state, record, entry)
    return entries, state


def chain_run_stream(
    state: ChainState, records: Iterable[ChainRecord], batch_size: int = 256
) -> tuple[list[ChainOutcome | SkippedRecord], ChainState]:
    if batch_size < 1:
        raise ConfigError(f"batch_size must be positive, got {batch_size}")
    entries: list[ChainOutcome | SkippedRecord] = []
    batch: list[ChainRecord] = []
    for record in records:
        batch.append(record)
        if len(batch) == batch_size:
            out, state = chain_process_batch(state, batch)
            entries.extend(out)
            batch = []
    if batch:
        out, state = chain_process_batch(state, batch)
        entries.extend(out)
    return entries, state


# synthetic colluding-specialist streams

@dataclass(frozen=True)
class SpecialistSpec:
    """Behavior of the strong untrusted auditor in simulation.

    A colluding specialist endorses the poison target on poisoned records
    with the same confident score gap it uses for honest verdicts, which is
    exactly the failure mode the chain exists to catch.
    """

    clean_acc: float = 0.97
    score_margin: float = 1.2
    colluding: bool = True

    def __post_init__(self):
        if not 0.0 < self.clean_acc <= 1.0:
            raise ConfigError(f"clean_acc must be in (0, 1], got {self.clean_acc}")
        if self.score_margin <= 0.0:
            raise ConfigError(f"score_margin must be positive, got {self.score_margin}")


def _specialist_scores(
    cfg: SimConfig, spec: SpecialistSpec, poisoned: bool, true_label: int, rng
) -> np.ndarray:
    k = cfg.num_classes
    # Fixed draw order regardless of branch, same hygiene as the base
    # generator: scores differ only through the chosen winner.
    scores = rng.normal(0.0, 0.1, k)
    u_acc = rng.random()
    wrong = int(rng.integers(k - 1))
    gap = rng.gamma(4.0, spec.score_margin / 4.0)
    if poisoned and spec.colluding:
        winner = cfg.poison_target
    elif u_acc < spec.clean_acc:
        winner = true_label
    else:
        winner = wrong if wrong < true_label else wrong + 1
    others = np.delete(scores, winner)
    scores[winner] = float(np.max(others)) + gap
    return scores


def gen_chain_stream(
    cfg: SimConfig,
    scenario: ScenarioSpec,
    spec: SpecialistSpec = SpecialistSpec(),
    include_specialist_embedding: bool = False,
) -> list[ChainRecord]:
    """Victim + colluding specialist + honest generalist, counter-seeded.

    The base record (victim logits, generalist embedding, eval fields) is
    drawn exactly as the plain stream generator draws it; specialist draws
    happen strictly afterwards, so the shared prefix is bit-identical.
    """
    geometry = make_geometry(cfg)
    records = []
    for i in range(scenario.length):
        rng = record_rng(cfg.seed, i)
        u_poison = rng.random()
        true_label = int(rng.integers(cfg.num_classes))
        poisoned = scenario.is_poisoned(i, u_poison)
        base = gen_record(cfg, geometry, poisoned, true_label, rng, str(i))
        scores = _specialist_scores(cfg, spec, poisoned, true_label, rng)
        records.append(ChainRecord(
            id=base.id,
            victim_logits=base.victim_logits,
            specialist_scores=scores,
            generalist_embedding=base.auditor_embedding,
            generalist_scores=None,
            specialist_embedding=base.auditor_embedding
            if include_specialist_embedding else None,
            eval_true_label=base.eval_true_label,
            eval_is_poisoned=base.eval_is_poisoned,
        ))
    return records
