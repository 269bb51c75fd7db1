"""Streaming semantic-audit gate for untrusted classifiers.

A trusted auditor scores every prediction of an untrusted model; an
exponential score margin is gated against per-class, skew-adjusted
thresholds learned online from accepted samples only. Rejected records are
rerouted to the auditor's own verdict.
"""

__version__ = "0.1.0"

from .types import (
    ConfigError,
    Decision,
    FormatError,
    Phase,
    RecordError,
    RouterConfig,
    SkippedRecord,
    StreamRecord,
    argmax_label,
    as_logits,
    as_unit,
    cosine_scores,
)
from .stats import (
    MomentState,
    MomentSummary,
    accumulate,
    adaptive_threshold,
    cornish_fisher_coeff,
    edgeworth_density,
    summarize,
    warmup_weight,
)
from .teacher import (
    AnchorBank,
    PrototypeState,
    fuse,
    minmax_normalize,
    proto_scores,
    text_scores,
    update_prototypes,
)
from .router import (
    RouterState,
    auditor_scores,
    class_thresholds,
    decide,
    feedback,
    init_state,
    margin,
    process_batch,
    run_stream,
)
from .metrics import EvalReport, MetricsError, evaluate, format_report
from .sim import (
    SCENARIO_KINDS,
    ClassGeometry,
    ScenarioSpec,
    SimConfig,
    gen_record,
    gen_stream,
    make_geometry,
    record_rng,
)
from .chain import (
    CHAIN_MODES,
    ChainConfig,
    ChainOutcome,
    ChainRecord,
    ChainState,
    SpecialistSpec,
    chain_decide,
    chain_feedback,
    chain_process_batch,
    chain_run_stream,
    gen_chain_stream,
    init_chain_state,
    to_direct_record,
)
from .io import (
    LoggedDecision,
    RecordFileInfo,
    build_router_config,
    build_sim_config,
    config_hash,
    load_checkpoint,
    parse_config_text,
    read_anchors,
    read_chain_records,
    read_chain_records_for_routing,
    read_decision_log,
    read_eval_annotations,
    read_records,
    read_records_for_routing,
    save_checkpoint,
    write_anchors,
    write_chain_records,
    write_decision_log,
    write_records,
)
from .hist import emit_histogram, refold_state
