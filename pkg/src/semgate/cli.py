"""Command-line front end.

Subcommands: run (route a record file), simulate (synthesize streams),
evaluate (score a decision log against ground truth), emit-hist (per-class
margin histograms), chain-run (two-stage pipeline).

Exit codes: 0 success, 2 malformed input file, 3 configuration error,
4 evaluation mismatch.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import fields as dataclass_fields, replace
from pathlib import Path

from .chain import (
    ChainConfig,
    ChainOutcome,
    gen_chain_stream,
    init_chain_state,
    chain_run_stream,
)
from .hist import emit_histogram, refold_state
from .io import (
    build_router_config,
    build_sim_config,
    config_hash,
    load_checkpoint,
    parse_config_text,
    read_anchors,
    read_chain_eval_annotations,
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
from .metrics import MetricsError, evaluate, format_report
from .router import init_state, run_stream
from .sim import ScenarioSpec, SCENARIO_KINDS, SimConfig, gen_stream, make_geometry
from .types import ConfigError, FormatError, RecordError, RouterConfig, SkippedRecord

_SIM_FIELD_NAMES = tuple(f.name for f in dataclass_fields(SimConfig))
_SCENARIO_FLAGS = (
    "poison_rate", "poison_fraction", "wave_len", "duty",
    "initial_poison_fraction", "warm_len",
)


def _load_router_config(path) -> RouterConfig:
    pairs = parse_config_text(Path(path).read_text(), str(path))
    return build_router_config(pairs, str(path))


def _base_metadata(config: RouterConfig, extra: dict[str, str] | None = None):
    meta = {"config_hash": config_hash(config), "seed": "-"}
    for f in dataclass_fields(RouterConfig):
        meta[f"config.{f.name}"] = repr(getattr(config, f.name))
    if extra:
        meta.update(extra)
    return meta


def _check_stream_dims(info, config: RouterConfig) -> None:
    if info.num_classes != config.num_classes:
        raise ConfigError(
            f"record file has {info.num_classes} classes, config says "
            f"{config.num_classes}"
        )
    if info.has_embedding and info.embed_dim != config.embed_dim:
        raise ConfigError(
            f"record file embeds in {info.embed_dim} dimensions, config says "
            f"{config.embed_dim}"
        )


def _cmd_run(args) -> int:
    config = _load_router_config(args.config)
    info, records = read_records_for_routing(args.records)
    if info.generative_scores and not config.generative_scores:
        config = replace(config, generative_scores=True)
    _check_stream_dims(info, config)
    anchors = read_anchors(args.anchors)
    eval_ann = read_eval_annotations(args.records) if info.has_eval else None

    consumed_before = 0
    if args.resume:
        state, consumed_before = load_checkpoint(args.resume)
        if config_hash(state.config) != config_hash(config):
            raise ConfigError(
                f"{args.resume}: checkpoint was written under a different "
                "configuration; refusing to resume"
            )
        if anchors.matrix.shape != (config.num_classes, config.embed_dim):
            raise ConfigError(
                f"anchor bank shape {anchors.matrix.shape} does not match "
                f"({config.num_classes}, {config.embed_dim})"
            )
        state = replace(state, anchors=anchors)
        records = records[consumed_before:]
        # Thresholds pin at batch starts, so equality with an uninterrupted
        # run needs the resumed stream to land on the same batch grid.
        if records and consumed_before % args.batch_size != 0:
            raise ConfigError(
                f"checkpoint cuts the stream at record {consumed_before}, "
                f"which is not a multiple of --batch-size {args.batch_size}; "
                "resume with a batch size that divides it"
            )
    else:
        state = init_state(config, anchors)

    if args.stop_after is not None:
        if args.stop_after <= 0 or args.stop_after % args.batch_size != 0:
            raise ConfigError(
                "--stop-after must be a positive multiple of --batch-size "
                "so a later resume sees the same batch boundaries"
            )
        records = records[: args.stop_after]

    entries, state = run_stream(state, records, batch_size=args.batch_size)
    write_decision_log(args.out_log, entries, _base_metadata(config), eval_ann)
    if args.checkpoint:
        save_checkpoint(args.checkpoint, state, consumed_before + len(entries))
    return 0


def _cmd_simulate(args) -> int:
    pairs = {}
    if args.config:
        pairs = parse_config_text(Path(args.config).read_text(), args.config)
    cfg = build_sim_config(pairs, args.config or "<defaults>")
    overrides = {
        name: getattr(args, name)
        for name in _SIM_FIELD_NAMES
        if getattr(args, name, None) is not None
    }
    if overrides:
        cfg = replace(cfg, **overrides)
    scenario_kwargs = {
        name: getattr(args, name)
        for name in _SCENARIO_FLAGS
        if getattr(args, name, None) is not None
    }
    scenario = ScenarioSpec(kind=args.scenario, length=args.length, **scenario_kwargs)
    if args.chain:
        write_chain_records(args.out, gen_chain_stream(cfg, scenario))
    else:
        write_records(args.out, gen_stream(cfg, scenario))
    if args.out_anchors:
        write_anchors(args.out_anchors, make_geometry(cfg).anchors)
    return 0


def _cmd_evaluate(args) -> int:
    _, entries = read_decision_log(args.log)
    decisions = [e for e in entries if not isinstance(e, SkippedRecord)]
    skipped_ids = {e.record_id for e in entries if isinstance(e, SkippedRecord)}
    _, records = read_records(args.records)
    records = [r for r in records if r.id not in skipped_ids]
    report = evaluate(decisions, records, args.target)
    print(format_report(report))
    if skipped_ids:
        print(f"skipped_records={len(skipped_ids)}")
    return 0


def _cmd_emit_hist(args) -> int:
    meta, entries = read_decision_log(args.log)
    pairs = {}
    for f in dataclass_fields(RouterConfig):
        key = f"config.{f.name}"
        if key not in meta:
            raise FormatError(
                f"{args.log}: log metadata lacks {key}; cannot rebuild state"
            )
        pairs[f.name] = meta[key]
    config = build_router_config(pairs, str(args.log))
    state = refold_state(config, entries)
    paths = emit_histogram(entries, state, args.out, bins=args.bins)
    print(f"wrote {len(paths)} class histograms under {args.out}")
    return 0


def _cmd_chain_run(args) -> int:
    config = _load_router_config(args.config)
    info, records = read_chain_records_for_routing(args.records)
    _check_stream_dims(info, config)
    anchors = read_anchors(args.generalist_anchors)
    eval_ann = read_chain_eval_annotations(args.records) if info.has_eval else None
    chain_config = ChainConfig(mode=args.mode, freeze_stage1=args.freeze_stage1)
    state = init_chain_state(config, anchors, chain_config)
    outcomes, state = chain_run_stream(state, records, batch_size=args.batch_size)
    entries = [
        o.final if isinstance(o, ChainOutcome) else o for o in outcomes
    ]
    meta = _base_metadata(config, {
        "chain.mode": chain_config.mode,
        "chain.freeze_stage1": repr(chain_config.freeze_stage1),
    })
    write_decision_log(args.out_log, entries, meta, eval_ann)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="semgate",
        description="Streaming semantic-audit gate over an untrusted classifier.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="route a record file, write a decision log")
    run.add_argument("--records", required=True)
    run.add_argument("--anchors", required=True)
    run.add_argument("--config", required=True)
    run.add_argument("--out-log", required=True)
    run.add_argument("--checkpoint", help="write learned state here afterwards")
    run.add_argument("--resume", help="checkpoint to continue from")
    run.add_argument("--batch-size", type=int, default=256)
    run.add_argument("--stop-after", type=int, default=None,
                     help="route at most N records, then stop")
    run.set_defaults(func=_cmd_run)

    simulate = sub.add_parser("simulate", help="synthesize a record stream")
    simulate.add_argument("--scenario", required=True, choices=SCENARIO_KINDS)
    simulate.add_argument("--length", required=True, type=int)
    simulate.add_argument("--seed", type=int, default=None)
    simulate.add_argument("--out", required=True)
    simulate.add_argument("--out-anchors", default=None,
                          help="also write the stream's anchor bank")
    simulate.add_argument("--config", default=None,
                          help="key=value file sharing run's config format")
    simulate.add_argument("--poison-rate", type=float, default=None)
    simulate.add_argument("--poison-fraction", type=float, default=None)
    simulate.add_argument("--wave-len", type=int, default=None)
    simulate.add_argument("--duty", type=float, default=None)
    simulate.add_argument("--initial-poison-fraction", type=float, default=None)
    simulate.add_argument("--warm-len", type=int, default=None)
    simulate.add_argument("--chain", action="store_true",
                          help="emit chain-format records (adds a specialist)")
    simulate.add_argument("--num-classes", type=int, default=None)
    simulate.add_argument("--embed-dim", type=int, default=None)
    simulate.add_argument("--victim-clean-acc", type=float, default=None)
    simulate.add_argument("--victim-margin", type=float, default=None)
    simulate.add_argument("--auditor-concentration", type=float, default=None)
    simulate.add_argument("--poison-target", type=int, default=None)
    simulate.add_argument("--anchor-quality", type=float, default=None)
    simulate.add_argument("--semantic-evasion", type=float, default=None)
    simulate.set_defaults(func=_cmd_simulate)

    ev = sub.add_parser("evaluate", help="score a decision log against ground truth")
    ev.add_argument("--log", required=True)
    ev.add_argument("--records", required=True)
    ev.add_argument("--target", required=True, type=int,
                    help="the attack's target class")
    ev.set_defaults(func=_cmd_evaluate)

    hist = sub.add_parser("emit-hist", help="per-class margin histograms from a log")
    hist.add_argument("--log", required=True)
    hist.add_argument("--out", required=True, help="output directory")
    hist.add_argument("--bins", type=int, default=40)
    hist.set_defaults(func=_cmd_emit_hist)

    chain = sub.add_parser("chain-run", help="two-stage pipeline over chain records")
    chain.add_argument("--records", required=True)
    chain.add_argument("--generalist-anchors", required=True)
    chain.add_argument("--config", required=True)
    chain.add_argument("--out-log", required=True)
    chain.add_argument("--mode", choices=("replace", "drop"), default="replace")
    chain.add_argument("--freeze-stage1", action="store_true")
    chain.add_argument("--batch-size", type=int, default=256)
    chain.set_defaults(func=_cmd_chain_run)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (FormatError, OSError) as err:
        # unreadable and malformed inputs exit alike: the file is the problem
        print(f"error: {err}", file=sys.stderr)
        return 2
    except (ConfigError, RecordError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 3
    except MetricsError as err:
        print(f"error: {err}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
