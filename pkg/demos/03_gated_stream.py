"""End-to-end gating run on a simulated poisoned stream.

A victim classifier with a planted backdoor serves 10,000 requests, 5%
of which carry the trigger. The router watches each prediction's margin
against its per-class threshold, keeps confident predictions, and hands
suspicious ones to the auditor. We score the victim alone and the routed
stream against ground truth.
"""
from semgate import (
    RouterConfig,
    ScenarioSpec,
    SimConfig,
    evaluate,
    format_report,
    gen_stream,
    init_state,
    make_geometry,
    run_stream,
)


def main():
    cfg = SimConfig(num_classes=10, embed_dim=64, seed=101,
                    victim_clean_acc=0.93)
    records = gen_stream(cfg, ScenarioSpec(kind="uniform", length=10_000,
                                           poison_rate=0.05))

    state = init_state(RouterConfig(num_classes=10, embed_dim=64),
                       make_geometry(cfg).anchors)
    decisions, state = run_stream(state, [r.without_eval() for r in records])

    report = evaluate(decisions, records, cfg.poison_target)

    victim_hits = sum(
        r.eval_true_label == d.victim_label
        for r, d in zip(records, decisions) if not r.eval_is_poisoned
    )
    victim_ca = victim_hits / report.counts["clean"]
    victim_asr = sum(
        d.victim_label == cfg.poison_target
        for r, d in zip(records, decisions)
        if r.eval_is_poisoned and r.eval_true_label != cfg.poison_target
    ) / report.counts["asr_den"]

    print("victim alone:")
    print(f"  clean accuracy      {victim_ca:.4f}")
    print(f"  attack success rate {victim_asr:.4f}")
    print("\nrouted through the gate:")
    print(format_report(report))

    rejected = sum(not d.accepted for d in decisions)
    print(f"\n{rejected}/{len(decisions)} records rerouted to the auditor; "
          f"{state.records_seen} seen, per-class thresholds now live")


if __name__ == "__main__":
    main()
