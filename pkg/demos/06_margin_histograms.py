"""Per-class margin histograms with the fitted density overlaid.

Runs a poisoned stream, reconstructs the per-class margin distributions
from the decision log entries, and writes one CSV per class splitting
each bin into benign / backdoor / misclassified counts with the
skew-adjusted density curve alongside. One class is rendered as ASCII
here; point a plotting tool at the CSVs for the rest.

Writes to ./margin_hist/ next to wherever you run this.
"""
import csv
from pathlib import Path

from semgate import (
    LoggedDecision,
    RouterConfig,
    ScenarioSpec,
    SimConfig,
    emit_histogram,
    gen_stream,
    init_state,
    make_geometry,
    refold_state,
    run_stream,
)

RCFG = RouterConfig(num_classes=10, embed_dim=64)


def main():
    cfg = SimConfig(num_classes=10, embed_dim=64, seed=9)
    records = gen_stream(cfg, ScenarioSpec(kind="uniform", length=8_000,
                                           poison_rate=0.08))
    state = init_state(RCFG, make_geometry(cfg).anchors)
    decisions, _ = run_stream(state, [r.without_eval() for r in records])

    truth = {r.id: r for r in records}
    entries = [
        LoggedDecision(
            record_id=d.record_id, victim_label=d.victim_label,
            auditor_label=d.auditor_label, margin=d.margin,
            threshold=d.threshold, accepted=d.accepted,
            routed_label=d.routed_label, state_updated=d.state_updated,
            phase=d.phase, true_label=truth[d.record_id].eval_true_label,
            is_poisoned=truth[d.record_id].eval_is_poisoned,
        )
        for d in decisions
    ]

    out_dir = Path("margin_hist")
    written = emit_histogram(entries, refold_state(RCFG, entries), out_dir)
    print(f"wrote {len(written)} class histograms under {out_dir}/\n")

    # Crude terminal view of the backdoor target class: '#' benign,
    # 'x' backdoor, scaled to 60 columns.
    path = out_dir / f"class_{cfg.poison_target:02d}.csv"
    rows = [r for r in csv.reader(path.open()) if r and not r[0].startswith("#")]
    rows = rows[1:]  # column header
    peak = max(int(r[2]) + int(r[3]) for r in rows) or 1
    print(f"class {cfg.poison_target} margins (benign '#', backdoor 'x'):")
    for r in rows:
        lo, benign, backdoor = float(r[0]), int(r[2]), int(r[3])
        if benign + backdoor == 0:
            continue
        bar = "#" * round(60 * benign / peak) + "x" * round(60 * backdoor / peak)
        print(f"  {lo:7.3f} {bar}")


if __name__ == "__main__":
    main()
