"""Auditing the auditor: what happens when the specialist is in on it.

The standard setup trusts the auditing model. Swap in a stronger but
untrusted specialist that colludes with the backdoor (endorsing the
target class whenever the trigger is present) and the single-stage gate
happily accepts every attack: the two compromised models agree, so the
margins look great.

The chained gate puts a weak-but-trusted generalist in front. Stage one
audits the specialist's own scores; when they fail the generalist's
margin test, the specialist's opinion is replaced (or dropped) before it
ever judges the victim. Stage two then runs the usual gate with the
sanitized scores.
"""
from semgate import (
    ChainConfig,
    RouterConfig,
    ScenarioSpec,
    SimConfig,
    chain_run_stream,
    evaluate,
    gen_chain_stream,
    init_chain_state,
    init_state,
    make_geometry,
    run_stream,
    to_direct_record,
)


def main():
    cfg = SimConfig(num_classes=10, embed_dim=64, seed=61)
    records = gen_chain_stream(
        cfg, ScenarioSpec(kind="uniform", length=3_000, poison_rate=0.1)
    )
    rcfg = RouterConfig(num_classes=10, embed_dim=64)
    eval_records = [to_direct_record(r) for r in records]

    # Single-stage gate, colluding specialist plays the auditor.
    direct, _ = run_stream(
        init_state(rcfg), [r.without_eval() for r in eval_records]
    )
    direct_report = evaluate(direct, eval_records, cfg.poison_target)

    for mode in ("replace", "drop"):
        chain_state = init_chain_state(
            rcfg, make_geometry(cfg).anchors, ChainConfig(mode=mode)
        )
        outcomes, _ = chain_run_stream(
            chain_state, [r.without_eval() for r in records]
        )
        report = evaluate(
            [o.final for o in outcomes], eval_records, cfg.poison_target
        )
        sanitized = sum(o.sanitized for o in outcomes)
        print(f"chained gate ({mode} mode):")
        print(f"  attack success rate {report.asr:.4f}  "
              f"clean accuracy {report.ca:.4f}")
        print(f"  stage one sanitized {sanitized}/{len(outcomes)} records\n")

    print("single-stage gate with the colluding specialist trusted:")
    print(f"  attack success rate {direct_report.asr:.4f}  "
          f"clean accuracy {direct_report.ca:.4f}")


if __name__ == "__main__":
    main()
