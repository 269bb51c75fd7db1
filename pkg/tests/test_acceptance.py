"""Acceptance gate: one test per shipping criterion, each printing a
single PASS/FAIL line with the measured quantity and its limit.

Run with `pytest tests/test_acceptance.py -v -s` to see the lines.
"""
import math
import time

import numpy as np
import pytest
from scipy.stats import norm, skewnorm

from semgate import (
    ChainConfig,
    Decision,
    MomentState,
    Phase,
    RouterConfig,
    ScenarioSpec,
    SimConfig,
    StreamRecord,
    accumulate,
    adaptive_threshold,
    class_thresholds,
    decide,
    evaluate,
    gen_chain_stream,
    gen_stream,
    init_chain_state,
    init_state,
    make_geometry,
    margin,
    chain_run_stream,
    run_stream,
    summarize,
    to_direct_record,
)
from semgate.cli import main
from semgate.io import log_body_lines


def report(name: str, ok: bool, detail: str) -> None:
    print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


class TestStreamingMomentOracle:
    def test_summaries_match_two_pass_batch_moments(self):
        # 100 random positive streams, 1e3-1e5 values, folded in random
        # split patterns; relative agreement 1e-9 against a vectorized
        # two-pass oracle; whole criterion under 10 s.
        config = RouterConfig(num_classes=4, embed_dim=8)
        rng = np.random.default_rng(424242)
        started = time.perf_counter()
        worst = 0.0
        for _ in range(100):
            n = int(rng.integers(1_000, 100_001))
            family = rng.integers(3)
            if family == 0:
                values = rng.gamma(rng.uniform(1.0, 5.0), rng.uniform(0.2, 2.0), n)
            elif family == 1:
                values = rng.lognormal(rng.uniform(-0.5, 1.0), rng.uniform(0.2, 0.8), n)
            else:
                values = rng.exponential(rng.uniform(0.5, 3.0), n)

            state = MomentState()
            cuts = np.sort(rng.integers(0, n, size=int(rng.integers(0, 12))))
            for chunk in np.split(values, cuts):
                state = accumulate(state, chunk)
            out = summarize(state, config)

            mu = values.mean()
            centered = values - mu
            var = float(np.mean(centered**2))
            skew = float(np.mean(centered**3)) / var**1.5
            for got, want in ((out.mean, mu), (out.variance, var), (out.skewness, skew)):
                rel = abs(got - want) / abs(want)
                worst = max(worst, rel)
        elapsed = time.perf_counter() - started
        report(
            "streaming-moment oracle equivalence",
            worst < 1e-9 and elapsed < 10.0,
            f"worst relative error {worst:.3e} (limit 1e-9), "
            f"{elapsed:.1f}s (limit 10s), 100 streams",
        )


class TestSkewCorrectedCalibration:
    def test_corrected_threshold_beats_gaussian_on_skewed_samples(self):
        # Skewed samples (|skewness| up to ~0.96), n = 1e4, 100 seeded
        # trials: the skew-corrected threshold's lower-tail fraction must
        # sit closer to the nominal tail mass than the plain Gaussian
        # threshold's in at least 80 trials.
        config = RouterConfig(num_classes=4, embed_dim=8)
        zeta = -2.0
        target = norm.cdf(zeta)
        rng = np.random.default_rng(20260814)
        wins = 0
        for _ in range(100):
            shape = rng.uniform(1.5, 20.0) * rng.choice([-1.0, 1.0])
            sample = skewnorm.rvs(shape, loc=3.0, scale=0.7, size=10_000,
                                  random_state=rng)
            summary = summarize(accumulate(MomentState(), sample), config)
            tau_corrected = adaptive_threshold(summary, zeta, 1.0)
            tau_gaussian = adaptive_threshold(summary, zeta, 0.0)
            err_corrected = abs(np.mean(sample < tau_corrected) - target)
            err_gaussian = abs(np.mean(sample < tau_gaussian) - target)
            wins += err_corrected < err_gaussian
        report(
            "skew-corrected threshold calibration",
            wins >= 80,
            f"corrected threshold closer to nominal tail in {wins}/100 trials "
            "(limit >= 80)",
        )


class TestMarginContract:
    def test_examples_exact_and_fuzz_stays_in_open_interval(self):
        err = max(
            abs(margin(np.array([2.0, 1.0, 0.0]), 0) - math.e),
            abs(margin(np.array([0.0, 1.5]), 0) - math.exp(-1.5)),
            abs(margin(np.array([1.0, 1.0, 0.0]), 0) - 1.0),
        )
        exact_ok = err <= 1e-12

        rng = np.random.default_rng(7)
        scores = rng.normal(0.0, rng.uniform(0.1, 30.0, (1_000_000, 1)), (1_000_000, 8))
        labels = rng.integers(0, 8, 1_000_000)
        rows = np.arange(1_000_000)
        own = scores[rows, labels]
        masked = scores.copy()
        masked[rows, labels] = -np.inf
        deltas = np.exp(own - masked.max(axis=1))
        deltas = np.where(deltas > 0.0, deltas, 5e-324)
        fuzz_ok = bool(np.all(deltas > 0.0) and np.all(np.isfinite(deltas)))

        # np.exp and math.exp may disagree in the last ulp, so the spot
        # check re-derives the gap independently but applies the scalar exp.
        spot = rng.choice(1_000_000, 20_000, replace=False)
        gaps = own - masked.max(axis=1)
        bound_ok = all(
            margin(scores[i], int(labels[i]))
            == max(math.exp(gaps[i]), 5e-324)
            for i in spot
        )
        report(
            "margin examples and fuzz",
            exact_ok and fuzz_ok and bound_ok,
            f"example error {err:.1e} (limit 1e-12); 1e6 fuzzed margins all in "
            f"(0, inf): {fuzz_ok}; vectorized oracle matches library on 20k "
            f"spot checks: {bound_ok}",
        )


class TestUniformGatingAnalogue:
    def test_routed_stream_suppresses_attack_and_keeps_accuracy(self):
        # 10 seeds x 1e4 records, victim 93% clean accuracy, 5% poison:
        # routed attack success <= 5%, routed clean accuracy within 2
        # points of the victim's own, all under 30 s.
        started = time.perf_counter()
        worst_asr = 0.0
        worst_gap = math.inf
        for seed in range(100, 110):
            cfg = SimConfig(
                num_classes=10, embed_dim=64, seed=seed,
                victim_clean_acc=0.93, anchor_quality=0.8,
            )
            scenario = ScenarioSpec(kind="uniform", length=10_000, poison_rate=0.05)
            records = gen_stream(cfg, scenario)
            state = init_state(
                RouterConfig(num_classes=10, embed_dim=64),
                make_geometry(cfg).anchors,
            )
            decisions, _ = run_stream(state, [r.without_eval() for r in records])
            rep = evaluate(decisions, records, cfg.poison_target)
            victim_ca = rep.counts["victim_correct_clean"] / rep.counts["clean"]
            worst_asr = max(worst_asr, rep.asr)
            worst_gap = min(worst_gap, rep.ca - victim_ca)
        elapsed = time.perf_counter() - started
        report(
            "uniform-stream gating analogue",
            worst_asr <= 0.05 and worst_gap >= -0.02 and elapsed < 30.0,
            f"worst ASR {worst_asr:.4f} (limit 0.05), worst CA gap "
            f"{worst_gap:+.4f} (limit -0.02), {elapsed:.1f}s (limit 30s), "
            "10 seeds",
        )


class TestFloodingResilience:
    def test_selective_update_is_exact_and_clean_acceptance_holds(self):
        # One clean batch of 256, then 5000 records at 95% poison. The
        # final per-class moments must equal the pre-flood snapshot plus
        # exactly the accepted margins (bitwise), and clean acceptance
        # probed before/after the flood must agree within 2 points.
        cfg = SimConfig(
            num_classes=10, embed_dim=64, seed=55,
            auditor_concentration=0.15, anchor_quality=0.9,
        )
        flood = ScenarioSpec(
            kind="flooding", length=5256, poison_fraction=0.95, warm_len=256
        )
        records = gen_stream(cfg, flood)
        state = init_state(
            RouterConfig(num_classes=10, embed_dim=64), make_geometry(cfg).anchors
        )
        stripped = [r.without_eval() for r in records]
        _, warm_state = run_stream(state, stripped[:256])
        flood_decisions, final_state = run_stream(warm_state, stripped[256:])

        moments = list(warm_state.moments)
        for d in flood_decisions:
            if d.accepted:
                moments[d.victim_label] = accumulate(
                    moments[d.victim_label], [d.margin]
                )
        refold_exact = tuple(moments) == final_state.moments

        probe_src = gen_stream(cfg, ScenarioSpec(kind="uniform", length=6056))
        probes = [r.without_eval() for r in probe_src[5256:]]

        def acceptance(st):
            taus = class_thresholds(st)
            return float(np.mean([decide(r, st, taus).accepted for r in probes]))

        pre = acceptance(warm_state)
        post = acceptance(final_state)
        report(
            "flooding resilience",
            refold_exact and abs(post - pre) <= 0.02,
            f"moments == snapshot + accepted margins bitwise: {refold_exact}; "
            f"clean acceptance pre {pre:.4f} post {post:.4f} "
            f"(delta {post - pre:+.4f}, limit 0.02)",
        )


class TestChainCollusionAnalogue:
    def test_chained_audit_cuts_attack_success_by_50_points(self):
        worst_gap = math.inf
        for seed in (61, 62, 63):
            cfg = SimConfig(num_classes=10, embed_dim=64, seed=seed)
            scenario = ScenarioSpec(kind="uniform", length=3_000, poison_rate=0.1)
            records = gen_chain_stream(cfg, scenario)
            rcfg = RouterConfig(num_classes=10, embed_dim=64)
            anchors = make_geometry(cfg).anchors

            chain_state = init_chain_state(rcfg, anchors, ChainConfig())
            outcomes, _ = chain_run_stream(
                chain_state, [r.without_eval() for r in records]
            )
            direct_state = init_state(rcfg)
            decisions, _ = run_stream(
                direct_state, [to_direct_record(r).without_eval() for r in records]
            )

            eval_records = [to_direct_record(r) for r in records]
            chained = evaluate(
                [o.final for o in outcomes], eval_records, cfg.poison_target
            )
            direct = evaluate(decisions, eval_records, cfg.poison_target)
            worst_gap = min(worst_gap, direct.asr - chained.asr)
        report(
            "trust-chain collusion analogue",
            worst_gap >= 0.50,
            f"worst ASR reduction {worst_gap:.4f} over 3 seeds (limit 0.50)",
        )


def _oracle_rates(decisions, truth, target):
    """Independent single-pass count over the published rate definitions."""
    counts = dict(clean=0, clean_true=0, asr_den=0, asr_num=0,
                  eff=0, eff_rej=0, vc=0, vc_rej=0)
    for d in decisions:
        true_label, poisoned = truth[d.record_id]
        if true_label is None or poisoned is None:
            continue
        if not poisoned:
            counts["clean"] += 1
            if d.routed_label == true_label:
                counts["clean_true"] += 1
            if d.victim_label == true_label:
                counts["vc"] += 1
                if not d.accepted:
                    counts["vc_rej"] += 1
        else:
            if true_label != target:
                counts["asr_den"] += 1
                if d.routed_label == target:
                    counts["asr_num"] += 1
            # TPR denominator: every poisoned record the victim sent to the
            # target, regardless of its true class.
            if d.victim_label == target:
                counts["eff"] += 1
                if not d.accepted:
                    counts["eff_rej"] += 1
    div = lambda a, b: a / b if b else None
    return (
        div(counts["clean_true"], counts["clean"]),
        div(counts["asr_num"], counts["asr_den"]),
        div(counts["eff_rej"], counts["eff"]),
        div(counts["vc_rej"], counts["vc"]),
    )


class TestMetricsOracle:
    def test_evaluate_matches_counting_oracle_on_randomized_logs(self):
        rng = np.random.default_rng(31337)
        k, target = 6, 2
        checked = empty_dens = 0
        for trial in range(50):
            n = int(rng.integers(1, 400))
            # Some trials carry no poison at all; some keep the victim off
            # the target so no attack is "effective".
            poison_rate = rng.choice([0.0, 0.0, 0.15, 0.4])
            victim_avoids_target = trial % 7 == 0
            decisions, records = [], []
            truth = {}
            for i in range(n):
                rid = str(i)
                poisoned = bool(rng.random() < poison_rate)
                true_label = int(rng.integers(k))
                victim = int(rng.integers(k))
                if victim_avoids_target and victim == target:
                    victim = (target + 1) % k
                accepted = bool(rng.random() < 0.6)
                auditor = int(rng.integers(k))
                decisions.append(Decision(
                    record_id=rid, victim_label=victim, auditor_label=auditor,
                    margin=float(rng.uniform(0.1, 3.0)), threshold=1.0,
                    accepted=accepted,
                    routed_label=victim if accepted else auditor,
                    state_updated=accepted, phase=Phase.ADAPTIVE,
                ))
                records.append(StreamRecord(
                    id=rid, victim_logits=np.eye(k)[victim] + 0.01,
                    auditor_text_logits=np.eye(k)[auditor],
                    eval_true_label=true_label, eval_is_poisoned=poisoned,
                ))
                truth[rid] = (true_label, poisoned)
            rep = evaluate(decisions, records, target)
            want = _oracle_rates(decisions, truth, target)
            got = (rep.ca, rep.asr, rep.tpr, rep.fpr)
            assert got == want, f"trial {trial}: {got} != {want}"
            checked += 1
            empty_dens += sum(w is None for w in want)
        report(
            "metrics counting oracle",
            checked == 50 and empty_dens > 0,
            f"50 randomized logs matched exactly, {empty_dens} empty-"
            "denominator rates exercised",
        )


class TestDeterminismAndCheckpointing:
    def test_reruns_byte_identical_and_resume_equals_straight(self, tmp_path):
        config_file = tmp_path / "gate.cfg"
        config_file.write_text("num_classes = 10\nembed_dim = 64\n")
        records = tmp_path / "stream.rec"
        anchors = tmp_path / "bank.anchor"
        assert main([
            "simulate", "--scenario", "mixed", "--length", "1200",
            "--seed", "17", "--initial-poison-fraction", "0.1",
            "--out", str(records), "--out-anchors", str(anchors),
        ]) == 0

        def run(out, *extra):
            assert main([
                "run", "--records", str(records), "--anchors", str(anchors),
                "--config", str(config_file), "--out-log", str(out),
                "--batch-size", "50", *extra,
            ]) == 0

        log_a, log_b = tmp_path / "a.log", tmp_path / "b.log"
        run(log_a)
        run(log_b)
        identical = log_a.read_bytes() == log_b.read_bytes()

        straight = log_body_lines(log_a)
        rng = np.random.default_rng(88)
        cuts = (rng.choice(np.arange(1, 24), size=10, replace=False) * 50).tolist()
        resumed_ok = 0
        for i, cut in enumerate(sorted(cuts)):
            ckpt = tmp_path / f"cut{i}.ckpt"
            part1 = tmp_path / f"part1_{i}.log"
            part2 = tmp_path / f"part2_{i}.log"
            run(part1, "--stop-after", str(cut), "--checkpoint", str(ckpt))
            run(part2, "--resume", str(ckpt))
            joined = log_body_lines(part1) + log_body_lines(part2)
            resumed_ok += joined == straight
        report(
            "determinism and checkpointing",
            identical and resumed_ok == 10,
            f"reruns byte-identical: {identical}; resume == straight run at "
            f"{resumed_ok}/10 random cut points",
        )
