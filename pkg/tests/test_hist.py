"""Margin histogram emission: refolded state identity, bin conservation,
curve values, and the three-way category split."""
import csv
import math
from pathlib import Path

import numpy as np
import pytest

from semgate import (
    Decision,
    MomentState,
    Phase,
    PrototypeState,
    RouterConfig,
    RouterState,
    ScenarioSpec,
    SimConfig,
    accumulate,
    emit_histogram,
    gen_stream,
    init_state,
    make_geometry,
    refold_state,
    run_stream,
)


def read_hist(path):
    """(comments dict, rows list) from one emitted CSV."""
    comments = {}
    rows = []
    header_seen = False
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            for token in line[1:].strip().split(" "):
                if "=" in token:
                    key, value = token.split("=", 1)
                    comments[key] = value
            continue
        if not header_seen:
            header_seen = True  # column header row
            continue
        rows.append(line.split(","))
    return comments, rows


def routed_log(poison_rate=0.1, length=1500, seed=13):
    cfg = SimConfig(num_classes=6, embed_dim=32, seed=seed)
    scenario = ScenarioSpec(kind="uniform", length=length, poison_rate=poison_rate)
    records = gen_stream(cfg, scenario)
    config = RouterConfig(num_classes=6, embed_dim=32, n_warmup=50, warmup_window=128)
    state = init_state(config, make_geometry(cfg).anchors)
    stripped = [r.without_eval() for r in records]
    decisions, state = run_stream(state, stripped)
    eval_by_id = {r.id: (r.eval_true_label, r.eval_is_poisoned) for r in records}
    return decisions, state, eval_by_id, config


class TestRefold:
    def test_refolded_moments_match_live_state_exactly(self):
        decisions, state, _, config = routed_log()
        rebuilt = refold_state(config, decisions)
        assert rebuilt.moments == state.moments
        assert rebuilt.records_seen == state.records_seen
        assert sum(ms.n for ms in rebuilt.moments) > 100  # non-vacuous


class TestEmission:
    def test_bin_counts_conserve_decisions(self, tmp_path):
        decisions, state, eval_by_id, _ = routed_log()
        paths = emit_histogram(decisions, state, tmp_path, eval_by_id=eval_by_id)
        assert len(paths) == 6
        total = 0
        for k, path in enumerate(paths):
            comments, rows = read_hist(path)
            binned = sum(
                int(r[2]) + int(r[3]) + int(r[4]) + int(r[5]) for r in rows
            )
            assert binned == int(comments["decisions"])
            total += binned
        assert total == len(decisions)

    def test_all_clean_stream_has_empty_backdoor_column(self, tmp_path):
        decisions, state, eval_by_id, _ = routed_log(poison_rate=0.0, length=800)
        paths = emit_histogram(decisions, state, tmp_path, eval_by_id=eval_by_id)
        for path in paths:
            _, rows = read_hist(path)
            assert sum(int(r[3]) for r in rows) == 0

    def test_curve_matches_normal_density_at_fitted_mean(self, tmp_path):
        # Two accepted margins 1.24 and 2.04: mean 1.64, sigma 0.4, zero
        # skew. Margins maxing at 3.2 over 40 bins put a bin center exactly
        # on the mean, where the scaled curve must read (1/sqrt(2*pi))*scale.
        config = RouterConfig(num_classes=2, embed_dim=4)
        moments = (accumulate(MomentState(), [1.24, 2.04]), MomentState())
        state = RouterState(
            config=config, anchors=None, moments=moments,
            protos=PrototypeState.empty(2, 4), records_seen=2,
        )
        margins = [0.5, 1.0, 1.64, 2.0, 3.2]
        decisions = [
            Decision(
                record_id=str(i), victim_label=0, auditor_label=0,
                margin=m, threshold=0.6, accepted=True, routed_label=0,
                state_updated=True, phase=Phase.ADAPTIVE,
            )
            for i, m in enumerate(margins)
        ]
        (path0, _) = emit_histogram(decisions, state, tmp_path, bins=40)
        comments, rows = read_hist(path0)
        assert comments["n"] == "2"
        width = float(rows[1][0]) - float(rows[0][0])
        sigma = 0.4
        center_row = rows[20]
        center = (float(center_row[0]) + float(center_row[1])) / 2.0
        assert center == pytest.approx(1.64, abs=1e-12)
        expected = (1.0 / math.sqrt(2.0 * math.pi)) * len(margins) * width / sigma
        assert float(center_row[6]) == pytest.approx(expected, rel=1e-9)

    def test_category_split(self, tmp_path):
        config = RouterConfig(num_classes=2, embed_dim=4)
        state = RouterState(
            config=config, anchors=None,
            moments=(MomentState(), MomentState()),
            protos=PrototypeState.empty(2, 4), records_seen=5,
        )
        margins = [0.4, 0.8, 1.2, 1.6, 2.0]
        decisions = [
            Decision(
                record_id=str(i), victim_label=0, auditor_label=0,
                margin=m, threshold=1.0, accepted=m > 1.0, routed_label=0,
                state_updated=m > 1.0, phase=Phase.WARMUP,
            )
            for i, m in enumerate(margins)
        ]
        eval_by_id = {
            "0": (0, False),   # clean, victim right: benign
            "1": (1, False),   # clean, victim wrong: misclassified
            "2": (1, True),    # poisoned, steered into 0: backdoor
            "3": (0, True),    # poisoned but victim was right anyway: other
            "4": (None, None),  # no ground truth: other
        }
        (path0, path1) = emit_histogram(
            decisions, state, tmp_path, bins=10, eval_by_id=eval_by_id
        )
        _, rows = read_hist(path0)
        sums = [sum(int(r[col]) for r in rows) for col in (2, 3, 4, 5)]
        assert sums == [1, 1, 1, 2]
        # Cold class: no decisions, no rows, threshold comment still present.
        comments1, rows1 = read_hist(path1)
        assert rows1 == []
        assert comments1["n"] == "0"
        assert float(comments1["tau"]) == 1.0

    def test_entries_can_carry_their_own_annotations(self, tmp_path):
        # Re-read log entries expose true_label/is_poisoned attributes; the
        # emitter accepts those without a side table.
        decisions, state, eval_by_id, config = routed_log(length=600)
        import semgate

        log_path = tmp_path / "run.log"
        semgate.write_decision_log(
            log_path, decisions, {"config_hash": "x"}, eval_by_id
        )
        _, entries = semgate.read_decision_log(log_path)
        paths_a = emit_histogram(entries, state, tmp_path / "a")
        paths_b = emit_histogram(
            decisions, state, tmp_path / "b", eval_by_id=eval_by_id
        )
        for pa, pb in zip(paths_a, paths_b):
            assert pa.read_text() == pb.read_text()
