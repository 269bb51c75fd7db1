"""Per-class margin histograms for offline inspection.

One CSV per class: counted margins split into benign / successful-backdoor /
misclassified / other, the fitted skew-corrected density sampled at bin
centers (scaled to counts, so its value where z = 0 is 0.39894 * scale), and
the final decision threshold. The moment state is refolded from accepted
margins one record at a time, the same order the router folded them, so the
reconstruction is bit-identical to the live state.
"""
from __future__ import annotations

import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .router import RouterState, class_thresholds
from .stats import MomentState, accumulate, edgeworth_density, summarize, warmup_weight
from .teacher import PrototypeState
from .types import RouterConfig, SkippedRecord

_COLUMNS = "bin_lo,bin_hi,benign,backdoor,misclassified,other,curve"


def refold_state(config: RouterConfig, entries: Iterable) -> RouterState:
    """Rebuild the router's learned moments from logged decisions.

    Prototypes are not logged, so the refolded state carries empty ones;
    thresholds and densities depend only on moments and the config.
    """
    per_class = [MomentState() for _ in range(config.num_classes)]
    seen = 0
    for e in entries:
        if isinstance(e, SkippedRecord):
            continue
        seen += 1
        if e.accepted:
            k = e.victim_label
            per_class[k] = accumulate(per_class[k], [e.margin])
    return RouterState(
        config=config,
        anchors=None,
        moments=tuple(per_class),
        protos=PrototypeState.empty(config.num_classes, config.embed_dim),
        records_seen=seen,
    )


def _category(entry) -> str:
    true_label = getattr(entry, "true_label", None)
    poisoned = getattr(entry, "is_poisoned", None)
    if true_label is None or poisoned is None:
        return "other"
    if poisoned:
        # A poisoned record in class k's histogram was steered into k.
        return "backdoor" if true_label != entry.victim_label else "other"
    return "benign" if true_label == entry.victim_label else "misclassified"


def emit_histogram(
    entries: Sequence,
    state: RouterState,
    out_dir,
    bins: int = 40,
    eval_by_id: dict[str, tuple[int | None, bool | None]] | None = None,
) -> list[Path]:
    """Write class_<k>.csv files under out_dir; returns the written paths.

    entries may be live Decisions or re-read log entries; ground truth comes
    from eval_by_id when given, else from annotations on the entries.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    config = state.config
    taus = class_thresholds(state)
    decisions = [e for e in entries if not isinstance(e, SkippedRecord)]
    paths = []
    for k in range(config.num_classes):
        rows = [d for d in decisions if d.victim_label == k]
        margins = np.array([d.margin for d in rows], dtype=np.float64)
        lines = [f"# class={k}", f"# decisions={len(rows)}",
                 f"# accepted={sum(1 for d in rows if d.accepted)}",
                 f"# tau={taus[k]!r}"]
        ms = state.moments[k]
        if ms.n > 0:
            summary = summarize(ms, config)
            mu = summary.mean
            sigma = math.sqrt(summary.variance)
            skew = summary.skewness
            alpha = warmup_weight(ms.n, config)
            lines.append(
                f"# n={ms.n} mu={mu!r} sigma={sigma!r} "
                f"skew={skew!r} alpha={alpha!r}"
            )
        else:
            lines.append("# n=0")
        lines.append(_COLUMNS)
        if len(rows) > 0:
            hi = float(margins.max())
            if hi <= 0.0:
                hi = 1.0
            edges = np.histogram_bin_edges(margins, bins=bins, range=(0.0, hi))
            width = edges[1] - edges[0]
            centers = (edges[:-1] + edges[1:]) / 2.0
            counts = {}
            for name in ("benign", "backdoor", "misclassified", "other"):
                subset = [d.margin for d in rows if _resolve(d, eval_by_id) == name]
                counts[name], _ = np.histogram(
                    np.array(subset, dtype=np.float64), bins=edges
                )
            if ms.n > 0:
                scale = len(rows) * width / sigma
                curve = edgeworth_density((centers - mu) / sigma, skew) * scale
            else:
                curve = np.zeros_like(centers)
            for j in range(len(centers)):
                lines.append(",".join((
                    repr(float(edges[j])), repr(float(edges[j + 1])),
                    str(int(counts["benign"][j])), str(int(counts["backdoor"][j])),
                    str(int(counts["misclassified"][j])),
                    str(int(counts["other"][j])), repr(float(curve[j])),
                )))
        path = out_dir / f"class_{k:02d}.csv"
        path.write_text("\n".join(lines) + "\n")
        paths.append(path)
    return paths


def _resolve(entry, eval_by_id) -> str:
    if eval_by_id is not None:
        true_label, poisoned = eval_by_id.get(entry.record_id, (None, None))
        probe = _Annotated(entry.victim_label, true_label, poisoned)
        return _category(probe)
    return _category(entry)


class _Annotated:
    __slots__ = ("victim_label", "true_label", "is_poisoned")

    def __init__(self, victim_label, true_label, is_poisoned):
        self.victim_label = victim_label
        self.true_label = true_label
        self.is_poisoned = is_poisoned
