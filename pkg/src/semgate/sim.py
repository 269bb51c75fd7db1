"""Synthetic stream generator: victim logits plus auditor embeddings under
controllable clean / backdoor / adaptive-attack scenarios.

No model is trained or queried. Victim logits are synthesized with a chosen
accuracy and margin profile; auditor embeddings are drawn around latent
class directions. Generation is a pure function of (seed, record index):
every record gets its own counter-derived generator, so streams can be
produced in parallel or re-generated record by record.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .teacher import AnchorBank
from .types import ConfigError, StreamRecord

log = logging.getLogger(__name__)

SCENARIO_KINDS = ("uniform", "flooding", "periodic", "mixed")

# spawn-key tags so geometry and records never share a stream
_GEOMETRY_TAG = 0
_RECORD_TAG = 1


@dataclass(frozen=True)
class SimConfig:
    num_classes: int = 10
    embed_dim: int = 64
    seed: int = 0
    victim_clean_acc: float = 0.93
    victim_margin: float = 2.0
    auditor_concentration: float = 0.3
    poison_target: int = 0
    anchor_quality: float = 0.8
    semantic_evasion: float = 0.0

    def __post_init__(self):
        if self.num_classes < 2:
            raise ConfigError("num_classes must be >= 2")
        if self.embed_dim < 1:
            raise ConfigError("embed_dim must be >= 1")
        if not 0.0 <= self.victim_clean_acc <= 1.0:
            raise ConfigError("victim_clean_acc must lie in [0, 1]")
        if not self.victim_margin > 0:
            raise ConfigError("victim_margin must be positive")
        if not self.auditor_concentration > 0:
            raise ConfigError("auditor_concentration must be positive")
        if not 0 <= self.poison_target < self.num_classes:
            raise ConfigError("poison_target out of range")
        if not 0.0 < self.anchor_quality <= 1.0:
            raise ConfigError("anchor_quality must lie in (0, 1]")
        if not 0.0 <= self.semantic_evasion <= 1.0:
            raise ConfigError("semantic_evasion must lie in [0, 1]")


@dataclass(frozen=True)
class ScenarioSpec:
    """Poisoning schedule over a stream of `length` records.

    uniform:  i.i.d. poisoning at poison_rate.
    flooding: warm_len leading clean records, then i.i.d. at poison_fraction
              (>= 0.9 by definition of the scenario).
    periodic: repeating waves of wave_len records, a clean block followed by
              a poisoned block of round(duty * wave_len) records.
    mixed:    i.i.d. at initial_poison_fraction with record 0 forced poisoned,
              so poison provably overlaps the warm-up window.
    """

    kind: str
    length: int
    poison_rate: float = 0.0
    poison_fraction: float = 0.95
    wave_len: int = 100
    duty: float = 0.5
    initial_poison_fraction: float = 0.2
    warm_len: int = 256

    def __post_init__(self):
        if self.kind not in SCENARIO_KINDS:
            raise ConfigError(f"unknown scenario kind {self.kind!r}")
        if self.length < 1:
            raise ConfigError("length must be >= 1")
        for name in ("poison_rate", "poison_fraction", "duty", "initial_poison_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if self.kind == "flooding" and self.poison_fraction < 0.9:
            raise ConfigError("flooding means poison_fraction >= 0.9")
        if self.wave_len < 1:
            raise ConfigError("wave_len must be >= 1")
        if self.warm_len < 0:
            raise ConfigError("warm_len must be >= 0")

    def is_poisoned(self, index: int, u: float) -> bool:
        """Poison flag for record `index`, given that record's uniform draw."""
        if self.kind == "uniform":
            return u < self.poison_rate
        if self.kind == "flooding":
            return index >= self.warm_len and u < self.poison_fraction
        if self.kind == "periodic":
            clean_block = self.wave_len - round(self.duty * self.wave_len)
            return index % self.wave_len >= clean_block
        # mixed
        return index == 0 or u < self.initial_poison_fraction


@dataclass(frozen=True, eq=False)
class ClassGeometry:
    """Latent unit class directions and the (possibly degraded) anchor bank."""

    directions: np.ndarray
    anchors: AnchorBank


def record_rng(seed: int, index: int) -> np.random.Generator:
    """Independent generator for one record, derived from (seed, index)."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(_RECORD_TAG, index)))


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def gen_latent_geometry(cfg: SimConfig, rng: np.random.Generator) -> ClassGeometry:
    """Draw K unit class directions (orthonormal when K <= d) and anchors at
    cosine anchor_quality to them."""
    k, d = cfg.num_classes, cfg.embed_dim
    if k <= d:
        q, r = np.linalg.qr(rng.normal(size=(d, k)))
        directions = (q * np.sign(np.diag(r))).T
    else:
        log.warning(
            "num_classes %d exceeds embed_dim %d; class directions cannot be "
            "orthogonal", k, d,
        )
        for _ in range(50):
            directions = np.array([_unit(rng.normal(size=d)) for _ in range(k)])
            gram = directions @ directions.T
            np.fill_diagonal(gram, 0.0)
            if np.abs(gram).max() <= 0.95:
                break
        else:
            raise ConfigError("could not draw sufficiently separated class directions")

    quality = cfg.anchor_quality
    if quality == 1.0:
        anchor_rows = directions.copy()
    else:
        anchor_rows = np.empty_like(directions)
        ortho_scale = math.sqrt(1.0 - quality * quality)
        for i in range(k):
            raw = rng.normal(size=d)
            residual = raw - (raw @ directions[i]) * directions[i]
            anchor_rows[i] = quality * directions[i] + ortho_scale * _unit(residual)
    return ClassGeometry(directions=directions, anchors=AnchorBank(anchor_rows))


def make_geometry(cfg: SimConfig) -> ClassGeometry:
    """Geometry from the config's own seed (separate stream from records)."""
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(_GEOMETRY_TAG,)))
    return gen_latent_geometry(cfg, rng)


def gen_record(
    cfg: SimConfig,
    geometry: ClassGeometry,
    is_poisoned: bool,
    true_label: int,
    rng: np.random.Generator,
    record_id: str = "0",
) -> StreamRecord:
    """One synthetic inference event.

    The auditor embedding is drawn around the TRUE class direction whether or
    not the record is poisoned (the auditor never sees the trigger). All rng
    draws happen in a fixed order in both branches, so for a given (seed,
    index, true_label) the embedding is bit-identical either way; only the
    victim logits and the optional semantic-evasion pull differ.
    """
    k, d = cfg.num_classes, cfg.embed_dim
    base = rng.normal(0.0, 0.25, size=k)
    u_acc = rng.uniform()
    wrong_offset = int(rng.integers(1, k))
    clean_gap = rng.gamma(4.0, cfg.victim_margin / 4.0)
    poison_gap = rng.gamma(4.0, cfg.victim_margin / 2.0)
    noise = rng.normal(size=d)

    if is_poisoned:
        winner, gap = cfg.poison_target, poison_gap
    elif u_acc < cfg.victim_clean_acc:
        winner, gap = true_label, clean_gap
    else:
        winner, gap = (true_label + wrong_offset) % k, clean_gap
    logits = base.copy()
    logits[winner] = np.delete(base, winner).max() + gap

    z = _unit(geometry.directions[true_label] + cfg.auditor_concentration * noise)
    if is_poisoned and cfg.semantic_evasion > 0.0:
        z = _unit(
            (1.0 - cfg.semantic_evasion) * z
            + cfg.semantic_evasion * geometry.directions[cfg.poison_target]
        )

    return StreamRecord(
        id=record_id,
        victim_logits=logits,
        auditor_embedding=z,
        eval_true_label=true_label,
        eval_is_poisoned=is_poisoned,
    )


def gen_stream(cfg: SimConfig, scenario: ScenarioSpec) -> list[StreamRecord]:
    """Full labeled stream for a scenario; reproducible from (cfg, scenario)."""
    geometry = make_geometry(cfg)
    records = []
    for i in range(scenario.length):
        rng = record_rng(cfg.seed, i)
        u_poison = rng.uniform()
        true_label = int(rng.integers(0, cfg.num_classes))
        poisoned = scenario.is_poisoned(i, u_poison)
        records.append(gen_record(cfg, geometry, poisoned, true_label, rng, record_id=str(i)))
    return records
