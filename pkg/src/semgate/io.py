"""On-disk formats: record streams, anchor banks, decision logs, checkpoints,
and flat key=value configuration.

Record and anchor files share one binary header (magic "PRSM", little
endian): magic 4s, version u16, kind u8, reserved u8, num_classes u32,
embed_dim u32, flags u32, count u64. Vector payloads are float32; reading
widens to float64, so a write/read/write cycle is byte-stable. A `.jsonl`
suffix selects the JSONL interchange variant, which quantizes floats through
float32 so both forms load to identical in-memory records.

Anchor files store the bank as a d x K matrix (one row per embedding
dimension); readers transpose back to per-class rows.
"""
from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, fields as dataclass_fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__ as _VERSION
from .chain import ChainRecord
from .router import RouterState
from .stats import MomentState
from .teacher import AnchorBank, PrototypeState
from .types import (
    ConfigError,
    Decision,
    FormatError,
    Phase,
    RecordError,
    RouterConfig,
    SkippedRecord,
    StreamRecord,
)
from .sim import ScenarioSpec, SimConfig

MAGIC = b"PRSM"
_HEADER = struct.Struct("<4sHBBIIIQ")

KIND_RECORDS = 1
KIND_ANCHORS = 2

RECORDS_VERSION = 1
CHAIN_RECORDS_VERSION = 2
ANCHORS_VERSION = 1

FLAG_EMBEDDING = 1
FLAG_TEXT_LOGITS = 2
FLAG_EVAL = 4
FLAG_GENERATIVE = 8
FLAG_SPECIALIST_SCORES = 16
FLAG_SPECIALIST_EMBEDDING = 32

_EVAL_ABSENT = 0xFF


@dataclass(frozen=True)
class RecordFileInfo:
    version: int
    num_classes: int
    embed_dim: int
    count: int
    has_embedding: bool
    has_text_logits: bool
    has_eval: bool
    generative_scores: bool
    has_specialist_scores: bool = False
    has_specialist_embedding: bool = False


def _f32(values) -> np.ndarray:
    return np.asarray(values, dtype="<f4")


def _pack_header(version, kind, k, d, flags, count) -> bytes:
    return _HEADER.pack(MAGIC, version, kind, 0, k, d, flags, count)


def _read_header(data: bytes, path, expect_kind: int, versions: tuple[int, ...]):
    if len(data) < _HEADER.size:
        raise FormatError(f"{path}: file shorter than the {_HEADER.size}-byte header")
    magic, version, kind, _, k, d, flags, count = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if kind != expect_kind:
        raise FormatError(f"{path}: kind {kind} is not the expected kind {expect_kind}")
    if version not in versions:
        raise FormatError(f"{path}: unsupported format version {version}")
    return version, k, d, flags, count


def _record_flags(records: Sequence[StreamRecord], generative_scores: bool) -> int:
    first = records[0]
    flags = 0
    if first.auditor_embedding is not None:
        flags |= FLAG_EMBEDDING
    if first.auditor_text_logits is not None:
        flags |= FLAG_TEXT_LOGITS
    if any(r.eval_true_label is not None and r.eval_is_poisoned is not None for r in records):
        flags |= FLAG_EVAL
    if generative_scores:
        flags |= FLAG_GENERATIVE
    return flags


def _binary_id(record_id: str) -> int:
    try:
        value = int(record_id)
    except ValueError:
        value = -1
    if value < 0 or str(value) != record_id or value > 0xFFFFFFFFFFFFFFFF:
        raise FormatError(
            f"record id {record_id!r} is not a canonical unsigned integer; "
            "the binary format indexes by 8-byte id (use JSONL for free-form ids)"
        )
    return value


def _check_uniform(record, flags, version=RECORDS_VERSION):
    if ((record.auditor_embedding is not None) != bool(flags & FLAG_EMBEDDING)) or (
        (record.auditor_text_logits is not None) != bool(flags & FLAG_TEXT_LOGITS)
    ):
        raise FormatError(
            f"record {record.id!r} has a different channel layout than the "
            "first record; files carry one layout"
        )


def write_records(path, records: Sequence[StreamRecord], generative_scores: bool = False) -> None:
    """Write a record stream; `.jsonl` suffix selects the text variant."""
    if len(records) == 0:
        raise FormatError("refusing to write an empty record file")
    path = Path(path)
    if path.suffix == ".jsonl":
        _write_records_jsonl(path, records, generative_scores)
        return
    flags = _record_flags(records, generative_scores)
    k = records[0].victim_logits.shape[0]
    d = records[0].auditor_embedding.shape[0] if flags & FLAG_EMBEDDING else 0
    chunks = [_pack_header(RECORDS_VERSION, KIND_RECORDS, k, d, flags, len(records))]
    for rec in records:
        _check_uniform(rec, flags)
        chunks.append(struct.pack("<Q", _binary_id(rec.id)))
        chunks.append(_f32(rec.victim_logits).tobytes())
        if flags & FLAG_EMBEDDING:
            chunks.append(_f32(rec.auditor_embedding).tobytes())
        if flags & FLAG_TEXT_LOGITS:
            chunks.append(_f32(rec.auditor_text_logits).tobytes())
        if flags & FLAG_EVAL:
            chunks.append(_pack_eval(rec))
    path.write_bytes(b"".join(chunks))


def _pack_eval(rec) -> bytes:
    if rec.eval_true_label is None or rec.eval_is_poisoned is None:
        return struct.pack("<Bi", _EVAL_ABSENT, -1)
    return struct.pack("<Bi", int(rec.eval_is_poisoned), rec.eval_true_label)


def _unpack_eval(data, off):
    poisoned_byte, true_label = struct.unpack_from("<Bi", data, off)
    if poisoned_byte == _EVAL_ABSENT:
        return None, None
    return true_label, bool(poisoned_byte)


def _record_size(version, k, d, flags) -> int:
    size = 8 + 4 * k
    if flags & FLAG_EMBEDDING:
        size += 4 * d
    if flags & FLAG_TEXT_LOGITS:
        size += 4 * k
    if version == CHAIN_RECORDS_VERSION:
        size += 4 * k  # specialist scores are mandatory in v2
        if flags & FLAG_SPECIALIST_EMBEDDING:
            size += 4 * d
    if flags & FLAG_EVAL:
        size += 5
    return size


def read_records(path) -> tuple[RecordFileInfo, list[StreamRecord]]:
    """Full reader, evaluation fields included."""
    path = Path(path)
    if path.suffix == ".jsonl":
        return _read_records_jsonl(path)
    data = path.read_bytes()
    version, k, d, flags, count = _read_header(
        data, path, KIND_RECORDS, (RECORDS_VERSION,)
    )
    info = RecordFileInfo(
        version=version, num_classes=k, embed_dim=d, count=count,
        has_embedding=bool(flags & FLAG_EMBEDDING),
        has_text_logits=bool(flags & FLAG_TEXT_LOGITS),
        has_eval=bool(flags & FLAG_EVAL),
        generative_scores=bool(flags & FLAG_GENERATIVE),
    )
    rec_size = _record_size(version, k, d, flags)
    _check_body_size(data, path, count, rec_size)
    records = []
    off = _HEADER.size
    for _ in range(count):
        (rid,) = struct.unpack_from("<Q", data, off)
        off += 8
        victim = np.frombuffer(data, "<f4", k, off).astype(np.float64)
        off += 4 * k
        embedding = text = None
        if flags & FLAG_EMBEDDING:
            embedding = np.frombuffer(data, "<f4", d, off).astype(np.float64)
            off += 4 * d
        if flags & FLAG_TEXT_LOGITS:
            text = np.frombuffer(data, "<f4", k, off).astype(np.float64)
            off += 4 * k
        true_label = poisoned = None
        if flags & FLAG_EVAL:
            true_label, poisoned = _unpack_eval(data, off)
            off += 5
        try:
            records.append(StreamRecord(
                id=str(rid), victim_logits=victim, auditor_embedding=embedding,
                auditor_text_logits=text, eval_true_label=true_label,
                eval_is_poisoned=poisoned,
            ))
        except RecordError as err:
            raise FormatError(f"{path}: record {rid} at byte {off - rec_size}: {err}")
    return info, records


def _check_body_size(data, path, count, rec_size):
    body = len(data) - _HEADER.size
    expected = count * rec_size
    if body != expected:
        found = body // rec_size
        raise FormatError(
            f"{path}: header promises {count} records ({expected} body bytes) "
            f"but the body holds {body} bytes (~{found} records); file is "
            f"{'truncated' if body < expected else 'overlong'} at byte "
            f"{_HEADER.size + min(body, expected)}"
        )


def read_records_for_routing(path) -> tuple[RecordFileInfo, list[StreamRecord]]:
    """Router-path reader: evaluation fields never reach the records."""
    info, records = read_records(path)
    return info, [r.without_eval() for r in records]


def read_eval_annotations(path) -> dict[str, tuple[int | None, bool | None]]:
    """Ground-truth side channel for log annotation and scoring; keyed by id."""
    _, records = read_records(path)
    return {r.id: (r.eval_true_label, r.eval_is_poisoned) for r in records}


# JSONL variant

def _q(values):
    """float32 quantization, matching what the binary format preserves."""
    if values is None:
        return None
    return [float(np.float32(v)) for v in np.asarray(values, dtype=np.float64)]


def _write_records_jsonl(path, records, generative_scores):
    flags = _record_flags(records, generative_scores)
    k = records[0].victim_logits.shape[0]
    d = records[0].auditor_embedding.shape[0] if flags & FLAG_EMBEDDING else 0
    lines = [json.dumps({
        "format": "semgate-records", "version": RECORDS_VERSION,
        "num_classes": k, "embed_dim": d, "count": len(records),
        "has_embedding": bool(flags & FLAG_EMBEDDING),
        "has_text_logits": bool(flags & FLAG_TEXT_LOGITS),
        "has_eval": bool(flags & FLAG_EVAL),
        "generative_scores": bool(flags & FLAG_GENERATIVE),
    })]
    for rec in records:
        _check_uniform(rec, flags)
        lines.append(json.dumps({
            "id": rec.id,
            "victim_logits": _q(rec.victim_logits),
            "auditor_embedding": _q(rec.auditor_embedding),
            "auditor_text_logits": _q(rec.auditor_text_logits),
            "eval_true_label": rec.eval_true_label,
            "eval_is_poisoned": rec.eval_is_poisoned,
        }))
    Path(path).write_text("\n".join(lines) + "\n")


def _read_records_jsonl(path):
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise FormatError(f"{path}: empty file")
    try:
        head = json.loads(lines[0])
    except json.JSONDecodeError as err:
        raise FormatError(f"{path}: header line is not valid JSON: {err}")
    if head.get("format") != "semgate-records":
        raise FormatError(f"{path}: not a record stream (format={head.get('format')!r})")
    if head.get("version") != RECORDS_VERSION:
        raise FormatError(f"{path}: unsupported format version {head.get('version')!r}")
    count = head["count"]
    body = [line for line in lines[1:] if line.strip()]
    if len(body) != count:
        raise FormatError(
            f"{path}: header promises {count} records but the body holds "
            f"{len(body)} lines"
        )
    records = []
    for n, line in enumerate(body, start=2):
        try:
            obj = json.loads(line)
            records.append(StreamRecord(
                id=obj["id"],
                victim_logits=obj["victim_logits"],
                auditor_embedding=obj.get("auditor_embedding"),
                auditor_text_logits=obj.get("auditor_text_logits"),
                eval_true_label=obj.get("eval_true_label"),
                eval_is_poisoned=obj.get("eval_is_poisoned"),
            ))
        except (json.JSONDecodeError, KeyError, RecordError, TypeError) as err:
            raise FormatError(f"{path}: line {n}: {err}")
    info = RecordFileInfo(
        version=head["version"], num_classes=head["num_classes"],
        embed_dim=head["embed_dim"], count=count,
        has_embedding=head["has_embedding"], has_text_logits=head["has_text_logits"],
        has_eval=head["has_eval"], generative_scores=head["generative_scores"],
    )
    return info, records


# chain record files (format version 2: a second auditor channel)

def write_chain_records(path, records: Sequence[ChainRecord]) -> None:
    if len(records) == 0:
        raise FormatError("refusing to write an empty record file")
    first = records[0]
    flags = FLAG_SPECIALIST_SCORES
    if first.generalist_embedding is not None:
        flags |= FLAG_EMBEDDING
    if first.generalist_scores is not None:
        flags |= FLAG_TEXT_LOGITS
    if first.specialist_embedding is not None:
        flags |= FLAG_SPECIALIST_EMBEDDING
    if any(r.eval_true_label is not None and r.eval_is_poisoned is not None for r in records):
        flags |= FLAG_EVAL
    k = first.victim_logits.shape[0]
    d = 0
    if first.generalist_embedding is not None:
        d = first.generalist_embedding.shape[0]
    elif first.specialist_embedding is not None:
        d = first.specialist_embedding.shape[0]
    chunks = [_pack_header(CHAIN_RECORDS_VERSION, KIND_RECORDS, k, d, flags, len(records))]
    for rec in records:
        layout = (
            rec.generalist_embedding is not None,
            rec.generalist_scores is not None,
            rec.specialist_embedding is not None,
        )
        expected = (
            bool(flags & FLAG_EMBEDDING),
            bool(flags & FLAG_TEXT_LOGITS),
            bool(flags & FLAG_SPECIALIST_EMBEDDING),
        )
        if layout != expected:
            raise FormatError(
                f"record {rec.id!r} has a different channel layout than the "
                "first record; files carry one layout"
            )
        chunks.append(struct.pack("<Q", _binary_id(rec.id)))
        chunks.append(_f32(rec.victim_logits).tobytes())
        if flags & FLAG_EMBEDDING:
            chunks.append(_f32(rec.generalist_embedding).tobytes())
        if flags & FLAG_TEXT_LOGITS:
            chunks.append(_f32(rec.generalist_scores).tobytes())
        chunks.append(_f32(rec.specialist_scores).tobytes())
        if flags & FLAG_SPECIALIST_EMBEDDING:
            chunks.append(_f32(rec.specialist_embedding).tobytes())
        if flags & FLAG_EVAL:
            chunks.append(_pack_eval(rec))
    Path(path).write_bytes(b"".join(chunks))


def read_chain_records(path) -> tuple[RecordFileInfo, list[ChainRecord]]:
    path = Path(path)
    data = path.read_bytes()
    version, k, d, flags, count = _read_header(
        data, path, KIND_RECORDS, (CHAIN_RECORDS_VERSION,)
    )
    if not flags & FLAG_SPECIALIST_SCORES:
        raise FormatError(f"{path}: chain records must carry specialist scores")
    info = RecordFileInfo(
        version=version, num_classes=k, embed_dim=d, count=count,
        has_embedding=bool(flags & FLAG_EMBEDDING),
        has_text_logits=bool(flags & FLAG_TEXT_LOGITS),
        has_eval=bool(flags & FLAG_EVAL),
        generative_scores=bool(flags & FLAG_GENERATIVE),
        has_specialist_scores=True,
        has_specialist_embedding=bool(flags & FLAG_SPECIALIST_EMBEDDING),
    )
    rec_size = _record_size(version, k, d, flags)
    _check_body_size(data, path, count, rec_size)
    records = []
    off = _HEADER.size
    for _ in range(count):
        (rid,) = struct.unpack_from("<Q", data, off)
        off += 8
        victim = np.frombuffer(data, "<f4", k, off).astype(np.float64)
        off += 4 * k
        gen_embedding = gen_scores = spec_embedding = None
        if flags & FLAG_EMBEDDING:
            gen_embedding = np.frombuffer(data, "<f4", d, off).astype(np.float64)
            off += 4 * d
        if flags & FLAG_TEXT_LOGITS:
            gen_scores = np.frombuffer(data, "<f4", k, off).astype(np.float64)
            off += 4 * k
        spec_scores = np.frombuffer(data, "<f4", k, off).astype(np.float64)
        off += 4 * k
        if flags & FLAG_SPECIALIST_EMBEDDING:
            spec_embedding = np.frombuffer(data, "<f4", d, off).astype(np.float64)
            off += 4 * d
        true_label = poisoned = None
        if flags & FLAG_EVAL:
            true_label, poisoned = _unpack_eval(data, off)
            off += 5
        try:
            records.append(ChainRecord(
                id=str(rid), victim_logits=victim, specialist_scores=spec_scores,
                generalist_embedding=gen_embedding, generalist_scores=gen_scores,
                specialist_embedding=spec_embedding, eval_true_label=true_label,
                eval_is_poisoned=poisoned,
            ))
        except RecordError as err:
            raise FormatError(f"{path}: record {rid} at byte {off - rec_size}: {err}")
    return info, records


def read_chain_records_for_routing(path) -> tuple[RecordFileInfo, list[ChainRecord]]:
    """Chain-record reader for the routing path; evaluation fields dropped."""
    info, records = read_chain_records(path)
    return info, [r.without_eval() for r in records]


def read_chain_eval_annotations(path) -> dict[str, tuple[int | None, bool | None]]:
    _, records = read_chain_records(path)
    return {r.id: (r.eval_true_label, r.eval_is_poisoned) for r in records}


# anchor banks

def write_anchors(path, bank: AnchorBank) -> None:
    k, d = bank.matrix.shape
    header = _pack_header(ANCHORS_VERSION, KIND_ANCHORS, k, d, 0, k)
    Path(path).write_bytes(header + _f32(bank.matrix.T).tobytes())


def read_anchors(path) -> AnchorBank:
    path = Path(path)
    data = path.read_bytes()
    _, k, d, _, count = _read_header(data, path, KIND_ANCHORS, (ANCHORS_VERSION,))
    if count != k:
        raise FormatError(f"{path}: anchor count {count} != num_classes {k}")
    expected = 4 * k * d
    body = len(data) - _HEADER.size
    if body != expected:
        raise FormatError(
            f"{path}: anchor body holds {body} bytes, expected {expected}"
        )
    matrix = np.frombuffer(data, "<f4", k * d, _HEADER.size).astype(np.float64)
    try:
        return AnchorBank(matrix.reshape(d, k).T)
    except RecordError as err:
        raise FormatError(f"{path}: {err}")


# flat key=value configuration

_ROUTER_FIELDS = {f.name: f.type for f in dataclass_fields(RouterConfig)}
_SIM_FIELDS = {f.name: f.type for f in dataclass_fields(SimConfig)}
_KNOWN_KEYS = set(_ROUTER_FIELDS) | set(_SIM_FIELDS)

_BOOL_WORDS = {"true": True, "false": False, "1": True, "0": False}


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    pairs: dict[str, str] = {}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{n}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        key, value = key.strip(), value.strip()
        if key in pairs:
            raise ConfigError(f"{source}:{n}: duplicate key {key!r}")
        if key not in _KNOWN_KEYS:
            raise ConfigError(f"{source}:{n}: unknown key {key!r}")
        pairs[key] = value
    return pairs


def _coerce(name: str, value: str, annotation: str, source: str):
    base = annotation.split("=")[0].strip()
    try:
        if base == "bool":
            word = value.lower()
            if word not in _BOOL_WORDS:
                raise ValueError(f"not a boolean: {value!r}")
            return _BOOL_WORDS[word]
        if base == "int":
            return int(value)
        if base == "float":
            return float(value)
    except ValueError as err:
        raise ConfigError(f"{source}: key {name!r}: {err}")
    raise ConfigError(f"{source}: key {name!r} has unsupported type {annotation!r}")


def build_router_config(pairs: dict[str, str], source: str = "<config>") -> RouterConfig:
    """RouterConfig from parsed key=value pairs. Keys belonging to SimConfig
    are tolerated (one file can drive both tools); anything else was already
    fatal in parse_config_text."""
    kwargs = {
        name: _coerce(name, pairs[name], ann, source)
        for name, ann in _ROUTER_FIELDS.items() if name in pairs
    }
    if "num_classes" not in kwargs or "embed_dim" not in kwargs:
        raise ConfigError(f"{source}: num_classes and embed_dim are required")
    return RouterConfig(**kwargs)


def build_sim_config(pairs: dict[str, str], source: str = "<config>") -> SimConfig:
    kwargs = {
        name: _coerce(name, pairs[name], ann, source)
        for name, ann in _SIM_FIELDS.items() if name in pairs
    }
    return SimConfig(**kwargs)


def config_hash(config: RouterConfig) -> str:
    canon = "\n".join(
        f"{f.name}={getattr(config, f.name)!r}" for f in dataclass_fields(RouterConfig)
    )
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


# decision log

_LOG_MAGIC = "# semgate-log v1"
_PHASE_CODE = {Phase.WARMUP: "w", Phase.ADAPTIVE: "a"}
_CODE_PHASE = {v: k for k, v in _PHASE_CODE.items()}


@dataclass(frozen=True)
class LoggedDecision:
    """Decision line re-read from a log, plus optional eval annotations."""

    record_id: str
    victim_label: int
    auditor_label: int
    margin: float
    threshold: float
    accepted: bool
    routed_label: int
    state_updated: bool
    phase: Phase
    true_label: int | None = None
    is_poisoned: bool | None = None


def _escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace("\t", "\\t").replace("\n", "\\n")


def format_log(
    entries: Sequence[Decision | SkippedRecord],
    metadata: dict[str, str],
    eval_by_id: dict[str, tuple[int | None, bool | None]] | None = None,
) -> str:
    """Render a decision log. Deterministic: identical inputs give identical
    bytes, which is the replayability contract."""
    lines = [_LOG_MAGIC, f"# tool_version={_VERSION}"]
    for key in sorted(metadata):
        lines.append(f"# {key}={metadata[key]}")
    lines.append("# columns: D id phase victim auditor margin threshold "
                 "accepted updated routed true poisoned | E id message")
    for e in entries:
        if isinstance(e, SkippedRecord):
            lines.append(f"E\t{_escape(e.record_id)}\t{_escape(e.error)}")
            continue
        true_label = is_poisoned = None
        if eval_by_id is not None:
            true_label, is_poisoned = eval_by_id.get(e.record_id, (None, None))
        lines.append("\t".join((
            "D", _escape(e.record_id), _PHASE_CODE[e.phase],
            str(e.victim_label), str(e.auditor_label),
            repr(e.margin), repr(e.threshold),
            "1" if e.accepted else "0", "1" if e.state_updated else "0",
            str(e.routed_label),
            "-" if true_label is None else str(true_label),
            "-" if is_poisoned is None else ("1" if is_poisoned else "0"),
        )))
    return "\n".join(lines) + "\n"


def write_decision_log(path, entries, metadata, eval_by_id=None) -> None:
    Path(path).write_text(format_log(entries, metadata, eval_by_id))


def _unescape(text: str) -> str:
    out, i = [], 0
    while i < len(text):
        c = text[i]
        if c == "\\" and i + 1 < len(text):
            out.append({"t": "\t", "n": "\n", "\\": "\\"}.get(text[i + 1], text[i + 1]))
            i += 2
        else:
            out.append(c)
            i += 1
    return "".join(out)


def read_decision_log(path) -> tuple[dict[str, str], list[LoggedDecision | SkippedRecord]]:
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines or lines[0] != _LOG_MAGIC:
        raise FormatError(f"{path}: not a decision log (missing {_LOG_MAGIC!r})")
    meta: dict[str, str] = {}
    entries: list[LoggedDecision | SkippedRecord] = []
    for n, line in enumerate(lines[1:], start=2):
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body and not body.startswith("columns:"):
                key, value = body.split("=", 1)
                meta[key.strip()] = value.strip()
            continue
        parts = line.split("\t")
        try:
            if parts[0] == "E" and len(parts) == 3:
                entries.append(SkippedRecord(_unescape(parts[1]), _unescape(parts[2])))
            elif parts[0] == "D" and len(parts) == 12:
                entries.append(LoggedDecision(
                    record_id=_unescape(parts[1]),
                    phase=_CODE_PHASE[parts[2]],
                    victim_label=int(parts[3]),
                    auditor_label=int(parts[4]),
                    margin=float(parts[5]),
                    threshold=float(parts[6]),
                    accepted=parts[7] == "1",
                    state_updated=parts[8] == "1",
                    routed_label=int(parts[9]),
                    true_label=None if parts[10] == "-" else int(parts[10]),
                    is_poisoned=None if parts[11] == "-" else parts[11] == "1",
                ))
            else:
                raise ValueError("unrecognized line shape")
        except (ValueError, KeyError, IndexError) as err:
            raise FormatError(f"{path}: line {n}: {err}")
    return meta, entries


def log_body_lines(path) -> list[str]:
    """Non-header lines of a log; what resume must reproduce byte-for-byte."""
    return [l for l in Path(path).read_text().splitlines() if not l.startswith("#")]


# checkpoints

_CKPT_MAGIC = "semgate-checkpoint v1"


def save_checkpoint(path, state: RouterState, records_consumed: int | None = None) -> None:
    """Serialize the learned state losslessly (floats via repr round-trip).

    records_consumed additionally tracks skipped records so a resumed run
    knows how far into the input file to seek; it defaults to records_seen.
    """
    if records_consumed is None:
        records_consumed = state.records_seen
    lines = [_CKPT_MAGIC]
    for f in dataclass_fields(RouterConfig):
        lines.append(f"config {f.name}={getattr(state.config, f.name)!r}")
    lines.append(f"records_seen {state.records_seen}")
    lines.append(f"records_consumed {records_consumed}")
    for k, ms in enumerate(state.moments):
        lines.append(
            f"moment {k} {ms.n} {float(ms.s1)!r} {float(ms.s2)!r} {float(ms.s3)!r}"
        )
    for k in range(state.config.num_classes):
        row = " ".join(repr(float(v)) for v in state.protos.centroids[k])
        lines.append(f"proto {k} {int(state.protos.counts[k])} {row}")
    lines.append("end")
    Path(path).write_text("\n".join(lines) + "\n")


def load_checkpoint(path) -> tuple[RouterState, int]:
    """Rebuild (state, records_consumed); anchors are not part of a
    checkpoint and must be re-attached by the caller."""
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines or lines[0] != _CKPT_MAGIC:
        raise FormatError(f"{path}: not a checkpoint (missing {_CKPT_MAGIC!r})")
    if lines[-1] != "end":
        raise FormatError(f"{path}: truncated checkpoint (missing end marker)")
    config_pairs: dict[str, str] = {}
    moments: dict[int, MomentState] = {}
    protos: dict[int, tuple[int, np.ndarray]] = {}
    records_seen = records_consumed = 0
    try:
        for line in lines[1:-1]:
            head, rest = line.split(" ", 1)
            if head == "config":
                key, value = rest.split("=", 1)
                config_pairs[key] = value.strip("'\"")
            elif head == "records_seen":
                records_seen = int(rest)
            elif head == "records_consumed":
                records_consumed = int(rest)
            elif head == "moment":
                k, n, s1, s2, s3 = rest.split(" ")
                moments[int(k)] = MomentState(int(n), float(s1), float(s2), float(s3))
            elif head == "proto":
                parts = rest.split(" ")
                protos[int(parts[0])] = (
                    int(parts[1]), np.array([float(v) for v in parts[2:]]),
                )
            else:
                raise ValueError(f"unknown section {head!r}")
    except (ValueError, IndexError) as err:
        raise FormatError(f"{path}: malformed checkpoint: {err}")
    config = build_router_config(config_pairs, source=str(path))
    k, d = config.num_classes, config.embed_dim
    if sorted(moments) != list(range(k)) or sorted(protos) != list(range(k)):
        raise FormatError(f"{path}: checkpoint does not cover all {k} classes")
    centroids = np.zeros((k, d))
    counts = np.zeros(k, dtype=np.int64)
    for i in range(k):
        counts[i], centroids[i] = protos[i][0], protos[i][1]
        if centroids[i].shape[0] != d:
            raise FormatError(f"{path}: centroid {i} has wrong dimension")
    centroids.setflags(write=False)
    counts.setflags(write=False)
    state = RouterState(
        config=config,
        anchors=None,
        moments=tuple(moments[i] for i in range(k)),
        protos=PrototypeState(centroids=centroids, counts=counts),
        records_seen=records_seen,
    )
    return state, records_consumed
