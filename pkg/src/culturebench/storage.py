"""Deterministic persistence: JSONL stores, digests, manifests, clocks, seeded RNG substreams.

Every artifact the pipeline writes goes through this module so that two runs
with the same seed and inputs produce byte-identical files.
"""
from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Any, Iterable


def canonical_json(obj: Any) -> str:
    """Serialize with sorted keys and no gratuitous whitespace (stable bytes)."""
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def digest(*parts: str, length: int = 16) -> str:
    """Stable hex digest of the given string parts (unit-separator joined)."""
    h = hashlib.sha256("\x1f".join(parts).encode("utf-8")).hexdigest()
    return h[:length]


def substream(seed: int, *names: str) -> random.Random:
    """Independent RNG derived from the run seed and a named stage/bucket path.

    All randomness in the pipeline flows from the single configured seed
    through these substreams, so stages can be re-run in isolation.
    """
    material = f"{seed}:" + "/".join(names)
    h = hashlib.sha256(material.encode("utf-8")).digest()
    return random.Random(int.from_bytes(h[:8], "big"))


def write_jsonl(path: str | Path, records: Iterable[dict]) -> int:
    """Write one canonical-JSON object per line; returns the record count."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for rec in records:
            f.write(canonical_json(rec))
            f.write("\n")
            n += 1
    return n


def append_jsonl(path: str | Path, record: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a", encoding="utf-8", newline="\n") as f:
        f.write(canonical_json(record))
        f.write("\n")


def read_jsonl(path: str | Path) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out


def write_json(path: str | Path, obj: Any) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(canonical_json(obj))
        f.write("\n")


def read_json(path: str | Path) -> Any:
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def file_digest(path: str | Path, length: int = 16) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()[:length]


class SystemClock:
    """Wall clock; used for live runs."""

    def now(self) -> datetime:
        return datetime.now(timezone.utc)


class TickClock:
    """Deterministic clock advancing a fixed step per call.

    Wired in whenever the configuration selects mock providers so that
    timestamps (and therefore artifact bytes) are reproducible.
    """

    def __init__(self, start: datetime | None = None, step_seconds: float = 1.0):
        self._t = start or datetime(2025, 1, 1, tzinfo=timezone.utc)
        self._step = timedelta(seconds=step_seconds)

    def now(self) -> datetime:
        t = self._t
        self._t = t + self._step
        return t


def isoformat(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass
class Manifest:
    """Per-stage record of what was produced from what.

    Every stage writes one; together they make each workspace file reachable
    from a manifest and each run reproducible from (inputs, config, seed).
    """

    stage: str
    created_at: str
    seed: int
    config_digest: str
    inputs: list[str] = field(default_factory=list)
    outputs: list[str] = field(default_factory=list)
    counts: dict[str, int] = field(default_factory=dict)
    extra: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "stage": self.stage,
            "created_at": self.created_at,
            "seed": self.seed,
            "config_digest": self.config_digest,
            "inputs": sorted(self.inputs),
            "outputs": sorted(self.outputs),
            "counts": dict(sorted(self.counts.items())),
            "extra": self.extra,
        }


def write_manifest(path: str | Path, manifest: Manifest) -> None:
    write_json(path, manifest.to_dict())


def read_manifest(path: str | Path) -> Manifest:
    d = read_json(path)
    return Manifest(
        stage=d["stage"],
        created_at=d["created_at"],
        seed=d["seed"],
        config_digest=d["config_digest"],
        inputs=list(d.get("inputs", [])),
        outputs=list(d.get("outputs", [])),
        counts=dict(d.get("counts", {})),
        extra=dict(d.get("extra", {})),
    )
