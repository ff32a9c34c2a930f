"""Content-addressed run registry.

Layout::

    <root>/runs/<run_id>/record.json
                        /checkpoint.npz        (optional)
                        /history.json          (optional)
                        /predictions/<target>.csv
                        /reports/<target>.json

``run_id`` is the first 16 hex digits of the SHA-256 of the canonical JSON
of the run's config, so identical configs map to the same directory on any
machine.  A run directory is assembled under a temporary name and renamed
into place, so readers never see half-written runs.
"""

from __future__ import annotations

import hashlib
import json
import os
import shutil
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

from .errors import ConflictError, ResourceError, ValidationError
from .evaluation import EvalReport, PredictionSet

RUN_ID_LENGTH = 16


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


def run_id_for(config: Mapping) -> str:
    return hashlib.sha256(canonical_json(config).encode("utf-8")).hexdigest()[:RUN_ID_LENGTH]


@dataclass
class RunRecord:
    run_id: str
    kind: str
    config: dict
    metrics: dict = field(default_factory=dict)
    targets: list[str] = field(default_factory=list)

    @property
    def seed(self) -> int | None:
        return self.config.get("seed")

    @property
    def method(self) -> str | None:
        return self.config.get("method")

    @property
    def compilation_id(self) -> int | None:
        comp = self.config.get("compilation")
        return comp.get("id") if isinstance(comp, dict) else None

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "kind": self.kind,
            "config": self.config,
            "metrics": self.metrics,
            "targets": self.targets,
        }


@dataclass
class RunArtifacts:
    """Everything a finished run leaves behind, written in one atomic step."""

    metrics: dict = field(default_factory=dict)
    predictions: dict[str, PredictionSet] = field(default_factory=dict)
    reports: dict[str, EvalReport] = field(default_factory=dict)
    history: dict | None = None
    # called with a path to write the checkpoint file to
    write_checkpoint: Callable[[Path], object] | None = None


class Registry:
    def __init__(self, root: str | Path) -> None:
        self.root = Path(root)
        self.runs_dir = self.root / "runs"

    def _dir(self, run_id: str) -> Path:
        return self.runs_dir / run_id

    def exists(self, config: Mapping) -> bool:
        return (self._dir(run_id_for(config)) / "record.json").exists()

    def lookup(self, config: Mapping) -> RunRecord | None:
        """Return the stored record for ``config``, or None if never computed.

        A stored run under the same id with a different config is a conflict.
        """
        run_id = run_id_for(config)
        path = self._dir(run_id) / "record.json"
        if not path.exists():
            return None
        record = self.record(run_id)
        if canonical_json(record.config) != canonical_json(config):
            raise ConflictError(f"run {run_id} exists with a different config")
        return record

    def put(self, kind: str, config: Mapping, artifacts: RunArtifacts) -> tuple[RunRecord, bool]:
        """Store a run; returns (record, created).  ``created`` is False if it was already there."""
        try:
            config = json.loads(canonical_json(config))
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"run config is not JSON-serialisable: {exc}") from exc
        existing = self.lookup(config)
        if existing is not None:
            return existing, False
        run_id = run_id_for(config)
        record = RunRecord(run_id, kind, config, dict(artifacts.metrics), sorted(artifacts.predictions))
        self.runs_dir.mkdir(parents=True, exist_ok=True)
        tmp = Path(tempfile.mkdtemp(prefix=f".{run_id}-", dir=self.runs_dir))
        try:
            if artifacts.write_checkpoint is not None:
                artifacts.write_checkpoint(tmp / "checkpoint.npz")
            if artifacts.history is not None:
                (tmp / "history.json").write_text(json.dumps(artifacts.history, indent=2, sort_keys=True) + "\n")
            if artifacts.predictions:
                (tmp / "predictions").mkdir()
                for target, preds in artifacts.predictions.items():
                    preds.to_csv(tmp / "predictions" / f"{target}.csv")
            if artifacts.reports:
                (tmp / "reports").mkdir()
                for target, report in artifacts.reports.items():
                    (tmp / "reports" / f"{target}.json").write_text(report.to_json() + "\n")
            (tmp / "record.json").write_text(json.dumps(record.to_dict(), indent=2, sort_keys=True) + "\n")
            try:
                os.rename(tmp, self._dir(run_id))
            except OSError:
                # another writer got there first; identical config means identical content
                if self.lookup(config) is None:
                    raise
                shutil.rmtree(tmp, ignore_errors=True)
                return self.record(run_id), False
        except BaseException:
            shutil.rmtree(tmp, ignore_errors=True)
            raise
        return record, True

    def record(self, run_id: str) -> RunRecord:
        path = self._dir(run_id) / "record.json"
        if not path.exists():
            raise ResourceError(f"no run {run_id} in {self.root}")
        data = json.loads(path.read_text())
        return RunRecord(data["run_id"], data["kind"], data["config"], data.get("metrics", {}), data.get("targets", []))

    def list(self, kind: str | None = None) -> list[RunRecord]:
        if not self.runs_dir.exists():
            return []
        records = [
            self.record(p.name)
            for p in sorted(self.runs_dir.iterdir())
            if not p.name.startswith(".") and (p / "record.json").exists()
        ]
        return [r for r in records if kind is None or r.kind == kind]

    def find(self, compilation_id: int, method: str) -> list[str]:
        """Run ids of training runs for one (compilation, method), lowest seed first."""
        hits = [
            r for r in self.list("train")
            if r.compilation_id == compilation_id and (r.method or "").lower() == method.lower()
        ]
        hits.sort(key=lambda r: (r.seed if r.seed is not None else -1, r.run_id))
        return [r.run_id for r in hits]

    def predictions(self, run_id: str, target: str) -> PredictionSet:
        path = self._dir(run_id) / "predictions" / f"{target}.csv"
        if not path.exists():
            raise ResourceError(f"run {run_id} has no predictions for {target!r}")
        return PredictionSet.from_csv(path, name=run_id)

    def checkpoint_path(self, run_id: str) -> Path:
        path = self._dir(run_id) / "checkpoint.npz"
        if not path.exists():
            raise ResourceError(f"run {run_id} has no checkpoint")
        return path
