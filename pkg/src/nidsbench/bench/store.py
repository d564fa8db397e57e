"""On-disk result store: records, config snapshot, factor ledger, hash manifest."""

from __future__ import annotations

import hashlib
import json
import queue
import threading
from collections import defaultdict
from pathlib import Path
from typing import Iterable

import yaml

from ..evaluator import TrialRecord
from ..stats import Aggregate, aggregate

RECORDS, CONFIG, LEDGER, MANIFEST, PROGRESS = (
    "records.jsonl", "config.yaml", "ledger.json", "manifest.json", "progress.json")
TIMING_FIELDS = ("timings",)


class StoreError(RuntimeError):
    pass


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)


def ledger_entry(r: TrialRecord, netflow_tool: str, hardware: dict, master_seed: int,
                 repetitions: dict) -> dict:
    """The (P, D, S, H, U) provenance of one record."""
    return {
        "P": {"netflow_tool": netflow_tool, "feature_set": r.feature_set},
        "D": {"dataset": r.dataset, "availability": r.availability, "regime": r.regime},
        "S": {"pipeline": r.pipeline, "learner": r.algorithm, "hyperparams": r.hyperparams},
        "H": hardware,
        "U": {"master_seed": master_seed, "repetitions": repetitions},
    }


def ledger_id(entry: dict) -> str:
    return hashlib.sha256(_canonical(entry).encode()).hexdigest()[:16]


class ResultStore:
    """Directory-backed store. Records are appended as JSON lines."""

    def __init__(self, directory: str | Path):
        self.dir = Path(directory)
        self.records: list[TrialRecord] = []
        self.ledger: dict[str, dict] = {}
        self.config: dict = {}
        self.completed: list[str] = []

    # -- persistence ----------------------------------------------------------------

    @classmethod
    def create(cls, directory: str | Path, config: dict) -> "ResultStore":
        s = cls(directory)
        s.dir.mkdir(parents=True, exist_ok=True)
        if (s.dir / RECORDS).exists() and (s.dir / RECORDS).stat().st_size:
            raise StoreError(f"{s.dir} already holds results; resume it or pick another directory")
        s.config = config
        (s.dir / RECORDS).write_text("", encoding="utf-8")
        with open(s.dir / CONFIG, "w", encoding="utf-8") as fh:
            yaml.safe_dump(config, fh, sort_keys=False)
        s._write_json(LEDGER, {})
        s._write_json(PROGRESS, {"completed": []})
        return s

    @classmethod
    def open(cls, directory: str | Path) -> "ResultStore":
        s = cls(directory)
        if not (s.dir / RECORDS).exists():
            raise StoreError(f"{s.dir} is not a result store (no {RECORDS})")
        with open(s.dir / RECORDS, encoding="utf-8") as fh:
            s.records = [TrialRecord.from_dict(json.loads(line)) for line in fh if line.strip()]
        if (s.dir / CONFIG).exists():
            s.config = yaml.safe_load((s.dir / CONFIG).read_text(encoding="utf-8")) or {}
        if (s.dir / LEDGER).exists():
            s.ledger = json.loads((s.dir / LEDGER).read_text(encoding="utf-8"))
        if (s.dir / PROGRESS).exists():
            s.completed = json.loads((s.dir / PROGRESS).read_text(encoding="utf-8"))["completed"]
        return s

    def _write_json(self, name: str, obj) -> None:
        tmp = self.dir / f"{name}.tmp"
        tmp.write_text(json.dumps(obj, indent=1, sort_keys=True), encoding="utf-8")
        tmp.replace(self.dir / name)

    def drop_incomplete(self, unit_of) -> int:
        """Discard records of units not marked complete (after a crash); returns how many."""
        done = set(self.completed)
        keep = [r for r in self.records if unit_of(r) in done]
        dropped = len(self.records) - len(keep)
        if dropped:
            self.records = keep
            with open(self.dir / RECORDS, "w", encoding="utf-8") as fh:
                for r in keep:
                    fh.write(_canonical(r.to_dict()) + "\n")
        return dropped

    def append(self, records: Iterable[TrialRecord], ledger: dict[str, dict]) -> None:
        records = list(records)
        for r in records:
            if r.ledger_id not in ledger and r.ledger_id not in self.ledger:
                raise StoreError(f"record {r.factors} has no ledger entry")
        self.ledger.update(ledger)
        self._write_json(LEDGER, self.ledger)
        with open(self.dir / RECORDS, "a", encoding="utf-8") as fh:
            for r in records:
                fh.write(_canonical(r.to_dict()) + "\n")
            fh.flush()
        self.records.extend(records)

    def mark_complete(self, unit: str) -> None:
        self.completed.append(unit)
        self._write_json(PROGRESS, {"completed": self.completed})

    def finalize(self) -> dict:
        files = {}
        for name in (RECORDS, CONFIG, LEDGER):
            p = self.dir / name
            if p.exists():
                files[name] = hashlib.sha256(p.read_bytes()).hexdigest()
        manifest = {"content_hash": self.content_hash(), "n_records": len(self.records), "files": files}
        self._write_json(MANIFEST, manifest)
        return manifest

    # -- queries --------------------------------------------------------------------

    def content_hash(self) -> str:
        """sha256 over every record with timing fields removed, in factor order."""
        rows = []
        for r in self.records:
            d = r.to_dict()
            for k in TIMING_FIELDS:
                d.pop(k, None)
            rows.append(_canonical(d))
        return hashlib.sha256("\n".join(sorted(rows)).encode()).hexdigest()

    def select(self, **key) -> list[TrialRecord]:
        return [r for r in self.records if all(str(getattr(r, k)) == str(v) for k, v in key.items())]

    def aggregates(self, metrics: Iterable[str] = ("tpr", "fpr", "acc_mal", "tpr_org", "tpr_adv")
                   ) -> dict[tuple, dict[str, Aggregate]]:
        groups: dict[tuple, list[TrialRecord]] = defaultdict(list)
        for r in self.records:
            if not r.skipped:
                groups[r.cell].append(r)
        out = {}
        for cell, recs in groups.items():
            out[cell] = {}
            for m in metrics:
                vals = [r.metrics[m] for r in recs if m in r.metrics]
                if vals:
                    out[cell][m] = aggregate(vals, m)
            for t in ("train_wall_seconds", "infer_wall_seconds"):
                out[cell][t] = aggregate([getattr(r, t) for r in recs], t)
        return out

    def trace(self, cell: tuple) -> dict:
        """Ledger entries behind an aggregated cell."""
        ids = {r.ledger_id for r in self.records if r.cell == cell}
        return {i: self.ledger[i] for i in sorted(ids)}


class RecordWriter:
    """Single consumer thread that drains a bounded queue into a store."""

    def __init__(self, store: ResultStore, maxsize: int = 64):
        self.store = store
        self.q: queue.Queue = queue.Queue(maxsize=maxsize)
        self.error: BaseException | None = None
        self._thread = threading.Thread(target=self._run, name="result-writer", daemon=True)
        self._thread.start()

    def _run(self) -> None:
        while True:
            item = self.q.get()
            if item is None:
                return
            if self.error is not None:
                continue
            kind, payload = item
            try:
                if kind == "records":
                    self.store.append(*payload)
                else:
                    self.store.mark_complete(payload)
            except BaseException as exc:  # surfaced to the producer on the next call
                self.error = exc

    def _check(self) -> None:
        if self.error is not None:
            raise self.error

    def put_records(self, records: list[TrialRecord], ledger: dict[str, dict]) -> None:
        self._check()
        self.q.put(("records", (records, ledger)))

    def complete(self, unit: str) -> None:
        self._check()
        self.q.put(("complete", unit))

    def close(self) -> None:
        self.q.put(None)
        self._thread.join()
        self._check()
