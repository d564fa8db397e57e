"""Campaign orchestration.

One split is drawn per (dataset, availability, regime, trial) and every
(algorithm, feature set, pipeline) is trained and evaluated on it. A trial is
the unit of resumption: its records are written, then it is marked complete.
Trials run one after another so that the timings they record are taken with
the worker pool to themselves.
"""

from __future__ import annotations

import logging
import zlib
from pathlib import Path

import numpy as np

from ..evaluator import (ADVERSARIAL, CLOSED, UNKNOWN, EvaluationError, TrialContext, TrialRecord,
                         run_adversarial, run_closed, run_unknown)
from ..flowstore import COMPLETE, ESSENTIAL, Dataset, apply_caps, load_dataset, project
from ..pipelines import ENSEMBLES, PipelineError, train_pipeline
from ..splitter import STATIC, AvailabilityLevel, SplitError, static_split, temporal_split
from .config import CampaignConfig, DatasetRef
from .hardware import HardwareDescriptor, capture_hardware
from .store import RecordWriter, ResultStore, ledger_entry, ledger_id

log = logging.getLogger(__name__)


class CampaignError(RuntimeError):
    def __init__(self, message: str, completed: int):
        super().__init__(f"{message} (campaign aborted after {completed} completed trials)")
        self.completed = completed


class Interrupted(RuntimeError):
    """Raised by ``stop_after`` to emulate a crash in tests."""


def availability_label(a: AvailabilityLevel) -> str:
    from ..splitter import _DEFAULT_FRACTIONS

    if a.kind in _DEFAULT_FRACTIONS and a.train_fraction != _DEFAULT_FRACTIONS[a.kind]:
        return f"{a.kind}({a.train_fraction:g})"
    if a.kind == "Limited" and a.limited_per_class != 100:
        return f"Limited({a.limited_per_class})"
    return a.kind


def trial_seed(master: int, dataset: str, availability: str, trial: int) -> int:
    key = zlib.crc32(f"{dataset}|{availability}".encode())
    return int(np.random.SeedSequence([master, key, trial]).generate_state(1)[0])


def unit_key(dataset: str, availability: str, regime: str, trial: int) -> str:
    return f"{dataset}|{availability}|{regime}|{trial}"


def record_unit(r: TrialRecord) -> str:
    return unit_key(r.dataset, r.availability, r.regime, r.trial)


def load_campaign_dataset(ref: DatasetRef, master_seed: int) -> Dataset:
    spec = ref.load_spec()
    if ref.synthetic is not None:
        from ..synthetic import generate

        syn = ref.synthetic
        counts = {int(k): int(v) for k, v in syn["counts"].items()}
        d = generate(counts, seed=int(syn.get("seed", 0)), separation=float(syn.get("separation", 1.0)), spec=spec)
    else:
        d = load_dataset(spec, ref.data_path())
    return apply_caps(d, master_seed) if ref.apply_caps else d


class _Unit:
    """Everything needed to run one trial."""

    def __init__(self, cfg: CampaignConfig, ref: DatasetRef, d: Dataset, views: dict, hardware: dict):
        self.cfg, self.ref, self.d, self.views, self.hardware = cfg, ref, d, views, hardware

    def _skip(self, ctx: TrialContext, lk, kind: str, fs: str, scenario: str, reason: str,
              split_id: str = "") -> TrialRecord:
        return TrialRecord(ctx.dataset, lk.kind, kind, ctx.availability, fs, ctx.regime, scenario, ctx.trial,
                           ctx.seed, split_id, workers=self.cfg.workers, skipped=True, reason=reason)

    def run(self, a: AvailabilityLevel, regime: str, trial: int) -> list[TrialRecord]:
        out = self._records(a, regime, trial)
        self.ledger: dict[str, dict] = {}
        for r in out:
            entry = ledger_entry(r, self.d.spec.netflow_tool, self.hardware, self.cfg.master_seed,
                                 self.cfg.repetitions)
            r.ledger_id = ledger_id(entry)
            self.ledger[r.ledger_id] = entry
        return out

    def _records(self, a: AvailabilityLevel, regime: str, trial: int) -> list[TrialRecord]:
        cfg = self.cfg
        label = availability_label(a)
        seed = trial_seed(cfg.master_seed, self.ref.name, label, trial)
        ctx = TrialContext(self.ref.name, label, regime, trial, seed)
        scenarios = [s for s in (CLOSED, UNKNOWN, ADVERSARIAL) if s in cfg.scenarios]
        try:
            split = static_split(self.d, a, seed) if regime == STATIC else temporal_split(self.d, a)
        except SplitError as exc:
            return [self._skip(ctx, lk, kind, fs, s, str(exc))
                    for lk in cfg.algorithms for fs in cfg.feature_sets for kind in cfg.pipelines
                    for s in scenarios if _applies(s, fs)]
        w = cfg.workers
        out: list[TrialRecord] = []
        for lk in cfg.algorithms:
            for fs in cfg.feature_sets:
                view = self.views[fs]
                shared = None
                closed = CLOSED in scenarios
                adversarial = ADVERSARIAL in scenarios and fs == ESSENTIAL
                for kind in cfg.pipelines:
                    if closed or adversarial:
                        try:
                            p = train_pipeline(kind, lk, split, view, seed=seed, workers=w,
                                               shared_specialists=shared if kind in ENSEMBLES else None)
                        except PipelineError as exc:
                            out += [self._skip(ctx, lk, kind, fs, s, str(exc), split.split_id)
                                    for s in (CLOSED, ADVERSARIAL) if s in scenarios and _applies(s, fs)]
                            p = None
                        if p is not None:
                            if kind in ENSEMBLES and shared is None:
                                shared = p
                            if closed:
                                out.append(run_closed(p, split, view, ctx, w))
                            if adversarial:
                                out.append(run_adversarial(p, self.d, split, cfg.perturbation, ctx,
                                                           seed=seed, workers=w))
                    if UNKNOWN in scenarios and fs == COMPLETE:
                        try:
                            out.append(run_unknown(kind, lk, split, view, ctx, seed=seed, workers=w))
                        except (EvaluationError, PipelineError) as exc:
                            out.append(self._skip(ctx, lk, kind, fs, UNKNOWN, str(exc), split.split_id))
        return out


def _applies(scenario: str, fs: str) -> bool:
    return (scenario == CLOSED or (scenario == UNKNOWN and fs == COMPLETE)
            or (scenario == ADVERSARIAL and fs == ESSENTIAL))


def run_campaign(cfg: CampaignConfig, store_dir: str | Path | None = None, *, resume: bool = False,
                 hardware: HardwareDescriptor | None = None, stop_after: int | None = None) -> ResultStore:
    """Run (or resume) ``cfg`` and return the finalised store."""
    hardware = hardware or capture_hardware(cfg.hardware)
    directory = Path(store_dir or cfg.output)
    snapshot = {**cfg.to_dict(), "output": str(directory)}
    if resume:
        store = ResultStore.open(directory)
        if {k: v for k, v in store.config.items() if k != "output"} != \
                {k: v for k, v in snapshot.items() if k != "output"}:
            raise CampaignError("the stored config differs from the one given; refusing to resume", len(
                store.completed))
        dropped = store.drop_incomplete(record_unit)
        if dropped:
            log.info("discarded %d records of an interrupted trial", dropped)
    else:
        store = ResultStore.create(directory, snapshot)
    done = set(store.completed)
    completed = len(done)
    hw = hardware.provenance()

    writer = RecordWriter(store)
    ran = 0
    try:
        for ref in cfg.datasets:
            unit = None
            for a in cfg.availabilities:
                label = availability_label(a)
                for regime in cfg.regimes:
                    for t in range(cfg.trials_for(a, regime)):
                        key = unit_key(ref.name, label, regime, t)
                        if key in done:
                            continue
                        if stop_after is not None and ran >= stop_after:
                            raise Interrupted(f"stopped after {ran} trials")
                        if unit is None:
                            d = load_campaign_dataset(ref, cfg.master_seed)
                            views = {fs: project(d, fs) for fs in cfg.feature_sets}
                            unit = _Unit(cfg, ref, d, views, hw)
                        records = unit.run(a, regime, t)
                        writer.put_records(records, unit.ledger)
                        writer.complete(key)
                        ran += 1
                        completed += 1
                        log.info("trial %s done (%d records)", key, len(records))
        writer.close()
    except Interrupted:
        writer.close()
        raise
    except (OSError, ValueError, RuntimeError) as exc:
        try:
            writer.close()
        except Exception:  # the original error is the one worth reporting
            pass
        raise CampaignError(str(exc), len(store.completed)) from exc
    store.finalize()
    return store
