"""Synthetic NetFlow-like data for tests, demos and smoke campaigns.

The generator draws each class from its own traffic profile (protocol mix,
duration, packet counts, packet sizes, flags) so that classes are separable
to a tunable degree. Derived columns obey the same formulas as the shipped
spec, so perturbation and verification behave as on real exports.
"""

from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np
import pandas as pd

from .flowstore import Dataset, DatasetSpec, dataset_from_frame

GTCS_COUNTS = {0: 139_186, 1: 131_211, 2: 93_021, 3: 83_857, 4: 70_202}

FEATURES = [
    "src_port", "dst_port", "proto", "duration", "fwd_bytes", "fwd_pkts", "bwd_bytes", "bwd_pkts",
    "flow_bytes_s", "fwd_pkts_s", "fwd_mean_len", "syn_cnt", "ack_cnt", "init_win", "iat_mean", "bwd_mean_len",
]
ESSENTIAL = ["dst_port", "duration", "fwd_bytes", "fwd_pkts", "bwd_bytes", "flow_bytes_s", "fwd_pkts_s",
             "fwd_mean_len"]


def synthetic_spec(n_malicious: int = 4, name: str = "SYNTH", **overrides) -> DatasetSpec:
    raw = {
        "name": name,
        "netflow_tool": "synthetic",
        "class_table": {0: "benign", **{c: f"attack{c}" for c in range(1, n_malicious + 1)}},
        "label_column": "label",
        "labels": {"benign": 0, **{f"attack{c}": c for c in range(1, n_malicious + 1)}},
        "protocol_column": "proto",
        "timestamp_column": "ts",
        "ip_columns": ["src_ip", "dst_ip"],
        "src_ip_column": "src_ip",
        "port_columns": ["src_port", "dst_port"],
        "internal_subnets": ["10.0.0.0/8", "192.168.0.0/16"],
        "base_fields": {"duration": "duration", "tot_bytes": "fwd_bytes", "tot_packets": "fwd_pkts"},
        "derived_rules": {
            "flow_bytes_s": '(tot_bytes + col("bwd_bytes")) / duration',
            "fwd_pkts_s": "tot_packets / duration",
            "fwd_mean_len": "tot_bytes / tot_packets",
        },
        "dependents": {
            "duration": ["flow_bytes_s", "fwd_pkts_s"],
            "tot_bytes": ["flow_bytes_s", "fwd_mean_len"],
            "tot_packets": ["fwd_pkts_s", "fwd_mean_len"],
        },
        "feature_lists": {"Complete": list(FEATURES), "Essential": list(ESSENTIAL)},
    }
    raw.update(overrides)
    return DatasetSpec.from_dict(raw)


def _profile(c: int, separation: float) -> dict:
    """Per-class generative parameters; class 0 is broad benign traffic."""
    if c == 0:
        return dict(udp=0.3, dur_mu=0.5, dur_sigma=1.5, pkts_lam=12.0, size_mu=6.0, size_sigma=0.8,
                    syn=0.3, port_lo=1, internal=0.5, bwd_ratio=1.5)
    rng = np.random.default_rng(1000 + c)
    s = separation
    return dict(
        udp=float(rng.uniform(0.3, 0.8)),
        dur_mu=float(0.5 - s * rng.uniform(1.5, 3.0)),
        dur_sigma=float(rng.uniform(0.3, 0.8)),
        pkts_lam=float(rng.uniform(1.0, 4.0)),
        size_mu=float(6.0 - s * rng.uniform(1.0, 2.0) + 0.3 * c),
        size_sigma=float(rng.uniform(0.1, 0.4)),
        syn=float(rng.uniform(0.6, 1.0)),
        port_lo=int(rng.choice([1, 1024, 49152])),
        internal=0.8,
        bwd_ratio=float(rng.uniform(0.05, 0.5)),
    )


def _class_frame(c: int, n: int, rng: np.random.Generator, separation: float, label: str) -> pd.DataFrame:
    p = _profile(c, separation)
    proto = np.where(rng.random(n) < p["udp"], 17, 6)
    duration = np.round(np.exp(rng.normal(p["dur_mu"], p["dur_sigma"], n)), 6)
    duration[rng.random(n) < 0.01] = 0.0  # single-packet flows exist in every export
    fwd_pkts = 1 + rng.poisson(p["pkts_lam"], n)
    size = np.clip(np.exp(rng.normal(p["size_mu"], p["size_sigma"], n)), 40, 1500)
    fwd_bytes = np.floor(fwd_pkts * size)
    bwd_pkts = rng.poisson(p["pkts_lam"] * p["bwd_ratio"], n)
    bwd_bytes = np.floor(bwd_pkts * np.clip(size * rng.uniform(0.5, 2.0, n), 40, 1500))
    internal = rng.random(n) < p["internal"]
    src_ip = np.where(internal, [f"10.0.{(i // 250) % 250}.{i % 250 + 1}" for i in range(n)], "8.8.8.8")
    with np.errstate(divide="ignore", invalid="ignore"):
        flow_bytes_s = np.where(duration > 0, (fwd_bytes + bwd_bytes) / duration, 0.0)
        fwd_pkts_s = np.where(duration > 0, fwd_pkts / duration, 0.0)
    frame = pd.DataFrame({
        "src_ip": src_ip,
        "dst_ip": "192.168.1.1",
        "src_port": rng.integers(49152, 65536, n),
        "dst_port": rng.integers(p["port_lo"], min(p["port_lo"] + 1000, 65536), n),
        "proto": proto,
        "duration": duration,
        "fwd_bytes": fwd_bytes,
        "fwd_pkts": fwd_pkts,
        "bwd_bytes": bwd_bytes,
        "bwd_pkts": bwd_pkts,
        "flow_bytes_s": flow_bytes_s,
        "fwd_pkts_s": fwd_pkts_s,
        "fwd_mean_len": fwd_bytes / fwd_pkts,
        "syn_cnt": (rng.random(n) < p["syn"]).astype(int),
        "ack_cnt": rng.integers(0, 3, n),
        "init_win": rng.choice([0, 8192, 29200, 65535], n),
        "iat_mean": duration / fwd_pkts,
        "bwd_mean_len": np.where(bwd_pkts > 0, bwd_bytes / np.maximum(bwd_pkts, 1), 0.0),
        "label": label,
    })
    return frame


def generate_frame(counts: dict[int, int], seed: int = 0, separation: float = 1.0,
                   start: float = 1.6e9, span: float = 86_400.0) -> pd.DataFrame:
    """Rows for every class in ``counts``, sorted by timestamp."""
    rng = np.random.default_rng(seed)
    parts = []
    for c in sorted(counts):
        label = "benign" if c == 0 else f"attack{c}"
        frame = _class_frame(c, int(counts[c]), rng, separation, label)
        # classes are active in overlapping windows so temporal splits are meaningful
        lo = start + span * 0.1 * (c % 5)
        frame.insert(0, "ts", np.round(rng.uniform(lo, lo + span * 0.6, len(frame)), 3))
        parts.append(frame)
    frame = pd.concat(parts, ignore_index=True)
    return frame.sort_values("ts", kind="stable", ignore_index=True)


def generate(counts: dict[int, int], seed: int = 0, separation: float = 1.0,
             spec: DatasetSpec | None = None) -> Dataset:
    spec = spec or synthetic_spec(n_malicious=max(counts))
    return dataset_from_frame(spec, generate_frame(counts, seed, separation), origin="<synthetic>")


def spec_dict(n_malicious: int) -> dict:
    """YAML-serialisable form of :func:`synthetic_spec`."""
    spec = synthetic_spec(n_malicious)
    return {
        "name": spec.name, "netflow_tool": spec.netflow_tool, "class_table": spec.class_table,
        "label_column": spec.label_column, "labels": spec.labels, "protocol_column": spec.protocol_column,
        "timestamp_column": spec.timestamp_column, "ip_columns": spec.ip_columns,
        "src_ip_column": spec.src_ip_column, "port_columns": spec.port_columns,
        "internal_subnets": spec.internal_subnets,
        "base_fields": {k: {"column": v.column, "scale": v.scale} for k, v in spec.base_fields.items()},
        "derived_rules": {r.feature: r.formula.text for r in spec.derived_rules},
        "dependents": spec.dependents, "feature_lists": spec.feature_lists,
    }


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(description="write a synthetic NetFlow CSV and its dataset spec")
    ap.add_argument("out_dir", type=Path)
    ap.add_argument("--rows", type=int, default=2000, help="rows per class")
    ap.add_argument("--classes", type=int, default=4, help="number of attack classes")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--separation", type=float, default=1.0)
    args = ap.parse_args(argv)

    import yaml

    args.out_dir.mkdir(parents=True, exist_ok=True)
    counts = {c: args.rows for c in range(args.classes + 1)}
    generate_frame(counts, args.seed, args.separation).to_csv(args.out_dir / "flows.csv", index=False)
    with open(args.out_dir / "spec.yaml", "w", encoding="utf-8") as fh:
        yaml.safe_dump(spec_dict(args.classes), fh, sort_keys=False)
    print(f"wrote {args.out_dir / 'flows.csv'} and {args.out_dir / 'spec.yaml'}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
