"""NetFlow dataset ingestion, sampling caps and feature projection.

Datasets are stored column-wise: one float matrix holding every numeric
feature plus side arrays for the class id, timestamp, protocol and the
internal-source flag. ``FlowRecord`` objects are materialised on demand.
"""

from __future__ import annotations

import ast
import ipaddress
import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator

import numpy as np
import pandas as pd
import yaml

log = logging.getLogger(__name__)

COMPLETE = "Complete"
ESSENTIAL = "Essential"
FEATURE_SETS = (COMPLETE, ESSENTIAL)
BASE_FIELDS = ("duration", "tot_bytes", "tot_packets")

UDP = 17


class DatasetError(ValueError):
    """Raised when a dataset file or its spec cannot be reconciled."""


def encode_port(port: int) -> int:
    """IANA category of a port: 0 well-known, 1 registered, 2 dynamic."""
    port = int(port)
    if port < 0 or port > 65535:
        raise ValueError(f"port out of range 0..65535: {port}")
    if port <= 1023:
        return 0
    if port <= 49151:
        return 1
    return 2


def encode_ports(ports: np.ndarray) -> np.ndarray:
    ports = np.asarray(ports)
    if ports.size and (ports.min() < 0 or ports.max() > 65535):
        bad = ports[(ports < 0) | (ports > 65535)][0]
        raise ValueError(f"port out of range 0..65535: {bad}")
    out = np.full(ports.shape, 2, dtype=np.float64)
    out[ports <= 49151] = 1
    out[ports <= 1023] = 0
    return out


# -- derived-feature formulas ------------------------------------------------

_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Div)


class Formula:
    """Arithmetic expression over base fields and ``col("name")`` references.

    Division by zero evaluates to 0, which is how flow exporters report rates
    of zero-duration flows once sentinels are cleaned.
    """

    def __init__(self, text: str):
        self.text = text
        try:
            self._tree = ast.parse(text, mode="eval").body
        except SyntaxError as exc:
            raise DatasetError(f"bad formula {text!r}: {exc}") from None
        self.columns: set[str] = set()
        self.base_fields: set[str] = set()
        self._check(self._tree)

    def _check(self, node: ast.AST) -> None:
        if isinstance(node, ast.BinOp) and isinstance(node.op, _BINOPS):
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.USub):
            self._check(node.operand)
        elif isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            pass
        elif isinstance(node, ast.Name) and node.id in BASE_FIELDS:
            self.base_fields.add(node.id)
        elif (
            isinstance(node, ast.Call)
            and isinstance(node.func, ast.Name)
            and node.func.id == "col"
            and len(node.args) == 1
            and not node.keywords
            and isinstance(node.args[0], ast.Constant)
            and isinstance(node.args[0].value, str)
        ):
            self.columns.add(node.args[0].value)
        else:
            raise DatasetError(f"unsupported expression in formula {self.text!r}: {ast.dump(node)}")

    def evaluate(self, base: dict[str, np.ndarray], columns: dict[str, np.ndarray]) -> np.ndarray:
        return np.asarray(self._eval(self._tree, base, columns), dtype=np.float64)

    def _eval(self, node, base, columns):
        if isinstance(node, ast.BinOp):
            a = self._eval(node.left, base, columns)
            b = self._eval(node.right, base, columns)
            if isinstance(node.op, ast.Add):
                return a + b
            if isinstance(node.op, ast.Sub):
                return a - b
            if isinstance(node.op, ast.Mult):
                return a * b
            a, b = np.broadcast_arrays(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64))
            out = np.zeros(a.shape)
            np.divide(a, b, out=out, where=b != 0)
            return out
        if isinstance(node, ast.UnaryOp):
            return -self._eval(node.operand, base, columns)
        if isinstance(node, ast.Constant):
            return float(node.value)
        if isinstance(node, ast.Name):
            return base[node.id]
        return columns[node.args[0].value]


@dataclass(frozen=True)
class DerivedRule:
    feature: str
    formula: Formula

    @classmethod
    def parse(cls, feature: str, text: str) -> "DerivedRule":
        return cls(feature, Formula(text))


@dataclass(frozen=True)
class BaseField:
    column: str
    scale: float = 1.0  # multiplies the column value to reach seconds / bytes / packets


# -- spec ------------------------------------------------------------------------


@dataclass
class DatasetSpec:
    name: str
    class_table: dict[int, str]
    feature_lists: dict[str, list[str]]
    label_column: str
    base_fields: dict[str, BaseField]
    protocol_column: str
    timestamp_column: str | None = None
    timestamp_format: str | None = None
    port_columns: list[str] = field(default_factory=list)
    ip_columns: list[str] = field(default_factory=list)
    src_ip_column: str | None = None
    internal_subnets: list[str] = field(default_factory=list)
    derived_rules: list[DerivedRule] = field(default_factory=list)
    dependents: dict[str, list[str]] = field(default_factory=dict)
    labels: dict[str, int] | None = None
    ignore_columns: list[str] = field(default_factory=list)
    benign_cap: int = 500_000
    per_class_malicious_cap: int = 166_000
    max_flow_duration: float | None = None
    sentinel_to_zero: bool = False
    netflow_tool: str = "unknown"
    reconstructed: bool = False

    def __post_init__(self) -> None:
        self.class_table = {int(k): str(v) for k, v in self.class_table.items()}
        if 0 not in self.class_table:
            raise DatasetError(f"{self.name}: class table must declare benign class 0")
        for fs in FEATURE_SETS:
            if fs not in self.feature_lists:
                raise DatasetError(f"{self.name}: missing {fs} feature list")
        complete = self.feature_lists[COMPLETE]
        essential = self.feature_lists[ESSENTIAL]
        if len(set(complete)) != len(complete) or len(set(essential)) != len(essential):
            raise DatasetError(f"{self.name}: duplicate names in a feature list")
        extra = [f for f in essential if f not in complete]
        if extra:
            raise DatasetError(f"{self.name}: Essential features not in Complete: {extra}")
        leaked = [f for f in complete if f in self.ip_columns]
        if leaked:
            raise DatasetError(f"{self.name}: IP columns cannot be features: {leaked}")
        half = math.ceil(len(complete) / 2)
        if complete and abs(len(essential) - half) > max(2, 0.25 * half):
            log.warning("%s: Essential has %d features, expected about %d", self.name, len(essential), half)
        missing = [b for b in BASE_FIELDS if b not in self.base_fields]
        if missing:
            raise DatasetError(f"{self.name}: base fields not mapped: {missing}")
        if self.internal_subnets and self.src_ip_column is None and self.ip_columns:
            self.src_ip_column = self.ip_columns[0]
        self._networks = [ipaddress.ip_network(c, strict=False) for c in self.internal_subnets]

    @property
    def malicious_classes(self) -> list[int]:
        return sorted(c for c in self.class_table if c != 0)

    @property
    def derived_features(self) -> dict[str, DerivedRule]:
        return {r.feature: r for r in self.derived_rules}

    def is_internal(self, ip: str) -> bool:
        try:
            addr = ipaddress.ip_address(str(ip).strip())
        except ValueError:
            return False
        return any(addr in net for net in self._networks if net.version == addr.version)

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> "DatasetSpec":
        raw = dict(raw)
        raw["base_fields"] = {
            k: BaseField(v) if isinstance(v, str) else BaseField(v["column"], float(v.get("scale", 1.0)))
            for k, v in raw.get("base_fields", {}).items()
        }
        raw["derived_rules"] = [DerivedRule.parse(k, v) for k, v in (raw.get("derived_rules") or {}).items()]
        caps = raw.pop("caps", None) or {}
        raw.setdefault("benign_cap", caps.get("benign_cap", 500_000))
        raw.setdefault("per_class_malicious_cap", caps.get("per_class_malicious_cap", 166_000))
        if raw.get("labels") is not None:
            raw["labels"] = {str(k): int(v) for k, v in raw["labels"].items()}
        return cls(**raw)

    @classmethod
    def from_file(cls, path: str | Path) -> "DatasetSpec":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(yaml.safe_load(fh))


def builtin_spec(name: str) -> DatasetSpec:
    """Load one of the dataset specs shipped with the package (e.g. ``gtcs``)."""
    path = Path(__file__).parent / "datasets" / f"{name}.yaml"
    if not path.exists():
        raise DatasetError(f"no shipped spec named {name!r}")
    return DatasetSpec.from_file(path)


# -- records ---------------------------------------------------------------------


@dataclass(frozen=True)
class FlowRecord:
    features: dict[str, float]
    class_id: int
    timestamp: float | None
    protocol: int
    src_internal: bool
    base: dict[str, float]


class _RecordSequence(Sequence):
    def __init__(self, dataset: "Dataset"):
        self._d = dataset

    def __len__(self) -> int:
        return len(self._d)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self._d.record(j) for j in range(*i.indices(len(self)))]
        return self._d.record(i)

    def __iter__(self) -> Iterator[FlowRecord]:
        for i in range(len(self)):
            yield self._d.record(i)


@dataclass(frozen=True, eq=False)
class Dataset:
    spec: DatasetSpec
    feature_names: tuple[str, ...]
    features: np.ndarray  # rows x len(feature_names), float64
    class_id: np.ndarray
    protocol: np.ndarray
    src_internal: np.ndarray
    timestamp: np.ndarray | None = None
    source_row: np.ndarray | None = None  # position of each row in the loaded file

    def __post_init__(self) -> None:
        for arr in (self.features, self.class_id, self.protocol, self.src_internal, self.timestamp, self.source_row):
            if arr is not None:
                arr.setflags(write=False)
        if self.source_row is None:
            rows = np.arange(len(self.class_id))
            rows.setflags(write=False)
            object.__setattr__(self, "source_row", rows)
        object.__setattr__(self, "_col", {n: i for i, n in enumerate(self.feature_names)})

    def __len__(self) -> int:
        return int(self.class_id.shape[0])

    @property
    def name(self) -> str:
        return self.spec.name

    @property
    def class_counts(self) -> dict[int, int]:
        counts = np.bincount(self.class_id, minlength=max(self.spec.class_table) + 1)
        return {c: int(counts[c]) for c in sorted(self.spec.class_table)}

    @property
    def chronologically_sorted(self) -> bool:
        if self.timestamp is None:
            return False
        return bool(np.all(np.diff(self.timestamp) >= 0))

    @property
    def records(self) -> Sequence[FlowRecord]:
        return _RecordSequence(self)

    def column(self, name: str) -> np.ndarray:
        return self.features[:, self._col[name]]

    def has_column(self, name: str) -> bool:
        return name in self._col

    def base(self, name: str) -> np.ndarray:
        bf = self.spec.base_fields[name]
        return self.column(bf.column) * bf.scale

    def record(self, i: int) -> FlowRecord:
        row = self.features[i]
        return FlowRecord(
            features={n: float(row[j]) for n, j in self._col.items()},
            class_id=int(self.class_id[i]),
            timestamp=None if self.timestamp is None else float(self.timestamp[i]),
            protocol=int(self.protocol[i]),
            src_internal=bool(self.src_internal[i]),
            base={b: float(self.base(b)[i]) for b in BASE_FIELDS},
        )

    def rows_of(self, class_id: int) -> np.ndarray:
        return np.flatnonzero(self.class_id == class_id)

    def take(self, idx: np.ndarray) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(
            spec=self.spec,
            feature_names=self.feature_names,
            features=self.features[idx],
            class_id=self.class_id[idx],
            protocol=self.protocol[idx],
            src_internal=self.src_internal[idx],
            timestamp=None if self.timestamp is None else self.timestamp[idx],
            source_row=self.source_row[idx],
        )

    def with_features(self, features: np.ndarray) -> "Dataset":
        if features.shape != self.features.shape:
            raise ValueError("replacement feature matrix has a different shape")
        return Dataset(self.spec, self.feature_names, features, self.class_id, self.protocol,
                       self.src_internal, self.timestamp, self.source_row)

    def max_duration(self) -> float:
        if self.spec.max_flow_duration is not None:
            return float(self.spec.max_flow_duration)
        dur = self.base("duration")
        return float(dur.max()) if dur.size else 0.0


# -- loading ---------------------------------------------------------------------


def _required_columns(spec: DatasetSpec) -> list[str]:
    cols = [spec.label_column, spec.protocol_column]
    cols += spec.feature_lists[COMPLETE]
    cols += [b.column for b in spec.base_fields.values()]
    cols += spec.port_columns
    if spec.timestamp_column:
        cols.append(spec.timestamp_column)
    if spec.src_ip_column:
        cols.append(spec.src_ip_column)
    for rule in spec.derived_rules:
        cols += sorted(rule.formula.columns)
    return list(dict.fromkeys(cols))


def _numeric(series: pd.Series, name: str, sentinel_to_zero: bool) -> np.ndarray:
    if pd.api.types.is_numeric_dtype(series):
        values = series.to_numpy(dtype=np.float64)
    else:
        stripped = series.astype(str).str.strip()
        values = pd.to_numeric(stripped, errors="coerce").to_numpy(dtype=np.float64)
        text_nan = stripped.str.lower().isin(["nan", "inf", "-inf", "infinity", "-infinity"]).to_numpy()
        garbage = np.isnan(values) & ~text_nan
        if garbage.any():
            row = int(np.flatnonzero(garbage)[0])
            raise DatasetError(
                f"row {row + 2}: non-numeric value {series.iloc[row]!r} in numeric column {name!r}")
        values[text_nan] = pd.to_numeric(stripped[text_nan].str.replace("inity", ""), errors="coerce")
    bad = ~np.isfinite(values)
    if bad.any():
        if sentinel_to_zero:
            values[bad] = 0.0
        else:
            row = int(np.flatnonzero(bad)[0])
            raise DatasetError(f"row {row + 2}: missing or non-finite value in column {name!r}")
    return values


def load_dataset(spec: DatasetSpec, path: str | Path) -> Dataset:
    """Parse a merged CSV export into a :class:`Dataset`.

    Row numbers in error messages count the header as line 1.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset file not found: {path}")
    frame = pd.read_csv(path, skipinitialspace=True, low_memory=False, encoding="utf-8")
    return dataset_from_frame(spec, frame, origin=str(path))


def dataset_from_frame(spec: DatasetSpec, frame: pd.DataFrame, origin: str = "<frame>") -> Dataset:
    """Validate an in-memory export; same rules and messages as :func:`load_dataset`."""
    path = origin
    frame = frame.copy(deep=False)
    frame.columns = [str(c).strip() for c in frame.columns]
    if spec.label_column not in frame.columns:
        raise DatasetError(f"{path}: missing label column {spec.label_column!r}")
    missing = [c for c in _required_columns(spec) if c not in frame.columns]
    if missing:
        raise DatasetError(f"{path}: header lacks spec columns {missing}")

    raw_labels = frame[spec.label_column]
    if spec.labels is not None:
        mapped = raw_labels.astype(str).str.strip().map(spec.labels)
        unknown = mapped.isna().to_numpy()
    else:
        mapped = pd.to_numeric(raw_labels, errors="coerce")
        unknown = (mapped.isna() | ~mapped.isin(list(spec.class_table))).to_numpy()
    if unknown.any():
        row = int(np.flatnonzero(unknown)[0])
        raise DatasetError(f"row {row + 2}: unknown class label {raw_labels.iloc[row]!r}")
    class_id = mapped.to_numpy(dtype=np.int64)
    undeclared = ~np.isin(class_id, list(spec.class_table))
    if undeclared.any():
        row = int(np.flatnonzero(undeclared)[0])
        raise DatasetError(f"row {row + 2}: class id {class_id[row]} not in class table")

    skip = {spec.label_column, spec.timestamp_column, *spec.ip_columns, *spec.ignore_columns}
    names = [c for c in frame.columns if c not in skip]
    cols = [_numeric(frame[c], c, spec.sentinel_to_zero) for c in names]
    features = np.column_stack(cols) if cols else np.empty((len(frame), 0))

    timestamp = None
    if spec.timestamp_column:
        ts = frame[spec.timestamp_column]
        if spec.timestamp_format:
            parsed = pd.to_datetime(ts.astype(str).str.strip(), format=spec.timestamp_format, errors="coerce")
            bad = parsed.isna().to_numpy()
            timestamp = (parsed.astype("int64").to_numpy() / 1e9).astype(np.float64)
        else:
            timestamp = pd.to_numeric(ts, errors="coerce").to_numpy(dtype=np.float64)
            bad = np.isnan(timestamp)
        if bad.any():
            row = int(np.flatnonzero(bad)[0])
            raise DatasetError(f"row {row + 2}: unparseable timestamp {ts.iloc[row]!r}")

    if spec.src_ip_column and spec.internal_subnets:
        src = frame[spec.src_ip_column].astype(str)
        lookup = {ip: spec.is_internal(ip) for ip in pd.unique(src)}
        src_internal = src.map(lookup).to_numpy(dtype=bool)
    else:
        src_internal = np.zeros(len(frame), dtype=bool)

    col_index = {n: i for i, n in enumerate(names)}
    protocol = features[:, col_index[spec.protocol_column]].astype(np.int64)
    for b in BASE_FIELDS:
        values = features[:, col_index[spec.base_fields[b].column]]
        if (values < 0).any():
            row = int(np.flatnonzero(values < 0)[0])
            raise DatasetError(f"row {row + 2}: negative {b}")

    d = Dataset(spec, tuple(names), features, class_id, protocol, src_internal, timestamp)
    log.info("loaded %s: %d rows, counts %s", spec.name, len(d), d.class_counts)
    return d


def apply_caps(d: Dataset, seed: int) -> Dataset:
    """Uniformly down-sample benign and each attack class to the spec caps."""
    rng = np.random.default_rng(seed)
    keep = []
    capped = False
    for c in sorted(d.spec.class_table):
        rows = d.rows_of(c)
        cap = d.spec.benign_cap if c == 0 else d.spec.per_class_malicious_cap
        if len(rows) > cap:
            rows = np.sort(rng.choice(rows, size=cap, replace=False))
            capped = True
        keep.append(rows)
    if not capped:
        return d
    return d.take(np.sort(np.concatenate(keep)))


# -- projection ------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FeatureView:
    matrix: np.ndarray
    column_names: tuple[str, ...]
    row_index: np.ndarray
    feature_set: str
    dataset_name: str = ""

    def __len__(self) -> int:
        return int(self.matrix.shape[0])

    def rows(self, idx: np.ndarray) -> np.ndarray:
        return self.matrix[idx]


def project(d: Dataset, fs: str) -> FeatureView:
    if fs not in FEATURE_SETS:
        raise ValueError(f"unknown feature set {fs!r}")
    names = d.spec.feature_lists[fs]
    missing = [n for n in names if not d.has_column(n)]
    if missing:
        raise DatasetError(f"{d.name}: {fs} features absent from records: {missing}")
    ports = set(d.spec.port_columns)
    cols = []
    for n in names:
        values = d.column(n)
        cols.append(encode_ports(values.astype(np.int64)) if n in ports else values)
    matrix = np.column_stack(cols) if cols else np.empty((len(d), 0))
    matrix = np.ascontiguousarray(matrix, dtype=np.float64)
    matrix.setflags(write=False)
    row_index = np.arange(len(d))
    row_index.setflags(write=False)
    return FeatureView(matrix, tuple(names), row_index, fs, d.name)
