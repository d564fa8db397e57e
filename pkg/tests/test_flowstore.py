from __future__ import annotations

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nidsbench import synthetic
from nidsbench.flowstore import (COMPLETE, ESSENTIAL, DatasetError, DatasetSpec, Formula, apply_caps,
                                 builtin_spec, dataset_from_frame, encode_port, encode_ports, load_dataset,
                                 project)


def _iana(p: int) -> int:
    if p <= 1023:
        return 0
    if p <= 49151:
        return 1
    return 2


@pytest.mark.parametrize("port,cat", [(0, 0), (80, 0), (1023, 0), (1024, 1), (8080, 1), (49151, 1), (49152, 2), (65535, 2)])
def test_port_boundaries(port, cat):
    assert encode_port(port) == cat


@pytest.mark.parametrize("port", [-1, 65536, 100000])
def test_port_out_of_range(port):
    with pytest.raises(ValueError):
        encode_port(port)


@given(st.lists(st.integers(0, 65535), min_size=1, max_size=200))
def test_vectorised_port_encoding_matches_scalar(ports):
    out = encode_ports(np.array(ports))
    assert out.tolist() == [_iana(p) for p in ports]


class TestFormula:
    def test_arithmetic_and_columns(self):
        f = Formula('(tot_bytes + col("b")) / duration')
        out = f.evaluate({"tot_bytes": np.array([10.0, 4.0]), "duration": np.array([2.0, 0.0])},
                         {"b": np.array([2.0, 1.0])})
        assert out.tolist() == [6.0, 0.0]  # x/0 -> 0
        assert f.columns == {"b"} and f.base_fields == {"tot_bytes", "duration"}

    @pytest.mark.parametrize("text", ["__import__('os')", "tot_bytes ** 2", "foo + 1", "col(x)", "lambda: 1",
                                      "tot_bytes if duration else 0"])
    def test_rejects_unsafe_or_unknown(self, text):
        with pytest.raises(DatasetError):
            Formula(text)


def test_shipped_gtcs_spec():
    spec = builtin_spec("gtcs")
    assert spec.class_table == {0: "Benign", 1: "ddos", 2: "bot", 3: "brute", 4: "inf"}
    assert len(spec.feature_lists[COMPLETE]) == 79
    assert len(spec.feature_lists[ESSENTIAL]) == 40
    assert set(spec.feature_lists[ESSENTIAL]) <= set(spec.feature_lists[COMPLETE])
    for base, feats in spec.dependents.items():
        assert set(feats) <= set(spec.derived_features), base
    assert spec.reconstructed


def _raw_spec(**kw):
    raw = synthetic.spec_dict(2)
    raw.update(kw)
    return raw


class TestSpecValidation:
    def test_missing_benign(self):
        with pytest.raises(DatasetError, match="benign"):
            DatasetSpec.from_dict(_raw_spec(class_table={1: "a", 2: "b"}))

    def test_essential_subset(self):
        lists = {"Complete": ["duration"], "Essential": ["duration", "fwd_bytes"]}
        with pytest.raises(DatasetError, match="Essential"):
            DatasetSpec.from_dict(_raw_spec(feature_lists=lists))

    def test_ip_columns_never_features(self):
        raw = _raw_spec()
        raw["feature_lists"] = {"Complete": raw["feature_lists"]["Complete"] + ["src_ip"],
                                "Essential": raw["feature_lists"]["Essential"]}
        with pytest.raises(DatasetError, match="IP"):
            DatasetSpec.from_dict(raw)

    def test_internal_subnets(self):
        spec = DatasetSpec.from_dict(_raw_spec())
        assert spec.is_internal("10.1.2.3") and spec.is_internal("192.168.0.9")
        assert not spec.is_internal("8.8.8.8") and not spec.is_internal("garbage")


@pytest.fixture
def csv_file(tmp_path):
    frame = synthetic.generate_frame({0: 40, 1: 20, 2: 20}, seed=1)
    path = tmp_path / "flows.csv"
    frame.to_csv(path, index=False)
    return path, frame


class TestLoad:
    def test_roundtrip(self, csv_file):
        path, frame = csv_file
        spec = synthetic.synthetic_spec(2)
        d = load_dataset(spec, path)
        assert len(d) == len(frame)
        assert d.class_counts == {0: 40, 1: 20, 2: 20}
        assert np.array_equal(d.column("fwd_bytes"), frame["fwd_bytes"].to_numpy(float))
        assert d.chronologically_sorted
        r = d.records[5]
        assert r.class_id == d.class_id[5] and r.base["tot_bytes"] == d.column("fwd_bytes")[5]
        assert d.src_internal.tolist() == [spec.is_internal(ip) for ip in frame["src_ip"]]

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_dataset(synthetic.synthetic_spec(2), tmp_path / "nope.csv")

    def test_missing_label_column(self, csv_file):
        path, frame = csv_file
        frame.drop(columns="label").to_csv(path, index=False)
        with pytest.raises(DatasetError, match="label column"):
            load_dataset(synthetic.synthetic_spec(2), path)

    def test_unknown_label_names_row(self, csv_file):
        path, frame = csv_file
        frame.loc[7, "label"] = "mystery"
        frame.to_csv(path, index=False)
        with pytest.raises(DatasetError, match=r"row 9: unknown class label 'mystery'"):
            load_dataset(synthetic.synthetic_spec(2), path)

    def test_non_numeric_names_row(self, csv_file):
        path, frame = csv_file
        frame["fwd_pkts"] = frame["fwd_pkts"].astype(object)
        frame.loc[3, "fwd_pkts"] = "abc"
        frame.to_csv(path, index=False)
        with pytest.raises(DatasetError, match=r"row 5: non-numeric value 'abc'"):
            load_dataset(synthetic.synthetic_spec(2), path)

    def test_infinite_values_and_sentinel(self, csv_file):
        path, frame = csv_file
        frame.loc[2, "flow_bytes_s"] = np.inf
        frame.to_csv(path, index=False)
        with pytest.raises(DatasetError, match="row 4"):
            load_dataset(synthetic.synthetic_spec(2), path)
        d = load_dataset(synthetic.synthetic_spec(2, sentinel_to_zero=True), path)
        assert d.column("flow_bytes_s")[2] == 0.0

    def test_negative_base_field(self, csv_file):
        path, frame = csv_file
        frame.loc[0, "duration"] = -1
        frame.to_csv(path, index=False)
        with pytest.raises(DatasetError, match="negative duration"):
            load_dataset(synthetic.synthetic_spec(2), path)

    def test_records_are_read_only(self, small_dataset):
        with pytest.raises(ValueError):
            small_dataset.features[0, 0] = 1.0


def test_caps_sample_without_replacement():
    spec = synthetic.synthetic_spec(2, caps={"benign_cap": 50, "per_class_malicious_cap": 30})
    d = synthetic.generate({0: 120, 1: 20, 2: 90}, seed=0, spec=spec)
    a = apply_caps(d, seed=4)
    assert a.class_counts == {0: 50, 1: 20, 2: 30}
    assert len(np.unique(a.source_row)) == len(a)
    assert np.array_equal(apply_caps(d, seed=4).source_row, a.source_row)
    assert not np.array_equal(apply_caps(d, seed=5).source_row, a.source_row)


def test_caps_noop_below_limits(small_dataset):
    assert apply_caps(small_dataset, 0) is small_dataset


class TestProject:
    def test_essential_columns_and_port_encoding(self, small_dataset):
        v = project(small_dataset, ESSENTIAL)
        assert v.column_names == tuple(small_dataset.spec.feature_lists[ESSENTIAL])
        j = v.column_names.index("dst_port")
        assert set(np.unique(v.matrix[:, j])) <= {0.0, 1.0, 2.0}
        raw = small_dataset.column("dst_port").astype(int)
        assert v.matrix[:, j].tolist() == [_iana(p) for p in raw]

    def test_missing_feature(self):
        spec = synthetic.synthetic_spec(4)
        frame = synthetic.generate_frame({0: 10, 1: 5, 2: 5, 3: 5, 4: 5})
        d = dataset_from_frame(spec, frame)
        spec.feature_lists[COMPLETE] = spec.feature_lists[COMPLETE] + ["not_there"]
        with pytest.raises(DatasetError, match="not_there"):
            project(d, COMPLETE)

    def test_unknown_feature_set(self, small_dataset):
        with pytest.raises(ValueError):
            project(small_dataset, "Half")


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_derived_columns_of_generator_follow_formulas(seed):
    d = synthetic.generate({0: 20, 1: 20}, seed=seed)
    base = {b: d.base(b) for b in ("duration", "tot_bytes", "tot_packets")}
    cols = {n: d.column(n) for n in d.feature_names}
    for rule in d.spec.derived_rules:
        assert np.allclose(rule.formula.evaluate(base, cols), d.column(rule.feature), rtol=1e-12, atol=0)


def test_frame_loader_matches_csv_loader(csv_file):
    path, _ = csv_file
    spec = synthetic.synthetic_spec(2)
    a = load_dataset(spec, path)
    b = dataset_from_frame(spec, pd.read_csv(path))
    assert np.array_equal(a.features, b.features) and a.feature_names == b.feature_names


def _gtcs_header_csv(path):
    """A GTCS-shaped CSV holding only the header row."""
    spec = builtin_spec("gtcs")
    cols = list(dict.fromkeys([spec.label_column, spec.protocol_column, spec.timestamp_column, *spec.ip_columns,
                               *spec.ignore_columns, *spec.feature_lists[COMPLETE]]))
    pd.DataFrame(columns=cols).to_csv(path, index=False)
    return spec, cols


def test_empty_file_with_header(tmp_path):
    spec, cols = _gtcs_header_csv(tmp_path / "g.csv")
    d = load_dataset(spec, tmp_path / "g.csv")
    assert len(d) == 0 and all(v == 0 for v in d.class_counts.values())
    v = project(d, COMPLETE)
    assert v.matrix.shape == (0, 79)
    # 84 CICFlowMeter columns; without flow id, IPs and label that is the 80 features of
    # the dataset overview, and Complete also leaves out the timestamp
    assert len(cols) == 84
    assert len([c for c in cols if c not in (*spec.ip_columns, *spec.ignore_columns, spec.label_column)]) == 80
    assert not set(v.column_names) & {*spec.ip_columns, *spec.ignore_columns, spec.label_column}
    assert {"Src Port", "Dst Port"} <= set(v.column_names)


def test_ten_row_counts_match_line_count(tmp_path):
    frame = synthetic.generate_frame({0: 6, 1: 4}, seed=0)
    frame.to_csv(tmp_path / "f.csv", index=False)
    lines = (tmp_path / "f.csv").read_text().splitlines()[1:]
    label_at = list(frame.columns).index("label")
    expected = {0: 0, 1: 0}
    for line in lines:
        expected[0 if line.split(",")[label_at] == "benign" else 1] += 1
    d = load_dataset(synthetic.synthetic_spec(1), tmp_path / "f.csv")
    assert d.class_counts == expected == {0: 6, 1: 4}


def test_benign_cap_exact_and_reproducible():
    spec = synthetic.synthetic_spec(1, caps={"benign_cap": 100, "per_class_malicious_cap": 10_000})
    d = synthetic.generate({0: 1000, 1: 50}, seed=0, spec=spec)
    a, b = apply_caps(d, 7), apply_caps(d, 7)
    assert a.class_counts[0] == 100 and a.class_counts[1] == 50
    assert set(a.source_row.tolist()) == set(b.source_row.tolist())


def test_essential_projection_cell_by_cell():
    spec = synthetic.synthetic_spec(2, feature_lists={"Complete": ["duration", "fwd_bytes", "fwd_pkts"],
                                                      "Essential": ["duration", "fwd_pkts"]})
    d = synthetic.generate({0: 30, 1: 10, 2: 10}, seed=0, spec=spec)
    v = project(d, ESSENTIAL)
    assert v.matrix.shape == (50, 2)
    for i in range(len(d)):
        assert v.matrix[i, 0] == d.column("duration")[i] and v.matrix[i, 1] == d.column("fwd_pkts")[i]
    empty = project(d.take(np.empty(0, dtype=int)), COMPLETE)
    assert empty.matrix.shape == (0, 3) and empty.column_names == ("duration", "fwd_bytes", "fwd_pkts")
