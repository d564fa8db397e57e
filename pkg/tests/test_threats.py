from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nidsbench import synthetic
from nidsbench.flowstore import COMPLETE, ESSENTIAL, UDP, project
from nidsbench.learners import DT
from nidsbench.pipelines import BD, train_pipeline
from nidsbench.splitter import ABUNDANT, AvailabilityLevel, static_split
from nidsbench.threats import (BYTES, DURATION, PACKETS, PerturbationRule, ThreatError, assess_robustness,
                               eligible, perturb, verify_realizable)


@pytest.fixture(scope="module")
def targets(small_dataset):
    rows = eligible(small_dataset, np.arange(len(small_dataset)))
    return small_dataset, rows


def test_eligibility_filter(small_dataset):
    d = small_dataset
    rows = eligible(d, np.arange(len(d)))
    assert len(rows) > 0
    expected = [i for i in range(len(d)) if d.class_id[i] > 0 and d.protocol[i] == UDP and d.src_internal[i]]
    assert rows.tolist() == expected
    assert eligible(d, np.empty(0, dtype=int)).size == 0


def test_increments_are_monotone_and_capped(targets):
    d, rows = targets
    rule = PerturbationRule()
    adv = perturb(d, rows, rule, seed=1)
    orig = d.take(rows)
    dur0, dur1 = orig.base("duration"), adv.base("duration")
    b0, b1 = orig.base("tot_bytes"), adv.base("tot_bytes")
    assert np.all(dur1 >= dur0) and np.all(b1 >= b0)
    assert np.all(adv.base("tot_packets") == orig.base("tot_packets"))
    cap_bytes = rule.mtu * orig.base("tot_packets")
    assert np.all((b1 == b0) | (b1 <= cap_bytes))
    assert np.all((dur1 == dur0) | (dur1 <= d.max_duration()))
    # most rows actually move
    assert np.mean((dur1 != dur0) | (b1 != b0)) > 0.5


def test_increments_come_from_the_rule(targets):
    d, rows = targets
    rule = PerturbationRule(duration_increments=(3.0,), byte_increments=(7.0,), max_flow_duration=1e9)
    orig, adv = d.take(rows), perturb(d, rows, rule, seed=0)
    b0, b1 = orig.base("tot_bytes"), adv.base("tot_bytes")
    assert np.allclose(adv.base("duration") - orig.base("duration"), 3.0)
    room = rule.mtu * orig.base("tot_packets") >= b0 + 7
    assert np.allclose(b1[room] - b0[room], 7.0)


def test_derived_features_recomputed(targets):
    d, rows = targets
    adv = perturb(d, rows, PerturbationRule(), seed=2)
    dur, fb, fp = adv.base("duration"), adv.base("tot_bytes"), adv.base("tot_packets")
    bwd = adv.column("bwd_bytes")
    with np.errstate(divide="ignore", invalid="ignore"):
        expect = np.where(dur > 0, (fb + bwd) / dur, 0.0)
    assert np.allclose(adv.column("flow_bytes_s"), expect, rtol=1e-12)
    assert np.allclose(adv.column("fwd_mean_len"), fb / fp, rtol=1e-12)
    # columns outside the dependency graph are untouched
    assert np.array_equal(adv.column("bwd_bytes"), d.take(rows).column("bwd_bytes"))


@pytest.mark.parametrize("mode,field,still", [(DURATION, "duration", "tot_bytes"), (BYTES, "tot_bytes", "duration")])
def test_single_field_modes(targets, mode, field, still):
    d, rows = targets
    adv = perturb(d, rows, PerturbationRule(mode=mode), seed=3)
    orig = d.take(rows)
    assert np.array_equal(adv.base(still), orig.base(still))
    assert np.any(adv.base(field) != orig.base(field))


def test_identity_rule_is_bit_identical(targets):
    d, rows = targets
    rule = PerturbationRule.identity().pinned(d)
    assert rule.is_identity
    adv = perturb(d, rows, rule, seed=4)
    assert np.array_equal(adv.features, d.take(rows).features)
    assert not verify_realizable(d.take(rows), adv, rule).any()


def test_packet_mode_is_gated():
    with pytest.raises(ThreatError, match="exploratory"):
        PerturbationRule(mode=PACKETS)
    PerturbationRule(mode=PACKETS, allow_packets=True)


@pytest.mark.parametrize("raw", [{"byte_increments": []}, {"duration_increments": [-1]}, {"mtu": 0},
                                 {"mode": "ttl"}])
def test_rule_validation(raw):
    with pytest.raises(ThreatError):
        PerturbationRule.from_dict(raw)


def test_rule_dict_roundtrip():
    r = PerturbationRule(byte_increments=(2.0, 4.0), max_flow_duration=60.0)
    assert PerturbationRule.from_dict(r.to_dict()) == r


def test_orphan_dependents_refused():
    spec = synthetic.synthetic_spec(2, dependents={"duration": ["iat_mean"], "tot_bytes": [], "tot_packets": []})
    d = synthetic.generate({0: 50, 1: 40, 2: 40}, seed=0, spec=spec)
    with pytest.raises(ThreatError, match="iat_mean"):
        perturb(d, eligible(d, np.arange(len(d))), PerturbationRule(), seed=0)
    perturb(d, eligible(d, np.arange(len(d))), PerturbationRule(mode=BYTES), seed=0)


class TestVerifierCatchesTampering:
    @pytest.fixture
    def pair(self, targets):
        d, rows = targets
        rule = PerturbationRule().pinned(d)
        return d.take(rows), perturb(d, rows, rule, seed=5), rule

    def _tamper(self, ds, name, fn):
        f = ds.features.copy()
        j = ds.feature_names.index(name)
        f[:, j] = fn(f[:, j])
        return ds.with_features(f)

    def test_clean_pair_passes(self, pair):
        orig, adv, rule = pair
        assert not verify_realizable(orig, adv, rule).any()

    def test_decrease(self, pair):
        orig, adv, rule = pair
        bad = self._tamper(orig, "duration", lambda c: c * 0.5)
        assert verify_realizable(orig, bad, rule).any()

    def test_stale_derived_feature(self, pair):
        orig, adv, rule = pair
        bad = self._tamper(adv, "fwd_mean_len", lambda c: c + 1.0)
        mask = verify_realizable(orig, bad, rule)
        moved = adv.base("tot_bytes") != orig.base("tot_bytes")
        assert mask[moved].all()

    def test_untouchable_column(self, pair):
        orig, adv, rule = pair
        assert verify_realizable(orig, self._tamper(adv, "bwd_pkts", lambda c: c + 1), rule).all()

    def test_byte_cap(self, pair):
        orig, adv, rule = pair
        bad = self._tamper(adv, "fwd_bytes", lambda c: c + 10 * rule.mtu * 1000)
        assert verify_realizable(orig, bad, rule).all()

    def test_unpinned_rule_refused(self, pair):
        orig, adv, _ = pair
        with pytest.raises(ThreatError, match="pinned"):
            verify_realizable(orig, adv, PerturbationRule())

    def test_misaligned(self, pair):
        orig, adv, rule = pair
        with pytest.raises(ThreatError):
            verify_realizable(orig, adv.take(np.arange(len(adv) - 1)), rule)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31), data_seed=st.integers(0, 50),
       dur=st.lists(st.floats(0, 100, allow_nan=False), min_size=1, max_size=4),
       byt=st.lists(st.floats(0, 5000, allow_nan=False), min_size=1, max_size=4),
       mode=st.sampled_from([DURATION, BYTES, "both"]), mtu=st.floats(50, 9000))
def test_verifier_accepts_every_perturbation(seed, data_seed, dur, byt, mode, mtu):
    d = synthetic.generate({0: 40, 1: 60, 2: 60}, seed=data_seed)
    rows = eligible(d, np.arange(len(d)))
    rule = PerturbationRule(duration_increments=tuple(dur), byte_increments=tuple(byt), mtu=mtu, mode=mode).pinned(d)
    adv = perturb(d, rows, rule, seed)
    assert not verify_realizable(d.take(rows), adv, rule).any()


def test_assess_robustness(small_dataset):
    d = small_dataset
    split = static_split(d, AvailabilityLevel(ABUNDANT), 0)
    view = project(d, ESSENTIAL)
    p = train_pipeline(BD, DT, split, view, seed=0)
    rows = eligible(d, split.eval_rows())
    clean = project(d.take(rows), ESSENTIAL)
    same = assess_robustness(p, clean, project(perturb(d, rows, PerturbationRule.identity(), 0), ESSENTIAL))
    assert same.tpr_adv == same.tpr_org and not same.success
    assert same.n_eligible == len(rows)
    res = assess_robustness(p, clean, project(perturb(d, rows, PerturbationRule(), 0), ESSENTIAL))
    assert 0 <= res.tpr_adv <= 1 and res.success == (res.tpr_adv < res.tpr_org)
    complete = train_pipeline(BD, DT, split, project(d, COMPLETE), seed=0)
    with pytest.raises(ThreatError, match="Essential"):
        assess_robustness(complete, project(d.take(rows), COMPLETE), project(d.take(rows), COMPLETE))


def _rows_frame(rows: list[dict], n_extra_benign: int = 0):
    """A frame holding exactly ``rows`` (label, proto, src_ip and the base columns overridden)."""
    frame = synthetic.generate_frame({0: n_extra_benign + len(rows)}, seed=0).reset_index(drop=True)
    for i, row in enumerate(rows):
        for k, v in row.items():
            frame.loc[i, k] = v
    return frame


def _one_attack(**cols):
    from nidsbench.flowstore import dataset_from_frame

    row = {"label": "attack1", "proto": 17, "src_ip": "10.0.0.5", **cols}
    return dataset_from_frame(synthetic.synthetic_spec(1), _rows_frame([row], n_extra_benign=2))


@pytest.mark.parametrize("cols,ok", [({}, True), ({"proto": 6}, False), ({"src_ip": "8.8.8.8"}, False),
                                     ({"label": "benign"}, False)])
def test_eligibility_cases(cols, ok):
    d = _one_attack(**cols)
    assert (0 in eligible(d, np.arange(len(d))).tolist()) == ok


def test_bytes_per_second_recomputed():
    d = _one_attack(duration=2.0, fwd_bytes=1000.0, fwd_pkts=1.0, bwd_bytes=0.0, flow_bytes_s=500.0)
    rule = PerturbationRule(byte_increments=(64.0,), mode=BYTES).pinned(d)
    adv = perturb(d, np.array([0]), rule, seed=0)
    assert adv.column("fwd_bytes")[0] == 1064.0 and adv.column("duration")[0] == 2.0
    assert adv.column("flow_bytes_s")[0] == 532.0


def test_rows_at_the_byte_cap_do_not_move():
    d = synthetic.generate({0: 100, 1: 10_000}, seed=0, spec=synthetic.synthetic_spec(1))
    f = d.features.copy()
    j_b, j_p = d.feature_names.index("fwd_bytes"), d.feature_names.index("fwd_pkts")
    f[:, j_b] = 1500.0 * f[:, j_p]
    full = d.with_features(f)
    rows = eligible(full, np.arange(len(full)))
    assert len(rows) > 1000
    rule = PerturbationRule(mode=BYTES).pinned(full)
    adv = perturb(full, rows, rule, seed=1)
    assert np.array_equal(adv.features, full.take(rows).features)
    assert not verify_realizable(full.take(rows), adv, rule).any()


def test_constant_malicious_detector_cannot_be_evaded(small_dataset):
    from dataclasses import replace

    from nidsbench.learners import constant_model

    d = small_dataset
    split = static_split(d, AvailabilityLevel(ABUNDANT), 0)
    view = project(d, ESSENTIAL)
    p = train_pipeline(BD, DT, split, view)
    p = replace(p, members=[constant_model(1, view.column_names)])
    rows = eligible(d, split.eval_rows())
    res = assess_robustness(p, project(d.take(rows), ESSENTIAL),
                            project(perturb(d, rows, PerturbationRule(), 0), ESSENTIAL))
    assert res.tpr_org == res.tpr_adv == 1.0 and not res.success
