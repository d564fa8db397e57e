from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
import pytest

from nidsbench import learners, synthetic
from nidsbench.flowstore import COMPLETE, ESSENTIAL, FeatureView, project
from nidsbench.learners import DT, HGB, LR, RF, LearnerKind
from nidsbench.pipelines import (BD, BENIGN_SENTINEL, BMD, EDO, EDR, EDS, EDV, MD, PIPELINE_KINDS, PipelineError,
                                 classify_family, detect, evaluate_redundant, labels_for, specialist_votes,
                                 train_pipeline)
from nidsbench.splitter import ABUNDANT, LIMITED, AvailabilityLevel, exclude_class, static_split

HGB_FAST = LearnerKind(HGB, {"n_iter": 20})


@pytest.fixture(scope="module")
def setup(small_dataset):
    split = static_split(small_dataset, AvailabilityLevel(ABUNDANT), seed=1)
    return small_dataset, split, project(small_dataset, COMPLETE)


def _eval_view(view, split):
    rows = split.eval_rows()
    return FeatureView(view.matrix[rows], view.column_names, rows, view.feature_set), rows


@pytest.mark.parametrize("kind", [k for k in PIPELINE_KINDS if k != EDR])
def test_every_design_detects(setup, kind):
    d, split, view = setup
    p = train_pipeline(kind, DT, split, view, seed=0)
    ev, rows = _eval_view(view, split)
    pred = detect(p, ev)
    y = labels_for(split, rows, use_eval=True)
    assert set(np.unique(pred)) <= {0, 1}
    assert np.mean(pred == (y > 0)) > 0.6


def test_bd_and_bmd_share_stage_one(setup):
    _, split, view = setup
    for lk in (DT, HGB_FAST, LearnerKind(RF, {"n_trees": 5})):
        bd = train_pipeline(BD, lk, split, view, seed=9)
        bmd = train_pipeline(BMD, lk, split, view, seed=9)
        ev, _ = _eval_view(view, split)
        assert np.array_equal(detect(bd, ev), detect(bmd, ev))


def test_specialists_train_on_benign_and_own_class(setup):
    d, split, view = setup
    seen = {}
    train_pipeline(EDO, DT, split, view, seed=0, audit=lambda name, rows: seen.__setitem__(name, rows))
    for c in d.spec.malicious_classes:
        classes = set(np.unique(d.class_id[seen[f"specialist-{c}"]]).tolist())
        assert classes == {0, c}
    assert set(seen) == {f"specialist-{c}" for c in d.spec.malicious_classes}


def test_bmd_family_stage_sees_only_malicious(setup):
    d, split, view = setup
    seen = {}
    train_pipeline(BMD, DT, split, view, seed=0, audit=lambda name, rows: seen.__setitem__(name, rows))
    assert 0 not in set(d.class_id[seen["family"]].tolist())
    assert np.array_equal(seen["binary"], split.train_rows())


def test_training_never_touches_eval_rows(setup):
    _, split, view = setup
    eval_rows = set(split.eval_rows().tolist())
    for kind in PIPELINE_KINDS:
        def audit(name, rows):
            assert not eval_rows & set(rows.tolist()), (kind, name)
        train_pipeline(kind, DT, split, view, seed=0, audit=audit)


def test_vote_rules_against_specialist_matrix(setup):
    _, split, view = setup
    edo = train_pipeline(EDO, DT, split, view, seed=0)
    edv = train_pipeline(EDV, DT, split, view, seed=0, shared_specialists=edo)
    eds = train_pipeline(EDS, DT, split, view, seed=0, shared_specialists=edo)
    ev, _ = _eval_view(view, split)
    votes = specialist_votes(edo, ev.matrix)
    m = votes.shape[1]
    assert np.array_equal(detect(edo, ev), (votes.sum(1) >= 1).astype(int))
    assert np.array_equal(detect(edv, ev), (votes.sum(1) >= math.ceil(m / 2)).astype(int))
    assert np.array_equal(detect(eds, ev), learners.predict(eds.members[-1], votes.astype(float)))
    # OR fires whenever the majority does
    assert np.all(detect(edo, ev) >= detect(edv, ev))


def test_shared_specialists_must_match(setup, small_dataset):
    _, split, view = setup
    edo = train_pipeline(EDO, DT, split, view, seed=0)
    other = static_split(small_dataset, AvailabilityLevel(ABUNDANT), seed=2)
    with pytest.raises(PipelineError, match="different split"):
        train_pipeline(EDV, DT, other, view, seed=0, shared_specialists=edo)


def test_classify_family(setup):
    _, split, view = setup
    ev, rows = _eval_view(view, split)
    y = labels_for(split, rows, use_eval=True)
    md = train_pipeline(MD, DT, split, view, seed=0)
    fam = classify_family(md, ev)
    raw = learners.predict(md.members[0], ev.matrix)
    assert np.array_equal(fam == BENIGN_SENTINEL, raw == 0)
    bmd = train_pipeline(BMD, DT, split, view, seed=0)
    fam = classify_family(bmd, ev)
    detected = learners.predict(bmd.members[0], ev.matrix) == 1
    assert np.all(fam[~detected] == BENIGN_SENTINEL)
    assert np.all(fam[detected] > 0)
    assert np.mean(fam[y > 0] == y[y > 0]) > 0.5
    with pytest.raises(PipelineError):
        classify_family(train_pipeline(BD, DT, split, view, seed=0), ev)


def test_edr_is_evaluation_only(setup):
    d, split, view = setup
    edr = train_pipeline(EDR, DT, split, view, seed=0)
    assert not edr.deployable
    ev, _ = _eval_view(view, split)
    with pytest.raises(PipelineError, match="evaluation-only"):
        detect(edr, ev)
    res = evaluate_redundant(edr, split, view)
    for c, rows in res.test_rows.items():
        assert set(np.unique(d.class_id[rows]).tolist()) == {0, c}
    assert res.tpr == pytest.approx(np.mean([v["tpr"] for v in res.per_class.values()]))


def test_schema_mismatch(setup, small_dataset):
    _, split, view = setup
    p = train_pipeline(BD, DT, split, view, seed=0)
    ess = project(small_dataset, ESSENTIAL)
    with pytest.raises(PipelineError, match="schema mismatch"):
        detect(p, ess)


def test_excluded_class_absent_from_training(setup):
    d, split, view = setup
    x = exclude_class(split, 3)
    seen = []
    p = train_pipeline(MD, LR, x, view, seed=0, audit=lambda n, rows: seen.append(rows))
    assert 3 not in set(d.class_id[np.concatenate(seen)].tolist())
    assert 3 not in set(p.members[0].classes.tolist())
    edo = train_pipeline(EDO, DT, x, view, seed=0)
    assert edo.specialist_classes == [1, 2, 4]


def test_limited_single_class_specialist(small_dataset):
    split = static_split(small_dataset, AvailabilityLevel(LIMITED), 0)
    view = project(small_dataset, COMPLETE)
    p = train_pipeline(EDV, HGB_FAST, split, view, seed=0)
    assert len(p.specialists) == 4
    assert p.train_wall_seconds == pytest.approx(sum(m.fit_wall_seconds for m in p.members))


def test_unknown_kind(setup):
    _, split, view = setup
    with pytest.raises(PipelineError):
        train_pipeline("XD", DT, split, view)


def test_label_collapse_and_member_counts(setup):
    _, split, view = setup
    assert train_pipeline(BD, DT, split, view).members[0].classes.tolist() == [0, 1]
    assert train_pipeline(MD, DT, split, view).members[0].classes.tolist() == [0, 1, 2, 3, 4]
    eds = train_pipeline(EDS, DT, split, view)
    assert len(eds.members) == 5 and eds.member_names[-1] == "stack"


def test_bmd_stage_two_sees_exactly_the_malicious_rows():
    d = synthetic.generate({0: 37, 1: 12, 2: 12}, seed=0, spec=synthetic.synthetic_spec(2))
    split = static_split(d, AvailabilityLevel(ABUNDANT), 0)
    seen = {}
    train_pipeline(BMD, DT, split, project(d, COMPLETE), audit=lambda n, rows: seen.__setitem__(n, rows))
    assert len(seen["binary"]) == 50 and len(seen["family"]) == 20


def test_unanimous_benign_vector(setup):
    _, split, view = setup
    edo = train_pipeline(EDO, DT, split, view)
    eds = train_pipeline(EDS, DT, split, view, shared_specialists=edo)
    assert learners.predict(eds.members[-1], np.zeros((1, 4))).tolist() == [0]
    benign_rows = split.eval_idx[0]
    votes = specialist_votes(edo, view.matrix[benign_rows])
    quiet = votes.sum(1) == 0
    ev = FeatureView(view.matrix[benign_rows[quiet]], view.column_names, benign_rows[quiet], view.feature_set)
    for kind in (EDO, EDV):
        assert not detect(train_pipeline(kind, DT, split, view, shared_specialists=edo), ev).any()


def test_constant_second_stage(setup):
    _, split, view = setup
    p = train_pipeline(BMD, DT, split, view)
    p = replace(p, members=[p.members[0], learners.constant_model(2, view.column_names)])
    ev, _ = _eval_view(view, split)
    fam = classify_family(p, ev)
    detected = learners.predict(p.members[0], ev.matrix) == 1
    assert np.all(fam[detected] == 2) and np.all(fam[~detected] == BENIGN_SENTINEL)


def test_edr_with_one_attack_class():
    d = synthetic.generate({0: 300, 1: 150}, seed=1, spec=synthetic.synthetic_spec(1))
    split = static_split(d, AvailabilityLevel(ABUNDANT), 0)
    view = project(d, COMPLETE)
    edr = train_pipeline(EDR, DT, split, view)
    res = evaluate_redundant(edr, split, view)
    spec_model = edr.specialists[0]
    tpr = np.mean(learners.predict(spec_model, view.matrix[split.eval_idx[1]]) == 1)
    fpr = np.mean(learners.predict(spec_model, view.matrix[split.eval_idx[0]]) == 1)
    assert (res.tpr, res.fpr) == (tpr, fpr)


def test_edr_flatters_against_edo():
    # attacks drawn close to one another so specialists fire across families
    d = synthetic.generate({0: 600, 1: 200, 2: 200, 3: 200, 4: 200}, seed=4, separation=0.4)
    split = static_split(d, AvailabilityLevel(ABUNDANT), 0)
    view = project(d, COMPLETE)
    edo = train_pipeline(EDO, DT, split, view)
    edr = train_pipeline(EDR, DT, split, view)
    res = evaluate_redundant(edr, split, view)
    benign = FeatureView(view.matrix[split.eval_idx[0]], view.column_names, split.eval_idx[0], COMPLETE)
    assert res.fpr <= float(np.mean(detect(edo, benign)))
    for c in d.spec.malicious_classes:
        rows = split.eval_idx[c]
        own = FeatureView(view.matrix[rows], view.column_names, rows, COMPLETE)
        assert float(np.mean(detect(edo, own))) >= res.per_class[c]["tpr"]
