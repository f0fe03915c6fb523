import pytest

from pexsim import RawVisit, ValidationError, VisitRecord, derive_timing, validate_dataset


def make_record(sid, j, t, age_baseline=30.0, **kw):
    fields = dict(dx=0, educ=12.0, gender=0, race_lat=0.0, outcome=0.5)
    fields.update(kw)
    return VisitRecord(
        subject_id=sid,
        visit_index=j,
        years_since_baseline=t,
        age_at_visit=age_baseline + t,
        **fields,
    )


def test_validate_well_formed():
    records = [make_record(s, j, float(j - 1)) for s in ("a", "b") for j in (1, 2)]
    ds = validate_dataset(records)
    assert ds.n_records == 4
    assert ds.max_visits == 2
    assert ds.dropped_subjects == ()


def test_validate_drops_subjects_without_baseline():
    records = [
        make_record("a", 2, 1.0),
        make_record("a", 3, 2.0),
        make_record("b", 1, 0.0),
        make_record("b", 2, 1.0),
    ]
    ds = validate_dataset(records)
    assert ds.dropped_subjects == ("a",)
    assert {r.subject_id for r in ds.records} == {"b"}


def test_validate_rejects_duplicate_key():
    records = [
        make_record("b", 1, 0.0),
        make_record("b", 2, 1.0),
        make_record("b", 2, 1.5),
    ]
    with pytest.raises(ValidationError, match=r"\('b', 2\)"):
        validate_dataset(records)


def test_validate_rejects_nonmonotone_time():
    records = [
        make_record("a", 1, 0.0),
        make_record("a", 2, 2.0),
        VisitRecord("a", 3, 1.0, 31.0, 0, 12.0, 0, 0.0, 0.5),
    ]
    with pytest.raises(ValidationError, match="strictly increasing"):
        validate_dataset(records)


def test_validate_rejects_baseline_with_nonzero_time():
    bad = VisitRecord("a", 1, 0.5, 30.5, 0, 12.0, 0, 0.0, 0.5)
    with pytest.raises(ValidationError, match="baseline"):
        validate_dataset([bad, make_record("b", 1, 0.0)])


def test_validate_rejects_broken_age_identity():
    records = [
        make_record("a", 1, 0.0),
        VisitRecord("a", 2, 1.0, 32.5, 0, 12.0, 0, 0.0, 0.5),  # should be 31.0
    ]
    with pytest.raises(ValidationError, match="age_at_visit"):
        validate_dataset(records)


def test_validate_errors_when_everything_dropped():
    with pytest.raises(ValidationError, match="no subjects remain"):
        validate_dataset([make_record("a", 2, 1.0)])
    with pytest.raises(ValidationError, match="no records"):
        validate_dataset([])


def test_validate_is_idempotent():
    records = [make_record(s, j, float(j - 1)) for s in ("a", "b") for j in (1, 2, 3)]
    ds = validate_dataset(records)
    again = validate_dataset(list(ds.records))
    assert again.records == ds.records
    assert again.max_visits == ds.max_visits


def test_validate_allows_missing_intermediate_visits():
    records = [make_record("a", 1, 0.0), make_record("a", 3, 2.0)]
    ds = validate_dataset(records)
    assert [r.visit_index for r in ds.records] == [1, 3]
    assert ds.max_visits == 3


def make_raw(sid, days, age=40.0, outcome=1.0):
    return RawVisit(
        subject_id=sid,
        days_since_baseline=days,
        age_at_baseline=age,
        dx=0,
        educ=12.0,
        gender=0,
        race_lat=0.0,
        outcome=outcome,
    )


def test_derive_timing_baseline_and_unit_conversion():
    recs = derive_timing([make_raw("a", 0), make_raw("a", 365.25)])
    assert recs[0].visit_index == 1
    assert recs[0].years_since_baseline == 0.0
    assert recs[1].years_since_baseline == 1.0


def test_derive_timing_hand_arithmetic():
    recs = derive_timing([make_raw("a", d) for d in (0, 360, 740)])
    assert [r.visit_index for r in recs] == [1, 2, 3]
    assert [r.years_since_baseline for r in recs] == [0.0, 360 / 365.25, 740 / 365.25]
    # derived ages keep the baseline identity exactly
    assert recs[2].age_at_visit == 40.0 + 740 / 365.25
    ds = validate_dataset(recs)
    assert ds.n_records == 3


def test_derive_timing_rejects_negative_days():
    with pytest.raises(ValidationError, match="negative"):
        derive_timing([make_raw("a", -3), make_raw("a", 0)])


def test_derive_timing_requires_zero_day_baseline():
    with pytest.raises(ValidationError, match="baseline"):
        derive_timing([make_raw("a", 100), make_raw("a", 400)])


def test_derive_timing_rejects_duplicate_days():
    with pytest.raises(ValidationError, match="duplicate"):
        derive_timing([make_raw("a", 0), make_raw("a", 360), make_raw("a", 360)])


def test_derive_timing_rejects_inconsistent_baseline_age():
    rows = [make_raw("a", 0, age=40.0), make_raw("a", 360, age=41.0)]
    with pytest.raises(ValidationError, match="age_at_baseline"):
        derive_timing(rows)
