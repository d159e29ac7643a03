import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from iesched.core import DayProfile, ErrorSample
from iesched.data import (DataError, ErrorSpec, ProfileSpec, SeriesError, SeriesShape, apply_errors,
                          augment_forecasts, build_dataset, combine, generate_base_days, load_csv,
                          load_profiles_csv, sample_errors, save_csv, save_profiles_csv)


def flat_spec(base=100.0, noise=0.0, day_noise=0.0):
    s = SeriesShape(base, noise=noise, day_noise=day_noise)
    return ProfileSpec(L_E=s, L_H=s, S_W=s, S_PV=s)


def test_noise_free_days_repeat_exactly():
    a = generate_base_days(flat_spec(), 3, seed=1)
    b = generate_base_days(flat_spec(), 3, seed=1)
    assert all(np.array_equal(x.as_array(), y.as_array()) for x, y in zip(a, b))


def test_each_day_has_its_own_stream():
    spec = ProfileSpec()
    full = generate_base_days(spec, 5, seed=3)
    # the same day index regenerates identically whatever the batch length
    assert np.array_equal(generate_base_days(spec, 2, seed=3)[1].as_array(), full[1].as_array())


def test_zero_base_gives_zero_profile():
    d = generate_base_days(flat_spec(base=0.0, noise=0.1), 2, seed=0)
    assert all(np.all(x.as_array() == 0) for x in d)


def test_mean_level_close_to_base():
    spec = ProfileSpec(L_E=SeriesShape(520.0, noise=0.05, day_noise=0.05))
    days = generate_base_days(spec, 1000, seed=5)
    assert np.mean([d.L_E.mean() for d in days]) == pytest.approx(520.0, rel=0.05)


def test_values_respect_caps():
    spec = ProfileSpec()
    for d in generate_base_days(spec, 365, seed=2):
        a = d.as_array()
        assert a.min() >= 0
        assert d.S_W.max() <= spec.S_W.cap and d.S_PV.max() <= spec.S_PV.cap


def test_pv_dark_at_night():
    d = generate_base_days(ProfileSpec(), 10, seed=0)
    assert all(x.S_PV[0] == 0 and x.S_PV[13] > 0 for x in d)


def test_weights_one_zero_reproduce_parent():
    parents = np.stack([generate_base_days(ProfileSpec(), 2, seed=0)[i].as_array() for i in range(2)])
    assert np.array_equal(combine(parents, np.array([1.0, 0.0])), parents[0])
    with pytest.raises(ValueError):
        combine(parents, np.array([0.7, 0.7]))


def test_augmented_pool_size_and_envelope():
    base = generate_base_days(ProfileSpec(), 30, seed=0)
    stack = np.stack([d.as_array() for d in base])
    pool = augment_forecasts(base, 56172, seed=1)
    assert len(pool) == 56172
    arr = np.stack([p.as_array() for p in pool[:2000]])
    assert np.all(arr >= stack.min(0) - 1e-9) and np.all(arr <= stack.max(0) + 1e-9)


def test_augment_needs_two_days():
    with pytest.raises(ValueError):
        augment_forecasts(generate_base_days(ProfileSpec(), 1, seed=0), 5)


def test_zero_cap_gives_zero_errors():
    errs = sample_errors(ErrorSpec(cap=0.0), 20, seed=0)
    assert all(np.all(e.as_array() == 0) for e in errs)


def test_cap_holds_over_many_samples():
    arr = np.stack([e.as_array() for e in sample_errors(ErrorSpec(), 5000, seed=4)])
    assert np.abs(arr).max() <= 0.45
    assert len(sample_errors(ErrorSpec(), 233, seed=0)) == 233


def test_uncorrelated_errors_have_no_lag_one_correlation():
    law = SeriesError("gaussian", scale=0.1, correlation=0.0)
    spec = ErrorSpec(delta_E=law)
    arr = np.stack([e.delta_E for e in sample_errors(spec, 100_000 // 24 + 1, seed=9)])
    x = arr[:, :-1].ravel() - arr.mean()
    y = arr[:, 1:].ravel() - arr.mean()
    assert abs(np.mean(x * y) / np.mean(x * x)) < 0.05


def test_correlated_errors_are_correlated():
    spec = ErrorSpec(delta_E=SeriesError("gaussian", scale=0.05, correlation=0.8))
    arr = np.stack([e.delta_E for e in sample_errors(spec, 3000, seed=9)])
    c = np.corrcoef(arr[:, :-1].ravel(), arr[:, 1:].ravel())[0, 1]
    assert 0.7 < c < 0.9


def test_beta_errors_mean_matches_affine_map():
    spec = ErrorSpec(delta_H=SeriesError("beta", a=9.0, b=7.0, correlation=0.0))
    arr = np.stack([e.delta_H for e in sample_errors(spec, 4000, seed=1)])
    assert arr.mean() == pytest.approx(0.45 * (2 * 9 / 16 - 1), abs=0.003)


def test_apply_errors_examples():
    f = DayProfile(*np.full((4, 24), 100.0))
    assert np.array_equal(apply_errors(f, ErrorSample.zeros()).as_array(), f.as_array())
    assert apply_errors(f, ErrorSample(*np.full((4, 24), 0.1))).L_E[0] == pytest.approx(110)
    assert apply_errors(f, ErrorSample(*np.full((4, 24), -0.45))).L_E[0] == pytest.approx(55)


@given(st.floats(-2, 2), st.floats(0, 1e3))
def test_apply_errors_never_negative(delta, level):
    f = DayProfile(*np.full((4, 24), level))
    assert apply_errors(f, ErrorSample(*np.full((4, 24), delta))).as_array().min() >= 0


def test_dataset_round_trip_and_determinism(tmp_path):
    ds = build_dataset(n_days=20, pool_size=50, n_errors=10, test_days=5, seed=4)
    assert build_dataset(n_days=20, pool_size=50, n_errors=10, test_days=5, seed=4).hash == ds.hash
    assert build_dataset(n_days=20, pool_size=50, n_errors=10, test_days=5, seed=5).hash != ds.hash
    save_csv(ds, tmp_path)
    back = load_csv(tmp_path)
    assert back.hash == ds.hash
    assert back.meta == ds.meta


def test_test_actuals_are_forecasts_with_capped_errors():
    ds = build_dataset(n_days=10, pool_size=5, n_errors=5, test_days=31, seed=0)
    for f, a in zip(ds.test_forecasts, ds.test_actuals):
        mask = f.as_array() > 0
        ratio = a.as_array()[mask] / f.as_array()[mask] - 1
        assert np.abs(ratio).max() <= 0.45 + 1e-12


def test_short_day_rejected_with_day_name(tmp_path):
    p = tmp_path / "f.csv"
    save_profiles_csv(p, generate_base_days(ProfileSpec(), 2, seed=0))
    lines = p.read_text().splitlines()
    p.write_text("\n".join(lines[:-1]) + "\n")  # drop slot 24 of the second day
    with pytest.raises(DataError, match="day 2 has 23 slots"):
        load_profiles_csv(p)


@pytest.mark.parametrize("content, msg", [
    ("day,slot,L_E_kwh,L_H_kwh,S_W_kwh\n1,1,1,1,1\n", "missing columns"),
    ("day,slot,L_E_kwh,L_H_kwh,S_W_kwh,S_PV_kwh\n1,1,abc,1,1,1\n", ":2: malformed"),
    ("day,slot,L_E_kwh,L_H_kwh,S_W_kwh,S_PV_kwh\n1,25,1,1,1,1\n", "slot 25"),
    ("", "empty"),
])
def test_malformed_files_rejected(tmp_path, content, msg):
    p = tmp_path / "bad.csv"
    p.write_text(content)
    with pytest.raises(DataError, match=msg):
        load_profiles_csv(p)


def test_ingested_sums_match_file_column_sums(tmp_path):
    rng = np.random.default_rng(0)
    vals = rng.uniform(0, 500, (24, 4)).round(3)
    rows = ["day,slot,L_E_kwh,L_H_kwh,S_W_kwh,S_PV_kwh"]
    rows += [f"7,{t + 1}," + ",".join(f"{v:.3f}" for v in vals[t]) for t in range(24)]
    p = tmp_path / "real.csv"
    p.write_text("\n".join(rows) + "\n")
    (d,) = load_profiles_csv(p)
    assert d.day == 7
    assert d.as_array().sum(axis=1) == pytest.approx(vals.sum(axis=0), rel=1e-12)
