import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anchorslam.encounter import (NO_OVERLAP, EncounterModelError, EncounterObservation, FitError,
                                  LogWifiModel, QuadraticRssModel, RssSample, WifiScan,
                                  bluetooth_distance, detect_encounter_bluetooth, detect_encounter_wifi,
                                  dump_model, fit_log_model, fit_quadratic_model, load_model,
                                  paired_wifi_similarity, pairwise_wifi_similarity, read_calibration,
                                  wifi_distance, wifi_similarity, write_calibration)
from anchorslam.sim.radio import BluetoothChannel, synthesize_bluetooth_rss


def test_similarity_identical_scans_is_zero():
    s = WifiScan({"a": -40.0, "b": -70.0, "c": -55.0})
    assert wifi_similarity(s, s) == 0.0


def test_similarity_two_common_aps():
    a = WifiScan({"AP1": -50.0, "AP2": -60.0})
    b = WifiScan({"AP1": -53.0, "AP2": -64.0})
    assert wifi_similarity(a, b, top_n=2) == pytest.approx(2.5)


def test_similarity_disjoint_and_empty():
    assert wifi_similarity(WifiScan({"x": -50.0}), WifiScan({"y": -50.0})) is NO_OVERLAP
    assert wifi_similarity(WifiScan({}), WifiScan({"y": -50.0})) is NO_OVERLAP


def test_similarity_uses_strongest_aps_only():
    a = WifiScan({"p": -40.0, "q": -45.0, "r": -90.0})
    b = WifiScan({"p": -42.0, "q": -45.0, "r": -60.0})
    # r is outside a's top 2, so only p and q count
    assert wifi_similarity(a, b, top_n=2) == pytest.approx(2.0 / 2)


def test_scan_rejects_out_of_range_rss():
    with pytest.raises(EncounterModelError):
        WifiScan({"a": 5.0})
    with pytest.raises(EncounterModelError):
        RssSample(-130.0, "phone")


def test_wifi_detection():
    assert detect_encounter_wifi(2.5, 8)
    assert detect_encounter_wifi(8.0, 8)
    assert not detect_encounter_wifi(8.01, 8)
    assert not detect_encounter_wifi(NO_OVERLAP, 8)


def test_bluetooth_detection():
    assert detect_encounter_bluetooth(-75, -90)
    assert not detect_encounter_bluetooth(-95, -90)
    assert detect_encounter_bluetooth(-90, -90)


def test_bluetooth_distance_examples():
    m = QuadraticRssModel(0.0, -0.1, -3.0)
    assert bluetooth_distance(-70, m) == pytest.approx(4.0)
    assert bluetooth_distance(-10, m) == 0.0  # -2 clamps to zero


def test_wifi_distance_examples():
    m = LogWifiModel(0.0, 1.0)
    assert wifi_distance(math.e, m) == pytest.approx(1.0)
    with pytest.raises(EncounterModelError):
        wifi_distance(0.0, m)


def test_fit_quadratic_exact():
    rss = np.linspace(-100, -30, 15)
    m = fit_quadratic_model(zip(rss, 0.01 * rss**2))
    assert m.a == pytest.approx(0.01, abs=1e-9)
    assert m.b == pytest.approx(0.0, abs=1e-9)
    assert m.c == pytest.approx(0.0, abs=1e-7)


def test_fit_quadratic_too_few_samples():
    with pytest.raises(FitError):
        fit_quadratic_model([(-50, 1.0), (-60, 2.0)])


def test_fit_log_exact_and_errors():
    sim = np.linspace(0.5, 10, 20)
    m = fit_log_model(zip(sim, 2 + 3 * np.log(sim)))
    assert (m.alpha, m.beta) == (pytest.approx(2, abs=1e-9), pytest.approx(3, abs=1e-9))
    with pytest.raises(EncounterModelError):
        fit_log_model([(0.0, 1.0), (1.0, 2.0), (2.0, 3.0)])
    with pytest.raises(FitError):
        fit_log_model([(2.0, 1.0), (2.0, 3.0)])


def test_bluetooth_round_trip_within_rmse():
    # pairs detected at a -70 dBm cut (about 4 m nominal range) fit to ~1 m RMSE
    ch = BluetoothChannel(-52.0, 3.0, 4.0)
    rng = np.random.default_rng(3)

    def draw(n):
        d = 25.0 * np.sqrt(rng.uniform(size=n))
        rss = synthesize_bluetooth_rss(d, ch, rng)
        keep = rss >= -70.0
        return rss[keep], d[keep]

    rss, d = draw(40000)
    m = fit_quadratic_model(zip(rss, d))
    assert 0.7 < m.rmse < 1.4
    rss2, d2 = draw(20000)
    err = np.sqrt(np.mean((bluetooth_distance(rss2, m) - d2) ** 2))
    assert err < 1.1 * m.rmse


def test_encounter_observation_validation():
    EncounterObservation(0, 1, 2.0, 1.0)
    with pytest.raises(EncounterModelError):
        EncounterObservation(1, 1, 2.0, 1.0)
    with pytest.raises(EncounterModelError):
        EncounterObservation(0, 1, -1.0, 1.0)
    with pytest.raises(EncounterModelError):
        EncounterObservation(0, 1, 1.0, 0.0)


def test_calibration_and_model_text_round_trip(tmp_path):
    samples = [(-60.0, 1.5), (-72.5, 3.25)]
    write_calibration(tmp_path / "cal.csv", samples)
    assert read_calibration(tmp_path / "cal.csv") == samples
    for m in (QuadraticRssModel(0.001, -0.2, 3.0, 0.9), LogWifiModel(4.0, -1.5, 2.2)):
        assert load_model(dump_model(m)) == m
    (tmp_path / "bad.csv").write_text("1,2,3\n")
    with pytest.raises(EncounterModelError, match="bad.csv:1"):
        read_calibration(tmp_path / "bad.csv")


def test_pairwise_matches_scalar_similarity():
    rng = np.random.default_rng(1)
    rss = rng.uniform(-99, -30, (6, 15))
    rss[rng.uniform(size=rss.shape) < 0.4] = np.nan
    ids = [f"ap{i}" for i in range(15)]
    scans = [WifiScan({ids[j]: r[j] for j in np.flatnonzero(~np.isnan(r))}) for r in rss]
    mat = pairwise_wifi_similarity(rss, 5)
    for i in range(6):
        for j in range(6):
            s = wifi_similarity(scans[i], scans[j], 5)
            if s is NO_OVERLAP:
                assert np.isnan(mat[i, j])
            else:
                assert mat[i, j] == pytest.approx(s)
    rows = paired_wifi_similarity(rss[:3], rss[3:], 5)
    np.testing.assert_allclose(rows, [mat[0, 3], mat[1, 4], mat[2, 5]], equal_nan=True)


scan_st = st.dictionaries(st.sampled_from([f"ap{i}" for i in range(12)]),
                          st.floats(-120, 0, allow_nan=False), max_size=12).map(WifiScan)


@settings(max_examples=200, deadline=None)
@given(scan_st, scan_st, st.integers(1, 8))
def test_similarity_symmetric_and_nonnegative(a, b, n):
    s1, s2 = wifi_similarity(a, b, n), wifi_similarity(b, a, n)
    if s1 is NO_OVERLAP:
        assert s2 is NO_OVERLAP
    else:
        assert s1 == pytest.approx(s2) and s1 >= 0


@settings(max_examples=200, deadline=None)
@given(scan_st, st.integers(1, 8))
def test_similarity_zero_iff_common_values_equal(a, n):
    if not a.readings:
        return
    assert wifi_similarity(a, a, n) == 0
    ap = next(iter(a.strongest(n)))
    shifted = dict(a.readings)
    shifted[ap] = shifted[ap] - 1.0 if shifted[ap] > -119 else shifted[ap] + 1.0
    s = wifi_similarity(a, WifiScan(shifted), n)
    assert s is NO_OVERLAP or s >= 0
    if s is not NO_OVERLAP and ap in WifiScan(shifted).strongest(n):
        assert s > 0


@settings(max_examples=200, deadline=None)
@given(scan_st, scan_st, st.floats(-120, 0))
def test_similarity_ignores_weak_extra_ap(a, b, rss):
    # an AP too weak to enter a's top-n leaves the value unchanged
    n = 3
    if len(a.readings) < n:
        return
    weakest = min(a.strongest(n).values())
    extra = dict(a.readings)
    extra["zz_new"] = min(rss, weakest - 1.0) if weakest > -119 else -120.0
    if extra["zz_new"] >= weakest:
        return
    before, after = wifi_similarity(a, b, n), wifi_similarity(WifiScan(extra), b, n)
    assert (before is NO_OVERLAP and after is NO_OVERLAP) or before == pytest.approx(after)


@settings(max_examples=200, deadline=None)
@given(st.floats(-120, 0), st.floats(-1, 1), st.floats(-50, 50), st.floats(-50, 50),
       st.floats(1e-6, 1e3), st.floats(-20, 20), st.floats(-20, 20))
def test_distances_never_negative(rss, a, b, c, sim, alpha, beta):
    assert bluetooth_distance(rss, QuadraticRssModel(a / 100, b / 10, c)) >= 0
    assert wifi_distance(sim, LogWifiModel(alpha, beta)) >= 0


@settings(max_examples=100, deadline=None)
@given(st.floats(-0.05, 0.05), st.floats(-2, 2), st.floats(-20, 20))
def test_quadratic_fit_recovers_coefficients(a, b, c):
    rss = np.linspace(-100, -30, 12)
    m = fit_quadratic_model(zip(rss, a * rss**2 + b * rss + c))
    np.testing.assert_allclose([m.a, m.b, m.c], [a, b, c], rtol=1e-9, atol=1e-9 * (1 + abs(c)) * 1e3)
