import math

import numpy as np
import pytest

from etpa_zscan.models import (
    AxialProfile,
    PairFieldParams,
    ProfileError,
    Sample,
    etpa_rate,
    profile_fwhm,
    tpa_curve,
    tpa_rate,
    zscan_profile_etpa,
    zscan_profile_spa,
    zscan_profile_tpa,
)
from etpa_zscan.optics import Detector, GaussianBeam, effective_waist_tpa, rayleigh_range

# Dense-grid / bisection oracle values (mpmath, 40 digits), corrected mode, d = 63 um.
FWHM_SPA_532_44 = 1017.6795377043983
FWHM_TPA_1064_15 = 126.65725528992825
FWHM_TPA_1064_45 = 169.42935823070897

DENSE = np.arange(-3000.0, 3000.0 + 0.05, 0.1)


def test_sample_concentration_from_mM():
    s = Sample.from_mM(5.0, 63.0)
    assert s.concentration_cm3 == pytest.approx(3.011e18, rel=1e-3)
    assert s.concentration_cm3 == pytest.approx(5e-3 * 6.02214076e23 / 1e3, rel=1e-14)
    assert s.path_length_cm == pytest.approx(126e-4)


@pytest.mark.parametrize("kw", [dict(concentration_cm3=0, half_thickness_d_um=1),
                                dict(concentration_cm3=1, half_thickness_d_um=-1),
                                dict(concentration_cm3=1, half_thickness_d_um=1, tpa_cross_section_gm=-1)])
def test_sample_validation(kw):
    with pytest.raises(ValueError):
        Sample(**kw)


def test_tpa_rate_value(sample):
    A = math.pi * (1.5e-4) ** 2
    # scratch arithmetic: C[cm^-3] * l[cm] * delta[cm^4 s] * R^2 / A[cm^2]
    expected = 3.01107038e18 * 0.0126 * 10e-50 * 1e16**2 / A
    assert expected == pytest.approx(5367339.431715428, rel=1e-12)
    assert tpa_rate(sample, A, 1e16) == pytest.approx(expected, rel=1e-12)


def test_tpa_rate_laws(sample):
    A = 1e-7
    assert tpa_rate(sample, A, 0.0) == 0.0
    assert tpa_rate(sample, A, 2e15) == pytest.approx(4 * tpa_rate(sample, A, 1e15), rel=1e-14)
    with pytest.raises(ValueError):
        tpa_rate(sample, 0.0, 1e15)


def test_etpa_rate_laws(sample):
    A = 1e-7
    pp = PairFieldParams(A, 1e-13)
    assert etpa_rate(sample, A, pp, 0.0) == 0.0
    assert etpa_rate(sample, A, pp, 3e11) == pytest.approx(3 * etpa_rate(sample, A, pp, 1e11), rel=1e-14)
    # A_e = A: doubling the area halves the rate
    r1 = etpa_rate(sample, A, PairFieldParams(A, 1e-13), 1e11)
    r2 = etpa_rate(sample, 2 * A, PairFieldParams(2 * A, 1e-13), 1e11)
    assert r2 == pytest.approx(r1 / 2, rel=1e-14)
    # reduced form C*l*delta*R/(T*A)
    reduced = sample.concentration_cm3 * sample.path_length_cm * 10e-50 * 1e11 / (1e-13 * A)
    assert r1 == pytest.approx(reduced, rel=1e-12)


def test_etpa_rate_from_sample_cross_section(sample):
    r = etpa_rate(sample, 1e-7, None, 8.7e11)
    assert r == pytest.approx(3.01107038e18 * 0.0126 * 5e-22 * 8.7e11, rel=1e-12)


def test_etpa_rate_errors(sample):
    with pytest.raises(ValueError):
        PairFieldParams(0, 1)
    with pytest.raises(ValueError):
        PairFieldParams(1, 0)
    with pytest.raises(ValueError):
        etpa_rate(sample, -1, PairFieldParams(1, 1), 1)
    with pytest.raises(ValueError):
        etpa_rate(Sample(1.0, 1.0), 1.0, None, 1.0)


def test_spa_profile_shape(beam_spa, det, sample):
    z = np.linspace(-300, 300, 61)
    p = zscan_profile_spa(beam_spa, det, sample, z_grid=z)
    assert p.values.max() == pytest.approx(1.0, abs=1e-12)
    assert np.argmax(p.values) == 30
    np.testing.assert_allclose(p.values, p.values[::-1], atol=1e-12)
    assert p.metadata["model"] == "spa"


def test_spa_profile_fwhm(beam_spa, det, sample):
    p = zscan_profile_spa(beam_spa, det, sample, z_grid=DENSE)
    assert profile_fwhm(p) == pytest.approx(FWHM_SPA_532_44, abs=0.01)


def test_tpa_profile_symmetry_and_fwhm(beam_tpa, det, sample):
    z = np.linspace(-300, 300, 601)
    p = zscan_profile_tpa(beam_tpa, det, sample, z_grid=z)
    np.testing.assert_allclose(p.values, p.values[::-1], atol=1e-12)
    dense = zscan_profile_tpa(beam_tpa, det, sample, z_grid=DENSE)
    assert profile_fwhm(dense) == pytest.approx(FWHM_TPA_1064_15, abs=0.01)
    assert 96.0 <= profile_fwhm(dense) <= 144.0


def test_tpa_profile_wide_waist(beam_etpa, det, sample):
    dense = zscan_profile_tpa(beam_etpa, det, sample, z_grid=DENSE)
    assert profile_fwhm(dense) == pytest.approx(FWHM_TPA_1064_45, abs=0.01)


def test_etpa_delegates_to_tpa(det, sample):
    z = np.linspace(-300, 300, 121)
    beam = GaussianBeam.from_nm(1064, 4.5, 0.7)
    e = zscan_profile_etpa(beam, det, sample, z_grid=z)
    t = zscan_profile_tpa(beam, det, sample, z_grid=z)
    assert np.array_equal(e.values, t.values)
    assert e.metadata["model"] == "etpa"
    # wavelength is forced to the SPDC centre regardless of the beam given
    e2 = zscan_profile_etpa(GaussianBeam.from_nm(800, 4.5, 0.7), det, sample, z_grid=z)
    assert np.array_equal(e2.values, t.values)


def test_etpa_fwhm_between_references(beam_spa, beam_tpa, beam_etpa, det, sample):
    spa = profile_fwhm(zscan_profile_spa(beam_spa, det, sample, z_grid=DENSE))
    tpa = profile_fwhm(zscan_profile_tpa(beam_tpa, det, sample, z_grid=DENSE))
    etpa = profile_fwhm(zscan_profile_etpa(beam_etpa, det, sample, z_grid=DENSE))
    assert tpa < etpa < spa


def test_sign_flip_when_formula_negative():
    z = np.linspace(-100, 100, 21)
    raw = tpa_curve(z, 20.0, 5.0, 50.0)  # w_zTP < z_R: negative everywhere
    assert raw[10] < 0
    from etpa_zscan.models import _normalize

    p = _normalize(z, raw, {})
    assert p.metadata["sign_flipped"]
    assert p.values.max() == pytest.approx(1.0)


@pytest.mark.parametrize("fn", [zscan_profile_spa, zscan_profile_tpa, zscan_profile_etpa])
def test_profiles_even_nonnegative_monotone_tails(fn, det, sample):
    beam = GaussianBeam.from_nm(1064, 4.5, 0.7)
    z = np.linspace(-20000, 20000, 4001)
    p = fn(beam, det, sample, z_grid=z)
    assert np.all(p.values >= 0)
    np.testing.assert_allclose(p.values, p.values[::-1], atol=1e-12)
    w = max(p.metadata.get("w_z_um", 0), p.metadata.get("w_ztp_um", 0), p.metadata.get("z_r_um", 0))
    tail = z > sample.half_thickness_d_um + 5 * w
    assert tail.sum() > 10
    assert np.all(np.diff(p.values[tail]) < 0)


def test_fwhm_nondecreasing_in_d_and_w0(det):
    widths = {}
    for d in (30.0, 45.0, 63.0, 80.0, 100.0):
        for w0 in (1.0, 1.5, 3.0, 4.5, 7.0):
            s = Sample.from_mM(5.0, d)
            b = GaussianBeam.from_nm(1064, w0, 0.7)
            widths[d, w0] = profile_fwhm(zscan_profile_tpa(b, det, s, z_grid=np.arange(-1500, 1500.5, 0.5)))
    ds, ws = (30.0, 45.0, 63.0, 80.0, 100.0), (1.0, 1.5, 3.0, 4.5, 7.0)
    for w0 in ws:
        assert all(widths[a, w0] <= widths[b, w0] for a, b in zip(ds, ds[1:]))
    for d in ds:
        assert all(widths[d, a] <= widths[d, b] for a, b in zip(ws, ws[1:]))


def test_fwhm_triangle():
    z = np.arange(7.0)
    p = AxialProfile(z, np.array([0, 1, 2, 3, 2, 1, 0]) / 3.0, 1.0)
    assert profile_fwhm(p) == pytest.approx(3.0, abs=1e-12)


def test_fwhm_top_hat():
    z = np.arange(-200, 200.01, 0.01)
    from etpa_zscan.models import spa_curve

    p = AxialProfile(z, spa_curve(z, 50.0, 1e-3) / spa_curve(0.0, 50.0, 1e-3), 1.0)
    assert profile_fwhm(p) == pytest.approx(100.0, abs=0.02)


def test_fwhm_unresolvable():
    z = np.arange(5.0)
    with pytest.raises(ProfileError):
        profile_fwhm(AxialProfile(z, np.array([1, 0.9, 0.8, 0.7, 0.6]), 1.0))
    with pytest.raises(ProfileError):
        profile_fwhm(AxialProfile(z, np.array([0.9, 0.95, 1, 0.95, 0.9]), 1.0))


def test_grid_validation(beam_spa, det, sample):
    with pytest.raises(ValueError):
        zscan_profile_spa(beam_spa, det, sample, z_grid=[])
    with pytest.raises(ValueError):
        zscan_profile_spa(beam_spa, det, sample, z_grid=[0, 0, 1])


def test_grid_order_independent(beam_tpa, det, sample):
    z = np.linspace(-300, 300, 61)
    full = zscan_profile_tpa(beam_tpa, det, sample, z_grid=z)
    w = effective_waist_tpa(beam_tpa, det)
    raw = tpa_curve(z[::-1], 63.0, w, rayleigh_range(beam_tpa))[::-1]
    np.testing.assert_array_equal(full.values * full.normalization, raw)
