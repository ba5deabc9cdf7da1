import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from thz_hybrid.channel import (AbsorptionModel, ChannelRealization, PathComponent, UpaGeometry,
                                absorption_for, bs_geometry, equivalent_array_gain,
                                generate_paths, path_gain, pulse_spectrum, raised_cosine,
                                realize_channel, reconstruct_channel, steering_vector,
                                ue_geometry)
from thz_hybrid.config import SPEED_OF_LIGHT, SystemConfig, desk_config, realization_rng

NO_ABS = AbsorptionModel.constant(0.0, 1e9, 1e13)
angles_az = st.floats(-math.pi, math.pi, allow_nan=False)
angles_el = st.floats(-math.pi / 2, math.pi / 2, allow_nan=False)


def brute_steering(rows, cols, az, el, spacing=0.5):
    out = np.empty(rows * cols, dtype=complex)
    for m in range(rows):
        for n in range(cols):
            phase = 2 * math.pi * spacing * (m * math.cos(az) * math.sin(el)
                                             + n * math.sin(az) * math.sin(el))
            out[m * cols + n] = complex(math.cos(phase), math.sin(phase))
    return out / math.sqrt(rows * cols)


# path_gain ----------------------------------------------------------------
def test_path_gain_reference_value():
    # independent oracle: (c / (4 pi f d))^2 in mpmath
    ref = float((mpmath.mpf(SPEED_OF_LIGHT) / (4 * mpmath.pi * mpmath.mpf(300e9) * 5)) ** 2)
    got = path_gain(300e9, 5.0, NO_ABS)
    assert got == pytest.approx(ref, rel=1e-12)
    assert got == pytest.approx(2.533e-10, rel=1e-3)
    assert 10 * math.log10(got) == pytest.approx(-95.96, abs=0.01)


def test_path_gain_inverse_square_exact():
    assert path_gain(300e9, 10.0, NO_ABS) / path_gain(300e9, 5.0, NO_ABS) == 0.25


def test_path_gain_with_absorption():
    model = AbsorptionModel.constant(0.02)
    expect = path_gain(350e9, 7.0, NO_ABS) * math.exp(-0.02 * 7.0)
    assert path_gain(350e9, 7.0, model) == pytest.approx(expect, rel=1e-14)


@given(st.floats(300e9, 450e9), st.floats(0.1, 50.0), st.floats(0.1, 50.0))
def test_path_gain_decreasing_in_distance(f, d1, d2):
    model = AbsorptionModel.constant(0.01)
    if d1 < d2:
        assert path_gain(f, d1, model) > path_gain(f, d2, model)


def test_path_gain_errors():
    with pytest.raises(ValueError):
        path_gain(300e9, 0.0, NO_ABS)
    with pytest.raises(ValueError):
        path_gain(300e9, -1.0, NO_ABS)
    with pytest.raises(ValueError):
        path_gain(500e9, 1.0, AbsorptionModel.constant(0.0))


# absorption ---------------------------------------------------------------
def test_absorption_table_parsing_and_interpolation(tmp_path):
    p = tmp_path / "abs.csv"
    p.write_text("# f, k\n300e9,0.0\n400e9,1.0\n\n450e9,0.5\n")
    model = AbsorptionModel.from_file(p)
    assert model(350e9) == pytest.approx(0.5)
    assert model(425e9) == pytest.approx(0.75)
    assert model.covers(300e9) and not model.covers(460e9)


@pytest.mark.parametrize("text", ["300e9,0.1\n300e9,0.2\n", "300e9,-0.1\n400e9,0\n",
                                  "300e9\n", ""])
def test_absorption_table_rejects_bad_input(text):
    with pytest.raises(ValueError):
        AbsorptionModel.from_text(text)


def test_bundled_table_covers_window():
    model = AbsorptionModel.bundled()
    assert model.covers(300e9) and model.covers(450e9)
    assert np.all(model(np.linspace(300e9, 450e9, 50)) >= 0)


def test_default_absorption_covers_config_window():
    cfg = SystemConfig()
    model = absorption_for(cfg)
    assert model.covers(cfg.center_frequencies[0]) and model.covers(cfg.center_frequencies[-1])


# steering vectors ---------------------------------------------------------
def test_steering_single_element():
    assert steering_vector(UpaGeometry(1, 1), 0.3, -0.2) == pytest.approx(np.array([1.0]))


@given(angles_az, angles_el)
def test_steering_matches_double_loop_and_modulus(az, el):
    a = steering_vector(UpaGeometry(8, 8), az, el)
    np.testing.assert_allclose(a, brute_steering(8, 8, az, el), atol=1e-12)
    assert np.max(np.abs(np.abs(a) - 1 / 8)) < 1e-12
    assert abs(np.vdot(a, a) - 1) < 1e-12
    assert a[0].real > 0 and a[0].imag == 0


def brute_equivalent_gain(rows, cols, target, actual):
    total = 0j
    for m in range(rows):
        for n in range(cols):
            def ph(az, el):
                return 2 * math.pi * 0.5 * (m * math.cos(az) * math.sin(el)
                                            + n * math.sin(az) * math.sin(el))
            total += complex(math.cos(ph(*actual) - ph(*target)),
                             math.sin(ph(*actual) - ph(*target)))
    return total / math.sqrt(rows * cols)


def test_equivalent_gain_named_examples():
    g = UpaGeometry(8, 8)
    assert equivalent_array_gain(g, (0.4, 0.7), (0.4, 0.7)) == pytest.approx(8.0)
    assert equivalent_array_gain(UpaGeometry(1, 1), (0.1, 0.2), (2.0, -1.0)) == pytest.approx(1.0)
    val = equivalent_array_gain(g, (0.0, math.pi / 2), (0.0, math.pi / 2 + 0.2))
    assert abs(val - brute_equivalent_gain(8, 8, (0.0, math.pi / 2), (0.0, math.pi / 2 + 0.2))) < 1e-9


def test_equivalent_gain_random_pairs_including_near_singular(rng):
    g = UpaGeometry(8, 8)
    pairs = [((rng.uniform(-math.pi, math.pi), rng.uniform(-math.pi / 2, math.pi / 2)),
              (rng.uniform(-math.pi, math.pi), rng.uniform(-math.pi / 2, math.pi / 2)))
             for _ in range(90)]
    # near-singular: actual within 1e-9 of target, and exact multiples of 2 pi in the phase
    pairs += [((0.3, 0.5), (0.3 + 1e-10, 0.5)), ((0.0, 0.0), (1.0, 0.0)),
              ((0.0, math.pi / 2), (0.0, -math.pi / 2)), ((1.0, 1.0), (1.0, 1.0 + 1e-12))]
    pairs += [((0.0, math.pi / 2), (math.pi, math.pi / 2))] * 6
    for t, a in pairs:
        ref = brute_equivalent_gain(8, 8, t, a)
        got = equivalent_array_gain(g, t, a)
        assert np.isfinite(got)
        assert abs(got - ref) < 1e-9
        # relation to steering vectors, including the sqrt(MN) factor
        inner = np.vdot(steering_vector(g, *t), steering_vector(g, *a))
        assert abs(abs(inner) * 8 - abs(got)) < 1e-9


@given(angles_az, angles_el, angles_az, angles_el)
def test_equivalent_gain_bounded_by_coherent_maximum(a1, e1, a2, e2):
    g = UpaGeometry(4, 6)
    assert abs(equivalent_array_gain(g, (a1, e1), (a2, e2))) <= math.sqrt(24) + 1e-9


# path generation ----------------------------------------------------------
def test_zero_clusters_gives_single_los():
    cfg = desk_config(n_clusters=0)
    paths = generate_paths(cfg, np.random.default_rng(0))
    assert len(paths) == 1 and paths[0].kind == "LOS"
    assert paths[0].delay == cfg.distance_m / SPEED_OF_LIGHT


def test_default_config_has_four_paths_and_valid_domains():
    cfg = SystemConfig()
    for seed in range(20):
        paths = generate_paths(cfg, np.random.default_rng(seed))
        assert len(paths) == 4
        assert [p.cluster_id for p in paths] == [0, 1, 2, 3]
        for p in paths:
            assert -math.pi <= p.aod_azimuth <= math.pi and -math.pi <= p.aoa_azimuth <= math.pi
            assert -math.pi / 2 <= p.aod_elevation <= math.pi / 2
            assert -math.pi / 2 <= p.aoa_elevation <= math.pi / 2
            if p.kind == "NLOS":
                assert p.delay >= paths[0].delay
                assert abs(p.complex_gain) ** 2 <= abs(paths[0].complex_gain) ** 2


def test_los_to_nlos_power_ratio_exceeds_15_db():
    # Monte Carlo over 10^4 draws of the NLOS gain model at d = 5 m
    cfg = SystemConfig()
    model = absorption_for(cfg)
    rng = np.random.default_rng(7)
    f = 300e9
    los = path_gain(f, cfg.distance_m, model)
    nlos = []
    for _ in range(2500):
        for p in generate_paths(cfg, rng)[1:]:
            nlos.append(abs(p.complex_gain) ** 2 * path_gain(f, p.path_length, model))
    assert len(nlos) >= 7500
    ratio_db = 10 * math.log10(los / np.mean(nlos))
    assert ratio_db >= 15.0


def test_beamwidth_gate_only_keeps_rays_in_cone():
    cfg = desk_config(beamwidth_gate=True, n_clusters=20)
    paths = generate_paths(cfg, np.random.default_rng(3))
    kept = [p for p in paths[1:] if p.antenna_gain > 0]
    # with uniform cluster angles nearly every ray falls outside a 20 degree cone
    assert len(kept) <= 2


# pulse spectrum -----------------------------------------------------------
def test_pulse_spectrum_impulse_at_first_tap():
    cfg = desk_config()
    ts = cfg.sampling_time_s

    def impulse(t):
        return np.where(np.isclose(np.asarray(t), 0.0, atol=ts * 1e-6), 1.0, 0.0)
    for k in (1, 5, cfg.n_subcarriers):
        got = pulse_spectrum(k, ts, cfg, impulse)
        assert got == pytest.approx(np.exp(-2j * np.pi * k / cfg.n_subcarriers), abs=1e-14)


def test_pulse_spectrum_vanishes_beyond_support():
    cfg = desk_config()

    def causal(t):
        t = np.asarray(t)
        return np.where((t >= 0) & (t <= 2 * cfg.sampling_time_s), 1.0, 0.0)
    assert pulse_spectrum(3, (cfg.cp_length + 5) * cfg.sampling_time_s, cfg, causal) == 0


def mp_raised_cosine(t, T, beta):
    x = mpmath.mpf(t) / T
    if abs(abs(x) - 1 / (2 * beta)) < mpmath.mpf("1e-20"):
        u = mpmath.pi / (2 * beta)
        return mpmath.pi / 4 * mpmath.sin(u) / u
    s = mpmath.mpf(1) if x == 0 else mpmath.sin(mpmath.pi * x) / (mpmath.pi * x)
    return s * mpmath.cos(mpmath.pi * beta * x) / (1 - (2 * beta * x) ** 2)


def test_pulse_spectrum_matches_high_precision_oracle():
    cfg = SystemConfig()  # K=128, Q=16, T_s=7.8 ps
    mpmath.mp.dps = 30
    T = mpmath.mpf(cfg.sampling_time_s)
    for k, tau in [(1, 7.8e-12), (64, 1.3e-11), (128, 4.1e-11), (17, 0.0)]:
        acc = mpmath.mpc(0)
        for q in range(1, cfg.cp_length + 1):
            t = q * T - mpmath.mpf(tau)
            if abs(t / T) <= cfg.cp_length / 2:
                acc += mp_raised_cosine(t, T, 1) * mpmath.expjpi(-2 * mpmath.mpf(k) * q / 128)
        got = pulse_spectrum(k, tau, cfg)
        assert abs(got - complex(acc)) < 1e-12


def test_raised_cosine_singular_point_is_finite():
    T = 1.0
    v = raised_cosine(np.array([0.5, -0.5, 0.0]), T, 1.0)
    assert np.all(np.isfinite(v))
    assert v[0] == pytest.approx(math.pi / 4 * math.sin(math.pi / 2) / (math.pi / 2))
    assert v[2] == 1.0


# realizations -------------------------------------------------------------
def test_single_los_k1_is_scaled_outer_product():
    cfg = desk_config(n_subcarriers=1, n_clusters=0, sampling_time_s=1e-9)
    ch = realize_channel(cfg, np.random.default_rng(0))
    p = ch.paths[0]
    a_r = steering_vector(ue_geometry(cfg), p.aoa_azimuth, p.aoa_elevation)
    a_t = steering_vector(bs_geometry(cfg), p.aod_azimuth, p.aod_elevation)
    f1 = cfg.center_frequencies[0]
    model = absorption_for(cfg)
    scale = p.amplitude(f1, model) * pulse_spectrum(1, cfg.sampling_time_s, cfg)
    np.testing.assert_allclose(ch.per_subcarrier[0], scale * np.outer(a_r, a_t.conj()),
                               rtol=0, atol=1e-12 * abs(scale))
    assert np.linalg.matrix_rank(ch.per_subcarrier[0], tol=1e-9 * abs(scale)) == 1


def test_rank_bounded_by_path_count():
    cfg = SystemConfig(n_subcarriers=8, m_t=4, n_t=4, m_r=8, n_r=8)
    ch = realize_channel(cfg, np.random.default_rng(1))
    for h in ch.per_subcarrier:
        s = np.linalg.svd(h, compute_uv=False)
        assert np.sum(s > 1e-9 * s[0]) <= 4


def test_reconstruction_and_determinism():
    cfg = desk_config()
    a = realize_channel(cfg, realization_rng(11, 3))
    b = realize_channel(cfg, realization_rng(11, 3))
    assert a.per_subcarrier.tobytes() == b.per_subcarrier.tobytes()
    rebuilt = reconstruct_channel(cfg, a)
    err = np.linalg.norm(rebuilt - a.per_subcarrier) / np.linalg.norm(a.per_subcarrier)
    assert err < 1e-10


def test_center_frequencies_and_shapes():
    cfg = desk_config()
    ch = realize_channel(cfg, np.random.default_rng(2))
    assert ch.per_subcarrier.shape == (16, 16, 64)
    np.testing.assert_allclose(ch.center_frequencies, 300e9 + (np.arange(1, 17) - 0.5) * 1e9)
    assert ch.subarray(1).shape == (16, 16, 16)
    with pytest.raises(ValueError):
        ch.per_subcarrier[0, 0, 0] = 1.0


def test_subcarrier_correlation_of_dominant_direction():
    cfg = SystemConfig(n_subcarriers=128, m_t=4, n_t=4, m_r=4, n_r=4)
    hits = 0
    for seed in range(10):
        h = realize_channel(cfg, np.random.default_rng(seed)).per_subcarrier
        v1 = np.linalg.svd(h[0])[2][0]
        vk = np.linalg.svd(h[-1])[2][0]
        hits += abs(np.vdot(v1, vk)) > 0.9
    assert hits >= 9


def test_channel_realization_validation():
    with pytest.raises(ValueError):
        ChannelRealization(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        ChannelRealization(np.zeros((1, 2, 6)), n_rf=4)
    with pytest.raises(ValueError):
        UpaGeometry(0, 3)


def test_path_amplitude_includes_delay_phase():
    p = PathComponent("LOS", 1.0 + 0j, 1e-9, 0.3, 0, 0, 0, 0, 0, 1.0)
    amp = p.amplitude(300e9, NO_ABS)
    assert abs(amp) == pytest.approx(math.sqrt(path_gain(300e9, 0.3, NO_ABS)))
    assert np.angle(amp * np.exp(2j * np.pi * 300e9 * 1e-9)) == pytest.approx(0, abs=1e-9)
