import math
import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.base import clone

from vehlink.channel import PathKind, SampledCir, SamplingConfig, StationarityRegion, sample_cir
from vehlink.cli import pdp_fast_deviation, random_region
from vehlink.condense import (K_NO_SCATTER_DB, PSI_COLUMNS, CondensedParams,
                              CondensedParamsExtractor, Dsd, EstimatorConfig, Pdp, condense,
                              doppler_bandwidth, dsd_brute, dsd_estimate, dvir, estimate_k_factor,
                              max_doppler_extent, pdp_brute, pdp_fast, received_power,
                              rms_delay_spread, rms_doppler_spread)
from vehlink.doppler import closed_form_exp_delay_spread
from vehlink.exceptions import UndefinedSpreadError
from vehlink.tdl import ExpPdpConfig, TdlConfig, draw_tdl_paths, exp_pdp, tdl_sampling

TC = 100e-9
LOS, DIFFUSE = int(PathKind.LOS), int(PathKind.DIFFUSE)


def cfg_for(m=128, n=16, t_s=1e-4):
    return SamplingConfig(t_s=t_s, t_c=TC, n_delay_bins=n, m_samples=m)


def region(amp, phase, delay, doppler, kind=None):
    amp = np.atleast_1d(np.asarray(amp, dtype=float))
    kind = np.full(amp.size, DIFFUSE) if kind is None else np.asarray(kind)
    return StationarityRegion.from_arrays(0, amp, np.atleast_1d(phase), np.atleast_1d(delay),
                                          np.atleast_1d(doppler), kind)


def random_paths(rng, n_paths, cfg):
    return region(rng.uniform(0.05, 1, n_paths), rng.random(n_paths),
                  rng.uniform(0, 6 * TC, n_paths), rng.uniform(-0.45, 0.45, n_paths) / cfg.t_s)


class TestPdp:
    def test_single_path_brute(self):
        cfg = cfg_for(m=32)
        r = region(0.7, 0.3, 2.4 * TC, 123.0)
        rc = sample_cir(region(1.0, 0.0, 2.4 * TC, 0.0), cfg).data[0].real
        expected = 0.49 * rc**2
        assert np.allclose(pdp_brute(sample_cir(r, cfg)).powers, expected, rtol=1e-12, atol=1e-18)
        assert np.allclose(pdp_fast(r, cfg).powers, expected, rtol=1e-12, atol=1e-18)

    def test_zero_cir(self):
        cfg = cfg_for(m=4, n=3)
        assert not pdp_brute(SampledCir(np.zeros((4, 3), complex), cfg)).powers.any()

    def test_quadrature_phases_are_incoherent(self):
        cfg = cfg_for()
        r = region([1.0, 0.6], [0.0, 0.25], [TC, 1.5 * TC], [200.0, 200.0])
        single = [pdp_fast(region(a, p, d, 200.0), cfg).powers
                  for a, p, d in zip([1.0, 0.6], [0.0, 0.25], [TC, 1.5 * TC])]
        assert np.allclose(pdp_fast(r, cfg).powers, single[0] + single[1], rtol=1e-12, atol=1e-20)

    def test_five_paths_match_brute(self):
        rng = np.random.default_rng(1)
        cfg = cfg_for(m=128)
        r = random_paths(rng, 5, cfg)
        assert pdp_fast_deviation(r, cfg) <= 1e-10

    def test_random_regions_match_brute(self):
        rng = np.random.default_rng(np.random.SeedSequence(2024))
        worst = max(pdp_fast_deviation(*random_region(rng)) for _ in range(100))
        assert worst <= 1e-10

    def test_empty_region(self):
        assert not pdp_fast(StationarityRegion(0, []), cfg_for()).powers.any()

    def test_runtime_independent_of_m(self):
        rng = np.random.default_rng(3)
        r = random_paths(rng, 300, cfg_for())
        times = {}
        for m in (64, 512, 4096):
            cfg = cfg_for(m=m)
            pdp_fast(r, cfg)
            samples = []
            for _ in range(7):
                t0 = time.perf_counter()
                pdp_fast(r, cfg)
                samples.append(time.perf_counter() - t0)
            times[m] = np.median(samples)
        assert times[4096] == pytest.approx(times[64], rel=0.10)
        assert times[512] == pytest.approx(times[64], rel=0.10)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), shift=st.integers(1, 4))
    def test_delay_origin_invariance(self, seed, shift):
        rng = np.random.default_rng(seed)
        # keep the +-8 bin pulse support of every path inside the window before and after the shift
        cfg = cfg_for(m=64, n=32)
        r = random_paths(rng, 4, cfg)
        r = region(r.amplitude, r.phase_cycles, r.delay_s + 8 * TC, r.doppler_hz)
        moved = region(r.amplitude, r.phase_cycles, r.delay_s + shift * TC, r.doppler_hz)
        m0, s0 = rms_delay_spread(pdp_fast(r, cfg))
        m1, s1 = rms_delay_spread(pdp_fast(moved, cfg))
        assert m1 - m0 == pytest.approx(shift * TC, rel=1e-10)
        assert s1 == pytest.approx(s0, rel=1e-10)


class TestMoments:
    def test_single_bin(self):
        assert rms_delay_spread(Pdp(np.array([0, 0, 3.0, 0]), TC)) == (pytest.approx(2 * TC), 0.0)

    def test_two_point(self):
        mean, spread = rms_delay_spread(Pdp(np.array([1.0, 1.0]), TC))
        assert mean == pytest.approx(50e-9) and spread == pytest.approx(50e-9)

    def test_exp_pdp_closed_form(self):
        pdp = Pdp(np.concatenate([[0.0], exp_pdp(ExpPdpConfig(100e-9))]), TC)
        assert rms_delay_spread(pdp)[1] == pytest.approx(
            closed_form_exp_delay_spread(ExpPdpConfig(100e-9)), rel=1e-10)

    def test_zero_is_undefined(self):
        with pytest.raises(UndefinedSpreadError):
            rms_delay_spread(Pdp(np.zeros(4), TC))
        with pytest.raises(UndefinedSpreadError):
            rms_doppler_spread(Dsd(np.zeros(4), 1.0))

    def test_doppler_tones(self):
        tone = np.zeros(16)
        tone[8 + 3] = 1.0
        assert rms_doppler_spread(Dsd(tone, 10.0)) == (pytest.approx(30.0), 0.0)
        pair = np.zeros(16)
        pair[8 + 3] = pair[8 - 3] = 2.0
        mean, spread = rms_doppler_spread(Dsd(pair, 10.0))
        assert mean == pytest.approx(0.0, abs=1e-12) and spread == pytest.approx(30.0)

    @given(powers=st.lists(st.floats(0, 1), min_size=2, max_size=32).filter(lambda p: sum(p) > 1e-3),
           c=st.floats(1e-6, 1e6))
    def test_scale_invariance(self, powers, c):
        p = np.array(powers)
        _, a = rms_delay_spread(Pdp(p, TC))
        _, b = rms_delay_spread(Pdp(c * p, TC))
        assert b == pytest.approx(a, rel=1e-12, abs=1e-12 * TC)
        _, a = rms_doppler_spread(Dsd(p, 5.0))
        _, b = rms_doppler_spread(Dsd(c * p, 5.0))
        assert b == pytest.approx(a, rel=1e-12, abs=1e-12)


class TestDsd:
    def test_on_grid_path(self):
        cfg = cfg_for(m=64, t_s=1e-3)
        p0 = 5
        r = region(0.8, 0.2, 2 * TC, p0 / cfg.t_stat)
        s = dvir(r, cfg)
        row = np.flatnonzero(np.abs(s).max(axis=1) > 1e-12)
        assert (row == p0 + 32).all()
        ref = 0.8 * np.exp(2j * np.pi * 0.2) * sample_cir(region(1.0, 0.0, 2 * TC, 0.0), cfg).data[0]
        assert np.allclose(s[p0 + 32], ref, atol=1e-14)
        dsd = dsd_estimate(s, 1 / cfg.t_stat)
        assert np.count_nonzero(dsd.powers > 1e-20) == 1

    def test_empty_region(self):
        cfg = cfg_for(m=16)
        assert not dvir(StationarityRegion(0, []), cfg).any()
        assert not dsd_estimate(np.zeros((16, 4)), 1.0).powers.any()

    def test_summation(self):
        rng = np.random.default_rng(4)
        cfg = cfg_for(m=32)
        s = dvir(random_paths(rng, 6, cfg), cfg)
        total = sum(abs(s[p, n]) ** 2 for p in range(32) for n in range(cfg.n_delay_bins))
        assert dsd_estimate(s, 1.0).powers.sum() == pytest.approx(total / cfg.n_delay_bins, rel=1e-12)

    # inner half of the band: near the edge the DFT spectrum wraps around and the unit sinc does not
    @pytest.mark.parametrize("f", [123.4, -201.9, 40.05, 249.0])
    def test_off_grid_matches_dft(self, f):
        cfg = cfg_for(m=256, t_s=1e-3)
        r = region(1.0, 0.1, TC, f)
        _, a = rms_doppler_spread(dsd_estimate(dvir(r, cfg), 1 / cfg.t_stat))
        _, b = rms_doppler_spread(dsd_brute(sample_cir(r, cfg)))
        assert abs(a - b) <= 0.02 * cfg.doppler_limit_hz

    def test_dft_sign_convention(self):
        cfg = cfg_for(m=64, t_s=1e-3)
        dsd = dsd_brute(sample_cir(region(1.0, 0.0, 0.0, 10 / cfg.t_stat), cfg))
        assert dsd.frequencies_hz[np.argmax(dsd.powers)] == pytest.approx(10 / cfg.t_stat)

    def test_bandwidth(self):
        one = np.zeros(16)
        one[10] = 1
        assert doppler_bandwidth(Dsd(one, 5.0), 40) == 0.0
        two = np.zeros(16)
        two[8 + 2] = two[8 - 2] = 1
        assert doppler_bandwidth(Dsd(two, 5.0), 40) == pytest.approx(20.0)
        weak = np.zeros(16)
        weak[8] = 1
        weak[12] = 1e-5
        assert doppler_bandwidth(Dsd(weak, 5.0), 40) == 0.0
        assert max_doppler_extent(Dsd(two, 5.0), 40) == pytest.approx(10.0)


class TestKFactor:
    def test_alone_in_bin(self):
        r = region([1.0, 0.5], [0, 0], [0.0, 3 * TC], [0, 0], [LOS, DIFFUSE])
        assert estimate_k_factor(r, 10e6) == K_NO_SCATTER_DB

    def test_nlos(self):
        assert estimate_k_factor(region([1.0, 0.5], [0, 0], [0, 0], [0, 0]), 10e6) == -math.inf

    def test_single_scatterer(self):
        r = region([1.0, 0.5], [0.0, 0.3], [10e-9, 20e-9], [0, 0], [LOS, DIFFUSE])
        assert estimate_k_factor(r, 10e6) == pytest.approx(6.020599913279624, rel=1e-12)


class TestReceivedPower:
    def test_unit_gain(self):
        cfg = cfg_for()
        pdp = pdp_fast(region(1.0, 0.0, 0.0, 0.0), cfg)
        # energy of a unit path spread over bins by the pulse
        gain = pdp.powers.sum()
        assert received_power(pdp, EstimatorConfig()) == pytest.approx(-5 + 10 * math.log10(gain))
        assert received_power(Pdp(np.array([1.0, 0, 0]), TC), EstimatorConfig()) == -5.0

    def test_normalized_exp(self):
        assert received_power(Pdp(exp_pdp(ExpPdpConfig(50e-9)), TC), EstimatorConfig(
            power_threshold_db=200)) == pytest.approx(-5.0, abs=1e-12)

    def test_threshold_excludes_cluster(self):
        p = np.array([1.0, 0.5, 0.1, 0, 0, 1e-6, 2e-6])
        assert received_power(Pdp(p, TC), EstimatorConfig()) == pytest.approx(
            -5 + 10 * math.log10(1.0 + 0.5 + 0.1), rel=1e-14)

    def test_zero(self):
        with pytest.raises(UndefinedSpreadError):
            received_power(Pdp(np.zeros(3), TC), EstimatorConfig())

    def test_config(self):
        with pytest.raises(ValueError):
            EstimatorConfig(epsilon_db=0)


class TestCondense:
    def test_single_static_los(self):
        cfg = cfg_for()
        psi = condense(region(1.0, 0.0, 0.0, 0.0, [LOS]), cfg,
                       EstimatorConfig(power_threshold_db=1e-3))
        assert psi.rx_power_dbm == pytest.approx(-5.0, abs=1e-12)
        assert psi.sigma_tau_s == 0.0 and psi.f_dmax_hz == 0.0
        assert psi.k_db == K_NO_SCATTER_DB and psi.f_los_hz == 0.0

    def test_tdl_round_trip(self):
        pdp = ExpPdpConfig(100e-9)
        rows = []
        for seed in range(20):
            cfg = TdlConfig.from_db(pdp, 10.0, f_dmax_hz=500.0, seed=seed)
            psi = condense(draw_tdl_paths(cfg), tdl_sampling(cfg, 0.5e-3, 2048))
            rows.append(psi.as_array())
        mean = np.mean(rows, axis=0)
        assert mean[1] == pytest.approx(closed_form_exp_delay_spread(pdp), rel=0.05)
        assert mean[2] == pytest.approx(500.0, rel=0.10)
        assert mean[3] == pytest.approx(10.0, abs=1.5)

    def test_no_coverage(self):
        psi = condense(region(0.0, 0.0, 0.0, 0.0), cfg_for())
        assert psi.no_coverage and psi.k_db == -math.inf

    def test_params_roundtrip(self):
        psi = CondensedParams(-80.0, 3e-8, 400.0, 12.0, -100.0, 150.0)
        assert CondensedParams.from_array(psi.as_array()) == psi
        assert math.isnan(CondensedParams.from_array(psi.as_array()[:5]).sigma_nu_hz)

    def test_nlos_reports_zero_los_doppler(self):
        psi = condense(region([1.0, 0.5], [0, 0.5], [0, TC], [100.0, -50.0]), cfg_for())
        assert psi.f_los_hz == 0.0 and psi.k_db == -math.inf

    def test_los_within_extent(self):
        rng = np.random.default_rng(8)
        cfg = cfg_for(m=256, t_s=1e-3)
        r = random_paths(rng, 10, cfg)
        kinds = np.full(10, DIFFUSE)
        kinds[0] = LOS
        r = region(r.amplitude * np.r_[4.0, np.ones(9)], r.phase_cycles, r.delay_s, r.doppler_hz, kinds)
        psi = condense(r, cfg)
        assert abs(psi.f_los_hz) <= psi.f_dmax_hz


class TestExtractor:
    def test_transform(self):
        cfg = cfg_for()
        rng = np.random.default_rng(9)
        regions = [random_paths(rng, 5, cfg) for _ in range(3)]
        ext = CondensedParamsExtractor(sampling=cfg).fit()
        out = ext.transform(regions)
        assert out.shape == (3, len(PSI_COLUMNS))
        assert np.array_equal(out[1], condense(regions[1], cfg).as_array())
        assert list(ext.get_feature_names_out()) == list(PSI_COLUMNS)

    def test_clone_and_params(self):
        ext = CondensedParamsExtractor(sampling=cfg_for(), epsilon_db=30.0)
        assert clone(ext).get_params()["epsilon_db"] == 30.0

    def test_type_errors(self):
        with pytest.raises(TypeError):
            CondensedParamsExtractor().fit()
        with pytest.raises(TypeError):
            CondensedParamsExtractor(sampling=cfg_for()).fit().transform([1, 2])
