from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fpdsim.circuit import default_chain, solve_pixel_chain
from fpdsim.devices import PhotodiodeParams, photocurrent
from fpdsim.errors import ConfigError, DomainError, PatternError
from fpdsim.panel import (
    BinPattern,
    PanelConfig,
    Scene,
    adc_quantize,
    binned_read,
    build_panel,
    derive_seed,
    resolution_reduce,
    scan_frame,
)

from conftest import IDEAL_NMOS, IDEAL_PMOS, mismatched_devices
from oracles import brute_quantize, chain_bisect


def random_scene(rows, cols, seed, hi=50.0):
    return Scene(np.random.default_rng(seed).uniform(0.0, hi, size=(rows, cols)))


class TestBuildPanel:
    def test_zero_sigma_identical(self, cfg):
        panel = build_panel(cfg)
        assert {ch for row in panel.chains for ch in row} == {cfg.chain}

    def test_deterministic(self, mismatch_cfg):
        assert build_panel(mismatch_cfg) == build_panel(mismatch_cfg)

    def test_seed_changes_mismatch(self, mismatch_cfg):
        assert build_panel(mismatch_cfg) != build_panel(replace(mismatch_cfg, seed=8))

    def test_single_pixel(self, cfg):
        panel = build_panel(replace(cfg, rows=1, cols=1))
        frame, log = scan_frame(panel, Scene.uniform(1, 1, 3.0))
        assert frame.shape == (1, 1)
        assert [e.row for e in log] == [0]
        assert binned_read(panel, Scene.uniform(1, 1, 3.0), BinPattern.whole(1, 1)).currents[0, 0] \
            == frame.currents[0, 0]

    def test_resizing_keeps_existing_pixels(self, mismatch_cfg):
        small = build_panel(mismatch_cfg)
        big = build_panel(replace(mismatch_cfg, rows=6, cols=5))
        for r in range(4):
            for c in range(4):
                assert small.chains[r][c] == big.chains[r][c]

    def test_line_and_row_mirrors_shared(self, mismatch_cfg):
        panel = build_panel(mismatch_cfg)
        assert panel.chains[1][0].line_mirror == panel.chains[1][3].line_mirror
        assert panel.chains[0][2].row_mirror == panel.chains[3][2].row_mirror
        assert panel.chains[0][0].pixel_mirror != panel.chains[0][1].pixel_mirror

    @pytest.mark.parametrize("field,value", [("rows", 0), ("cols", -1), ("frame_time", 0.0),
                                             ("adc_bits", 25), ("adc_bits", 0), ("v_full_scale", 0.0)])
    def test_invalid_config_names_field(self, field, value):
        with pytest.raises(ConfigError) as err:
            PanelConfig(**{field: value})
        assert err.value.key == field

    def test_derive_seed_stable(self):
        assert derive_seed(0, 1, 2) == derive_seed(0, 1, 2)
        assert derive_seed(0, 1, 2) != derive_seed(0, 2, 1)


class TestScanFrame:
    def test_uniform_scene_uniform_codes(self, cfg):
        frame, _ = scan_frame(build_panel(cfg), Scene.uniform(4, 4, 20.0))
        assert len(set(frame.codes.ravel())) == 1
        assert frame.codes[0, 0] > 0

    def test_scan_order(self, cfg):
        _, log = scan_frame(build_panel(cfg), Scene.uniform(4, 4, 1.0))
        assert [e.row for e in log] == [0, 1, 2, 3]
        times = [e.t_select for e in log]
        assert times == sorted(times) and times[0] == 0.0
        assert times[-1] < cfg.frame_time

    def test_single_bright_pixel(self, cfg):
        lux = np.zeros((4, 4))
        lux[1, 2] = 100.0
        panel = build_panel(cfg)
        frame, _ = scan_frame(panel, Scene(lux))
        dark_code = frame.codes[0, 0]
        above = np.argwhere(frame.codes > dark_code)
        assert above.tolist() == [[1, 2]]
        # per-pixel oracle: the bright code is what the bisection chain current quantizes to
        i_line, _ = chain_bisect(panel.chains[1][2], photocurrent(cfg.photodiode, 100.0))
        v = cfg.chain.r_trans * i_line
        assert frame.codes[1, 2] == brute_quantize(v, 12, 5.0)

    def test_dimension_mismatch(self, cfg):
        with pytest.raises(DomainError):
            scan_frame(build_panel(cfg), Scene.uniform(3, 4, 1.0))

    def test_codes_in_range(self, cfg):
        frame, _ = scan_frame(build_panel(cfg), random_scene(4, 4, 0, hi=2000.0))
        assert frame.codes.min() >= 0 and frame.codes.max() <= 4095

    def test_charge_bookkeeping(self, cfg):
        frame, _ = scan_frame(build_panel(cfg), random_scene(4, 4, 1))
        assert np.array_equal(frame.charge, frame.currents * cfg.frame_time)
        assert frame.frame_time == cfg.frame_time

    def test_monotone_response(self, cfg):
        panel = build_panel(cfg)
        rng = np.random.default_rng(3)
        for _ in range(5):
            base = rng.uniform(0, 100, (4, 4))
            brighter = base + rng.uniform(0, 50, (4, 4)) * (rng.random((4, 4)) < 0.5)
            a, _ = scan_frame(panel, Scene(base))
            b, _ = scan_frame(panel, Scene(brighter))
            assert np.all(b.codes >= a.codes)

    def test_time_varying_scene_sampled_at_row_select(self, cfg):
        panel = build_panel(cfg)
        # pixel (3, 0) is bright only after the third row has been selected
        t3 = 3 * cfg.frame_time / 4
        scene = Scene(np.zeros((4, 4)), {(3, 0): lambda t: 100.0 if t >= t3 else 0.0,
                                         (0, 0): lambda t: 100.0 if t >= t3 else 0.0})
        frame, _ = scan_frame(panel, scene)
        assert frame.codes[3, 0] > frame.codes[0, 0]


class TestBinnedRead:
    def test_singletons_match_scan(self, cfg):
        panel = build_panel(cfg)
        scene = random_scene(4, 4, 5)
        frame, _ = scan_frame(panel, scene)
        binned = binned_read(panel, scene, BinPattern.singletons(4, 4))
        assert np.array_equal(binned.codes, frame.codes)
        assert np.array_equal(binned.currents, frame.currents)

    def test_uniform_blocks_are_four_times(self, ideal_cfg):
        panel = build_panel(ideal_cfg)
        scene = Scene.uniform(4, 4, 7.0)
        single = solve_pixel_chain(panel.chains[0][0], photocurrent(ideal_cfg.photodiode, 7.0)).i_line
        binned = binned_read(panel, scene, BinPattern.blocks(4, 4, 2, 2))
        assert binned.shape == (2, 2)
        assert np.allclose(binned.currents, 4 * single, rtol=1e-15, atol=0)

    def test_whole_panel(self, cfg):
        panel = build_panel(cfg)
        scene = random_scene(4, 4, 9)
        frame, _ = scan_frame(panel, scene)
        whole = binned_read(panel, scene, BinPattern.whole(4, 4))
        assert whole.shape == (1, 1)
        assert whole.currents[0, 0] == pytest.approx(frame.currents.sum(), rel=1e-14)

    @pytest.mark.parametrize("block", [(2, 2), (4, 4), (1, 16), (16, 1), (8, 2), (3, 5)])
    def test_equivalence_16x16(self, ideal_cfg, block):
        cfg = replace(ideal_cfg, rows=16, cols=16)
        panel = build_panel(cfg)
        scene = random_scene(16, 16, sum(block))
        frame, _ = scan_frame(panel, scene)
        pattern = BinPattern.blocks(16, 16, *block)
        binned = binned_read(panel, scene, pattern)
        for g, total in zip(pattern.groups, binned.currents.ravel()):
            expected = sum(frame.currents[r, c] for r, c in g)
            assert total == pytest.approx(expected, rel=1e-12)

    def test_overlap_reported(self, cfg):
        groups = [((0, 0), (0, 1))] + [((r, c),) for r in range(4) for c in range(4) if (r, c) != (0, 0)]
        with pytest.raises(PatternError) as err:
            binned_read(build_panel(cfg), Scene.uniform(4, 4, 1.0), BinPattern(tuple(groups)))
        assert (0, 1) in err.value.coords

    def test_gap_and_range_reported(self, cfg):
        groups = [((r, c),) for r in range(4) for c in range(4) if (r, c) != (2, 2)] + [((4, 0),)]
        with pytest.raises(PatternError) as err:
            binned_read(build_panel(cfg), Scene.uniform(4, 4, 1.0), BinPattern(tuple(groups)))
        assert (2, 2) in err.value.coords and (4, 0) in err.value.coords
        assert "uncovered" in str(err.value) and "out of range" in str(err.value)


class TestResolutionReduce:
    def test_uniform_scene_matches_singleton_code(self, cfg):
        panel = build_panel(cfg)
        scene = Scene.uniform(4, 4, 30.0)
        frame, _ = scan_frame(panel, scene)
        for pattern in (BinPattern.blocks(4, 4, 2, 2), BinPattern.whole(4, 4), BinPattern.blocks(4, 4, 1, 4)):
            avg = resolution_reduce(panel, scene, pattern)
            assert set(avg.codes.ravel()) == {frame.codes[0, 0]}

    def test_singletons_match_scan(self, cfg):
        panel = build_panel(cfg)
        scene = random_scene(4, 4, 11)
        frame, _ = scan_frame(panel, scene)
        assert np.array_equal(resolution_reduce(panel, scene, BinPattern.singletons(4, 4)).codes, frame.codes)

    def test_block_average(self):
        pd = PhotodiodeParams(responsivity=1e-8, dark_current=0.0)
        cfg = PanelConfig(rows=2, cols=2, chain=default_chain(IDEAL_NMOS, IDEAL_PMOS, pd))
        scene = Scene(np.array([[0.1, 0.2], [0.3, 0.4]]))  # 1, 2, 3, 4 nA
        avg = resolution_reduce(build_panel(cfg), scene, BinPattern.whole(2, 2))
        assert avg.currents[0, 0] == pytest.approx(2.5e-9, rel=1e-12)

    def test_average_times_size_is_sum(self, mismatch_cfg):
        panel = build_panel(mismatch_cfg)
        scene = random_scene(4, 4, 13)
        pattern = BinPattern.blocks(4, 4, 2, 2)
        avg = resolution_reduce(panel, scene, pattern)
        total = binned_read(panel, scene, pattern)
        assert np.array_equal(avg.currents * 4, total.currents)


class TestAdc:
    def test_examples(self):
        assert adc_quantize(0.0, 12, 5.0) == 0
        assert adc_quantize(5.0, 12, 5.0) == 4095
        assert adc_quantize(2.5, 8, 5.0) == 128

    def test_clamps(self):
        assert adc_quantize(-1.0, 8, 5.0) == 0
        assert adc_quantize(1e9, 8, 5.0) == 255

    @settings(max_examples=300)
    @given(st.floats(-1.0, 6.0), st.integers(1, 8))
    def test_matches_enumeration(self, v, bits):
        assert adc_quantize(v, bits, 5.0) == brute_quantize(v, bits, 5.0)

    @given(st.floats(-1, 6), st.floats(-1, 6), st.integers(1, 24))
    def test_monotone(self, a, b, bits):
        lo, hi = sorted((a, b))
        assert adc_quantize(lo, bits, 5.0) <= adc_quantize(hi, bits, 5.0)

    @pytest.mark.parametrize("bits", [1, 12, 24])
    def test_extreme_codes_reachable(self, bits):
        assert adc_quantize(0.0, bits, 5.0) == 0
        assert adc_quantize(5.0 * (1 - 2.0 ** -(bits + 1)), bits, 5.0) == (1 << bits) - 1

    def test_bad_args(self):
        with pytest.raises(DomainError):
            adc_quantize(1.0, 0, 5.0)
        with pytest.raises(DomainError):
            adc_quantize(1.0, 8, 0.0)
