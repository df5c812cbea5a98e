import dataclasses
import logging
import math
import os

import numpy as np
import pytest
from scipy.constants import speed_of_light

from dtecm.raytrace import fspl
from dtecm.scene import Building, Scene, Vec3
from dtecm.synthesis import (
    ChannelRealization,
    Cir,
    LinkState,
    Origin,
    SynthesisConfig,
    assemble,
    assemble_statistical,
    electrical_phase,
    extend_cir,
    pdp,
    read_mpcs,
    sample_cir,
    write_cir,
    write_mpcs,
)
from tests.data.fixtures import make_mpc

TX = Vec3(0.0, 0.0, 16.6)
DETERMINISTIC = SynthesisConfig(stochastic=False, chi=False)


def single(mpcs, state="los"):
    return ChannelRealization(tuple(mpcs), state, TX, Vec3(10.0, 0.0, 1.6), 220e9)


def linear(gains):
    return sum(10.0 ** (g / 10.0) for g in gains)


@pytest.fixture(scope="module")
def fixed_params(params):
    """Statistics without spread in K-factor, spreads and shadow fading"""
    yield {
        state: dataclasses.replace(p.deterministic(), sf_sigma=0.0)
        for state, p in params.items()
    }


@pytest.mark.parametrize("distance", [1.0, 50.0, 400.0])
def test_free_space(empty_scene, clear_twin, params, distance):
    rx = Vec3(distance, 0.0, 16.6)
    realization = assemble(empty_scene, clear_twin, params, rx, 0, DETERMINISTIC)
    assert realization.state == LinkState.LOS
    assert len(realization.mpcs) == 1
    los = realization.mpcs[0]
    assert los.origin == Origin.LOS
    assert los.gain_db == pytest.approx(fspl(220e9, distance), abs=1e-9)
    assert los.delay == pytest.approx(distance / speed_of_light)


def test_full_foliage_is_olos(empty_scene, foliage_twin, params):
    rx = Vec3(50.0, 0.0, 16.6)
    realization = assemble(empty_scene, foliage_twin, params, rx, 0, DETERMINISTIC)
    assert realization.state == LinkState.OLOS
    expected = fspl(220e9, 50.0) - 19.89
    assert realization.mpcs[0].gain_db == pytest.approx(expected, abs=0.01)


def test_chi_applied_under_foliage(empty_scene, foliage_twin, params):
    rx = Vec3(50.0, 0.0, 16.6)
    config = SynthesisConfig(stochastic=False, chi=True)
    gains = {
        assemble(empty_scene, foliage_twin, params, rx, seed, config).mpcs[0].gain_db
        for seed in range(5)
    }
    assert len(gains) == 5


def test_chi_skipped_without_foliage(empty_scene, clear_twin, params):
    rx = Vec3(50.0, 0.0, 16.6)
    config = SynthesisConfig(stochastic=False, chi=True)
    realization = assemble(empty_scene, clear_twin, params, rx, 3, config)
    assert realization.mpcs[0].gain_db == fspl(220e9, 50.0)


def test_enclosed_rx_is_outage(box_scene, clear_twin, params):
    realization = assemble(box_scene, clear_twin, params, Vec3(0.0, 0.0, 1.6), 0)
    assert realization.outage
    assert realization.mpcs == ()


def test_blocked_los_is_nlos(clear_twin, params):
    blocker = Building(((4.0, -1.0), (6.0, -1.0), (6.0, 1.0), (4.0, 1.0)), 10.0)
    mirror = Building(((-20.0, 10.0), (30.0, 10.0), (30.0, 11.0), (-20.0, 11.0)), 30.0)
    scene = Scene((blocker, mirror), Vec3(0.0, 0.0, 2.0), 220e9)
    realization = assemble(scene, clear_twin, params, Vec3(10.0, 0.0, 2.0), 0)
    assert realization.state == LinkState.NLOS
    assert not any(m.origin == Origin.LOS for m in realization.mpcs)
    assert any(m.origin == Origin.STOCHASTIC for m in realization.mpcs)


def test_stochastic_power_anchored(empty_scene, clear_twin, fixed_params):
    rx = Vec3(50.0, 0.0, 1.6)
    realization = assemble(empty_scene, clear_twin, fixed_params, rx, 4)
    los = realization.mpcs[0]
    stochastic = [m for m in realization.mpcs if m.origin == Origin.STOCHASTIC]
    assert (len(realization.mpcs) - 1) % 20 == 0
    assert stochastic
    ratio = los.gain_db - 10.0 * math.log10(linear(m.gain_db for m in stochastic))
    assert ratio == pytest.approx(13.09, abs=1e-6)
    assert min(m.delay for m in stochastic) >= los.delay


def test_assemble_repeats_for_seed(campus_scene, campus_twin, params):
    rx = Vec3(30.0, 120.0, 1.6)
    first = assemble(campus_scene, campus_twin, params, rx, 21)
    second = assemble(campus_scene, campus_twin, params, rx, 21)
    assert first == second
    assert first.seed == 21


def test_realization_invariants():
    with pytest.raises(ValueError, match="outage"):
        ChannelRealization((make_mpc(),), "outage", TX, TX, 220e9)
    with pytest.raises(ValueError, match="line-of-sight"):
        single([make_mpc(origin="stochastic")], state="los")


def test_mpc_rejects_negative_delay():
    with pytest.raises(ValueError):
        make_mpc(delay=-1e-9)


def test_electrical_phase_range():
    assert electrical_phase(220e9, 0.0) == 0.0
    phase = electrical_phase(220e9, 1.234e-7)
    assert 0.0 <= phase < 2 * math.pi


def test_statistical_direct_path(fixed_params):
    rx = Vec3(100.0, 0.0, 16.6)
    config = SynthesisConfig(stochastic=False)
    realization = assemble_statistical(TX, rx, 220e9, fixed_params, "los", 0, config)
    assert len(realization.mpcs) == 1
    expected = fspl(220e9, 1.0) - 10.0 * 1.93 * math.log10(100.0)
    assert realization.mpcs[0].gain_db == pytest.approx(expected)
    assert realization.mpcs[0].origin == Origin.LOS


def test_statistical_k_factor_split(fixed_params):
    rx = Vec3(100.0, 0.0, 16.6)
    realization = assemble_statistical(TX, rx, 220e9, fixed_params, "los", 1)
    direct = [m.gain_db for m in realization.mpcs if m.origin == Origin.LOS]
    scattered = [m.gain_db for m in realization.mpcs if m.origin == Origin.STOCHASTIC]
    total = fspl(220e9, 1.0) - 10.0 * 1.93 * math.log10(100.0)
    assert 10.0 * math.log10(linear(direct + scattered)) == pytest.approx(total)
    k = 10.0 * math.log10(linear(direct) / linear(scattered))
    assert k == pytest.approx(13.09)


def test_statistical_nlos_has_no_direct_path(fixed_params):
    rx = Vec3(100.0, 0.0, 16.6)
    realization = assemble_statistical(TX, rx, 220e9, fixed_params, "nlos", 2)
    assert realization.state == LinkState.NLOS
    assert all(m.origin == Origin.STOCHASTIC for m in realization.mpcs)


def test_statistical_rejects_outage(fixed_params):
    with pytest.raises(ValueError):
        assemble_statistical(TX, Vec3(1.0, 0.0, 0.0), 220e9, fixed_params, "outage", 0)


def test_cir_single_tap():
    cir = sample_cir(single([make_mpc(gain_db=0.0, origin="los")]))
    assert abs(cir.taps[0]) == pytest.approx(1.0)
    assert np.count_nonzero(cir.taps) == 1
    assert cir.n_taps == 2048
    assert cir.window == pytest.approx(2048 / 1.536e9)


def test_cir_destructive_interference():
    mpcs = [
        make_mpc(gain_db=-80.0, delay=10e-9, phase=0.0, origin="los"),
        make_mpc(gain_db=-80.0, delay=10e-9, phase=math.pi),
    ]
    cir = sample_cir(single(mpcs))
    assert abs(cir.taps[15]) == pytest.approx(0.0, abs=1e-12)


def test_cir_wraps_late_delays(caplog):
    realization = single([make_mpc(gain_db=0.0, delay=1400e-9, origin="los")])
    with caplog.at_level(logging.WARNING):
        cir = sample_cir(realization)
    assert abs(cir.taps[102]) == pytest.approx(1.0)
    assert "wraps to tap 102" in caplog.text


def test_cir_wrap_bin_convention():
    realization = single([make_mpc(gain_db=0.0, delay=1400e-9, origin="los")])
    spacing = 1.0 / 1.536e9
    assert 2047 * spacing == pytest.approx(1332.7e-9, abs=0.05e-9)
    assert round((1400e-9 - 2047 * spacing) / spacing) == 103
    # a window ending at 1332.7 ns holds 2047 taps
    cir = sample_cir(realization, spacing, n_taps=2047)
    assert np.flatnonzero(np.abs(cir.taps) > 0).tolist() == [103]
    cir = sample_cir(realization, spacing, n_taps=2048)
    assert np.flatnonzero(np.abs(cir.taps) > 0).tolist() == [102]


def test_cir_rejects_outage():
    outage = ChannelRealization((), "outage", TX, TX, 220e9)
    with pytest.raises(ValueError, match="outage"):
        sample_cir(outage)
    with pytest.raises(ValueError, match="outage"):
        pdp(outage)


def test_extend_cir():
    cir = Cir(np.arange(8, dtype=complex), 1e-9)
    extended = extend_cir(cir, 3)
    assert extended.n_taps == 11
    np.testing.assert_array_equal(extended.taps[8:], cir.taps[:3])
    with pytest.raises(ValueError):
        extend_cir(cir, 9)


def test_cir_power_floor():
    cir = Cir(np.array([1.0, 0.0, 1e-6], dtype=complex))
    np.testing.assert_allclose(cir.power_db(), [0.0, -200.0, -120.0])
    floored = cir.power_db(noise_floor_db=-100.0)
    np.testing.assert_allclose(floored, [0.0, -200.0, -200.0])


def test_pdp_single():
    realization = single([make_mpc(gain_db=-90.0, delay=5e-9, origin="los")])
    assert pdp(realization) == [(5e-9, -90.0)]


def test_pdp_sorted():
    late = make_mpc(gain_db=-100.0, delay=30e-9)
    early = make_mpc(gain_db=-90.0, delay=5e-9, origin="los")
    assert [d for d, _ in pdp(single([late, early]))] == [5e-9, 30e-9]


def test_pdp_preserves_power(campus_scene, campus_twin, params):
    rng = np.random.default_rng(9)
    for index in range(100):
        rx = Vec3(*rng.uniform(-200.0, 200.0, 2), 1.6)
        realization = assemble(campus_scene, campus_twin, params, rx, index)
        if realization.outage:
            continue
        total = linear(m.gain_db for m in realization.mpcs)
        assert linear(g for _, g in pdp(realization)) == pytest.approx(total)


@pytest.mark.parametrize("extension", [".csv", ".jsonl"])
def test_mpc_table_round_trip(tmp_path, empty_scene, clear_twin, params, extension):
    realization = assemble(empty_scene, clear_twin, params, Vec3(40.0, 30.0, 1.6), 5)
    path = os.path.join(tmp_path, "mpcs" + extension)
    write_mpcs({"rx0_r0": realization}, path)

    groups = read_mpcs(path)
    assert list(groups) == ["rx0_r0"]
    state, mpcs = groups["rx0_r0"]
    assert state == "los"
    assert len(mpcs) == len(realization.mpcs)
    for read, written in zip(mpcs, realization.mpcs):
        assert read.origin == written.origin
        assert read.gain_db == pytest.approx(written.gain_db)
        assert read.delay == pytest.approx(written.delay)
        assert read.aoa.azimuth == pytest.approx(written.aoa.azimuth)


def test_read_mpcs_missing_columns(tmp_path):
    path = os.path.join(tmp_path, "mpcs.csv")
    with open(path, "w") as f:
        f.write("realization_id,gain_db\nr0,-90\n")
    with pytest.raises(ValueError, match="missing columns"):
        read_mpcs(path)


def test_write_cir(tmp_path):
    cir = sample_cir(single([make_mpc(gain_db=0.0, origin="los")]), n_taps=16)
    path = os.path.join(tmp_path, "cir.csv")
    write_cir(cir, path)
    with open(path) as f:
        lines = f.read().splitlines()
    assert lines[0] == "bin_index,delay_s,re,im"
    assert len(lines) == 17
