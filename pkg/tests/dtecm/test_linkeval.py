import math
from dataclasses import replace

import numpy as np
import pytest

from dtecm.config import load_config
from dtecm.linkeval import (
    SWEEP_COLUMNS,
    LinkConfig,
    evaluate,
    noise_power_dbm,
    path_losses,
    sample_rx_positions,
    snr,
    summarize,
    sweep,
)
from dtecm.scene import Vec3

TX = Vec3(0.0, 0.0, 16.6)


def test_snr_reference_budget():
    assert snr(130.0, LinkConfig()) == pytest.approx(23.82, abs=0.05)


def test_noise_power_default():
    assert noise_power_dbm(LinkConfig()) == pytest.approx(-70.82, abs=0.01)


def test_noise_power_room_temperature():
    cfg = LinkConfig(temperature=290.0, bandwidth=1.536e9, noise_figure=11.0)
    thermal = 10.0 * math.log10(1.380649e-23 * 290.0 * 1.536e9 / 1e-3)
    assert noise_power_dbm(cfg) == pytest.approx(thermal + 11.0)
    assert noise_power_dbm(cfg) == pytest.approx(-71.11, abs=0.01)


def test_snr_linear_in_gain():
    losses = np.array([95.0, 120.0, 150.0])
    low = snr(losses, LinkConfig(total_gain=50.0))
    high = snr(losses, LinkConfig(total_gain=60.0))
    np.testing.assert_allclose(high - low, 10.0)


def test_snr_of_outage():
    assert snr(math.inf, LinkConfig()) == -math.inf


def test_link_config_validation():
    with pytest.raises(ValueError, match="bandwidth"):
        LinkConfig(bandwidth=0.0)
    with pytest.raises(ValueError, match="sector_extent"):
        LinkConfig(sector_extent=400.0)


def test_link_config_from_defaults():
    assert LinkConfig.from_config(load_config()["link"]) == LinkConfig()


def test_positions_inside_sector():
    cfg = LinkConfig(n_drops=10_000)
    positions = sample_rx_positions(TX, cfg, 0)
    assert len(positions) == 10_000
    xy = np.array([(p.x, p.y) for p in positions])
    assert np.all(np.hypot(xy[:, 0], xy[:, 1]) <= cfg.cell_radius)
    # 180 degree sector starting at the +x axis
    assert np.all(xy[:, 1] >= -1e-9)
    assert all(p.z == 1.6 for p in positions)


def test_positions_mean_radius():
    cfg = LinkConfig(n_drops=100_000, cell_radius=300.0)
    positions = sample_rx_positions(TX, cfg, 1, rx_height=2.0)
    radius = np.hypot([p.x for p in positions], [p.y for p in positions])
    assert np.mean(radius) == pytest.approx(200.0, rel=0.02)
    assert positions[0].z == 2.0


def test_summarize_identical_drops():
    cfg = LinkConfig()
    gamma = snr(120.0, cfg)
    mean_se, coverage = summarize([120.0] * 10, cfg)
    assert mean_se == pytest.approx(math.log2(1.0 + 10.0 ** (gamma / 10.0)))
    assert coverage == 1.0


def test_summarize_counts_outage():
    mean_se, coverage = summarize([100.0, math.inf], LinkConfig())
    assert coverage == 0.5
    assert mean_se == pytest.approx(summarize([100.0], LinkConfig())[0] / 2.0)


def test_summarize_threshold():
    cfg = LinkConfig(snr_threshold=-6.0)
    # SNRs of about 3.8, -11.2 and -16.2 dB
    assert summarize([150.0, 165.0, 170.0], cfg)[1] == pytest.approx(1 / 3)


def test_summarize_empty():
    with pytest.raises(ValueError):
        summarize([], LinkConfig())


def test_path_losses_outage(box_scene, clear_twin, params):
    positions = [Vec3(0.0, 0.0, 1.6), Vec3(150.0, 0.0, 1.6)]
    losses = path_losses(box_scene, clear_twin, params, positions, seed=0)
    assert losses[0] == math.inf
    assert math.isfinite(losses[1])


def test_path_losses_outage_threshold(empty_scene, clear_twin, params):
    positions = [Vec3(10.0, 0.0, 1.6)]
    losses = path_losses(empty_scene, clear_twin, params, positions, 0, 50.0)
    assert losses[0] == math.inf


def test_path_losses_independent_of_jobs(campus_scene, campus_twin, params):
    cfg = LinkConfig(n_drops=24, cell_radius=200.0)
    positions = sample_rx_positions(campus_scene.tx, cfg, 3)
    serial = path_losses(campus_scene, campus_twin, params, positions, 5, n_jobs=1)
    parallel = path_losses(campus_scene, campus_twin, params, positions, 5, n_jobs=2)
    np.testing.assert_array_equal(serial, parallel)


def test_evaluate_campus_brackets(campus_scene, campus_twin, params):
    near = LinkConfig(total_gain=70.0, cell_radius=50.0, n_drops=1000)
    far = LinkConfig(total_gain=30.0, cell_radius=400.0, n_drops=1000)
    assert evaluate(campus_scene, campus_twin, params, near, seed=0)[0] > 10.0
    assert evaluate(campus_scene, campus_twin, params, far, seed=0)[0] < 1.0


def test_evaluate_monotone_in_gain(campus_scene, campus_twin, params):
    cfg = LinkConfig(cell_radius=200.0, n_drops=200)
    results = [
        evaluate(campus_scene, campus_twin, params, replace(cfg, total_gain=g), seed=1)
        for g in (30.0, 50.0, 70.0)
    ]
    efficiencies = [se for se, _ in results]
    coverages = [c for _, c in results]
    assert efficiencies == sorted(efficiencies)
    assert coverages == sorted(coverages)


def test_evaluate_repeats_for_seed(campus_scene, campus_twin, params):
    cfg = LinkConfig(cell_radius=100.0, n_drops=50)
    first = evaluate(campus_scene, campus_twin, params, cfg, seed=7)
    assert evaluate(campus_scene, campus_twin, params, cfg, seed=7) == first


def test_sweep_rows(campus_scene, campus_twin, params):
    cfg = LinkConfig(n_drops=40)
    rows = sweep(campus_scene, campus_twin, params, cfg, [30, 70], [50, 200], seed=2)
    assert len(rows) == 4
    assert [(r["total_gain_db"], r["cell_radius_m"]) for r in rows] == [
        (30.0, 50.0),
        (30.0, 200.0),
        (70.0, 50.0),
        (70.0, 200.0),
    ]
    assert all(list(r) == SWEEP_COLUMNS for r in rows)
    assert rows[2]["mean_se_bps_hz"] > rows[0]["mean_se_bps_hz"]


def test_sweep_matches_evaluate(campus_scene, campus_twin, params):
    cfg = LinkConfig(n_drops=30)
    row = sweep(campus_scene, campus_twin, params, cfg, [60], [120], seed=4)[0]
    single = replace(cfg, total_gain=60.0, cell_radius=120.0)
    expected = evaluate(campus_scene, campus_twin, params, single, 4)
    assert (row["mean_se_bps_hz"], row["coverage_ratio"]) == expected
