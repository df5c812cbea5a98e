"""
Monte Carlo link evaluation over a cell sector: per-drop SNR, average
spectral efficiency and coverage ratio.
"""

import logging
import math
from dataclasses import dataclass, replace

import numpy as np
from joblib import Parallel, delayed
from scipy.constants import Boltzmann

from .characterization import path_loss_db
from .scene import Vec3
from .seeding import as_generator, substream
from .synthesis import assemble

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = [
    "total_gain_db",
    "cell_radius_m",
    "mean_se_bps_hz",
    "coverage_ratio",
    "n_drops",
    "seed",
]

# substream keys
_POSITIONS = 0
_DROPS = 1


@dataclass(frozen=True)
class LinkConfig:
    """
    SISO link budget and drop layout

    ``snr_threshold`` of -6 dB matches a 160 dB path loss with 70 dB of
    total antenna gain at the default budget.
    """

    pt: float = 13.0
    total_gain: float = 70.0
    noise_figure: float = 10.0
    temperature: float = 300.0
    bandwidth: float = 2e9
    snr_threshold: float = -6.0
    cell_radius: float = 50.0
    sector_start: float = 0.0
    sector_extent: float = 180.0
    n_drops: int = 10000
    rx_height: float = 1.6
    outage_loss: float = 160.0

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")
        if self.n_drops < 1:
            raise ValueError("n_drops must be at least 1")
        if not self.cell_radius > 0:
            raise ValueError("cell_radius must be positive")
        if not 0 < self.sector_extent <= 360:
            raise ValueError("sector_extent must be in (0, 360]")

    @classmethod
    def from_config(cls, section):
        """Build from the ``link`` configuration section"""
        return cls(
            pt=float(section["pt_dbm"]),
            total_gain=float(section["total_gain_db"]),
            noise_figure=float(section["noise_figure_db"]),
            temperature=float(section["temperature_k"]),
            bandwidth=float(section["bandwidth_hz"]),
            snr_threshold=float(section["snr_threshold_db"]),
            cell_radius=float(section["cell_radius_m"]),
            sector_start=float(section["sector_start_deg"]),
            sector_extent=float(section["sector_extent_deg"]),
            n_drops=int(section["n_drops"]),
            rx_height=float(section["rx_height_m"]),
            outage_loss=float(section["outage_loss_db"]),
        )


def noise_power_dbm(cfg):
    """Thermal noise ``10 log10(k T B / 1 mW)`` plus the noise figure"""
    thermal = Boltzmann * cfg.temperature * cfg.bandwidth / 1e-3
    return 10.0 * math.log10(thermal) + cfg.noise_figure


def snr(path_loss_db, cfg):
    """
    Received SNR in dB for a positive path loss

    An infinite path loss gives ``-inf``.
    """
    loss = np.asarray(path_loss_db, dtype=float)
    value = cfg.pt + cfg.total_gain - loss - noise_power_dbm(cfg)
    return float(value) if value.ndim == 0 else value


def sample_rx_positions(tx, cfg, rng, rx_height=None):
    """
    Drops uniform over the area of the cell sector around ``tx``

    Parameters:
        tx (:obj:`Vec3`): transmitter, the sector apex
        cfg (:obj:`LinkConfig`): radius, sector and drop count
        rng (:obj:`numpy.random.Generator` | :obj:`int`): random source
        rx_height (:obj:`float` | :obj:`None`): receiver height, defaults
            to ``cfg.rx_height``

    Returns:
        :obj:`list`: :obj:`Vec3` positions
    """
    rng = as_generator(rng)
    height = cfg.rx_height if rx_height is None else rx_height
    radius = cfg.cell_radius * np.sqrt(rng.uniform(size=cfg.n_drops))
    fraction = rng.uniform(size=cfg.n_drops)
    azimuth = np.radians(cfg.sector_start + cfg.sector_extent * fraction)
    x = tx.x + radius * np.cos(azimuth)
    y = tx.y + radius * np.sin(azimuth)
    return [Vec3(float(a), float(b), float(height)) for a, b in zip(x, y)]


def _drop_loss(scene, twin, params, rx, rng, synthesis):
    if np.allclose(rx.as_array(), scene.tx.as_array()):
        return math.inf
    return path_loss_db(assemble(scene, twin, params, rx, rng, synthesis).mpcs)


def path_losses(
    scene, twin, params, positions, seed, outage_loss=160.0, synthesis=None, n_jobs=1
):
    """
    Path loss of every drop; outage drops give ``inf``

    Drop ``i`` uses its own substream of ``seed`` so results do not depend
    on ``n_jobs``. Losses above ``outage_loss`` count as outage.
    """
    losses = Parallel(n_jobs=n_jobs)(
        delayed(_drop_loss)(
            scene, twin, params, rx, substream(seed, _DROPS, i), synthesis
        )
        for i, rx in enumerate(positions)
    )
    losses = np.array(losses, dtype=float)
    losses[losses > outage_loss] = math.inf
    outages = np.count_nonzero(np.isinf(losses))
    logger.debug("%d of %d drops in outage", outages, len(losses))
    return losses


def summarize(losses, cfg):
    """``(mean spectral efficiency, coverage ratio)`` of per-drop losses"""
    losses = np.asarray(losses, dtype=float)
    if losses.size == 0:
        raise ValueError("no drops to summarize")
    gamma = snr(losses, cfg)
    with np.errstate(over="ignore"):
        efficiency = np.log2(1.0 + 10.0 ** (np.asarray(gamma) / 10.0))
    coverage = np.count_nonzero(np.asarray(gamma) > cfg.snr_threshold) / losses.size
    return float(np.mean(efficiency)), float(coverage)


def evaluate(scene, twin, params, cfg, seed, synthesis=None, n_jobs=1):
    """
    Mean spectral efficiency and coverage ratio over ``cfg.n_drops`` drops

    Parameters:
        scene (:obj:`Scene`): environment, its transmitter is the cell center
        twin (:obj:`FoliageTwin`): foliage twin
        params (:obj:`dict`): ``{state: StateParams}``
        cfg (:obj:`LinkConfig`): link budget and layout
        seed (:obj:`int`): master seed
        synthesis (:obj:`SynthesisConfig` | :obj:`None`): channel switches
        n_jobs (:obj:`int`): parallel workers

    Returns:
        :obj:`tuple`: ``(mean_se, coverage)``
    """
    positions = sample_rx_positions(scene.tx, cfg, substream(seed, _POSITIONS))
    losses = path_losses(
        scene, twin, params, positions, seed, cfg.outage_loss, synthesis, n_jobs
    )
    return summarize(losses, cfg)


def sweep(scene, twin, params, cfg, gains, radii, seed, synthesis=None, n_jobs=1):
    """
    Evaluate every ``(total gain, cell radius)`` pair

    One drop set is generated per radius and shared by all gains.

    Returns:
        :obj:`list`: one row per pair, ordered by gain then radius
    """
    results = {}
    for radius in radii:
        radius_cfg = replace(cfg, cell_radius=float(radius))
        rng = substream(seed, _POSITIONS)
        positions = sample_rx_positions(scene.tx, radius_cfg, rng)
        losses = path_losses(
            scene, twin, params, positions, seed, cfg.outage_loss, synthesis, n_jobs
        )
        for gain in gains:
            gain_cfg = replace(radius_cfg, total_gain=float(gain))
            results[(gain, radius)] = summarize(losses, gain_cfg)
        logger.info("radius %.1f m evaluated for %d gains", radius, len(gains))

    return [
        {
            "total_gain_db": float(gain),
            "cell_radius_m": float(radius),
            "mean_se_bps_hz": results[(gain, radius)][0],
            "coverage_ratio": results[(gain, radius)][1],
            "n_drops": cfg.n_drops,
            "seed": seed,
        }
        for gain in gains
        for radius in radii
    ]
