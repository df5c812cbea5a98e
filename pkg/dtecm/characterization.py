"""
Channel characteristics of realizations or imported MPC lists: dynamic-range
thresholding, MCD clustering, delay and angular spreads, K-factor and the
close-in path loss fit.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from sklearn.cluster import DBSCAN

from .raytrace import fspl
from .scene import unit_vectors

logger = logging.getLogger(__name__)

NOISE = -1
DIMENSIONS = ("aoa_az", "aoa_el", "aod_az", "aod_el")


@dataclass(frozen=True)
class CharacterizationConfig:
    dynamic_range_db: float = 30.0
    noise_floor_db: float = -180.5
    threshold: bool = True
    eps: float = 0.2
    min_pts: int = 3
    zeta: float = 8.0
    include_aod: bool = False


def linear_powers(mpcs):
    return np.array([10.0 ** (m.gain_db / 10.0) for m in mpcs], dtype=float)


def _require(mpcs):
    if len(mpcs) == 0:
        raise ValueError("at least one MPC is required")


def weighted_delay_spread(delays, powers):
    """Power-weighted RMS spread of ``delays``"""
    delays = np.asarray(delays, dtype=float)
    weights = np.asarray(powers, dtype=float) / np.sum(powers)
    mean = np.sum(weights * delays)
    variance = np.sum(weights * (delays - mean) ** 2)
    return float(math.sqrt(max(variance, 0.0)))


def weighted_angular_spread(angles, powers):
    """
    Power-weighted circular RMS spread of ``angles`` in degrees

    The spread is the smallest weighted standard deviation over all
    placements of the 360 degree cut, each of which starts at one of the
    input angles.
    """
    angles = np.asarray(angles, dtype=float).ravel()
    weights = np.asarray(powers, dtype=float).ravel()
    weights = weights / weights.sum()
    shifted = (angles[None, :] - angles[:, None]) % 360.0
    mean = shifted @ weights
    variance = ((shifted - mean[:, None]) ** 2) @ weights
    return float(math.sqrt(max(float(variance.min()), 0.0)))


def apply_dynamic_range(mpcs, dynamic_range=30.0, noise_floor=-180.5):
    """
    Drop MPCs below the dynamic-range cutoff

    The cutoff is ``max(strongest - dynamic_range, noise_floor + 20)`` in dB.
    The strongest MPC is always kept.

    Raises:
        ValueError: for an empty list or a non-positive dynamic range
    """
    _require(mpcs)
    if not dynamic_range > 0:
        raise ValueError("dynamic range must be positive")
    strongest = max(range(len(mpcs)), key=lambda i: mpcs[i].gain_db)
    cutoff = max(mpcs[strongest].gain_db - dynamic_range, noise_floor + 20.0)
    return [m for i, m in enumerate(mpcs) if i == strongest or m.gain_db >= cutoff]


def rms_delay_spread(mpcs):
    """RMS delay spread in seconds"""
    _require(mpcs)
    return weighted_delay_spread([m.delay for m in mpcs], linear_powers(mpcs))


def _angles(mpcs, dimension):
    if dimension not in DIMENSIONS:
        raise ValueError(f"unknown dimension '{dimension}', choose from {DIMENSIONS}")
    side, axis = dimension.split("_")
    attribute = "azimuth" if axis == "az" else "elevation"
    return [getattr(getattr(m, side), attribute) for m in mpcs]


def angular_spread(mpcs, dimension="aoa_az"):
    """
    Circular RMS angular spread in degrees

    Parameters:
        mpcs (:obj:`list`): MPC records
        dimension (:obj:`str`): one of ``aoa_az``, ``aoa_el``, ``aod_az``,
            ``aod_el``
    """
    _require(mpcs)
    return weighted_angular_spread(_angles(mpcs, dimension), linear_powers(mpcs))


def k_factor(cluster_powers):
    """
    K-factor in dB from per-cluster linear powers

    Raises:
        ValueError: with fewer than two clusters
    """
    powers = np.sort(np.asarray(cluster_powers, dtype=float))[::-1]
    if len(powers) < 2:
        raise ValueError("insufficient clusters")
    return float(10.0 * np.log10(powers[0] / powers[1:].sum()))


@dataclass(frozen=True)
class ClusterAssignment:
    """Cluster label of every MPC; ``-1`` marks noise"""

    labels: tuple

    @property
    def n_clusters(self):
        return len({label for label in self.labels if label != NOISE})

    @property
    def clusters(self):
        members = {}
        for index, label in enumerate(self.labels):
            if label != NOISE:
                members.setdefault(label, []).append(index)
        return [members[label] for label in sorted(members)]

    @property
    def noise(self):
        return [i for i, label in enumerate(self.labels) if label == NOISE]

    def with_singletons(self):
        """Assignment in which every noise MPC forms its own cluster"""
        labels = list(self.labels)
        next_label = self.n_clusters
        for index in self.noise:
            labels[index] = next_label
            next_label += 1
        return ClusterAssignment(tuple(labels))


def mcd_matrix(mpcs, zeta=8.0, include_aod=False):
    """
    Pairwise multipath component distances

    The angular term is half the chord between arrival unit vectors (and
    departure unit vectors when ``include_aod``); the delay term is
    ``zeta * |dtau| * tau_std / dtau_max ** 2``.
    """
    _require(mpcs)
    aoa = unit_vectors(
        np.array([m.aoa.azimuth for m in mpcs]),
        np.array([m.aoa.elevation for m in mpcs]),
    )
    squared = np.sum((aoa[:, None, :] - aoa[None, :, :]) ** 2, axis=-1) / 4.0
    if include_aod:
        aod = unit_vectors(
            np.array([m.aod.azimuth for m in mpcs]),
            np.array([m.aod.elevation for m in mpcs]),
        )
        squared += np.sum((aod[:, None, :] - aod[None, :, :]) ** 2, axis=-1) / 4.0

    delays = np.array([m.delay for m in mpcs], dtype=float)
    span = delays.max() - delays.min()
    if span > 0:
        tau_std = rms_delay_spread(mpcs)
        gaps = np.abs(delays[:, None] - delays[None, :])
        delay_term = zeta * gaps * tau_std / span**2
        squared += delay_term**2
    return np.sqrt(squared)


def cluster_mcd_dbscan(mpcs, eps=0.2, min_pts=3, zeta=8.0, include_aod=False):
    """
    Cluster MPCs with DBSCAN over the multipath component distance

    Parameters:
        mpcs (:obj:`list`): MPC records
        eps (:obj:`float`): neighborhood radius in MCD units
        min_pts (:obj:`int`): neighborhood size of a core MPC, itself included
        zeta (:obj:`float`): delay weight
        include_aod (:obj:`bool`): add the departure angle term

    Returns:
        :obj:`ClusterAssignment`
    """
    distances = mcd_matrix(mpcs, zeta, include_aod)
    dbscan = DBSCAN(eps=eps, min_samples=min_pts, metric="precomputed")
    labels = dbscan.fit_predict(distances)
    return ClusterAssignment(tuple(int(label) for label in labels))


def cluster_powers(mpcs, assignment):
    """Summed linear power of every cluster, in label order"""
    powers = linear_powers(mpcs)
    return np.array([powers[members].sum() for members in assignment.clusters])


def path_loss_db(mpcs):
    """Positive path loss of the summed MPC power, ``inf`` when empty"""
    if len(mpcs) == 0:
        return math.inf
    return float(-10.0 * np.log10(linear_powers(mpcs).sum()))


@dataclass(frozen=True)
class CiFit:
    n: float
    sf_sigma: float
    d0: float
    f0: float

    def path_loss(self, distance):
        """Positive CI path loss in dB at ``distance`` meters"""
        distance = np.asarray(distance, dtype=float)
        return -fspl(self.f0, self.d0) + 10.0 * self.n * np.log10(distance / self.d0)


def fit_ci(samples, frequency, d0=1.0):
    """
    Fit the close-in model ``PL = FSPL(f, d0) + 10 n log10(d / d0) + X``

    Parameters:
        samples (:obj:`list`): ``(distance m, path loss dB)`` pairs, loss
            positive
        frequency (:obj:`float`): carrier frequency, Hz
        d0 (:obj:`float`): reference distance, meters

    Returns:
        :obj:`CiFit`

    Raises:
        ValueError: for fewer than two samples, non-positive distances or a
            degenerate abscissa
    """
    samples = np.asarray(samples, dtype=float).reshape(-1, 2)
    if len(samples) < 2:
        raise ValueError("at least two samples are required")
    distance, loss = samples[:, 0], samples[:, 1]
    if np.any(distance <= 0):
        raise ValueError("distances must be positive")
    if np.ptp(distance) == 0:
        raise ValueError("degenerate abscissa")
    x = 10.0 * np.log10(distance / d0)
    y = loss + fspl(frequency, d0)
    n = float(np.dot(x, y) / np.dot(x, x))
    sigma = float(np.std(y - n * x))
    return CiFit(n, sigma, d0, frequency)


def path_loss_rmse(reference, modeled):
    """RMS difference in dB between two path loss series of equal length"""
    reference = np.asarray(reference, dtype=float)
    modeled = np.asarray(modeled, dtype=float)
    if reference.shape != modeled.shape or reference.size == 0:
        raise ValueError("path loss series must be non-empty and of equal length")
    return float(np.sqrt(np.mean((reference - modeled) ** 2)))


def characterize(realization, config=None):
    """Metrics of a :obj:`ChannelRealization`, see :func:`characterize_mpcs`"""
    return characterize_mpcs(realization.mpcs, realization.state, config)


def characterize_mpcs(mpcs, state, config=None):
    """
    Metrics of one MPC list

    Returns a row with ``state``, ``pl_db``, ``ds_s``, ``asa_deg``,
    ``esa_deg``, ``kf_db`` and ``n_clusters``. Path loss uses every MPC;
    spreads, clustering and the K-factor use the thresholded list when
    ``config.threshold`` is set. Noise MPCs count as single-MPC clusters for
    the K-factor, which is NaN with fewer than two clusters.
    """
    config = config or CharacterizationConfig()
    mpcs = list(mpcs)
    row = {
        "state": str(state),
        "pl_db": path_loss_db(mpcs),
        "ds_s": math.nan,
        "asa_deg": math.nan,
        "esa_deg": math.nan,
        "kf_db": math.nan,
        "n_clusters": 0,
    }
    if not mpcs:
        return row

    if config.threshold:
        mpcs = apply_dynamic_range(mpcs, config.dynamic_range_db, config.noise_floor_db)
    assignment = cluster_mcd_dbscan(
        mpcs, config.eps, config.min_pts, config.zeta, config.include_aod
    )
    row.update(
        ds_s=rms_delay_spread(mpcs),
        asa_deg=angular_spread(mpcs, "aoa_az"),
        esa_deg=angular_spread(mpcs, "aoa_el"),
        n_clusters=assignment.n_clusters,
    )
    try:
        row["kf_db"] = k_factor(cluster_powers(mpcs, assignment.with_singletons()))
    except ValueError:
        logger.debug("K-factor undefined for a single cluster")
    return row
