"""
Non-dominant clusters drawn from per-state large-scale parameter statistics.

The procedure is a reduced geometry-based stochastic model: large-scale
parameters (K-factor, delay and angular spreads, cluster count) are drawn
first, then cluster delays, powers and centroid angles, then a fixed set of
rays per cluster. Cluster delays and centroids are finally rescaled so the
stochastic channel reproduces the drawn spreads; the ray offsets join the
rescale only when the clusters alone cannot reach them.
"""

import json
import logging
import os
from dataclasses import dataclass, fields

import numpy as np

from .characterization import weighted_angular_spread, weighted_delay_spread
from .scene import Direction
from .seeding import as_generator

logger = logging.getLogger(__name__)

STATES = ("los", "olos", "nlos")
RAYS_PER_CLUSTER = 20

# unit-spread offsets of the 20 equal-power rays of a cluster
RAY_OFFSETS = np.array(
    [
        0.0447, -0.0447, 0.1413, -0.1413, 0.2492, -0.2492, 0.3715, -0.3715,
        0.5129, -0.5129, 0.6797, -0.6797, 0.8844, -0.8844, 1.1481, -1.1481,
        1.5195, -1.5195, 2.1551, -2.1551,
    ]
)  # fmt: skip

_PARAMS_PATH = os.path.join(os.path.dirname(__file__), "templates", "state_params.json")
DEFAULT_PRESET = "characterization"
_SIGMAS = ("kf_sigma", "ds_sigma_log", "asa_sigma_log", "esa_sigma_log")


@dataclass(frozen=True)
class StateParams:
    """
    Channel statistics of one propagation state

    Spreads are log-normal: ``log10(ds / 1 s)`` and ``log10(asa / 1 deg)``
    are normal with the ``*_mu_log`` means and ``*_sigma_log`` deviations.
    """

    state: str
    ple: float
    sf_sigma: float
    kf_mu: float
    kf_sigma: float
    ds_mu_log: float
    ds_sigma_log: float
    asa_mu_log: float
    asa_sigma_log: float
    esa_mu_log: float
    esa_sigma_log: float
    mean_clusters: float
    cds: float
    casa: float
    cesa: float

    def __post_init__(self):
        if self.state not in STATES:
            raise ValueError(f"unknown state '{self.state}'")
        for name in _SIGMAS + ("sf_sigma", "cds", "casa", "cesa"):
            if getattr(self, name) < 0:
                raise ValueError(f"{self.state}: {name} must be non-negative")
        minimum = 0.0 if self.state == "nlos" else 1.0
        if self.mean_clusters < minimum:
            raise ValueError(f"{self.state}: mean_clusters must be at least {minimum}")

    @classmethod
    def from_medians(cls, state, ds_median, asa_median, esa_median, **kwargs):
        """Build from median spreads (seconds, degrees) instead of log means"""
        return cls(
            state=state,
            ds_mu_log=float(np.log10(ds_median)),
            asa_mu_log=float(np.log10(asa_median)),
            esa_mu_log=float(np.log10(esa_median)),
            **kwargs,
        )

    def deterministic(self):
        """Copy with every spread of the draw set to zero"""
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update({name: 0.0 for name in _SIGMAS})
        return StateParams(**values)


@dataclass(frozen=True)
class LspDraw:
    kf: float
    ds: float
    asa: float
    esa: float
    n_clusters: int

    def __post_init__(self):
        if not self.ds > 0:
            raise ValueError("ds must be positive")
        if self.asa < 0 or self.esa < 0:
            raise ValueError("angular spreads must be non-negative")
        if self.n_clusters < 0:
            raise ValueError("n_clusters must be non-negative")


@dataclass(frozen=True)
class Ray:
    delay_offset: float
    azimuth_offset: float
    elevation_offset: float
    power_fraction: float
    phase: float


@dataclass(frozen=True)
class StochasticCluster:
    """
    One cluster of rays

    ``aoa`` and ``aod`` are centroid directions. Ray offsets apply to both,
    with the departure offsets scaled by the generator's departure ratio.
    """

    excess_delay: float
    power_fraction: float
    aoa: Direction
    aod: Direction
    rays: tuple
    departure_ratio: float = 1.0


@dataclass(frozen=True)
class GeneratorConfig:
    delay_scaling: float = 2.5
    cluster_shadowing_db: float = 3.0
    departure_spread_ratio: float = 0.25
    calibration_iterations: int = 3

    def __post_init__(self):
        if not self.delay_scaling > 1:
            raise ValueError("delay_scaling must be greater than 1")
        if self.cluster_shadowing_db < 0 or self.departure_spread_ratio < 0:
            raise ValueError("generator spreads must be non-negative")
        if self.calibration_iterations < 0:
            raise ValueError("calibration_iterations must be non-negative")


def draw_lsp(params, rng):
    """
    Draw the large-scale parameters of one realization

    The cluster count is Poisson shifted to a minimum of one when
    ``mean_clusters`` is at least one, and plain Poisson otherwise.

    Parameters:
        params (:obj:`StateParams`): statistics of the state
        rng (:obj:`numpy.random.Generator` | :obj:`int`): random source

    Returns:
        :obj:`LspDraw`
    """
    rng = as_generator(rng)
    kf = rng.normal(params.kf_mu, params.kf_sigma)
    ds = 10.0 ** rng.normal(params.ds_mu_log, params.ds_sigma_log)
    asa = 10.0 ** rng.normal(params.asa_mu_log, params.asa_sigma_log)
    esa = 10.0 ** rng.normal(params.esa_mu_log, params.esa_sigma_log)
    if params.mean_clusters >= 1:
        n_clusters = int(rng.poisson(params.mean_clusters - 1.0)) + 1
    else:
        n_clusters = int(rng.poisson(params.mean_clusters))
    return LspDraw(float(kf), float(ds), float(asa), float(esa), n_clusters)


def _flatten(delays, powers, ray_delays):
    # (clusters, rays) absolute delays and powers
    absolute = delays[:, None] + ray_delays
    ray_powers = np.repeat(powers[:, None] / RAYS_PER_CLUSTER, RAYS_PER_CLUSTER, axis=1)
    return absolute.ravel(), ray_powers.ravel()


def _calibrate_delays(delays, ray_delays, powers, target):
    """
    Rescale delays so their spread equals ``target``

    Only the cluster delays move when the ray delays alone stay below the
    target; the spread is then quadratic in the scale and solved exactly.
    Otherwise cluster and ray delays scale together, which is exact because
    the spread is homogeneous in the delays.
    """
    weights = np.repeat(powers / RAYS_PER_CLUSTER, RAYS_PER_CLUSTER)
    clusters = np.repeat(delays, RAYS_PER_CLUSTER)
    rays = ray_delays.ravel()
    d = clusters - weights @ clusters
    r = rays - weights @ rays
    a, b, c = weights @ (d * d), weights @ (d * r), weights @ (r * r)
    if a > 0 and c < target**2:
        scale = (-b + np.sqrt(b * b + a * (target**2 - c))) / a
        return delays * scale, ray_delays
    spread = weighted_delay_spread(*_flatten(delays, powers, ray_delays))
    if spread > 0:
        scale = target / spread
        return delays * scale, ray_delays * scale
    return delays, ray_delays


def _calibrate_angles(centroids, offsets, powers, target, iterations):
    """
    Rescale angles until their spread matches ``target``

    The ray offsets keep their intra-cluster spread while it stays below
    the target and only the centroids move. A single cluster, or offsets
    already wider than the target, scale centroids and offsets together.
    """
    weights = np.repeat(powers / RAYS_PER_CLUSTER, RAYS_PER_CLUSTER)
    intra = weighted_angular_spread(offsets.ravel(), weights)
    centroids_only = len(centroids) > 1 and np.any(centroids != 0) and intra < target
    for _ in range(iterations):
        angles = (centroids[:, None] + offsets).ravel()
        spread = weighted_angular_spread(angles, weights)
        if spread <= 0 or target <= 0:
            break
        if centroids_only:
            between = spread**2 - intra**2
            if between <= 0:
                break
            centroids = centroids * np.sqrt((target**2 - intra**2) / between)
        else:
            scale = target / spread
            centroids = centroids * scale
            offsets = offsets * scale
    return centroids, offsets


def _permuted_offsets(rng, n):
    return np.stack([rng.permutation(RAY_OFFSETS) for _ in range(n)])


def generate_clusters(lsp, params, dominant, rng, config=None):
    """
    Generate the stochastic clusters of one realization

    Parameters:
        lsp (:obj:`LspDraw`): drawn large-scale parameters
        params (:obj:`StateParams`): statistics supplying the intra-cluster
            spreads ``cds``, ``casa`` and ``cesa``
        dominant (:obj:`tuple`): ``(aod, aoa)`` :obj:`Direction` pair the
            clusters are centered on
        rng (:obj:`numpy.random.Generator` | :obj:`int`): random source
        config (:obj:`GeneratorConfig` | :obj:`None`): procedure constants

    Returns:
        :obj:`list`: :obj:`StochasticCluster` records sorted by excess
        delay, empty when ``lsp.n_clusters`` is zero
    """
    config = config or GeneratorConfig()
    rng = as_generator(rng)
    n = lsp.n_clusters
    if n == 0:
        return []
    aod, aoa = dominant
    r_tau = config.delay_scaling

    delays = -r_tau * lsp.ds * np.log(rng.uniform(size=n))
    delays = np.sort(delays - delays.min())
    shadowing = rng.normal(0.0, config.cluster_shadowing_db, size=n)
    decay = np.exp(-delays * (r_tau - 1.0) / (r_tau * lsp.ds))
    powers = decay * 10.0 ** (-shadowing / 10.0)
    powers = powers / powers.sum()

    az_centroids = rng.normal(0.0, lsp.asa, size=n)
    el_centroids = rng.normal(0.0, lsp.esa, size=n)
    if n == 1:
        az_centroids[:] = 0.0
        el_centroids[:] = 0.0

    ray_delays = rng.uniform(0.0, 2.0 * params.cds, size=(n, RAYS_PER_CLUSTER))
    az_offsets = params.casa * _permuted_offsets(rng, n)
    el_offsets = params.cesa * _permuted_offsets(rng, n)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=(n, RAYS_PER_CLUSTER))

    delays, ray_delays = _calibrate_delays(delays, ray_delays, powers, lsp.ds)
    az_centroids, az_offsets = _calibrate_angles(
        az_centroids, az_offsets, powers, lsp.asa, config.calibration_iterations
    )
    el_centroids, el_offsets = _calibrate_angles(
        el_centroids, el_offsets, powers, lsp.esa, config.calibration_iterations
    )

    ratio = config.departure_spread_ratio
    clusters = []
    for c in range(n):
        rays = tuple(
            Ray(
                float(ray_delays[c, r]),
                float(az_offsets[c, r]),
                float(el_offsets[c, r]),
                1.0 / RAYS_PER_CLUSTER,
                float(phases[c, r]),
            )
            for r in range(RAYS_PER_CLUSTER)
        )
        clusters.append(
            StochasticCluster(
                excess_delay=float(delays[c]),
                power_fraction=float(powers[c]),
                aoa=Direction.wrapped(
                    aoa.azimuth + az_centroids[c], aoa.elevation + el_centroids[c]
                ),
                aod=Direction.wrapped(
                    aod.azimuth + ratio * az_centroids[c],
                    aod.elevation + ratio * el_centroids[c],
                ),
                rays=rays,
                departure_ratio=ratio,
            )
        )
    logger.debug("generated %d clusters, ds %.3g s", n, lsp.ds)
    return clusters


def _params_from_document(state, entry):
    entry = dict(entry)
    try:
        return StateParams.from_medians(
            state,
            ds_median=float(entry.pop("ds_median_s")),
            asa_median=float(entry.pop("asa_median_deg")),
            esa_median=float(entry.pop("esa_median_deg")),
            **{k: float(v) for k, v in entry.items()},
        )
    except (KeyError, TypeError) as err:
        message = f"state '{state}': could not parse parameters ({err})"
        raise ValueError(message) from err


def load_state_params(path=None, preset=None):
    """
    Load per-state statistics

    The document holds named presets, each with one block per state; spreads
    are given as medians (``ds_median_s``, ``asa_median_deg``,
    ``esa_median_deg``) with their log10 standard deviations.

    Parameters:
        path (:obj:`str` | :obj:`None`): parameter file, defaults to the
            bundled one
        preset (:obj:`str` | :obj:`None`): preset name, defaults to the
            document's ``default`` entry

    Returns:
        :obj:`dict`: ``{state: StateParams}``

    Raises:
        FileNotFoundError: when ``path`` does not exist
        ValueError: for an unknown preset or a missing state
    """
    path = _PARAMS_PATH if path is None else path
    if not os.path.exists(path):
        raise FileNotFoundError(f"state parameters '{path}' do not exist")
    with open(path, "r", encoding="utf-8") as f:
        document = json.load(f)

    presets = document.get("presets", {})
    preset = preset or document.get("default", DEFAULT_PRESET)
    if preset not in presets:
        raise ValueError(f"unknown preset '{preset}', choose from {sorted(presets)}")
    blocks = presets[preset]
    missing = [s for s in STATES if s not in blocks]
    if missing:
        raise ValueError(f"preset '{preset}' is missing states {missing}")
    logger.debug("state parameters '%s' preset '%s'", path, preset)
    return {state: _params_from_document(state, blocks[state]) for state in STATES}
