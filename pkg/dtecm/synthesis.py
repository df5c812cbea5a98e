"""
Channel realizations: deterministic dominant paths, adjusted for foliage,
merged with stochastic non-dominant clusters, and their sampled impulse
responses.
"""

import logging
import math
import os
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import pandas as pd
from scipy.constants import speed_of_light

from .foliage import compute_fcr, foliage_loss
from .raytrace import LOS, fspl, trace_first_order
from .scene import Direction, Vec3
from .seeding import as_generator
from .stochastic import GeneratorConfig, draw_lsp, generate_clusters

logger = logging.getLogger(__name__)

DEFAULT_TAP_SPACING = 1.0 / 1.536e9
DEFAULT_N_TAPS = 2048
POWER_FLOOR_DB = -200.0

MPC_COLUMNS = [
    "realization_id",
    "state",
    "origin",
    "gain_db",
    "phase_rad",
    "delay_s",
    "aod_az",
    "aod_el",
    "aoa_az",
    "aoa_el",
]
CIR_COLUMNS = ["bin_index", "delay_s", "re", "im"]


class Origin(str, Enum):
    LOS = "los"
    REFLECTION = "reflection"
    STOCHASTIC = "stochastic"

    def __str__(self):
        return self.value


class LinkState(str, Enum):
    LOS = "los"
    OLOS = "olos"
    NLOS = "nlos"
    OUTAGE = "outage"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class Mpc:
    gain_db: float
    phase: float
    delay: float
    aod: Direction
    aoa: Direction
    origin: Origin

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.gain_db, self.phase, self.delay)):
            raise ValueError(f"non-finite MPC {self!r}")
        if self.delay < 0:
            raise ValueError("MPC delay must be non-negative")
        object.__setattr__(self, "origin", Origin(self.origin))


@dataclass(frozen=True)
class ChannelRealization:
    mpcs: tuple
    state: LinkState
    tx: Vec3
    rx: Vec3
    frequency: float
    seed: object = None

    def __post_init__(self):
        object.__setattr__(self, "mpcs", tuple(self.mpcs))
        object.__setattr__(self, "state", LinkState(self.state))
        if (self.state == LinkState.OUTAGE) != (len(self.mpcs) == 0):
            raise ValueError("a realization is in outage exactly when it has no MPCs")
        if self.state in (LinkState.LOS, LinkState.OLOS) and not any(
            m.origin == Origin.LOS for m in self.mpcs
        ):
            raise ValueError(f"{self.state} realization without a line-of-sight MPC")

    @property
    def outage(self):
        return self.state == LinkState.OUTAGE


@dataclass(frozen=True)
class SynthesisConfig:
    """
    Switches of :func:`assemble`

    ``stochastic`` disables the non-dominant clusters and ``chi`` the
    Gaussian term of the foliage loss.
    """

    stochastic: bool = True
    chi: bool = True
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)


def electrical_phase(frequency, delay):
    return float((-2.0 * math.pi * frequency * delay) % (2.0 * math.pi))


def _stochastic_mpcs(clusters, total_power, first_arrival):
    mpcs = []
    for cluster in clusters:
        for ray in cluster.rays:
            power = total_power * cluster.power_fraction * ray.power_fraction
            ratio = cluster.departure_ratio
            mpcs.append(
                Mpc(
                    gain_db=float(10.0 * np.log10(power)),
                    phase=ray.phase,
                    delay=first_arrival + cluster.excess_delay + ray.delay_offset,
                    aod=Direction.wrapped(
                        cluster.aod.azimuth + ratio * ray.azimuth_offset,
                        cluster.aod.elevation + ratio * ray.elevation_offset,
                    ),
                    aoa=Direction.wrapped(
                        cluster.aoa.azimuth + ray.azimuth_offset,
                        cluster.aoa.elevation + ray.elevation_offset,
                    ),
                    origin=Origin.STOCHASTIC,
                )
            )
    return mpcs


def assemble(scene, twin, params, rx, rng, config=None):
    """
    Build the channel realization at ``rx``

    Dominant paths come from the first-order tracer; each path gain is
    adjusted by the foliage loss at its departure direction (the Tx to
    scatterer segment for reflections). The state is ``nlos`` when the line
    of sight is blocked, ``olos`` when it is clear but its FCR reaches the
    segment point, and ``los`` otherwise. Stochastic clusters share a total
    power equal to the strongest dominant path over the drawn K-factor and
    arrive after the first dominant path.

    Parameters:
        scene (:obj:`Scene`): environment
        twin (:obj:`FoliageTwin`): foliage twin carrying the loss model
        params (:obj:`dict`): ``{state: StateParams}``
        rx (:obj:`Vec3`): receiver position
        rng (:obj:`numpy.random.Generator` | :obj:`int`): random source
        config (:obj:`SynthesisConfig` | :obj:`None`): switches

    Returns:
        :obj:`ChannelRealization`: ``outage`` when no dominant path exists
    """
    config = config or SynthesisConfig()
    seed = rng if isinstance(rng, int) else None
    rng = as_generator(rng)

    candidates = trace_first_order(scene, rx)
    if not candidates:
        return ChannelRealization(
            (), LinkState.OUTAGE, scene.tx, rx, scene.frequency, seed
        )

    model = twin.loss_model
    dominant = []
    los_fcr = None
    for candidate in candidates:
        fcr = compute_fcr(twin, candidate.aod)
        chi = model.draw_chi(rng)
        applied = chi if config.chi and fcr > 0 else None
        if candidate.kind == LOS:
            los_fcr = fcr
        dominant.append(
            Mpc(
                gain_db=candidate.gain_db + foliage_loss(fcr, model, applied),
                phase=electrical_phase(scene.frequency, candidate.delay),
                delay=candidate.delay,
                aod=candidate.aod,
                aoa=candidate.aoa,
                origin=Origin.LOS if candidate.kind == LOS else Origin.REFLECTION,
            )
        )

    if los_fcr is None:
        state = LinkState.NLOS
    elif los_fcr >= model.r_th:
        state = LinkState.OLOS
    else:
        state = LinkState.LOS

    mpcs = list(dominant)
    if config.stochastic:
        strongest = max(dominant, key=lambda m: m.gain_db)
        lsp = draw_lsp(params[state.value], rng)
        anchor = (strongest.aod, strongest.aoa)
        clusters = generate_clusters(
            lsp, params[state.value], anchor, rng, config.generator
        )
        total = 10.0 ** (strongest.gain_db / 10.0) / 10.0 ** (lsp.kf / 10.0)
        first_arrival = min(m.delay for m in dominant)
        mpcs.extend(_stochastic_mpcs(clusters, total, first_arrival))

    logger.debug("rx %s: %s with %d MPCs", rx, state, len(mpcs))
    return ChannelRealization(tuple(mpcs), state, scene.tx, rx, scene.frequency, seed)


def assemble_statistical(tx, rx, frequency, params, state, rng, config=None):
    """
    Purely statistical realization without site geometry

    The total gain follows the close-in model of the state with shadow
    fading. For ``los`` and ``olos`` a direct path carries the K-factor
    share of it and clusters the rest; ``nlos`` power goes to clusters only.
    """
    config = config or SynthesisConfig()
    seed = rng if isinstance(rng, int) else None
    rng = as_generator(rng)
    state = LinkState(state)
    if state == LinkState.OUTAGE:
        raise ValueError("statistical realizations need a propagation state")
    state_params = params[state.value]

    vector = rx.as_array() - tx.as_array()
    distance = float(np.linalg.norm(vector))
    if distance <= 0:
        raise ValueError("rx coincides with tx")
    delay = distance / speed_of_light
    loss = (
        -fspl(frequency, 1.0)
        + 10.0 * state_params.ple * math.log10(distance)
        + rng.normal(0.0, state_params.sf_sigma)
    )
    total = 10.0 ** (-loss / 10.0)
    aod = Direction.from_vector(vector)
    aoa = Direction.from_vector(-vector)

    lsp = draw_lsp(state_params, rng)
    direct = state != LinkState.NLOS
    if not config.stochastic:
        origin = Origin.LOS if direct else Origin.STOCHASTIC
        mpc = Mpc(-loss, electrical_phase(frequency, delay), delay, aod, aoa, origin)
        return ChannelRealization((mpc,), state, tx, rx, frequency, seed)

    clusters = generate_clusters(lsp, state_params, (aod, aoa), rng, config.generator)
    mpcs = []
    if direct:
        k = 10.0 ** (lsp.kf / 10.0)
        scattered = total / (k + 1.0) if clusters else 0.0
        mpcs.append(
            Mpc(
                float(10.0 * np.log10(total - scattered)),
                electrical_phase(frequency, delay),
                delay,
                aod,
                aoa,
                Origin.LOS,
            )
        )
    else:
        scattered = total
    if clusters:
        mpcs.extend(_stochastic_mpcs(clusters, scattered, delay))
    if not mpcs:
        phase = electrical_phase(frequency, delay)
        mpcs.append(Mpc(-loss, phase, delay, aod, aoa, Origin.STOCHASTIC))
    return ChannelRealization(tuple(mpcs), state, tx, rx, frequency, seed)


@dataclass(frozen=True, eq=False)
class Cir:
    taps: np.ndarray
    tap_spacing: float = DEFAULT_TAP_SPACING

    @property
    def n_taps(self):
        return len(self.taps)

    @property
    def delays(self):
        return np.arange(self.n_taps) * self.tap_spacing

    @property
    def window(self):
        return self.n_taps * self.tap_spacing

    def power_db(self, noise_floor_db=None):
        """
        Per-tap power in dB

        Empty taps and taps below ``noise_floor_db`` are pinned to -200 dB so
        summing profiles adds no noise.
        """
        power = np.abs(self.taps) ** 2
        with np.errstate(divide="ignore"):
            result = 10.0 * np.log10(power)
        floor = POWER_FLOOR_DB if noise_floor_db is None else noise_floor_db
        result[~(result >= floor)] = POWER_FLOOR_DB
        return result


def _require_channel(realization):
    if realization.outage:
        raise ValueError("outage realization has no channel")


def sample_cir(realization, tap_spacing=DEFAULT_TAP_SPACING, n_taps=DEFAULT_N_TAPS):
    """
    Bin MPCs into a tapped delay line

    Each MPC adds ``10 ** (gain_db / 20) * exp(j phase)`` to the tap nearest
    to its delay. Tap ``k`` holds delay ``k * tap_spacing``, so the last tap
    sits at ``(n_taps - 1) * tap_spacing`` (1332.7 ns for the defaults) and
    the window repeats every ``n_taps * tap_spacing``. A later delay wraps to
    tap ``round(delay / tap_spacing) % n_taps``: 1400 ns lands in tap 102
    with 2048 taps and in tap 103 with 2047.

    Raises:
        ValueError: for an outage realization or an invalid tap grid
    """
    _require_channel(realization)
    if not tap_spacing > 0 or n_taps < 1:
        raise ValueError("tap spacing and tap count must be positive")
    taps = np.zeros(n_taps, dtype=complex)
    for mpc in realization.mpcs:
        index = int(round(mpc.delay / tap_spacing))
        if index >= n_taps:
            logger.warning(
                "MPC at %.4g s exceeds the %.4g s window and wraps to tap %d",
                mpc.delay,
                n_taps * tap_spacing,
                index % n_taps,
            )
            index %= n_taps
        taps[index] += 10.0 ** (mpc.gain_db / 20.0) * np.exp(1j * mpc.phase)
    return Cir(taps, tap_spacing)


def extend_cir(cir, n_extra):
    """Append copies of the first ``n_extra`` taps to undo a wrapped tail"""
    if not 0 <= n_extra <= cir.n_taps:
        raise ValueError(f"n_extra must be in [0, {cir.n_taps}]")
    return Cir(np.concatenate([cir.taps, cir.taps[:n_extra]]), cir.tap_spacing)


def pdp(realization):
    """``(delay, power dB)`` pairs of the MPCs sorted by delay"""
    _require_channel(realization)
    ordered = sorted(realization.mpcs, key=lambda m: m.delay)
    return [(m.delay, m.gain_db) for m in ordered]


def mpc_records(realization, realization_id):
    """Table of one realization's MPCs; an outage yields no rows"""
    rows = [
        {
            "realization_id": realization_id,
            "state": str(realization.state),
            "origin": str(m.origin),
            "gain_db": m.gain_db,
            "phase_rad": m.phase,
            "delay_s": m.delay,
            "aod_az": m.aod.azimuth,
            "aod_el": m.aod.elevation,
            "aoa_az": m.aoa.azimuth,
            "aoa_el": m.aoa.elevation,
        }
        for m in realization.mpcs
    ]
    return pd.DataFrame(rows, columns=MPC_COLUMNS)


def write_table(table, path):
    """Write a table as CSV, or as JSON lines for ``.jsonl`` paths"""
    if os.path.splitext(path)[1] == ".jsonl":
        table.to_json(path, orient="records", lines=True)
    else:
        table.to_csv(path, index=False)


def read_table(path):
    if not os.path.exists(path):
        raise FileNotFoundError(f"table '{path}' does not exist")
    if os.path.splitext(path)[1] == ".jsonl":
        return pd.read_json(path, orient="records", lines=True)
    return pd.read_csv(path)


def write_mpcs(realizations, path):
    """
    Write MPC records of ``{realization_id: realization}``

    Parameters:
        realizations (:obj:`dict`): realizations keyed by id
        path (:obj:`str`): ``.csv`` or ``.jsonl`` output
    """
    tables = [mpc_records(r, key) for key, r in realizations.items()]
    if tables:
        table = pd.concat(tables, ignore_index=True)
    else:
        table = pd.DataFrame(columns=MPC_COLUMNS)
    write_table(table, path)


def read_mpcs(path):
    """
    Read MPC records grouped by realization

    Returns:
        :obj:`dict`: ``{realization_id: (state, [Mpc, ...])}``
    """
    table = read_table(path)
    missing = set(MPC_COLUMNS) - set(table.columns)
    if missing:
        raise ValueError(f"'{path}' is missing columns {sorted(missing)}")
    groups = {}
    for key, rows in table.groupby("realization_id", sort=False):
        mpcs = [
            Mpc(
                gain_db=float(row.gain_db),
                phase=float(row.phase_rad),
                delay=float(row.delay_s),
                aod=Direction.wrapped(row.aod_az, row.aod_el),
                aoa=Direction.wrapped(row.aoa_az, row.aoa_el),
                origin=row.origin,
            )
            for row in rows.itertuples(index=False)
        ]
        groups[key] = (str(rows["state"].iloc[0]), mpcs)
    return groups


def cir_records(cir):
    return pd.DataFrame(
        {
            "bin_index": np.arange(cir.n_taps),
            "delay_s": cir.delays,
            "re": cir.taps.real,
            "im": cir.taps.imag,
        },
        columns=CIR_COLUMNS,
    )


def write_cir(cir, path):
    write_table(cir_records(cir), path)
