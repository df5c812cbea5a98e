"""
Deterministic dominant paths: the geometric line of sight and once-reflected
paths off vertical facades, found with the image method.
"""

import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.constants import speed_of_light
from shapely.geometry import Point

from .scene import Direction

logger = logging.getLogger(__name__)

LOS = "los"
REFLECTION = "reflection"

# fraction of a segment ignored at each end when testing for occlusion
_END_TOLERANCE = 1e-9


def fspl(frequency, distance):
    """
    Free space path gain in dB, ``20 log10(c / (4 pi f d))``

    The value is a gain, so it is negative in the far field.

    Parameters:
        frequency (:obj:`float`): carrier frequency, Hz
        distance (:obj:`float` | :obj:`numpy.ndarray`): distance, meters

    Raises:
        ValueError: for non-positive frequency or distance
    """
    distance = np.asarray(distance, dtype=float)
    if not frequency > 0 or np.any(distance <= 0):
        raise ValueError("frequency and distance must be positive")
    gain = 20.0 * np.log10(speed_of_light / (4.0 * np.pi * frequency * distance))
    return float(gain) if gain.ndim == 0 else gain


@dataclass(frozen=True)
class PathCandidate:
    kind: str
    geometric_length: float
    delay: float
    aod: Direction
    aoa: Direction
    gain_db: float
    reflector_id: object = None
    interaction: tuple = None


@dataclass(frozen=True)
class LosResult:
    """Outcome of :func:`geometric_los`; ``building`` is set when blocked"""

    clear: bool
    building: object = None


class _Obstacles:
    """Flattened wall and facade arrays for one scene"""

    def __init__(self, scene):
        starts, ends, heights, owners, losses = [], [], [], [], []
        for index, building in enumerate(scene.buildings):
            xy = np.asarray(building.footprint, dtype=float)
            starts.append(xy)
            ends.append(np.roll(xy, -1, axis=0))
            heights.append(np.full(len(xy), building.height))
            owners.append(np.full(len(xy), index))
            losses.append(np.full(len(xy), building.reflection_loss_db))

        if starts:
            self.p0 = np.concatenate(starts)
            self.p1 = np.concatenate(ends)
            self.height = np.concatenate(heights)
            self.owner = np.concatenate(owners)
            self.loss = np.concatenate(losses)
        else:
            self.p0 = self.p1 = np.empty((0, 2))
            self.height = self.loss = np.empty(0)
            self.owner = np.empty(0, dtype=int)

        self.edge = self.p1 - self.p0
        length = np.linalg.norm(self.edge, axis=1)
        # outward normal of a counterclockwise footprint is on the right
        self.normal = np.stack([self.edge[:, 1], -self.edge[:, 0]], axis=1)
        self.normal = self.normal / np.where(length > 0, length, 1.0)[:, None]
        self.polygons = [b.polygon for b in scene.buildings]
        self.heights = [b.height for b in scene.buildings]

    def embedded(self, point):
        """Index of the building whose volume contains ``point``, or None"""
        p = Point(point[0], point[1])
        for index, (polygon, height) in enumerate(zip(self.polygons, self.heights)):
            if point[2] < height and polygon.contains(p):
                return index
        return None

    def blockers(self, a, b):
        """
        Buildings whose walls the open segments ``a -> b`` cross below roof
        height

        ``a`` and ``b`` are arrays of shape ``(S, 3)``; the result is an
        ``(S,)`` integer array holding the blocking building with the lowest
        crossing parameter, or -1 for a clear segment.
        """
        a = np.atleast_2d(a)
        b = np.atleast_2d(b)
        result = np.full(len(a), -1)
        if len(self.p0) == 0:
            return result

        d = (b - a)[:, None, :2]  # (S, 1, 2)
        e = self.edge[None, :, :]  # (1, E, 2)
        w = self.p0[None, :, :] - a[:, None, :2]  # (S, E, 2)
        denom = d[..., 0] * e[..., 1] - d[..., 1] * e[..., 0]
        parallel = np.abs(denom) < 1e-12
        safe = np.where(parallel, 1.0, denom)
        t = (w[..., 0] * e[..., 1] - w[..., 1] * e[..., 0]) / safe
        s = (w[..., 0] * d[..., 1] - w[..., 1] * d[..., 0]) / safe
        z = a[:, None, 2] + t * (b - a)[:, None, 2]

        hit = (
            ~parallel
            & (t > _END_TOLERANCE)
            & (t < 1.0 - _END_TOLERANCE)
            & (s >= 0.0)
            & (s <= 1.0)
            & (z < self.height[None, :])
        )
        t_hit = np.where(hit, t, np.inf)
        first = np.argmin(t_hit, axis=1)
        blocked = np.isfinite(t_hit[np.arange(len(a)), first])
        result[blocked] = self.owner[first[blocked]]
        return result


@lru_cache(maxsize=16)
def _obstacles(scene):
    return _Obstacles(scene)


def direction_between(a, b):
    """:obj:`Direction` of the vector from ``a`` to ``b`` (arrays)"""
    vector = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
    return Direction.from_vector(vector)


def _check_rx(scene, rx):
    rx = rx.as_array()
    if np.allclose(rx, scene.tx.as_array(), rtol=0.0, atol=1e-12):
        raise ValueError("rx coincides with tx")
    return rx


def geometric_los(scene, rx):
    """
    Test whether the straight segment tx -> rx is free of buildings

    Parameters:
        scene (:obj:`Scene`): environment
        rx (:obj:`Vec3`): receiver position

    Returns:
        :obj:`LosResult`: ``clear`` flag and the blocking building index

    Raises:
        ValueError: when ``rx`` equals the transmitter position
    """
    rx = _check_rx(scene, rx)
    tx = scene.tx.as_array()
    obstacles = _obstacles(scene)
    for point in (tx, rx):
        index = obstacles.embedded(point)
        if index is not None:
            return LosResult(False, index)
    blocker = int(obstacles.blockers(tx[None, :], rx[None, :])[0])
    if blocker >= 0:
        return LosResult(False, blocker)
    return LosResult(True)


def _reflections(scene, obstacles, tx, rx):
    if len(obstacles.p0) == 0:
        return []

    n = obstacles.normal
    d_tx = np.einsum("ij,ij->i", tx[None, :2] - obstacles.p0, n)
    d_rx = np.einsum("ij,ij->i", rx[None, :2] - obstacles.p0, n)
    facing = (d_tx > 0) & (d_rx > 0)
    if not np.any(facing):
        return []

    idx = np.flatnonzero(facing)
    n3 = np.column_stack([n[idx], np.zeros(len(idx))])
    image = tx[None, :] - 2.0 * d_tx[idx, None] * n3
    u = d_tx[idx] / (d_tx[idx] + d_rx[idx])
    hit = image + u[:, None] * (rx[None, :] - image)

    edge = obstacles.edge[idx]
    along = np.einsum("ij,ij->i", hit[:, :2] - obstacles.p0[idx], edge)
    along = along / np.einsum("ij,ij->i", edge, edge)
    inside = (
        (along >= 0.0)
        & (along <= 1.0)
        & (hit[:, 2] >= 0.0)
        & (hit[:, 2] <= obstacles.height[idx])
    )
    idx, hit, image = idx[inside], hit[inside], image[inside]
    if len(idx) == 0:
        return []

    first_leg = obstacles.blockers(np.repeat(tx[None, :], len(idx), 0), hit)
    second_leg = obstacles.blockers(hit, np.repeat(rx[None, :], len(idx), 0))
    clear = (first_leg < 0) & (second_leg < 0)

    candidates = []
    for facade, point, img in zip(idx[clear], hit[clear], image[clear]):
        length = float(np.linalg.norm(rx - img))
        candidates.append(
            PathCandidate(
                kind=REFLECTION,
                geometric_length=length,
                delay=length / speed_of_light,
                aod=direction_between(tx, point),
                aoa=direction_between(rx, point),
                gain_db=fspl(scene.frequency, length) - obstacles.loss[facade],
                reflector_id=int(facade),
                interaction=tuple(float(c) for c in point),
            )
        )
    return candidates


def trace_first_order(scene, rx):
    """
    Dominant paths between the scene transmitter and ``rx``

    The line-of-sight candidate is included when :func:`geometric_los` is
    clear. Every vertical facade whose mirror image of the transmitter yields
    a specular point inside the facade rectangle, with both legs unoccluded,
    contributes one reflection whose gain is the free space gain over the
    unfolded length minus the building reflection loss.

    Parameters:
        scene (:obj:`Scene`): environment
        rx (:obj:`Vec3`): receiver position

    Returns:
        :obj:`list`: :obj:`PathCandidate` records sorted by delay; an empty
        list marks a geometric outage
    """
    rx_arr = _check_rx(scene, rx)
    tx = scene.tx.as_array()
    obstacles = _obstacles(scene)

    candidates = []
    if geometric_los(scene, rx).clear:
        length = float(np.linalg.norm(rx_arr - tx))
        candidates.append(
            PathCandidate(
                kind=LOS,
                geometric_length=length,
                delay=length / speed_of_light,
                aod=direction_between(tx, rx_arr),
                aoa=direction_between(rx_arr, tx),
                gain_db=fspl(scene.frequency, length),
            )
        )
    elif obstacles.embedded(tx) is not None or obstacles.embedded(rx_arr) is not None:
        logger.debug("rx %s or tx embedded in a building", rx)
        return []

    candidates.extend(_reflections(scene, obstacles, tx, rx_arr))
    candidates.sort(key=lambda c: (c.delay, c.kind != LOS))
    return candidates
