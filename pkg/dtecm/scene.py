"""
Geometric environment of a channel simulation.

Buildings are vertical prisms over counterclockwise footprints in a local
east-north-up frame. Azimuth is measured counterclockwise from +x (east),
elevation from the horizontal plane, both in degrees.
"""

import json
import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np
from shapely.geometry import LinearRing, Point, Polygon

logger = logging.getLogger(__name__)

THZ_BAND = (0.1e12, 10e12)
DEFAULT_REFLECTION_LOSS_DB = 10.0

_SCENE_FIELDS = {"frequency_hz", "tx", "buildings"}
_BUILDING_FIELDS = {"footprint", "height_m", "reflection_loss_db"}
# diagnostics that load_scene reports without rejecting the scene
_WARNINGS = ("orientation normalized", "tx embedded in geometry")


def wrap_azimuth(azimuth):
    """Wrap azimuth(s) in degrees into [-180, 180)"""
    wrapped = (np.asarray(azimuth, dtype=float) + 180.0) % 360.0 - 180.0
    # float rounding can land exactly on the open upper bound
    return np.where(wrapped >= 180.0, -180.0, wrapped)[()]


def unit_vectors(azimuth, elevation):
    """
    Unit vectors for directions given in degrees

    Parameters:
        azimuth (:obj:`float` | :obj:`numpy.ndarray`): azimuth, degrees
        elevation (:obj:`float` | :obj:`numpy.ndarray`): elevation, degrees

    Returns:
        :obj:`numpy.ndarray`: array of shape ``(..., 3)``
    """
    az = np.radians(azimuth)
    el = np.radians(elevation)
    return np.stack(
        [np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)],
        axis=-1,
    )


def vector_angles(vectors):
    """Return ``(azimuth, elevation)`` in degrees of (non-zero) vectors"""
    v = np.asarray(vectors, dtype=float)
    horizontal = np.hypot(v[..., 0], v[..., 1])
    azimuth = wrap_azimuth(np.degrees(np.arctan2(v[..., 1], v[..., 0])))
    elevation = np.degrees(np.arctan2(v[..., 2], horizontal))
    return azimuth, elevation


def great_circle(u, v):
    """Angle in radians between unit vectors ``u`` and ``v``"""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    cross = np.linalg.norm(np.cross(u, v), axis=-1)
    return np.arctan2(cross, np.sum(u * v, axis=-1))


@dataclass(frozen=True)
class Vec3:
    """Point in meters, x east, y north, z up"""

    x: float
    y: float
    z: float

    def __post_init__(self):
        for value in (self.x, self.y, self.z):
            if not math.isfinite(value):
                raise ValueError(f"non-finite coordinate in {self!r}")

    def as_array(self):
        return np.array([self.x, self.y, self.z], dtype=float)

    @classmethod
    def from_array(cls, values):
        x, y, z = (float(v) for v in values)
        return cls(x, y, z)


@dataclass(frozen=True)
class Direction:
    """
    Direction in degrees

    Azimuth lies in [-180, 180) and elevation in [-90, 90]. Use
    :meth:`Direction.wrapped` to build a direction from an unwrapped azimuth.
    """

    azimuth: float
    elevation: float

    def __post_init__(self):
        if not -180.0 <= self.azimuth < 180.0:
            raise ValueError(f"azimuth {self.azimuth} outside [-180, 180)")
        if not -90.0 <= self.elevation <= 90.0:
            raise ValueError(f"elevation {self.elevation} outside [-90, 90]")

    @classmethod
    def wrapped(cls, azimuth, elevation):
        elevation = min(max(float(elevation), -90.0), 90.0)
        return cls(float(wrap_azimuth(azimuth)), elevation)

    @classmethod
    def from_vector(cls, vector):
        azimuth, elevation = vector_angles(vector)
        return cls.wrapped(azimuth, elevation)

    def unit(self):
        return unit_vectors(self.azimuth, self.elevation)


@dataclass(frozen=True)
class Building:
    """Vertical prism; ``footprint`` is a tuple of ``(x, y)`` vertices"""

    footprint: tuple
    height: float
    reflection_loss_db: float = DEFAULT_REFLECTION_LOSS_DB

    def __post_init__(self):
        footprint = tuple(tuple(float(c) for c in vertex) for vertex in self.footprint)
        object.__setattr__(self, "footprint", footprint)

    @property
    def polygon(self):
        return Polygon(self.footprint)

    @property
    def signed_area(self):
        xy = np.asarray(self.footprint, dtype=float)
        x, y = xy[:, 0], xy[:, 1]
        return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


@dataclass(frozen=True)
class Scene:
    buildings: tuple = field(default_factory=tuple)
    tx: Vec3 = Vec3(0.0, 0.0, 16.6)
    frequency: float = 220e9

    def __post_init__(self):
        object.__setattr__(self, "buildings", tuple(self.buildings))


@dataclass(frozen=True)
class Diagnostic:
    """Problem found by :func:`validate_scene`; ``building`` may be None"""

    building: object
    reason: str

    def __str__(self):
        where = "scene" if self.building is None else f"building {self.building}"
        return f"{where}: {self.reason}"


def _footprint_diagnostics(index, building):
    coords = [tuple(map(float, v)) for v in building.footprint]
    if len(coords) > 1 and coords[0] == coords[-1]:
        coords = coords[:-1]
    if len(coords) < 3:
        return [Diagnostic(index, "degenerate polygon")]

    diagnostics = []
    ring = LinearRing(coords)
    if not ring.is_simple or building.polygon.area == 0.0:
        diagnostics.append(Diagnostic(index, "self-intersecting footprint"))
    elif not ring.is_ccw:
        diagnostics.append(Diagnostic(index, "orientation normalized"))
    return diagnostics


def validate_scene(scene):
    """
    Check a scene against its invariants

    Parameters:
        scene (:obj:`Scene`): scene to check

    Returns:
        :obj:`list`: :obj:`Diagnostic` records, empty when the scene is valid
    """
    diagnostics = []
    for index, building in enumerate(scene.buildings):
        diagnostics.extend(_footprint_diagnostics(index, building))
        if not building.height > 0:
            diagnostics.append(Diagnostic(index, "non-positive height"))
        if building.reflection_loss_db < 0:
            diagnostics.append(Diagnostic(index, "negative reflection loss"))

    if not scene.tx.z > 0:
        diagnostics.append(Diagnostic(None, "tx at or below ground"))
    if not scene.frequency > 0:
        diagnostics.append(Diagnostic(None, "non-positive frequency"))

    tx_point = Point(scene.tx.x, scene.tx.y)
    for index, building in enumerate(scene.buildings):
        if len(building.footprint) < 3:
            continue
        if building.polygon.contains(tx_point) and scene.tx.z < building.height:
            diagnostics.append(Diagnostic(index, "tx embedded in geometry"))
    return diagnostics


def _normalized(building):
    coords = tuple(tuple(map(float, v)) for v in building.footprint)
    if coords[0] == coords[-1]:
        coords = coords[:-1]
    if not LinearRing(coords).is_ccw:
        coords = tuple(reversed(coords))
    return Building(coords, building.height, building.reflection_loss_db)


def _parse_building(index, entry):
    unknown = set(entry) - _BUILDING_FIELDS
    if unknown:
        logger.warning("building %d: ignoring fields %s", index, sorted(unknown))
    try:
        footprint = tuple((float(x), float(y)) for x, y in entry["footprint"])
        height = float(entry["height_m"])
        loss = float(entry.get("reflection_loss_db", DEFAULT_REFLECTION_LOSS_DB))
    except (KeyError, TypeError, ValueError) as err:
        raise ValueError(f"building {index}: could not parse ({err})") from err
    return Building(footprint, height, loss)


def read_scene(path):
    """Parse a scene document without validating it, see :func:`load_scene`"""
    if not os.path.exists(path):
        raise FileNotFoundError(f"scene '{path}' does not exist")
    with open(path, "r", encoding="utf-8") as f:
        try:
            document = json.load(f)
        except json.JSONDecodeError as err:
            raise ValueError(f"could not parse scene '{path}': {err}") from err

    unknown = set(document) - _SCENE_FIELDS
    if unknown:
        logger.warning("scene '%s': ignoring fields %s", path, sorted(unknown))
    try:
        tx = Vec3(*(float(document["tx"][k]) for k in ("x", "y", "z")))
        frequency = float(document["frequency_hz"])
        entries = document.get("buildings", [])
    except (KeyError, TypeError, ValueError) as err:
        raise ValueError(f"could not parse scene '{path}': {err}") from err

    buildings = tuple(_parse_building(i, e) for i, e in enumerate(entries))
    return Scene(buildings, tx, frequency)


def is_fatal(diagnostic):
    return diagnostic.reason not in _WARNINGS


def load_scene(path):
    """
    Load and validate a scene document

    The document is JSON with ``frequency_hz``, ``tx`` (``{x, y, z}``) and
    ``buildings`` (list of ``{footprint, height_m, reflection_loss_db}``).
    Footprints are returned counterclockwise.

    Parameters:
        path (:obj:`str`): path to the scene file

    Returns:
        :obj:`Scene`: validated scene

    Raises:
        FileNotFoundError: when ``path`` does not exist
        ValueError: when the file cannot be parsed or a building is invalid
    """
    scene = read_scene(path)
    buildings, tx, frequency = scene.buildings, scene.tx, scene.frequency

    for diagnostic in validate_scene(scene):
        if not is_fatal(diagnostic):
            logger.warning("scene '%s': %s", path, diagnostic)
            continue
        raise ValueError(f"scene '{path}': {diagnostic}")

    if not THZ_BAND[0] < frequency < THZ_BAND[1]:
        logger.warning("frequency %.4g Hz is outside the THz band", frequency)

    return Scene(tuple(_normalized(b) for b in buildings), tx, frequency)


def save_scene(scene, path):
    """Write ``scene`` in the format read by :func:`load_scene`"""
    document = {
        "frequency_hz": scene.frequency,
        "tx": {"x": scene.tx.x, "y": scene.tx.y, "z": scene.tx.z},
        "buildings": [
            {
                "footprint": [list(v) for v in b.footprint],
                "height_m": b.height,
                "reflection_loss_db": b.reflection_loss_db,
            }
            for b in scene.buildings
        ],
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(document, f, indent=2)
