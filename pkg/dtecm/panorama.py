"""
Panorama processing for the foliage digital twin.

Pixels of an equirectangular panorama are mapped to camera directions, the
camera pose is corrected with a z-y-z rotation fitted on reference points,
and foliage is told apart from other objects by a color-difference KNN.
"""

import logging
import os
import warnings
from dataclasses import dataclass
from enum import IntEnum

import numpy as np
import pandas as pd
from PIL import Image
from scipy.optimize import minimize
from scipy.spatial.transform import Rotation
from sklearn.metrics import accuracy_score
from sklearn.model_selection import train_test_split

from .scene import Direction, great_circle, unit_vectors, vector_angles, wrap_azimuth

logger = logging.getLogger(__name__)

REFERENCE_COLOR = (63, 71, 204)
PREFILTER_THRESHOLD = 50.0
N_NEIGHBORS = 22

POSE_GRID_STEP_DEG = 2.0
POSE_REFINE_TOLERANCE_DEG = 0.01
DEGENERATE_SPREAD_DEG = 1.0

# bound on query x training color pairs held in memory at once
_KNN_BLOCK = 2_000_000


class PixelClass(IntEnum):
    NON_FOLIAGE = 0
    FOLIAGE = 1


@dataclass(frozen=True)
class ErpParams:
    """
    Equirectangular projection of a panorama

    Pixel ``(0, 0)`` is the bottom-right pixel of the stored image, ``x``
    counts columns to the left and ``y`` rows upward. ``phi0`` and ``theta0``
    are the camera angles of that pixel; ``dphi`` and ``dtheta`` are signed
    steps per pixel along ``x`` and ``y``.
    """

    width: int
    height: int
    dphi: float
    dtheta: float
    phi0: float
    theta0: float

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("panorama dimensions must be positive")
        if abs(self.width * self.dphi) > 360.0 + 1e-6:
            raise ValueError("width * dphi exceeds 360 degrees")
        if abs(self.height * self.dtheta) > 180.0 + 1e-6:
            raise ValueError("height * dtheta exceeds 180 degrees")

    @classmethod
    def panorama(cls, width, height):
        """
        Full-sphere panorama as usually stored: the top row looks at the
        zenith and azimuth decreases from left to right in the image
        """
        dphi = 360.0 / width
        dtheta = 180.0 / height
        return cls(width, height, dphi, dtheta, -180.0 + dphi / 2, -90.0 + dtheta / 2)

    @classmethod
    def from_config(cls, section, width=None, height=None):
        width = int(width or section["width"])
        height = int(height or section["height"])
        if section.get("dphi") is None:
            return cls.panorama(width, height)
        return cls(
            width,
            height,
            float(section["dphi"]),
            float(section["dtheta"]),
            float(section["phi0"]),
            float(section["theta0"]),
        )


@dataclass(frozen=True)
class PoseRotation:
    """z-y-z rotation taking camera directions to the world frame, degrees"""

    alpha_z1: float = 0.0
    alpha_y: float = 0.0
    alpha_z2: float = 0.0

    def __post_init__(self):
        for name in ("alpha_z1", "alpha_y", "alpha_z2"):
            object.__setattr__(self, name, float(wrap_azimuth(getattr(self, name))))

    @property
    def rotation(self):
        angles = [self.alpha_z1, self.alpha_y, self.alpha_z2]
        return Rotation.from_euler("zyz", angles, degrees=True)

    def inverse(self):
        return PoseRotation(-self.alpha_z2, -self.alpha_y, -self.alpha_z1)

    @classmethod
    def from_rotation(cls, rotation):
        with warnings.catch_warnings():
            # gimbal lock sets the last angle to zero, which is what we want
            warnings.simplefilter("ignore", UserWarning)
            a1, ay, a2 = rotation.as_euler("zyz", degrees=True)
        return cls(a1, ay, a2)


@dataclass(frozen=True)
class PoseFit:
    pose: PoseRotation
    residual_rms_deg: float


def erp_to_camera(x, y, erp):
    """Vectorized form of :func:`erp_pixel_to_camera` returning arrays"""
    x = np.asarray(x)
    y = np.asarray(y)
    if np.any((x < 0) | (x >= erp.width) | (y < 0) | (y >= erp.height)):
        raise ValueError("pixel outside the panorama")
    azimuth = wrap_azimuth(x * erp.dphi + erp.phi0)
    elevation = np.clip(y * erp.dtheta + erp.theta0, -90.0, 90.0)
    return azimuth, elevation


def erp_pixel_to_camera(x, y, erp):
    """
    Camera-frame direction of panorama pixel ``(x, y)``

    Parameters:
        x (:obj:`int`): pixel column
        y (:obj:`int`): pixel row
        erp (:obj:`ErpParams`): projection parameters

    Returns:
        :obj:`Direction`: camera-frame direction

    Raises:
        ValueError: when the pixel lies outside the panorama
    """
    azimuth, elevation = erp_to_camera(x, y, erp)
    return Direction.wrapped(float(azimuth), float(elevation))


def rotate_directions(pose, azimuth, elevation):
    """Apply ``pose`` to arrays of directions, returning wrapped arrays"""
    vectors = unit_vectors(azimuth, elevation)
    shape = vectors.shape
    rotated = pose.rotation.apply(vectors.reshape(-1, 3)).reshape(shape)
    return vector_angles(rotated)


def rotate_zyz(pose, direction):
    """
    Rotate a direction by ``alpha_z1`` about z, ``alpha_y`` about y and
    ``alpha_z2`` about z, in that order

    Parameters:
        pose (:obj:`PoseRotation`): rotation angles
        direction (:obj:`Direction`): direction to rotate

    Returns:
        :obj:`Direction`: rotated direction
    """
    azimuth, elevation = rotate_directions(
        pose, direction.azimuth, direction.elevation
    )
    return Direction.wrapped(float(azimuth), float(elevation))


def _reference_vectors(refs):
    camera = np.array([d.unit() for d, _ in refs])
    world = np.array([d.unit() for _, d in refs])
    return camera, world


def _spans_sphere(vectors):
    # smallest singular vector is the normal of the best-fitting great circle
    _, _, vt = np.linalg.svd(vectors)
    offsets = np.abs(vectors @ vt[-1])
    return np.max(offsets) >= np.sin(np.radians(DEGENERATE_SPREAD_DEG))


def _cost(rotation, camera, world):
    return float(np.sum(great_circle(rotation.apply(camera), world) ** 2))


def _grid_search(camera, world, step):
    first = np.arange(-180.0, 180.0, step)
    middle = np.arange(0.0, 180.0 + step / 2, step)
    b, c = np.meshgrid(middle, first, indexing="ij")
    best_cost, best_angles = np.inf, (0.0, 0.0, 0.0)
    for a1 in first:
        angles = np.column_stack([np.full(b.size, a1), b.ravel(), c.ravel()])
        matrices = Rotation.from_euler("zyz", angles, degrees=True).as_matrix()
        rotated = np.einsum("kij,nj->kni", matrices, camera)
        cost = np.sum(great_circle(rotated, world[None, :, :]) ** 2, axis=1)
        k = int(np.argmin(cost))
        if cost[k] < best_cost:
            best_cost, best_angles = cost[k], tuple(angles[k])
    return Rotation.from_euler("zyz", best_angles, degrees=True)


def _refine(start, camera, world):
    def objective(rotvec):
        return _cost(Rotation.from_rotvec(rotvec) * start, camera, world)

    result = minimize(
        objective,
        np.zeros(3),
        method="Nelder-Mead",
        options={
            "xatol": np.radians(POSE_REFINE_TOLERANCE_DEG) * 1e-4,
            "fatol": 1e-18,
            "maxiter": 4000,
        },
    )
    return Rotation.from_rotvec(result.x) * start


def pose_residuals(pose, refs):
    """Great-circle residuals in degrees of reference pairs under ``pose``"""
    camera, world = _reference_vectors(refs)
    return np.degrees(great_circle(pose.rotation.apply(camera), world))


def solve_pose(refs, grid_step=POSE_GRID_STEP_DEG):
    """
    Fit the camera pose from reference directions

    The pose minimizes the sum of squared great-circle distances between the
    rotated camera directions and the known world directions. A coarse grid
    over all three angles seeds a local refinement.

    Parameters:
        refs (:obj:`list`): ``(camera Direction, world Direction)`` pairs
        grid_step (:obj:`float`): coarse grid step, degrees

    Returns:
        :obj:`PoseFit`: pose and RMS residual in degrees

    Raises:
        ValueError: fewer than three pairs, or pairs lying on one great circle
    """
    if len(refs) < 3:
        raise ValueError("at least 3 reference points are required")
    camera, world = _reference_vectors(refs)
    if not (_spans_sphere(camera) and _spans_sphere(world)):
        raise ValueError("degenerate reference configuration")

    candidates = [_grid_search(camera, world, grid_step)]
    aligned, _ = Rotation.align_vectors(world, camera)
    candidates.append(aligned)
    start = min(candidates, key=lambda r: _cost(r, camera, world))
    rotation = _refine(start, camera, world)

    pose = PoseRotation.from_rotation(rotation)
    rms = float(np.sqrt(np.mean(pose_residuals(pose, refs) ** 2)))
    logger.info("camera pose %s, residual RMS %.4f deg", pose, rms)
    return PoseFit(pose, rms)


def color_difference(c1, c2):
    """
    Weighted-Euclidean RGB color difference

    Both arguments broadcast against each other along leading axes; the last
    axis holds the red, green and blue components in [0, 255].

    Raises:
        ValueError: for components outside [0, 255]
    """
    c1 = np.asarray(c1, dtype=float)
    c2 = np.asarray(c2, dtype=float)
    for c in (c1, c2):
        if np.any((c < 0) | (c > 255)):
            raise ValueError("color components must lie in [0, 255]")
    r_mean = (c1[..., 0] + c2[..., 0]) / 2.0
    delta = c1 - c2
    squared = (
        (2.0 + r_mean / 256.0) * delta[..., 0] ** 2
        + 4.0 * delta[..., 1] ** 2
        + (2.0 + (255.0 - r_mean) / 256.0) * delta[..., 2] ** 2
    )
    result = np.sqrt(squared)
    return float(result) if result.ndim == 0 else result


def prefilter_foliage(image, ref_color=REFERENCE_COLOR, threshold=PREFILTER_THRESHOLD):
    """
    Pixels close to the highlighting color

    Parameters:
        image (:obj:`numpy.ndarray`): RGB array of shape ``(height, width, 3)``
        ref_color (:obj:`tuple`): highlighting color
        threshold (:obj:`float`): color-difference threshold

    Returns:
        :obj:`numpy.ndarray`: ``(N, 2)`` array of ``(x, y)`` pixel coordinates
        ordered by row, then column

    Raises:
        ValueError: for an empty image
    """
    image = np.asarray(image)
    if image.size == 0:
        raise ValueError("empty image")
    rows_per_block = max(1, _KNN_BLOCK // max(1, image.shape[1]))
    selected = []
    for start in range(0, image.shape[0], rows_per_block):
        block = image[start : start + rows_per_block]
        hit = np.argwhere(color_difference(block, ref_color) < threshold)
        hit[:, 0] += start
        selected.append(hit)
    rows_cols = np.concatenate(selected)
    return rows_cols[:, ::-1].copy()


@dataclass(frozen=True, eq=False)
class LabeledPixels:
    """Manually labeled training pixels: coordinates, classes and colors"""

    pixels: np.ndarray
    labels: np.ndarray
    colors: np.ndarray

    def __post_init__(self):
        if not len(self.pixels) == len(self.labels) == len(self.colors):
            raise ValueError("pixels, labels and colors differ in length")

    def __len__(self):
        return len(self.labels)

    @classmethod
    def from_image(cls, pixels, labels, image):
        pixels = np.asarray(pixels, dtype=int).reshape(-1, 2)
        colors = np.asarray(image)[pixels[:, 1], pixels[:, 0]]
        return cls(pixels, np.asarray(labels, dtype=int), colors)

    def subset(self, index):
        return LabeledPixels(self.pixels[index], self.labels[index], self.colors[index])

    def check_classes(self):
        present = set(np.unique(self.labels).tolist())
        if present != {PixelClass.NON_FOLIAGE, PixelClass.FOLIAGE}:
            raise ValueError("both classes required in the labeled pixels")


class FoliageClassifier:
    """
    KNN over the color difference metric

    Neighbors at equal distance are ordered by their training index and a
    tied vote yields :attr:`PixelClass.NON_FOLIAGE`.

    Parameters:
        training (:obj:`LabeledPixels`): labeled samples
        n_neighbors (:obj:`int`): number of neighbors voting

    Raises:
        ValueError: empty training set or ``n_neighbors`` out of range
    """

    def __init__(self, training, n_neighbors=N_NEIGHBORS):
        if len(training) == 0:
            raise ValueError("empty training set")
        if not 1 <= n_neighbors <= len(training):
            raise ValueError(
                f"n_neighbors must lie in [1, {len(training)}], got {n_neighbors}"
            )
        self.colors = np.asarray(training.colors, dtype=float)
        self.labels = np.asarray(training.labels, dtype=int)
        self.n_neighbors = int(n_neighbors)

    def predict(self, colors):
        colors = np.asarray(colors, dtype=float).reshape(-1, 3)
        result = np.empty(len(colors), dtype=int)
        block = max(1, _KNN_BLOCK // len(self.colors))
        for start in range(0, len(colors), block):
            query = colors[start : start + block]
            distance = color_difference(query[:, None, :], self.colors[None, :, :])
            nearest = np.argsort(distance, axis=1, kind="stable")[:, : self.n_neighbors]
            votes = self.labels[nearest].sum(axis=1)
            result[start : start + block] = np.where(
                2 * votes > self.n_neighbors, PixelClass.FOLIAGE, PixelClass.NON_FOLIAGE
            )
        return result


def knn_classify(query, training, n_neighbors=N_NEIGHBORS):
    """Class of a single RGB ``query`` color, see :class:`FoliageClassifier`"""
    label = FoliageClassifier(training, n_neighbors).predict(query)[0]
    return PixelClass(int(label))


def split_labels(labeled, train_fraction=0.6, seed=0):
    """Seeded stratified split of labeled pixels into ``(train, test)``"""
    labeled.check_classes()
    index = np.arange(len(labeled))
    train, test = train_test_split(
        index, train_size=train_fraction, random_state=seed, stratify=labeled.labels
    )
    return labeled.subset(np.sort(train)), labeled.subset(np.sort(test))


def knn_accuracy(train, test, neighbors):
    """
    Test accuracy of the classifier for each neighbor count

    Parameters:
        train (:obj:`LabeledPixels`): training split
        test (:obj:`LabeledPixels`): held-out split
        neighbors (:obj:`list`): neighbor counts to try

    Returns:
        :obj:`list`: ``{"n_neighbors", "accuracy"}`` rows
    """
    rows = []
    for n in neighbors:
        if not 1 <= n <= len(train):
            logger.warning(
                "skipping n_neighbors %d for %d training pixels", n, len(train)
            )
            continue
        predicted = FoliageClassifier(train, n).predict(test.colors)
        accuracy = float(accuracy_score(test.labels, predicted))
        rows.append({"n_neighbors": int(n), "accuracy": accuracy})
    return rows


def load_panorama(path):
    """
    Read an RGB raster as a ``(height, width, 3)`` uint8 array

    The array is indexed ``[y, x]`` in panorama pixel coordinates, so
    ``[0, 0]`` is the bottom-right pixel of the stored image.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"panorama '{path}' does not exist")
    with Image.open(path) as image:
        stored = np.asarray(image.convert("RGB"), dtype=np.uint8)
    return np.ascontiguousarray(stored[::-1, ::-1])


def load_refs(path, erp):
    """
    Read reference points and map them to ``(camera, world)`` pairs

    The CSV columns are ``name,pixel_x,pixel_y,world_az_deg,world_el_deg``.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"reference file '{path}' does not exist")
    table = pd.read_csv(path)
    pairs = []
    for row in table.itertuples(index=False):
        camera = erp_pixel_to_camera(int(row.pixel_x), int(row.pixel_y), erp)
        world = Direction.wrapped(float(row.world_az_deg), float(row.world_el_deg))
        pairs.append((camera, world))
    return pairs


def load_labels(path, image):
    """Read ``pixel_x,pixel_y,class`` labels, taking colors from ``image``"""
    if not os.path.exists(path):
        raise FileNotFoundError(f"label file '{path}' does not exist")
    table = pd.read_csv(path)
    if not set(table["class"].unique()) <= {0, 1}:
        raise ValueError("label classes must be 0 (non-foliage) or 1 (foliage)")
    pixels = table[["pixel_x", "pixel_y"]].to_numpy(dtype=int)
    return LabeledPixels.from_image(pixels, table["class"].to_numpy(dtype=int), image)
