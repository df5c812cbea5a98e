"""
Angular-domain digital twin of foliage and the foliage loss it predicts.

The twin is a boolean grid over world azimuth and elevation. The foliage
coverage ratio (FCR) of a direction is the foliage fraction of the grid cells
within a beam-footprint window around it, and the excess path gain follows a
segmented linear function of the FCR.
"""

import json
import logging
import os
from dataclasses import asdict, dataclass, field

import numpy as np
from PIL import Image
from scipy.optimize import minimize_scalar

from .panorama import (
    N_NEIGHBORS,
    PREFILTER_THRESHOLD,
    REFERENCE_COLOR,
    ErpParams,
    FoliageClassifier,
    PixelClass,
    PoseRotation,
    erp_to_camera,
    prefilter_foliage,
    rotate_directions,
)
from .scene import wrap_azimuth

logger = logging.getLogger(__name__)

DEFAULT_RESOLUTION_DEG = 0.1
MIN_FIT_SAMPLES = 10


@dataclass(frozen=True)
class FoliageLossModel:
    """
    Segmented linear foliage loss

    The output is a path gain adjustment in dB, so the negative ``slope``
    attenuates.
    """

    slope: float = -30.0
    r_th: float = 0.337
    mu_chi: float = -0.15
    sigma_chi: float = 4.31
    phi_th: float = 3.9

    def __post_init__(self):
        if not 0.0 <= self.r_th <= 1.0:
            raise ValueError(f"r_th {self.r_th} outside [0, 1]")
        if self.sigma_chi < 0:
            raise ValueError("sigma_chi must be non-negative")
        if not self.phi_th > 0:
            raise ValueError("phi_th must be positive")

    def draw_chi(self, rng):
        return float(rng.normal(self.mu_chi, self.sigma_chi))


@dataclass(frozen=True, eq=False)
class FoliageTwin:
    """
    World-frame foliage mask

    ``mask[i, j]`` covers elevation ``-90 + i * resolution`` and azimuth
    ``-180 + j * resolution`` (lower cell edges). The mask is read-only.
    """

    mask: np.ndarray
    resolution: float = DEFAULT_RESOLUTION_DEG
    pose: PoseRotation = PoseRotation()
    erp: ErpParams = None
    loss_model: FoliageLossModel = field(default_factory=FoliageLossModel)

    def __post_init__(self):
        mask = np.array(self.mask, dtype=bool)
        if mask.shape != grid_shape(self.resolution):
            raise ValueError(
                f"mask shape {mask.shape} does not match resolution {self.resolution}"
            )
        mask.flags.writeable = False
        object.__setattr__(self, "mask", mask)

    @classmethod
    def uniform(cls, value, resolution=DEFAULT_RESOLUTION_DEG, **kwargs):
        """Twin that is entirely foliage (``True``) or entirely clear"""
        return cls(np.full(grid_shape(resolution), bool(value)), resolution, **kwargs)

    def cell_centers(self):
        rows, cols = self.mask.shape
        elevation = -90.0 + (np.arange(rows) + 0.5) * self.resolution
        azimuth = -180.0 + (np.arange(cols) + 0.5) * self.resolution
        return azimuth, elevation


def grid_shape(resolution):
    """Mask shape ``(elevation cells, azimuth cells)`` for a resolution"""
    if not resolution > 0:
        raise ValueError("resolution must be positive")
    rows = int(round(180.0 / resolution))
    cols = int(round(360.0 / resolution))
    if abs(rows * resolution - 180.0) > 1e-6 or abs(cols * resolution - 360.0) > 1e-6:
        raise ValueError(f"resolution {resolution} does not divide 180 degrees")
    return rows, cols


def rasterize(azimuth, elevation, resolution):
    """Boolean mask with the cells containing the given directions set"""
    rows, cols = grid_shape(resolution)
    mask = np.zeros((rows, cols), dtype=bool)
    i = np.clip(np.floor((np.asarray(elevation) + 90.0) / resolution), 0, rows - 1)
    j = np.floor((wrap_azimuth(azimuth) + 180.0) / resolution) % cols
    mask[i.astype(int), j.astype(int)] = True
    return mask


def build_twin(
    image,
    erp,
    pose,
    training,
    ref_color=REFERENCE_COLOR,
    threshold=PREFILTER_THRESHOLD,
    n_neighbors=N_NEIGHBORS,
    resolution=DEFAULT_RESOLUTION_DEG,
    loss_model=None,
):
    """
    Build the foliage twin of an annotated panorama

    Prefiltered pixels are classified with the KNN, and foliage pixels are
    mapped through the projection and the pose into world directions that
    are rasterized into the mask.

    Parameters:
        image (:obj:`numpy.ndarray`): RGB panorama, ``(height, width, 3)``
        erp (:obj:`ErpParams`): projection of ``image``
        pose (:obj:`PoseRotation`): camera pose
        training (:obj:`LabeledPixels`): KNN training samples
        ref_color (:obj:`tuple`): highlighting color of the prefilter
        threshold (:obj:`float`): prefilter color-difference threshold
        n_neighbors (:obj:`int`): KNN neighbors
        resolution (:obj:`float`): mask cell size, degrees
        loss_model (:obj:`FoliageLossModel` | :obj:`None`): stored in the twin

    Returns:
        :obj:`FoliageTwin`: the twin
    """
    image = np.asarray(image)
    if image.shape[:2] != (erp.height, erp.width):
        raise ValueError(
            f"image shape {image.shape[:2]} does not match projection "
            f"({erp.height}, {erp.width})"
        )
    loss_model = loss_model or FoliageLossModel()
    if resolution > loss_model.phi_th:
        logger.warning(
            "twin resolution %.3g deg is coarser than the %.3g deg window",
            resolution,
            loss_model.phi_th,
        )

    candidates = prefilter_foliage(image, ref_color, threshold)
    logger.info("%d prefiltered pixels", len(candidates))
    if len(candidates) == 0:
        return FoliageTwin.uniform(
            False, resolution, pose=pose, erp=erp, loss_model=loss_model
        )

    training.check_classes()
    classifier = FoliageClassifier(training, n_neighbors)
    colors = image[candidates[:, 1], candidates[:, 0]]
    foliage = candidates[classifier.predict(colors) == PixelClass.FOLIAGE]
    logger.info("%d pixels classified as foliage", len(foliage))

    azimuth, elevation = erp_to_camera(foliage[:, 0], foliage[:, 1], erp)
    azimuth, elevation = rotate_directions(pose, azimuth, elevation)
    mask = rasterize(azimuth, elevation, resolution)
    return FoliageTwin(mask, resolution, pose, erp, loss_model)


def compute_fcr(twin, center, phi_th=None):
    """
    Foliage coverage ratio of the window around ``center``

    The window holds the cells whose centers satisfy
    ``sqrt(wrap(az - az_c)^2 + (el - el_c)^2) < phi_th``.

    Parameters:
        twin (:obj:`FoliageTwin`): foliage twin
        center (:obj:`Direction`): window center
        phi_th (:obj:`float` | :obj:`None`): window radius in degrees,
            defaults to the twin's loss model

    Returns:
        :obj:`float`: ratio in [0, 1]

    Raises:
        ValueError: for a non-positive radius or a window without cells
    """
    phi_th = twin.loss_model.phi_th if phi_th is None else phi_th
    if not phi_th > 0:
        raise ValueError("phi_th must be positive")
    azimuth, elevation = twin.cell_centers()
    d_el = elevation - center.elevation
    d_az = wrap_azimuth(azimuth - center.azimuth)
    rows = np.flatnonzero(np.abs(d_el) < phi_th)
    cols = np.flatnonzero(np.abs(d_az) < phi_th)
    inside = np.hypot(d_el[rows, None], d_az[None, cols]) < phi_th
    total = int(np.count_nonzero(inside))
    if total == 0:
        raise ValueError(f"window of {phi_th} deg contains no twin cells")
    covered = int(np.count_nonzero(twin.mask[np.ix_(rows, cols)] & inside))
    return covered / total


def foliage_loss(fcr, model, chi=None):
    """
    Path gain adjustment in dB for a foliage coverage ratio

    Zero below ``r_th`` and ``slope * (fcr - r_th)`` above it, plus ``chi``
    when a draw is given. The value is added to a path gain in dB.

    Raises:
        ValueError: for ``fcr`` outside [0, 1]
    """
    if not 0.0 <= fcr <= 1.0:
        raise ValueError(f"fcr {fcr} outside [0, 1]")
    deterministic = 0.0 if fcr < model.r_th else model.slope * (fcr - model.r_th)
    return deterministic + (0.0 if chi is None else chi)


@dataclass(frozen=True)
class _SegmentFit:
    r_th: float
    slope: float
    intercept: float
    sigma: float


def _fit_at(fcr, gain, r_th):
    below = fcr < r_th
    if below.all() or not below.any():
        return None
    x = np.maximum(fcr - r_th, 0.0)
    design = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(design, gain, rcond=None)
    residual = gain - design @ np.array([slope, intercept])
    sigma = float(np.std(residual))
    return _SegmentFit(float(r_th), float(slope), float(intercept), sigma)


def fit_foliage_loss(samples, phi_th=3.9, candidates=None):
    """
    Fit the segmented linear model to ``(fcr, excess gain dB)`` samples

    For each candidate segment point a least-squares line is fitted to the
    samples above it, with the level below it as intercept; the candidate
    with the smallest residual standard deviation wins and is refined
    between its grid neighbors.

    Parameters:
        samples (:obj:`list`): ``(fcr, excess gain)`` pairs
        phi_th (:obj:`float`): window radius the samples were computed with
        candidates (:obj:`numpy.ndarray` | :obj:`None`): segment points to
            try, defaults to a 0.001 grid over [0, 1]

    Returns:
        :obj:`FoliageLossModel`: fitted model

    Raises:
        ValueError: fewer than 10 samples, or no candidate with samples on
            both sides
    """
    samples = np.asarray(samples, dtype=float).reshape(-1, 2)
    if len(samples) < MIN_FIT_SAMPLES:
        raise ValueError(f"at least {MIN_FIT_SAMPLES} samples are required")
    fcr, gain = samples[:, 0], samples[:, 1]
    grid = np.linspace(0.0, 1.0, 1001) if candidates is None else np.asarray(candidates)

    fits = [f for f in (_fit_at(fcr, gain, r) for r in grid) if f is not None]
    if not fits:
        raise ValueError("samples do not span both sides of any segment point")
    best = min(fits, key=lambda f: f.sigma)

    step = float(np.min(np.diff(grid))) if len(grid) > 1 else 0.0
    if step > 0:

        def sigma(r_th):
            fit = _fit_at(fcr, gain, r_th)
            return np.inf if fit is None else fit.sigma

        lower = max(0.0, best.r_th - step)
        upper = min(1.0, best.r_th + step)
        refined = minimize_scalar(sigma, bounds=(lower, upper), method="bounded")
        fit = _fit_at(fcr, gain, float(refined.x))
        if fit is not None and fit.sigma < best.sigma:
            best = fit

    return FoliageLossModel(
        slope=best.slope,
        r_th=min(max(best.r_th, 0.0), 1.0),
        mu_chi=best.intercept,
        sigma_chi=best.sigma,
        phi_th=phi_th,
    )


def select_window(sample_sets):
    """
    Choose the window radius whose fitted model has the smallest spread

    Parameters:
        sample_sets (:obj:`dict`): ``{phi_th: samples}``

    Returns:
        :obj:`tuple`: ``(phi_th, FoliageLossModel)``
    """
    if not sample_sets:
        raise ValueError("no sample sets given")
    fits = {
        phi_th: fit_foliage_loss(samples, phi_th=phi_th)
        for phi_th, samples in sample_sets.items()
    }
    for phi_th, model in sorted(fits.items()):
        logger.debug("phi_th %.2f deg: sigma_chi %.3f dB", phi_th, model.sigma_chi)
    phi_th = min(fits, key=lambda k: fits[k].sigma_chi)
    return phi_th, fits[phi_th]


def _mask_path(path):
    return os.path.splitext(path)[0] + "_mask.png"


def save_twin(twin, path):
    """
    Write the twin as a JSON metadata document and a PNG mask

    The mask is stored next to ``path`` as ``<stem>_mask.png`` with the
    zenith on the top row.
    """
    metadata = {
        "resolution_deg": twin.resolution,
        "pose": asdict(twin.pose),
        "erp": None if twin.erp is None else asdict(twin.erp),
        "loss_model": asdict(twin.loss_model),
        "mask": os.path.basename(_mask_path(path)),
    }
    pixels = np.flipud(twin.mask).astype(np.uint8) * 255
    Image.fromarray(pixels, mode="L").save(_mask_path(path))
    with open(path, "w", encoding="utf-8") as f:
        json.dump(metadata, f, indent=2)


def load_twin(path):
    """Read a twin written by :func:`save_twin`"""
    if not os.path.exists(path):
        raise FileNotFoundError(f"twin '{path}' does not exist")
    with open(path, "r", encoding="utf-8") as f:
        metadata = json.load(f)
    mask_path = os.path.join(os.path.dirname(path), metadata["mask"])
    with Image.open(mask_path) as image:
        mask = np.flipud(np.asarray(image.convert("L")) > 127)
    erp = metadata.get("erp")
    return FoliageTwin(
        mask,
        float(metadata["resolution_deg"]),
        PoseRotation(**metadata["pose"]),
        None if erp is None else ErpParams(**erp),
        FoliageLossModel(**metadata["loss_model"]),
    )
