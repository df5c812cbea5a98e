"""Builders for the synthetic inputs used in the tests"""

import os

import numpy as np
import pandas as pd
from PIL import Image

from dtecm.foliage import FoliageTwin, grid_shape
from dtecm.panorama import REFERENCE_COLOR, ErpParams, erp_pixel_to_camera, rotate_zyz
from dtecm.scene import Direction
from dtecm.synthesis import Mpc

DATA_DIR = os.path.dirname(os.path.abspath(__file__))
SCENE_PATH = os.path.join(DATA_DIR, "campus_scene.json")
ROUTE_PATH = os.path.join(DATA_DIR, "route.csv")

FOLIAGE_COLOR = REFERENCE_COLOR
# highlighted by the prefilter but not foliage
OTHER_COLOR = (75, 80, 200)
WHITE = (255, 255, 255)

PANORAMA_WIDTH = 360
PANORAMA_HEIGHT = 180
# pixel blocks (x0, x1, y0, y1), end exclusive
FOLIAGE_BLOCK = (40, 80, 85, 100)
OTHER_BLOCK = (200, 230, 60, 80)


def patch_twin(
    resolution=0.5, azimuth=(100.0, 130.0), elevation=(-8.0, -2.0), **kwargs
):
    """Twin with foliage over one azimuth/elevation rectangle"""
    mask = np.zeros(grid_shape(resolution), dtype=bool)
    rows, cols = mask.shape
    az = -180.0 + (np.arange(cols) + 0.5) * resolution
    el = -90.0 + (np.arange(rows) + 0.5) * resolution
    inside_az = (az >= azimuth[0]) & (az <= azimuth[1])
    inside_el = (el >= elevation[0]) & (el <= elevation[1])
    mask[np.ix_(inside_el, inside_az)] = True
    return FoliageTwin(mask, resolution, **kwargs)


def half_twin(resolution=0.5):
    """Twin with foliage wherever the azimuth is negative"""
    mask = np.zeros(grid_shape(resolution), dtype=bool)
    mask[:, : mask.shape[1] // 2] = True
    return FoliageTwin(mask, resolution)


def make_mpc(
    gain_db=-100.0,
    delay=0.0,
    aoa=(0.0, 0.0),
    aod=(0.0, 0.0),
    phase=0.0,
    origin="stochastic",
):
    return Mpc(
        gain_db=gain_db,
        phase=phase,
        delay=delay,
        aod=Direction.wrapped(*aod),
        aoa=Direction.wrapped(*aoa),
        origin=origin,
    )


def panorama_image():
    """White panorama with one foliage block and one other highlighted block"""
    image = np.full((PANORAMA_HEIGHT, PANORAMA_WIDTH, 3), WHITE, dtype=np.uint8)
    x0, x1, y0, y1 = FOLIAGE_BLOCK
    image[y0:y1, x0:x1] = FOLIAGE_COLOR
    x0, x1, y0, y1 = OTHER_BLOCK
    image[y0:y1, x0:x1] = OTHER_COLOR
    return image


def panorama_erp():
    return ErpParams.panorama(PANORAMA_WIDTH, PANORAMA_HEIGHT)


REF_PIXELS = [(10, 20), (100, 90), (190, 150), (280, 45), (330, 120), (60, 170)]


def write_panorama_inputs(directory, pose=None):
    """
    Write the panorama, reference and label files into ``directory``

    World directions of the references follow ``pose`` (identity when
    :obj:`None`). Returns the three paths.
    """
    erp = panorama_erp()
    image_path = os.path.join(directory, "panorama.png")
    # stored images keep the reference pixel in the bottom-right corner
    stored = np.ascontiguousarray(panorama_image()[::-1, ::-1])
    Image.fromarray(stored, mode="RGB").save(image_path)

    rows = []
    for index, (x, y) in enumerate(REF_PIXELS):
        camera = erp_pixel_to_camera(x, y, erp)
        world = camera if pose is None else rotate_zyz(pose, camera)
        rows.append(
            {
                "name": f"ref{index}",
                "pixel_x": x,
                "pixel_y": y,
                "world_az_deg": world.azimuth,
                "world_el_deg": world.elevation,
            }
        )
    refs_path = os.path.join(directory, "refs.csv")
    pd.DataFrame(rows).to_csv(refs_path, index=False)

    labels = []
    fx0, fx1, fy0, fy1 = FOLIAGE_BLOCK
    ox0, ox1, oy0, oy1 = OTHER_BLOCK
    for k in range(30):
        foliage = (fx0 + k, fy0 + k % (fy1 - fy0))
        labels.append({"pixel_x": foliage[0], "pixel_y": foliage[1], "class": 1})
        other = (ox0 + k % (ox1 - ox0), oy0 + k % (oy1 - oy0))
        labels.append({"pixel_x": other[0], "pixel_y": other[1], "class": 0})
    labels_path = os.path.join(directory, "labels.csv")
    pd.DataFrame(labels).to_csv(labels_path, index=False)
    return image_path, refs_path, labels_path
