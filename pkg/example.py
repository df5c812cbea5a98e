import os
import sys

import pandas as pd

from dtecm import Report, load_config
from dtecm.characterization import characterize
from dtecm.linkeval import LinkConfig, sweep
from dtecm.scene import Vec3, load_scene
from dtecm.stochastic import load_state_params
from dtecm.synthesis import assemble
from tests.data.fixtures import SCENE_PATH, patch_twin

# Directory for sample reports. Replace with path where you want your own
# reports saved
REPORTS_DIR = "reports"


class GainLinkReport(Report):
    """
    Custom class that inherits from Report and implements the parse method
    """

    def parse(self, data):
        """
        Render the first column of every row as a link to the gain column
        """
        updated_data = {}
        for name, rows in data.items():
            updated_data[name] = [
                ((f"{row[0]:.0f} dB", "#total_gain_db"),) + row[1:] for row in rows
            ]
        return updated_data


def setup():
    # 0. Add reports directory, if it does not already exist
    try:
        os.mkdir(REPORTS_DIR)
    except FileExistsError:
        pass

    # the campus scene and a twin with one foliage patch stand in for your
    # own scene and the twin built by `dtecm twin build`
    scene = load_scene(SCENE_PATH)
    params = load_state_params(load_config()["paths"]["state_params"])
    return scene, patch_twin(), params


def example_route():
    """
    Channel metrics along a straight route away from the transmitter
    """
    scene, twin, params = setup()

    # 1. one realization per receiver, each with its own seed
    rows = []
    for seed, y in enumerate(range(40, 400, 20)):
        rx = Vec3(30.0, float(y), 1.6)
        realization = assemble(scene, twin, params, rx, seed)
        rows.append({"y_m": y, **characterize(realization)})

    # 2. Write the reports
    Report({"metrics": pd.DataFrame(rows)}).write(REPORTS_DIR)


def example_sweep():
    """
    Spectral efficiency and coverage for a small grid of gains and radii
    """
    scene, twin, params = setup()

    # 1. sweep the total antenna gain and the cell radius
    cfg = LinkConfig(n_drops=500)
    rows = sweep(scene, twin, params, cfg, [30, 50, 70], [50, 200], seed=0)

    # 2. Write the reports. Be sure the parse parameter is set to True
    report = GainLinkReport({"sweep": pd.DataFrame(rows)})
    report.write(REPORTS_DIR, parse=True)


if __name__ == "__main__":
    args = sys.argv[1]
    print(f"attempting to create '{args}' example...")
    if args == "route":
        example_route()
    elif args == "sweep":
        example_sweep()
    else:
        print(f"example '{args}' not found")
        sys.exit(1)
    print(f"completed running '{args}' example")
