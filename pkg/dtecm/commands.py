"""
Command line front end.

Every subcommand writes its artifacts into ``--out`` together with a
``run.json`` file recording the master seed and how sub-seeds were derived.
Files written by a failing command are removed again.
"""

import argparse
import json
import logging
import math
import os

import numpy as np
import pandas as pd

from . import __version__
from .characterization import characterize, characterize_mpcs, fit_ci, path_loss_rmse
from .config import characterization_config, load_config, loss_model, synthesis_config
from .foliage import (
    FoliageTwin,
    build_twin,
    compute_fcr,
    foliage_loss,
    load_twin,
    save_twin,
)
from .linkeval import SWEEP_COLUMNS, LinkConfig, sweep
from .panorama import (
    ErpParams,
    knn_accuracy,
    load_labels,
    load_panorama,
    load_refs,
    solve_pose,
    split_labels,
)
from .report import Report
from .scene import Direction, Vec3, is_fatal, load_scene, read_scene, validate_scene
from .seeding import substream
from .stochastic import load_state_params
from .synthesis import (
    LinkState,
    assemble,
    assemble_statistical,
    read_mpcs,
    sample_cir,
    write_cir,
    write_mpcs,
    write_table,
)

logger = logging.getLogger(__name__)

METRIC_COLUMNS = [
    "realization_id",
    "state",
    "pl_db",
    "ds_s",
    "asa_deg",
    "esa_deg",
    "kf_db",
    "n_clusters",
]


class _Outputs:
    """Files written by one command, removed again on failure"""

    def __init__(self, directory):
        self.directory = directory
        self.written = []

    def path(self, name):
        path = os.path.join(self.directory, name)
        self.written.append(path)
        return path

    def remove(self):
        for path in self.written:
            if os.path.exists(path):
                os.remove(path)
                logger.info("removed partial output '%s'", path)


def _require_file(path, what):
    if path is None or not os.path.exists(path):
        raise FileNotFoundError(f"{what} '{path}' does not exist")
    return path


def _write_run(outputs, args, extra=None):
    run = {
        "version": __version__,
        "command": args.command,
        "seed": args.seed,
        "preset": getattr(args, "preset", None),
    }
    run.update(extra or {})
    with open(outputs.path("run.json"), "w", encoding="utf-8") as f:
        json.dump(run, f, indent=2, sort_keys=True)


def _write_report(outputs, config, tables):
    report_dir = outputs.directory
    for name in tables:
        outputs.path(f"{name}.html")
    Report(tables, config).write(report_dir)


def _twin_or_clear(args, config):
    if args.twin is None:
        logger.info("no twin given, using a foliage-free twin")
        resolution = float(config["twin"]["resolution_deg"])
        return FoliageTwin.uniform(False, resolution, loss_model=loss_model(config))
    return load_twin(_require_file(args.twin, "twin"))


def _params(args, config):
    path = args.params or config["paths"]["state_params"]
    return load_state_params(path, args.preset or config["preset"])


def cmd_scene_validate(args, config, outputs):
    scene = read_scene(_require_file(args.scene, "scene"))
    diagnostics = validate_scene(scene)
    for diagnostic in diagnostics:
        print(diagnostic)
    fatal = [d for d in diagnostics if is_fatal(d)]
    if fatal:
        raise ValueError(f"{len(fatal)} invalid scene entries")
    print(f"{args.scene}: {len(scene.buildings)} buildings ok")


def cmd_twin_build(args, config, outputs):
    """Fit the pose, build the twin and report KNN accuracy per neighbor count"""
    image = load_panorama(_require_file(args.panorama, "panorama"))
    height, width = image.shape[:2]
    erp = ErpParams.from_config(config["erp"], width, height)

    refs = load_refs(_require_file(args.refs, "reference file"), erp)
    fit = solve_pose(refs, float(config["twin"]["pose_grid_step_deg"]))

    labeled = load_labels(_require_file(args.labels, "label file"), image)
    knn = config["knn"]
    train, test = split_labels(labeled, float(knn["train_fraction"]), args.seed)
    first, last = knn["neighbors_range"]
    accuracy = knn_accuracy(train, test, range(int(first), int(last) + 1))

    prefilter = config["prefilter"]
    twin = build_twin(
        image,
        erp,
        fit.pose,
        train,
        ref_color=tuple(prefilter["ref_color"]),
        threshold=float(prefilter["threshold"]),
        n_neighbors=int(knn["n_neighbors"]),
        resolution=float(config["twin"]["resolution_deg"]),
        loss_model=loss_model(config),
    )
    twin_path = outputs.path("twin.json")
    outputs.path("twin_mask.png")
    save_twin(twin, twin_path)

    table = pd.DataFrame(accuracy, columns=["n_neighbors", "accuracy"])
    write_table(table, outputs.path("knn_accuracy.csv"))
    _write_run(
        outputs,
        args,
        {
            "pose": [fit.pose.alpha_z1, fit.pose.alpha_y, fit.pose.alpha_z2],
            "pose_residual_rms_deg": fit.residual_rms_deg,
            "split_seed": args.seed,
        },
    )
    if args.report:
        _write_report(outputs, config, {"knn_accuracy": table})
    print(f"twin written to {twin_path}")


def cmd_twin_fcr(args, config, outputs):
    twin = load_twin(_require_file(args.twin, "twin"))
    direction = Direction.wrapped(args.azimuth, args.elevation)
    fcr = compute_fcr(twin, direction, args.phi_th)
    loss = foliage_loss(fcr, twin.loss_model)
    print(f"fcr {fcr:.6f} foliage gain {loss:.3f} dB")


def _read_receivers(args):
    if args.rx is not None:
        return [Vec3(*args.rx)], None
    table = pd.read_csv(_require_file(args.route, "route"))
    receivers = [
        Vec3(float(r.x), float(r.y), float(r.z))
        for r in table.itertuples(index=False)
    ]
    reference = None
    if "reference_pl_db" in table:
        reference = table["reference_pl_db"].to_numpy()
    return receivers, reference


def _fit_ci_rows(rows, frequency):
    fits = []
    for state in (s.value for s in LinkState if s != LinkState.OUTAGE):
        samples = [(r["distance_m"], r["pl_db"]) for r in rows if r["state"] == state]
        if len({d for d, _ in samples}) < 2:
            continue
        fit = fit_ci(samples, frequency)
        fits.append(
            {
                "state": state,
                "ple": fit.n,
                "sf_sigma_db": fit.sf_sigma,
                "samples": len(samples),
            }
        )
    return fits


def cmd_channel_generate(args, config, outputs):
    """One realization per receiver and repetition, keyed ``(seed, rx, repetition)``"""
    scene = load_scene(_require_file(args.scene, "scene"))
    twin = _twin_or_clear(args, config)
    params = _params(args, config)
    synthesis = synthesis_config(config, False if args.no_stochastic else None)
    characterization = characterization_config(config)
    receivers, reference = _read_receivers(args)
    if not receivers:
        raise ValueError("no receiver positions given")
    if args.realizations < 1:
        raise ValueError("realizations must be at least 1")

    realizations, rows = {}, []
    for i, rx in enumerate(receivers):
        for j in range(args.realizations):
            key = i * args.realizations + j
            rng = substream(args.seed, i, j)
            realization = assemble(scene, twin, params, rx, rng, synthesis)
            realizations[key] = realization
            row = {"realization_id": key, **characterize(realization, characterization)}
            distance = float(np.linalg.norm(rx.as_array() - scene.tx.as_array()))
            row.update(rx_x=rx.x, rx_y=rx.y, rx_z=rx.z, distance_m=distance)
            if args.benchmark:
                state = "nlos" if realization.outage else realization.state.value
                rng = substream(args.seed, i, j, 1)
                statistical = assemble_statistical(
                    scene.tx, rx, scene.frequency, params, state, rng, synthesis
                )
                row["pl_statistical_db"] = characterize(statistical)["pl_db"]
            rows.append(row)
            if args.cir and not realization.outage:
                cir = sample_cir(
                    realization,
                    float(config["synthesis"]["tap_spacing_s"]),
                    int(config["synthesis"]["n_taps"]),
                )
                write_cir(cir, outputs.path(f"cir_{key}.csv"))

    write_mpcs(realizations, outputs.path(f"mpcs.{args.format}"))
    columns = METRIC_COLUMNS + [c for c in rows[0] if c not in METRIC_COLUMNS]
    metrics = pd.DataFrame(rows, columns=columns)
    write_table(metrics, outputs.path("metrics.csv"))

    extra = {
        "substream_keys": "[seed, rx_index, repetition]",
        "n_receivers": len(receivers),
    }
    fits = _fit_ci_rows([r for r in rows if math.isfinite(r["pl_db"])], scene.frequency)
    if fits:
        write_table(pd.DataFrame(fits), outputs.path("ci_fit.csv"))
    if reference is not None and args.realizations == 1:
        modeled = metrics["pl_db"].to_numpy()
        finite = np.isfinite(modeled) & np.isfinite(reference)
        extra["pl_rmse_db"] = path_loss_rmse(reference[finite], modeled[finite])
        if args.benchmark:
            statistical = metrics["pl_statistical_db"].to_numpy()
            extra["pl_rmse_statistical_db"] = path_loss_rmse(
                reference[finite], statistical[finite]
            )
        logger.info("path loss RMSE %.2f dB", extra["pl_rmse_db"])
    _write_run(outputs, args, extra)
    if args.report:
        _write_report(outputs, config, {"metrics": metrics})
    print(f"{len(realizations)} realizations written to {outputs.directory}")


def cmd_characterize(args, config, outputs):
    groups = read_mpcs(_require_file(args.mpcs, "MPC file"))
    characterization = characterization_config(config)
    rows = [
        {"realization_id": key, **characterize_mpcs(mpcs, state, characterization)}
        for key, (state, mpcs) in groups.items()
    ]
    metrics = pd.DataFrame(rows, columns=METRIC_COLUMNS)
    write_table(metrics, outputs.path("metrics.csv"))
    _write_run(outputs, args, {"source": os.path.abspath(args.mpcs)})
    if args.report:
        _write_report(outputs, config, {"metrics": metrics})
    print(f"{len(rows)} realizations characterized")


def cmd_linkeval(args, config, outputs):
    """Cartesian sweep over total gain and cell radius with shared drop sets"""
    scene = load_scene(_require_file(args.scene, "scene"))
    twin = _twin_or_clear(args, config)
    params = _params(args, config)
    cfg = LinkConfig.from_config(config["link"])
    if args.drops is not None:
        cfg = LinkConfig.from_config({**config["link"], "n_drops": args.drops})
    gains = args.gains or config["sweep"]["gains_db"]
    radii = args.radii or config["sweep"]["radii_m"]

    synthesis = synthesis_config(config)
    rows = sweep(
        scene, twin, params, cfg, gains, radii, args.seed, synthesis, args.jobs
    )
    table = pd.DataFrame(rows, columns=SWEEP_COLUMNS)
    write_table(table, outputs.path("sweep.csv"))
    _write_run(
        outputs,
        args,
        {"substream_keys": "positions [seed, 0], drop i [seed, 1, i]"},
    )
    if args.report:
        _write_report(outputs, config, {"sweep": table})
    print(f"{len(rows)} sweep points written to {outputs.directory}")


def _parser():
    parser = argparse.ArgumentParser(
        prog="dtecm", description="Hybrid THz channel model"
    )
    parser.add_argument("--version", action="version", version=__version__)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="master seed")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--params", help="state parameter file")
    common.add_argument("--preset", help="state parameter preset")
    common.add_argument("--config", help="configuration file")
    common.add_argument("--verbose", action="store_true", help="debug logging")
    common.add_argument("--report", action="store_true", help="render HTML tables")
    common.add_argument("--jobs", type=int, default=1, help="parallel workers")

    commands = parser.add_subparsers(dest="group", required=True)

    scene = commands.add_parser("scene").add_subparsers(dest="action", required=True)
    validate = scene.add_parser("validate", parents=[common])
    validate.add_argument("scene")
    validate.set_defaults(func=cmd_scene_validate, command="scene validate")

    twin = commands.add_parser("twin").add_subparsers(dest="action", required=True)
    build = twin.add_parser("build", parents=[common])
    build.add_argument("--panorama", required=True)
    build.add_argument("--refs", required=True)
    build.add_argument("--labels", required=True)
    build.set_defaults(func=cmd_twin_build, command="twin build")
    fcr = twin.add_parser("fcr", parents=[common])
    fcr.add_argument("--twin", required=True)
    fcr.add_argument("--azimuth", type=float, required=True)
    fcr.add_argument("--elevation", type=float, required=True)
    fcr.add_argument("--phi-th", type=float, default=None)
    fcr.set_defaults(func=cmd_twin_fcr, command="twin fcr")

    channel = commands.add_parser("channel")
    channel = channel.add_subparsers(dest="action", required=True)
    generate = channel.add_parser("generate", parents=[common])
    generate.add_argument("--scene", required=True)
    generate.add_argument("--twin")
    receivers = generate.add_mutually_exclusive_group(required=True)
    receivers.add_argument("--rx", type=float, nargs=3, metavar=("X", "Y", "Z"))
    receivers.add_argument("--route", help="CSV with x, y, z columns")
    generate.add_argument("--realizations", type=int, default=1)
    generate.add_argument("--format", choices=["csv", "jsonl"], default="csv")
    generate.add_argument("--cir", action="store_true", help="write sampled CIRs")
    generate.add_argument("--no-stochastic", action="store_true")
    generate.add_argument(
        "--benchmark", action="store_true", help="add statistical path loss"
    )
    generate.set_defaults(func=cmd_channel_generate, command="channel generate")

    characterize_cmd = commands.add_parser("characterize", parents=[common])
    characterize_cmd.add_argument("--mpcs", required=True)
    characterize_cmd.set_defaults(func=cmd_characterize, command="characterize")

    linkeval = commands.add_parser("linkeval", parents=[common])
    linkeval.add_argument("--scene", required=True)
    linkeval.add_argument("--twin")
    linkeval.add_argument("--gains", type=float, nargs="+")
    linkeval.add_argument("--radii", type=float, nargs="+")
    linkeval.add_argument("--drops", type=int)
    linkeval.set_defaults(func=cmd_linkeval, command="linkeval")
    return parser


def cli(argv=None):
    """
    Run the command line interface

    Parameters:
        argv (:obj:`list` | :obj:`None`): arguments, defaults to
            ``sys.argv[1:]``

    Returns:
        :obj:`int`: exit status, nonzero on error
    """
    args = _parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    outputs = _Outputs(args.out)
    try:
        if not os.path.isdir(args.out):
            raise NotADirectoryError(f"{args.out} is not a directory")
        config = load_config(args.config)
        args.func(args, config, outputs)
    except (ValueError, TypeError, OSError) as err:
        outputs.remove()
        logger.error("%s", err)
        return 1
    return 0
