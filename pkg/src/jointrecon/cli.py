"""Command-line front end.

Four subcommands cover the whole workflow:

* ``jointrecon phantom``: generate a synthetic paired PET/MRI dataset.
* ``jointrecon train``: fit the denoising score network on a dataset.
* ``jointrecon reconstruct``: run one method on one stored sample.
* ``jointrecon evaluate``: collect runs into metric tables and montages.

Exit codes: 0 success, 2 usage or validation failure, 3 missing input,
4 numerical divergence.  Every command accepts ``--config FILE`` with
``key = value`` lines (JSON values); explicit flags override the file.
All randomness flows from ``--seed``; reruns over an existing output
directory require ``--force``.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

# Cap BLAS pools before numpy first spins them up; the CLI itself is
# single-process, so this is the only worker knob there is.
_cap = os.environ.get("JOINTRECON_THREADS")
if _cap:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _cap)

from pathlib import Path

import numpy as np

from .acquire import (
    AcquisitionConfig,
    build_dataset,
    load_manifest,
    load_sample,
    simulate_mri,
)
from .baselines import MlemConfig, TvConfig, mlem, tv_cs, zero_filled
from .errors import (
    DimensionError,
    DivergenceError,
    JointReconError,
    MissingInputError,
    ParameterError,
)
from .fourier import make_cartesian_mask
from .gmm import GaussianMixtureScore, load_gm, mri_indices, pet_indices
from .grids import save_grid
from .phantoms import PhantomSpec
from .radon import RadonGeometry, Sinogram
from .report import make_report
from .rng import RandomStream
from .runmeta import (
    hash_file,
    hash_tree,
    parse_config_file,
    read_run_manifest,
    require_fresh,
    write_run_manifest,
)
from .sampler import SamplerConfig, averaged_joint, averaged_single, save_trace
from .schedule import NoiseSchedule
from .scorenet import NetScore, load_params, save_params
from .training import TrainConfig, save_training_log, train_score

PRESETS = {
    "fig2": {"accel": 3.0},
    "fig3": {"accel": 5.0},
    "fig4": {"accel": 4.0},
    "fig5": {"accel": 4.0},
}

DEF_PHANTOM = {
    "size": 64,
    "train": 20,
    "test": 5,
    "seed": 0,
    "detectors": None,  # None: match image size
    "angles": 60,
    "counts": 1.0e5,
    "mri_noise": 0.01,
    "accel": 3.0,
    "center_fraction": 0.08,
    "ellipses": [3, 6],
    "lesions": [1, 3],
    "noiseless": False,
}

DEF_TRAIN = {
    "epochs": 30,
    "batch": 16,
    "lr": 3.0e-2,
    "sigma_min": 0.01,
    "sigma_max": 10.0,
    "levels": 100,
    "seed": 0,
    "modality": "joint",
    "width": 16,
    "momentum": 0.9,
    "channel_weights": None,  # None: every channel weighted equally
}

DEF_RECON = {
    "seed": 0,
    "levels": 100,
    "sigma_min": None,  # None: take the checkpoint's range, else 0.01
    "sigma_max": None,
    "steps_per_level": 3,
    "step_scale": 0.2,
    "dc_pet": 1.0,
    "dc_mri": 1.0,
    "literal": False,
    "pet_floor": None,  # None: 0.1 x mean scaled activity sinogram
    "unit_scale": 1.0,
    "averages": 1,
    "iterations": None,  # None: per-method default (mlem 50, tvcs 100)
    "tv_weight": 1.0e-3,
    "tv_step": 1.0,
    "mlem_floor": 1.0e-12,
    "accel": None,  # None: keep the stored acquisition
}

_SCORE_CHANNELS = {"joint": 3, "single-pet": 1, "single-mri": 2}


def _resolve(defaults: dict, preset: dict | None, config_path, args) -> dict:
    """defaults < preset < config file < explicit flags."""
    cfg = dict(defaults)
    if preset:
        cfg.update(preset)
    if config_path:
        file_cfg = parse_config_file(config_path)
        unknown = sorted(set(file_cfg) - set(defaults))
        if unknown:
            raise ParameterError(f"unknown config keys: {', '.join(unknown)}")
        cfg.update(file_cfg)
    ns = vars(args)
    for key in defaults:
        if ns.get(key) is not None:
            cfg[key] = ns[key]
    return cfg


def cmd_phantom(args) -> int:
    cfg = _resolve(DEF_PHANTOM, PRESETS.get(args.preset), args.config, args)
    out = Path(args.out)
    require_fresh(out, args.force)
    spec = PhantomSpec(
        size=int(cfg["size"]),
        n_ellipses=tuple(int(x) for x in cfg["ellipses"]),
        lesion_count=tuple(int(x) for x in cfg["lesions"]),
        stream=RandomStream(int(cfg["seed"]), "dataset"),
    )
    detectors = int(cfg["detectors"]) if cfg["detectors"] is not None else spec.size
    geom = RadonGeometry.uniform(spec.size, detectors, int(cfg["angles"]))
    acq = AcquisitionConfig(
        counts_target=float(cfg["counts"]),
        mri_noise_std=float(cfg["mri_noise"]),
        accel=float(cfg["accel"]),
        center_fraction=float(cfg["center_fraction"]),
        noiseless=bool(cfg["noiseless"]),
    )
    build_dataset(int(cfg["train"]), int(cfg["test"]), spec, geom, acq, out, force=args.force)
    write_run_manifest(out, "phantom", args.argv_echo, cfg, int(cfg["seed"]), inputs={})
    print(out / "manifest.json")
    return 0


def cmd_train(args) -> int:
    cfg = _resolve(DEF_TRAIN, None, args.config, args)
    dataset = Path(args.dataset)
    load_manifest(dataset)
    out = Path(args.out)
    require_fresh(out, args.force)
    schedule = NoiseSchedule(float(cfg["sigma_min"]), float(cfg["sigma_max"]), int(cfg["levels"]))
    weights = cfg["channel_weights"]
    if isinstance(weights, str):
        weights = tuple(float(x) for x in weights.split(","))
    elif weights is not None:
        weights = tuple(float(x) for x in weights)
    tcfg = TrainConfig(
        epochs=int(cfg["epochs"]),
        batch_size=int(cfg["batch"]),
        learning_rate=float(cfg["lr"]),
        schedule=schedule,
        seed=int(cfg["seed"]),
        modality=str(cfg["modality"]),
        base_width=int(cfg["width"]),
        momentum=float(cfg["momentum"]),
        channel_weights=weights,
    )
    params, logs = train_score(dataset, tcfg)
    out.mkdir(parents=True, exist_ok=True)
    save_params(params, out)
    save_training_log(logs, out / "loss.csv")
    manifest_path = dataset / "manifest.json"
    inputs = {str(manifest_path): hash_file(manifest_path)}
    write_run_manifest(out, "train", args.argv_echo, cfg, int(cfg["seed"]), inputs)
    last = logs[-1]
    print(f"checkpoint: {out}")
    print(
        f"epoch {last.epoch}: train {last.train_loss:.6f}"
        f" heldout {last.heldout_loss:.6f}"
    )
    return 0


def _score_source(args, channels: int, m: int):
    """Resolve --checkpoint / --oracle-gm into a score source.

    Returns (source, checkpoint params or None).  A full three-channel
    mixture is marginalized automatically for single-modality methods.
    """
    if args.checkpoint:
        params = load_params(args.checkpoint)
        if params.img_channels != channels:
            raise DimensionError(
                f"checkpoint has {params.img_channels} channels, method needs {channels}"
            )
        return NetScore(params), params
    if args.oracle_gm:
        gm = load_gm(args.oracle_gm)
        full = 3 * m * m
        if gm.dim == full and channels == 1:
            gm = gm.marginal(pet_indices(m, m))
        elif gm.dim == full and channels == 2:
            gm = gm.marginal(mri_indices(m, m))
        elif gm.dim != channels * m * m:
            raise DimensionError(
                f"mixture dimension {gm.dim} does not fit {channels} channels of {m}x{m}"
            )
        return GaussianMixtureScore(gm, (m, m)), None
    raise ParameterError("score-based methods need --checkpoint or --oracle-gm")


def _write_history(path, values) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "objective"])
        for i, v in enumerate(values):
            writer.writerow([i, f"{v:.10g}"])


def cmd_reconstruct(args) -> int:
    cfg = _resolve(DEF_RECON, PRESETS.get(args.preset), args.config, args)
    sample_dir = Path(args.sample)
    sample = load_sample(sample_dir)
    out = Path(args.out)
    require_fresh(out, args.force)

    method = args.method
    geom = sample.sinogram.geometry
    m = geom.image_size
    sino, kspace = sample.sinogram, sample.kspace

    acq_doc = json.loads((sample_dir / "acq.json").read_text())
    if cfg["accel"] is not None and float(cfg["accel"]) != float(acq_doc["accel"]):
        # Preset acceleration differs from the stored acquisition:
        # redraw the mask and k-space noise from the stored truth.
        rs = RandomStream(int(cfg["seed"]), "resim")
        mask = make_cartesian_mask(
            m, float(cfg["accel"]), float(acq_doc["center_fraction"]), rs.child("mask")
        )
        acq = AcquisitionConfig(
            counts_target=float(acq_doc["counts_target"]),
            mri_noise_std=float(acq_doc["mri_noise_std"]),
            accel=float(cfg["accel"]),
            center_fraction=float(acq_doc["center_fraction"]),
            noiseless=bool(acq_doc["noiseless"]),
        )
        kspace = simulate_mri(sample.truth.mri, mask, acq, rs.child("mri"))

    out.mkdir(parents=True, exist_ok=True)
    save_grid(sample.truth.pet, out / "truth_pet.jrg")
    save_grid(sample.truth.mri, out / "truth_mri.jrg")

    if method in _SCORE_CHANNELS:
        source, ck = _score_source(args, _SCORE_CHANNELS[method], m)
        smin = cfg["sigma_min"] if cfg["sigma_min"] is not None else (ck.sigma_min if ck else 0.01)
        smax = cfg["sigma_max"] if cfg["sigma_max"] is not None else (ck.sigma_max if ck else 10.0)
        cfg["sigma_min"], cfg["sigma_max"] = float(smin), float(smax)
        unit_scale = float(cfg["unit_scale"])
        if cfg["pet_floor"] is None:
            # Floor the Poisson ratio at a tenth of the mean measured
            # line integral (in the units the sampler will run in); for
            # MRI-only runs the value is never consulted.
            if method == "single-mri":
                cfg["pet_floor"] = 1.0e-8
            else:
                cfg["pet_floor"] = 0.1 * float(np.mean(sino.data / sino.scale)) * unit_scale
        scfg = SamplerConfig(
            schedule=NoiseSchedule(float(smin), float(smax), int(cfg["levels"])),
            steps_per_level=int(cfg["steps_per_level"]),
            step_scale=float(cfg["step_scale"]),
            dc_weight_pet=float(cfg["dc_pet"]),
            dc_weight_mri=float(cfg["dc_mri"]),
            literal_mode=bool(cfg["literal"]),
            pet_floor=float(cfg["pet_floor"]),
            seed=int(cfg["seed"]),
        )
        averages = int(cfg["averages"])
        if method == "joint":
            pair, trace = averaged_joint(sino, kspace, geom, source, scfg, unit_scale, averages)
            save_grid(pair.pet, out / "recon_pet.jrg")
            save_grid(pair.mri, out / "recon_mri.jrg")
        elif method == "single-pet":
            u, trace = averaged_single("pet", sino, geom, source, scfg, unit_scale, averages)
            save_grid(u, out / "recon_pet.jrg")
        else:
            v, trace = averaged_single("mri", kspace, kspace.mask, source, scfg, unit_scale, averages)
            save_grid(v, out / "recon_mri.jrg")
        save_trace(trace, out / "trace.csv")
    elif method == "mlem":
        iters = int(cfg["iterations"]) if cfg["iterations"] is not None else 50
        activity = Sinogram(geom, sino.data / sino.scale)
        u, history = mlem(activity, geom, MlemConfig(iterations=iters, floor=float(cfg["mlem_floor"])))
        save_grid(u, out / "recon_pet.jrg")
        _write_history(out / "objective.csv", history)
    elif method == "tvcs":
        iters = int(cfg["iterations"]) if cfg["iterations"] is not None else 100
        v, history = tv_cs(
            kspace,
            TvConfig(iterations=iters, step_size=float(cfg["tv_step"]), tv_weight=float(cfg["tv_weight"])),
        )
        save_grid(v, out / "recon_mri.jrg")
        _write_history(out / "objective.csv", history)
    else:  # zerofill (argparse restricts the choices)
        save_grid(zero_filled(kspace), out / "recon_mri.jrg")

    record = dict(cfg)
    record["method"] = method
    record["sample"] = "/".join(sample_dir.parts[-2:])
    inputs = {
        f"{sample_dir}/{rel}": digest for rel, digest in hash_tree(sample_dir, skip=()).items()
    }
    if args.checkpoint:
        inputs[str(Path(args.checkpoint) / "params.bin")] = hash_file(Path(args.checkpoint) / "params.bin")
    write_run_manifest(out, "reconstruct", args.argv_echo, record, int(cfg["seed"]), inputs)
    print(out)
    return 0


def cmd_evaluate(args) -> int:
    runs = [Path(r) for r in args.runs]
    for r in runs:
        if not (r / "run.json").is_file():
            raise MissingInputError(f"run manifest not found: {r / 'run.json'}")
    out = Path(args.out)
    require_fresh(out, args.force)
    rows = make_report(runs, out)
    inputs = {str(r): read_run_manifest(r)["content_hash"] for r in runs}
    write_run_manifest(out, "evaluate", args.argv_echo, {"runs": [str(r) for r in runs]}, 0, inputs)

    groups: dict[tuple[str, str], list] = {}
    for row in rows:
        groups.setdefault((row.method, row.modality), []).append(row)
    print(f"{'method':<12} {'modality':<9} {'psnr_db':>9} {'ssim':>8} {'nrmse':>8}   n")
    for method, modality in sorted(groups):
        rs = groups[(method, modality)]
        print(
            f"{method:<12} {modality:<9}"
            f" {np.mean([r.psnr_db for r in rs]):9.3f}"
            f" {np.mean([r.ssim for r in rs]):8.4f}"
            f" {np.mean([r.nrmse for r in rs]):8.4f}"
            f"   {len(rs)}"
        )
    print(out / "metrics.csv")
    return 0


def _add_common(sub) -> None:
    sub.add_argument("--config", help="key = value file with JSON values")
    sub.add_argument("--force", action="store_true", help="overwrite an existing run directory")
    sub.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jointrecon",
        description="Joint PET/MRI reconstruction with a shared generative image model.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    ph = sub.add_parser("phantom", help="generate a synthetic paired dataset")
    ph.add_argument("--out", required=True)
    ph.add_argument("--preset", choices=sorted(PRESETS))
    _add_common(ph)
    ph.add_argument("--size", type=int)
    ph.add_argument("--train", type=int)
    ph.add_argument("--test", type=int)
    ph.add_argument("--detectors", type=int)
    ph.add_argument("--angles", type=int)
    ph.add_argument("--counts", type=float)
    ph.add_argument("--mri-noise", dest="mri_noise", type=float)
    ph.add_argument("--accel", type=float)
    ph.add_argument("--center-fraction", dest="center_fraction", type=float)
    ph.add_argument("--ellipses", nargs=2, type=int, metavar=("LO", "HI"))
    ph.add_argument("--lesions", nargs=2, type=int, metavar=("LO", "HI"))
    ph.add_argument("--noiseless", action="store_true", default=None)
    ph.set_defaults(func=cmd_phantom)

    tr = sub.add_parser("train", help="train the score network on a dataset")
    tr.add_argument("--dataset", required=True)
    tr.add_argument("--out", required=True)
    _add_common(tr)
    tr.add_argument("--epochs", type=int)
    tr.add_argument("--batch", type=int)
    tr.add_argument("--lr", type=float)
    tr.add_argument("--sigma-min", dest="sigma_min", type=float)
    tr.add_argument("--sigma-max", dest="sigma_max", type=float)
    tr.add_argument("--levels", type=int)
    tr.add_argument("--modality", choices=["joint", "pet", "mri"])
    tr.add_argument("--width", type=int)
    tr.add_argument("--momentum", type=float)
    tr.add_argument(
        "--channel-weights",
        dest="channel_weights",
        help="comma-separated per-channel loss weights, e.g. 1.5,0.75,0.75",
    )
    tr.set_defaults(func=cmd_train)

    rc = sub.add_parser("reconstruct", help="reconstruct one stored sample")
    rc.add_argument("--sample", required=True, help="dataset sample directory")
    rc.add_argument(
        "--method",
        required=True,
        choices=["joint", "single-pet", "single-mri", "mlem", "tvcs", "zerofill"],
    )
    rc.add_argument("--out", required=True)
    rc.add_argument("--preset", choices=sorted(PRESETS))
    _add_common(rc)
    rc.add_argument("--checkpoint", help="trained score network directory")
    rc.add_argument("--oracle-gm", dest="oracle_gm", help="Gaussian-mixture JSON used as exact score")
    rc.add_argument("--levels", type=int)
    rc.add_argument("--sigma-min", dest="sigma_min", type=float)
    rc.add_argument("--sigma-max", dest="sigma_max", type=float)
    rc.add_argument("--steps-per-level", dest="steps_per_level", type=int)
    rc.add_argument("--step-scale", dest="step_scale", type=float)
    rc.add_argument("--dc-pet", dest="dc_pet", type=float)
    rc.add_argument("--dc-mri", dest="dc_mri", type=float)
    rc.add_argument("--literal", action="store_true", default=None)
    rc.add_argument("--pet-floor", dest="pet_floor", type=float)
    rc.add_argument("--unit-scale", dest="unit_scale", type=float)
    rc.add_argument("--averages", type=int)
    rc.add_argument("--iterations", type=int)
    rc.add_argument("--tv-weight", dest="tv_weight", type=float)
    rc.add_argument("--tv-step", dest="tv_step", type=float)
    rc.add_argument("--mlem-floor", dest="mlem_floor", type=float)
    rc.add_argument("--accel", type=float)
    rc.set_defaults(func=cmd_reconstruct)

    ev = sub.add_parser("evaluate", help="summarize reconstruction runs")
    ev.add_argument("--runs", nargs="+", required=True)
    ev.add_argument("--out", required=True)
    ev.add_argument("--config")
    ev.add_argument("--force", action="store_true")
    ev.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    args.argv_echo = ["jointrecon"] + argv
    try:
        return args.func(args)
    except (MissingInputError, FileNotFoundError) as exc:
        print(f"error: missing input: {exc}", file=sys.stderr)
        return 3
    except DivergenceError as exc:
        print(f"error: diverged: {exc}", file=sys.stderr)
        return 4
    except JointReconError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
