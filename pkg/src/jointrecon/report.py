"""Evaluation reports: metric tables and comparison montages.

A report is built from reconstruction run directories.  Each run is
self-contained: ``run.json`` names the method and the sample, and the
directory holds the ground-truth grids next to the reconstructions, so
a report never needs the original dataset.

Outputs written to the report directory:

* ``metrics.csv``: one row per (sample, method, modality).
* ``summary.csv``: mean/std per (method, modality, metric).
* ``montage_pet.png`` / ``montage_mri.png``: grids of panels, columns
  are samples; rows are truth, one per method, then 5x absolute error
  per method.  Panels are min-max windowed to 8 bit.
* ``montage_windows.json``: the window applied to every panel.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ReportError
from .grids import load_grid
from .metrics import MetricRow, nrmse, psnr, ssim
from .runmeta import read_run_manifest

ERROR_GAIN = 5.0
GAP = 2

_TRUTH_FILES = {"pet": "truth_pet.jrg", "mri": "truth_mri.jrg"}
_RECON_FILES = {"pet": "recon_pet.jrg", "mri": "recon_mri.jrg"}


@dataclass(frozen=True)
class RunRecord:
    """One reconstruction run: who produced what for which sample."""

    sample: str
    method: str
    truth: dict
    recon: dict


def load_run(run_dir) -> RunRecord:
    run_dir = Path(run_dir)
    manifest = read_run_manifest(run_dir)
    config = manifest.get("config", {})
    method = config.get("method")
    sample = config.get("sample")
    if not method or not sample:
        raise ReportError(f"{run_dir}: run manifest lacks method/sample fields")
    truth = {}
    recon = {}
    for modality, name in _RECON_FILES.items():
        path = run_dir / name
        if not path.exists():
            continue
        truth_path = run_dir / _TRUTH_FILES[modality]
        if not truth_path.exists():
            raise ReportError(f"{run_dir}: {name} present but {truth_path.name} missing")
        recon[modality] = load_grid(path)
        truth[modality] = load_grid(truth_path)
        if recon[modality].shape != truth[modality].shape:
            raise ReportError(f"{run_dir}: truth/recon shape mismatch for {modality}")
    if not recon:
        raise ReportError(f"{run_dir}: no reconstruction grids found")
    return RunRecord(sample=str(sample), method=str(method), truth=truth, recon=recon)


def _display(grid: np.ndarray, truth: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Map to nonnegative magnitudes scaled so the truth peaks at 1."""
    ref = np.abs(truth).astype(np.float64)
    img = np.abs(grid).astype(np.float64)
    peak = ref.max()
    if peak <= 0:
        raise ReportError("ground-truth grid is identically zero")
    return img / peak, ref / peak


def metric_rows(records: list[RunRecord]) -> list[MetricRow]:
    rows = []
    for rec in records:
        for modality in sorted(rec.recon):
            img, ref = _display(rec.recon[modality], rec.truth[modality])
            rows.append(
                MetricRow(
                    sample=rec.sample,
                    method=rec.method,
                    modality=modality,
                    psnr_db=psnr(img, ref, peak=1.0),
                    ssim=ssim(img, ref, dynamic_range=1.0),
                    nrmse=nrmse(img, ref),
                )
            )
    rows.sort(key=lambda r: (r.sample, r.method, r.modality))
    return rows


def write_metrics_csv(rows: list[MetricRow], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample", "method", "modality", "psnr_db", "ssim", "nrmse"])
        for r in rows:
            writer.writerow(
                [r.sample, r.method, r.modality]
                + [f"{v:.6f}" for v in (r.psnr_db, r.ssim, r.nrmse)]
            )


def write_summary_csv(rows: list[MetricRow], path) -> None:
    groups: dict[tuple[str, str], list[MetricRow]] = {}
    for r in rows:
        groups.setdefault((r.method, r.modality), []).append(r)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "modality", "metric", "mean", "std", "n"])
        for method, modality in sorted(groups):
            members = groups[(method, modality)]
            for metric in ("psnr_db", "ssim", "nrmse"):
                values = np.array([getattr(r, metric) for r in members], dtype=np.float64)
                writer.writerow(
                    [method, modality, metric, f"{values.mean():.6f}", f"{values.std():.6f}", len(values)]
                )


def _window(panel: np.ndarray) -> tuple[np.ndarray, float, float]:
    lo = float(panel.min())
    hi = float(panel.max())
    if hi > lo:
        scaled = (panel - lo) / (hi - lo)
    else:
        scaled = np.zeros_like(panel)
    return np.clip(np.round(scaled * 255.0), 0, 255).astype(np.uint8), lo, hi


def build_montage(records: list[RunRecord], modality: str):
    """Assemble the panel grid for one modality.

    Returns (uint8 image, row labels, column labels, window table) or
    None when no run reconstructed this modality.
    """
    with_mod = [r for r in records if modality in r.recon]
    if not with_mod:
        return None
    samples = sorted({r.sample for r in with_mod})
    methods = sorted({r.method for r in with_mod})
    by_key = {}
    for r in with_mod:
        key = (r.sample, r.method)
        if key in by_key:
            raise ReportError(f"duplicate run for sample={r.sample} method={r.method}")
        by_key[key] = r
    shapes = {r.recon[modality].shape for r in with_mod}
    if len(shapes) != 1:
        raise ReportError(f"mixed grid shapes in {modality} runs: {sorted(shapes)}")
    tile_h, tile_w = shapes.pop()

    row_labels = ["truth"] + methods + [f"error5x:{m}" for m in methods]
    n_rows = len(row_labels)
    n_cols = len(samples)
    height = n_rows * tile_h + (n_rows + 1) * GAP
    width = n_cols * tile_w + (n_cols + 1) * GAP
    canvas = np.zeros((height, width), dtype=np.uint8)
    windows = [[None] * n_cols for _ in range(n_rows)]

    def paste(row, col, panel):
        tile, lo, hi = _window(panel)
        y = GAP + row * (tile_h + GAP)
        x = GAP + col * (tile_w + GAP)
        canvas[y : y + tile_h, x : x + tile_w] = tile
        windows[row][col] = {"lo": lo, "hi": hi}

    for col, sample in enumerate(samples):
        runs = [by_key[(sample, m)] for m in methods if (sample, m) in by_key]
        if not runs:
            continue
        img0, ref = _display(runs[0].recon[modality], runs[0].truth[modality])
        paste(0, col, ref)
        for mi, method in enumerate(methods):
            rec = by_key.get((sample, method))
            if rec is None:
                continue
            img, ref = _display(rec.recon[modality], rec.truth[modality])
            paste(1 + mi, col, img)
            paste(1 + len(methods) + mi, col, ERROR_GAIN * np.abs(img - ref))
    return canvas, row_labels, samples, windows


def make_report(run_dirs, out_dir) -> list[MetricRow]:
    """Build metrics.csv, summary.csv, and montages from run directories."""
    run_dirs = [Path(d) for d in run_dirs]
    if not run_dirs:
        raise ReportError("no run directories given")
    records = [load_run(d) for d in run_dirs]
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    rows = metric_rows(records)
    write_metrics_csv(rows, out_dir / "metrics.csv")
    write_summary_csv(rows, out_dir / "summary.csv")

    window_doc = {}
    for modality in ("pet", "mri"):
        built = build_montage(records, modality)
        if built is None:
            continue
        canvas, row_labels, col_labels, windows = built
        Image.fromarray(canvas, mode="L").save(out_dir / f"montage_{modality}.png")
        window_doc[modality] = {
            "rows": row_labels,
            "columns": col_labels,
            "panels": windows,
        }
    with open(out_dir / "montage_windows.json", "w") as fh:
        json.dump(window_doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return rows
