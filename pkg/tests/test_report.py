import csv
import json

import numpy as np
import pytest
from PIL import Image

from jointrecon.errors import ReportError
from jointrecon.grids import save_grid
from jointrecon.report import build_montage, load_run, make_report, metric_rows
from jointrecon.runmeta import write_run_manifest


def write_run(root, sample, method, truth_pet=None, recon_pet=None, truth_mri=None, recon_mri=None):
    d = root / f"{method}_{sample}"
    d.mkdir()
    if recon_pet is not None:
        save_grid(recon_pet, d / "recon_pet.jrg")
        save_grid(truth_pet, d / "truth_pet.jrg")
    if recon_mri is not None:
        save_grid(recon_mri, d / "recon_mri.jrg")
        save_grid(truth_mri, d / "truth_mri.jrg")
    write_run_manifest(d, "reconstruct", [], {"method": method, "sample": sample}, 0, {})
    return d


@pytest.fixture
def runs(tmp_path):
    rng = np.random.default_rng(0)
    truth_p = rng.random((16, 16))
    truth_m = rng.random((16, 16)) * np.exp(1j * rng.random((16, 16)))
    dirs = []
    for method, wobble in (("joint", 0.02), ("mlem", 0.1)):
        recon_p = truth_p + wobble * rng.standard_normal((16, 16))
        recon_m = truth_m + wobble * rng.standard_normal((16, 16))
        dirs.append(
            write_run(tmp_path, "0000", method, truth_p, recon_p, truth_m, recon_m)
        )
    return tmp_path, dirs, truth_p


def test_load_run_round_trip(runs):
    _, dirs, _ = runs
    rec = load_run(dirs[0])
    assert rec.method == "joint"
    assert rec.sample == "0000"
    assert set(rec.recon) == {"pet", "mri"}


def test_load_run_requires_truth_next_to_recon(tmp_path):
    d = tmp_path / "r"
    d.mkdir()
    save_grid(np.ones((8, 8)), d / "recon_pet.jrg")
    write_run_manifest(d, "reconstruct", [], {"method": "m", "sample": "s"}, 0, {})
    with pytest.raises(ReportError, match="truth_pet"):
        load_run(d)


def test_load_run_requires_method_and_sample(tmp_path):
    d = tmp_path / "r"
    d.mkdir()
    save_grid(np.ones((8, 8)), d / "recon_pet.jrg")
    save_grid(np.ones((8, 8)), d / "truth_pet.jrg")
    write_run_manifest(d, "reconstruct", [], {}, 0, {})
    with pytest.raises(ReportError, match="method/sample"):
        load_run(d)


def test_metric_rows_sorted_and_scaled(runs):
    _, dirs, truth_p = runs
    records = [load_run(d) for d in dirs]
    rows = metric_rows(records)
    assert [(r.method, r.modality) for r in rows] == [
        ("joint", "mri"),
        ("joint", "pet"),
        ("mlem", "mri"),
        ("mlem", "pet"),
    ]
    # Tighter wobble must win on every metric.
    joint_pet = rows[1]
    mlem_pet = rows[3]
    assert joint_pet.psnr_db > mlem_pet.psnr_db
    assert joint_pet.nrmse < mlem_pet.nrmse


def test_make_report_outputs(runs):
    root, dirs, _ = runs
    out = root / "report"
    rows = make_report(dirs, out)
    assert (out / "metrics.csv").exists()
    assert (out / "summary.csv").exists()
    assert (out / "montage_pet.png").exists()
    assert (out / "montage_mri.png").exists()

    with open(out / "metrics.csv") as fh:
        table = list(csv.reader(fh))
    assert table[0] == ["sample", "method", "modality", "psnr_db", "ssim", "nrmse"]
    assert len(table) == 1 + len(rows)

    with open(out / "summary.csv") as fh:
        summary = list(csv.reader(fh))
    assert summary[0] == ["method", "modality", "metric", "mean", "std", "n"]
    # 2 methods x 2 modalities x 3 metrics
    assert len(summary) == 1 + 12

    windows = json.loads((out / "montage_windows.json").read_text())
    assert set(windows) == {"pet", "mri"}
    assert windows["pet"]["rows"][0] == "truth"


def test_montage_layout(runs):
    _, dirs, _ = runs
    records = [load_run(d) for d in dirs]
    canvas, row_labels, col_labels, windows = build_montage(records, "pet")
    # truth + 2 methods + 2 error rows, 1 sample column
    assert row_labels == ["truth", "joint", "mlem", "error5x:joint", "error5x:mlem"]
    assert col_labels == ["0000"]
    gap = 2
    assert canvas.shape == (5 * 16 + 6 * gap, 1 * 16 + 2 * gap)
    assert canvas.dtype == np.uint8
    assert windows[0][0]["hi"] >= windows[0][0]["lo"]


def test_montage_none_when_modality_absent(tmp_path):
    d = write_run(tmp_path, "0000", "solo", truth_pet=np.ones((8, 8)), recon_pet=np.ones((8, 8)))
    records = [load_run(d)]
    assert build_montage(records, "mri") is None


def test_montage_rejects_duplicates(runs):
    _, dirs, _ = runs
    records = [load_run(dirs[0]), load_run(dirs[0])]
    with pytest.raises(ReportError, match="duplicate"):
        build_montage(records, "pet")


def test_montage_rejects_mixed_shapes(tmp_path):
    d1 = write_run(tmp_path, "0000", "a", np.ones((8, 8)), np.ones((8, 8)))
    d2 = write_run(tmp_path, "0001", "a", np.ones((16, 16)), np.ones((16, 16)))
    records = [load_run(d1), load_run(d2)]
    with pytest.raises(ReportError, match="mixed"):
        build_montage(records, "pet")


def test_make_report_empty_rejected(tmp_path):
    with pytest.raises(ReportError, match="no run"):
        make_report([], tmp_path / "out")


def test_montage_png_is_grayscale(runs):
    root, dirs, _ = runs
    out = root / "report"
    make_report(dirs, out)
    img = Image.open(out / "montage_pet.png")
    assert img.mode == "L"
