import json

import numpy as np
import pytest
from scipy import ndimage

from rootpipe.cli import main
from rootpipe.config import load_config, parse_config
from rootpipe.mask_io import LATERAL_ROOT, MAIN_ROOT, SEED, write_sequence
from rootpipe.pipeline import run_eval, run_fpca, run_screening, run_standard
from rootpipe.rsml import parse_rsml
from rootpipe.synthetic import generate_screening, generate_standard


def bundle_bytes(root):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def standard_config(tmp_path_factory):
    return generate_standard(tmp_path_factory.mktemp("std"), n_frames=60, width=320, height=260, seed=1)


@pytest.fixture(scope="module")
def standard_bundle(standard_config):
    return run_standard(load_config(standard_config))


def test_standard_bundle_layout(standard_bundle):
    out = standard_bundle.output
    for pid in ("plant1", "plant2"):
        assert (out / "plants" / f"{pid}.csv").is_file()
        doc = parse_rsml((out / "rsml" / f"{pid}.rsml").read_text())
        assert doc.plants[0].id == pid and doc.plants[0].roots[0].length_mm > 0
    assert (out / "stats" / "summary.txt").is_file() and (out / "stats" / "comparisons.csv").is_file()
    assert (out / "fpca" / "main_root_length.json").is_file()
    index = json.loads((out / "index.json").read_text())
    assert [p["group"] for p in index["plants"]] == ["A", "B"]


def test_standard_series_are_post_processed(standard_bundle):
    text = (standard_bundle.output / "plants" / "plant1.csv").read_text().splitlines()
    mr = [float(r.split(",")[3]) for r in text if r.startswith("processed,main_root_length,")]
    assert len(mr) == 60 and np.all(np.diff(mr) >= 0) and mr[-1] > 0
    assert any(r.startswith("raw,main_root_length,") for r in text)


def test_standard_rerun_byte_identical_with_threads(standard_config, standard_bundle, tmp_path):
    cfg = load_config(standard_config, output=tmp_path / "again")
    again = run_standard(cfg, threads=2)
    assert bundle_bytes(again.output) == bundle_bytes(standard_bundle.output)


def test_per_frame_rsml(standard_config, tmp_path):
    cfg = load_config(standard_config, output=tmp_path / "pf")
    cfg.settings["rsml"]["per_frame"] = True
    out = run_standard(cfg).output
    frames = sorted((out / "rsml" / "plant1").glob("frame_*.rsml"))
    assert frames and frames[-1].read_text() == (out / "rsml" / "plant1.rsml").read_text()


def test_fpca_mode_on_bundle(standard_bundle, tmp_path):
    cfg = parse_config({"mode": "fpca", "bundle": str(standard_bundle.output), "output": str(tmp_path)})
    res = run_fpca(cfg)
    assert (tmp_path / "fpca" / "main_root_length.json").is_file()
    assert "main_root_length" in json.loads((tmp_path / "fpca" / "index.json").read_text())["metrics"]
    assert res.output == tmp_path


def test_single_frame_sequence(tmp_path):
    labels = np.zeros((60, 40), dtype=np.uint8)
    labels[5:10, 15:25] = SEED
    labels[10:50, 20] = MAIN_ROOT
    labels[30, 21:30] = LATERAL_ROOT
    manifest = write_sequence(tmp_path / "masks", [labels], [0.0], 0.04)
    cfg = parse_config({
        "mode": "standard", "manifest": str(manifest), "output": str(tmp_path / "out"),
        "rois": [{"plant_id": "p", "x": 0, "y": 0, "w": 40, "h": 60, "seed_hint": [20, 10]}],
        "fusion": {"min_component_px": 5},
    })
    res = run_standard(cfg)
    assert any("single frame" in w for w in res.warnings)
    rows = (res.output / "plants" / "p.csv").read_text()
    assert "processed,main_root_length,0," in rows and "speed" not in rows


def test_screening_bundle(tmp_path):
    cfg_path = generate_screening(tmp_path, n_frames=90, width=240, height=200, rows=4, cols=4, seed=1)
    res = run_screening(load_config(cfg_path))
    germ = json.loads((res.output / "screening" / "germination.json").read_text())
    assert set(germ) == {"A", "B"} and all(g["fitted"] for g in germ.values())
    truth = json.loads((tmp_path / "truth.json").read_text())["germination_hours"]
    assert sum(t is not None for t in truth) == round(sum(g["final_percent"] * 8 / 100 for g in germ.values()))
    tracks = (res.output / "tracks" / "tracks.csv").read_text().splitlines()
    assert tracks[0] == "frame,time_hours,track_id,group_id,cx,cy,w,h,flags"
    assert len(list((res.output / "plants").glob("track*.csv"))) == 16
    assert (res.output / "screening" / "germination_A.csv").is_file()


def test_screening_all_dormant(tmp_path):
    cfg_path = generate_screening(tmp_path, n_frames=30, width=240, height=200, rows=3, cols=3, dormant_all=True)
    res = run_screening(load_config(cfg_path))
    germ = json.loads((res.output / "screening" / "germination.json").read_text())
    for g in germ.values():
        assert g["final_percent"] == 0.0 and g["fitted"] is False and g["t50"] is None


@pytest.fixture
def eval_sequences(tmp_path):
    rng = np.random.default_rng(5)
    truth = []
    for _ in range(3):
        labels = np.zeros((50, 50), dtype=np.uint8)
        x = int(rng.integers(10, 40))
        labels[5:45, x] = MAIN_ROOT
        labels[20, x : x + 8] = LATERAL_ROOT
        truth.append(labels)
    dilated = []
    for labels in truth:
        d = labels.copy()
        d[ndimage.binary_dilation(labels == MAIN_ROOT) & (labels == 0)] = MAIN_ROOT
        dilated.append(d)
    times = [0.0, 0.25, 0.5]
    return {
        "truth": write_sequence(tmp_path / "truth", truth, times, 0.04),
        "dilated": write_sequence(tmp_path / "dilated", dilated, times, 0.04),
        "short": write_sequence(tmp_path / "short", truth[:2], times[:2], 0.04),
    }


def eval_rows(tmp_path, seqs, pred):
    cfg = parse_config({
        "mode": "eval", "output": str(tmp_path / "ev"),
        "eval": {"pairs": [{"prediction": str(seqs[pred]), "truth": str(seqs["truth"])}]},
    })
    text = (run_eval(cfg).output / "eval" / "eval.csv").read_text().splitlines()
    return [dict(zip(text[0].split(","), r.split(","))) for r in text[1:]]


def test_eval_self_comparison(tmp_path, eval_sequences):
    rows = eval_rows(tmp_path, eval_sequences, "truth")
    assert rows and all(r["dice"] == "1" for r in rows)
    main_rows = [r for r in rows if r["class"] == "main_root"]
    assert all(r["hausdorff_mm"] == "0" and r["completeness"] == "1" and r["correctness"] == "1" for r in main_rows)


def test_eval_dilated_prediction(tmp_path, eval_sequences):
    main_rows = [r for r in eval_rows(tmp_path, eval_sequences, "dilated") if r["class"] == "main_root"]
    assert all(float(r["dice"]) < 1.0 and r["completeness"] == "1" for r in main_rows)


def test_eval_mismatched_frames(tmp_path, eval_sequences):
    with pytest.raises(ValueError, match="frames"):
        eval_rows(tmp_path, eval_sequences, "short")


def test_cli_end_to_end(tmp_path, capsys):
    assert main(["generate", "standard", "--out", str(tmp_path / "gen"), "--frames", "8", "--seed", "2"]) == 0
    cfg = tmp_path / "gen" / "config.json"
    assert main(["--config", str(cfg), "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "b" / "index.json").is_file()
    assert main(["--config", str(cfg), "--mode", "fpca", "--out", str(tmp_path / "f")]) == 2  # fpca needs a bundle
    doc = json.loads(cfg.read_text())
    doc["manifest"] = "missing.json"
    broken = tmp_path / "broken.json"
    broken.write_text(json.dumps(doc))
    assert main(["--config", str(broken), "--out", str(tmp_path / "c")]) == 1
    assert "error" in capsys.readouterr().err


def test_cli_rejects_missing_roi_before_processing(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"mode": "standard", "manifest": "m.json", "output": "o"}))
    assert main(["--config", str(cfg)]) == 2
    assert not (tmp_path / "o").exists()
