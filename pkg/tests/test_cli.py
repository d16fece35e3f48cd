import csv
import hashlib

import numpy as np
import pytest

from chromastack import cli, llt
from chromastack.core import ReconConfig
from chromastack.imgops import gaussian_blur
from chromastack.stackio import read_pgm, read_stack, write_pgm


def digest_tree(root):
    return {
        str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(root.rglob("*")) if p.is_file()
    }


def synth(tmp_path, name="gt", size=32, channels=4, seed=3):
    out = tmp_path / name
    code = cli.run(
        ["synth", "--out", str(out), "--width", str(size), "--height", str(size), "--layers", "2",
         "--channels", str(channels), "--seed", str(seed)]
    )
    assert code == 0
    return out


def test_unknown_subcommand(capsys):
    assert cli.run(["frobnicate"]) == 2
    assert "usage:" in capsys.readouterr().err


def test_missing_subcommand(capsys):
    assert cli.run([]) == 2


def test_help_exits_zero(capsys):
    assert cli.run(["--help"]) == 0
    assert "reconstruct" in capsys.readouterr().out


def test_reconstruct_defaults_match_published_weights():
    args = cli.build_parser().parse_args(["reconstruct", "--in", "a", "--out", "b"])
    cfg = cli._config(args)
    assert (cfg.blur_sigma, cfg.alpha, cfg.beta) == (10.0, 1.0, 0.1)
    assert (cfg.max_iters, cfg.rel_tol) == (500, 1e-6)
    assert args.jobs is None


def test_reconstruct_passes_flags(tmp_path, monkeypatch):
    gt = synth(tmp_path)
    assert cli.run(["simulate", "--gt", str(gt), "--out", str(tmp_path / "cap")]) == 0
    seen = {}
    real = llt.reconstruct_focal_stack

    def fake(captured, cfg, jobs):
        seen.update(cfg=cfg, jobs=jobs)
        return real(captured, ReconConfig(max_iters=1), jobs=1)

    monkeypatch.setattr(llt, "reconstruct_focal_stack", fake)
    argv = ["reconstruct", "--in", str(tmp_path / "cap"), "--out", str(tmp_path / "rec"), "--sigma", "4",
            "--alpha", "0.5", "--beta", "0.2", "--max-iters", "9", "--rel-tol", "1e-3", "--jobs", "2"]
    assert cli.run(argv) == 0
    assert seen["cfg"] == ReconConfig(4.0, 0.5, 0.2, 9, 1e-3, 1.0)
    assert seen["jobs"] == 2


def test_pipeline_produces_table(tmp_path, capsys):
    gt = synth(tmp_path)
    before = digest_tree(gt)
    assert cli.run(["simulate", "--gt", str(gt), "--out", str(tmp_path / "cap")]) == 0
    assert cli.run(["reconstruct", "--in", str(tmp_path / "cap"), "--out", str(tmp_path / "rec"), "--jobs", "1"]) == 0
    report = tmp_path / "out" / "table.csv"
    assert cli.run(["evaluate", "--gt", str(gt), "--recon", str(tmp_path / "rec"), "--report", str(report)]) == 0
    assert digest_tree(gt) == before

    rows = list(csv.DictReader(report.open()))
    assert len(rows) == 16
    wl = ["430", "520", "610", "700"]
    for row in rows:
        diagonal = wl.index(row["wavelength_nm"]) == int(row["depth_index"])
        assert (row["psnr_db"] == "Inf") == diagonal
        if diagonal:
            assert row["ssim"] == "1.0000"
    assert "off-diagonal" in capsys.readouterr().out

    gt_stack = read_stack(gt)
    rec = read_stack(tmp_path / "rec")
    for k in range(4):
        assert rec.cell(k, k).tobytes() == gt_stack.cell(k, k).tobytes()


def test_synth_writes_scene_and_depth_count(tmp_path):
    out = tmp_path / "gt"
    assert cli.run(["synth", "--out", str(out), "--width", "16", "--height", "16", "--channels", "3",
                    "--depths", "2", "--layers", "1"]) == 0
    stack = read_stack(out)
    assert (stack.depths, stack.wavelengths) == (2, 3)
    assert (out / "scene" / "scene.json").is_file()


def test_simulate_with_kappa_rerenders(tmp_path):
    gt = synth(tmp_path)
    assert cli.run(["simulate", "--gt", str(gt), "--out", str(tmp_path / "a")]) == 0
    assert cli.run(["simulate", "--gt", str(gt), "--out", str(tmp_path / "b"), "--kappa", "0"]) == 0
    rerendered = read_stack(tmp_path / "b" / "gt")
    # no defocus: every depth row identical
    assert np.array_equal(rerendered.data[0], rerendered.data[3])
    a, b = read_stack(tmp_path / "a"), read_stack(tmp_path / "b")
    assert not np.array_equal(a.slices[0].image, b.slices[0].image)
    assert b.slices[2].image.tobytes() == rerendered.cell(2, 2).tobytes()


def test_simulate_rejects_non_square_ground_truth(tmp_path, capsys):
    out = tmp_path / "gt"
    cli.run(["synth", "--out", str(out), "--width", "16", "--height", "16", "--channels", "3", "--depths", "2"])
    assert cli.run(["simulate", "--gt", str(out), "--out", str(tmp_path / "cap")]) == 1
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and err[0].startswith("error: simulate: ValueError:")


def test_fit_writes_maps_and_scale(tmp_path, capsys):
    rng = np.random.default_rng(0)
    src = gaussian_blur(rng.random((24, 24)), 1.0)
    write_pgm(tmp_path / "s.pgm", src)
    write_pgm(tmp_path / "t.pgm", np.clip(0.8 * src + 0.1, 0, 1))
    argv = ["fit", "--source", str(tmp_path / "s.pgm"), "--target", str(tmp_path / "t.pgm"),
            "--out-a", str(tmp_path / "maps" / "a.pgm"), "--out-b", str(tmp_path / "maps" / "b.pgm"),
            "--sigma", "2", "--max-iters", "100"]
    assert cli.run(argv) == 0
    assert "iterations" in capsys.readouterr().out
    for name in ("a", "b"):
        vis = read_pgm(tmp_path / "maps" / f"{name}.pgm")
        assert vis.min() >= 0 and vis.max() <= 1
        fields = dict(line.split() for line in (tmp_path / "maps" / f"{name}.scale.txt").read_text().splitlines())
        lo, hi = float(fields["min"]), float(fields["max"])
        assert lo <= hi
        if hi > lo:
            assert vis.min() == 0.0 and vis.max() == 1.0

    # the recorded scale recovers the fitted maps up to 16-bit quantization
    cfg = ReconConfig(blur_sigma=2, max_iters=100)
    maps, _ = llt.fit_llt(gaussian_blur(read_pgm(tmp_path / "s.pgm"), 2), gaussian_blur(read_pgm(tmp_path / "t.pgm"), 2), cfg)
    fields = dict(line.split() for line in (tmp_path / "maps" / "a.scale.txt").read_text().splitlines())
    lo, hi = float(fields["min"]), float(fields["max"])
    recovered = lo + read_pgm(tmp_path / "maps" / "a.pgm") * (hi - lo)
    assert np.abs(recovered - maps.gain).max() <= (hi - lo) / 65535


def test_missing_input_is_single_line_error(tmp_path, capsys):
    code = cli.run(["reconstruct", "--in", str(tmp_path / "nope"), "--out", str(tmp_path / "o")])
    assert code == 1
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and err[0].startswith("error: reconstruct: StackFormatError: missing manifest")


def test_wrong_stack_kind(tmp_path, capsys):
    gt = synth(tmp_path)
    assert cli.run(["reconstruct", "--in", str(gt), "--out", str(tmp_path / "o")]) == 1
    assert "expected SpectralVaryingStack" in capsys.readouterr().err


def test_invalid_config_flag(tmp_path, capsys):
    gt = synth(tmp_path)
    cli.run(["simulate", "--gt", str(gt), "--out", str(tmp_path / "cap")])
    assert cli.run(["reconstruct", "--in", str(tmp_path / "cap"), "--out", str(tmp_path / "o"), "--sigma", "-1"]) == 1
    assert "blur_sigma" in capsys.readouterr().err


@pytest.mark.parametrize("jobs", ["1", "3"])
def test_reconstruct_idempotent(tmp_path, jobs):
    gt = synth(tmp_path, size=24, channels=3)
    cli.run(["simulate", "--gt", str(gt), "--out", str(tmp_path / "cap")])
    for name in ("r1", "r2"):
        assert cli.run(["reconstruct", "--in", str(tmp_path / "cap"), "--out", str(tmp_path / name),
                        "--jobs", jobs, "--max-iters", "30"]) == 0
    assert digest_tree(tmp_path / "r1") == digest_tree(tmp_path / "r2")
