"""End-to-end command line checks, all in process via cli.main."""

import numpy as np
import pytest

from glyphflow import AttentionTrace, RunManifest, read_netpbm, read_tensors, write_tensors
from glyphflow.cli import main

TINY_CONF = """\
model.d_model = 16
model.n_heads = 2
model.n_layers = 2
model.patch = 4
model.grid = 4
model.t_txt = 4
io.scale = 1
io.word = A
sampler.steps = 4
sampler.cutoff = 2
"""


@pytest.fixture
def conf(tmp_path):
    path = tmp_path / "tiny.conf"
    path.write_text(TINY_CONF)
    return str(path)


def test_rasterize_writes_files(tmp_path, capsys):
    out = tmp_path / "g.pgm"
    mask = tmp_path / "m.pgm"
    code = main(
        [
            "rasterize",
            "--text",
            "A☃",
            "--canvas",
            "16",
            "--patch",
            "4",
            "--out",
            str(out),
            "--mask-out",
            str(mask),
        ]
    )
    captured = capsys.readouterr()
    assert code == 0
    assert "U+2603" in captured.err
    assert f"wrote {out}" in captured.out
    pixels = read_netpbm(out)
    assert pixels.shape == (16, 16)
    assert read_netpbm(mask).shape == (16, 16)


def test_generate_deterministic_checksums(tmp_path, conf):
    dirs = [str(tmp_path / "a"), str(tmp_path / "b")]
    for d in dirs:
        assert main(["generate", "--config", conf, "--out-dir", d]) == 0
    manifests = [RunManifest.load(f"{d}/manifest.json") for d in dirs]
    assert manifests[0].checksums["image"] == manifests[1].checksums["image"]
    # the config hash covers io.out_dir, so it legitimately differs here


def test_generate_no_injection_equals_ratio_zero(tmp_path, conf):
    a = str(tmp_path / "off")
    b = str(tmp_path / "zero")
    assert main(["generate", "--config", conf, "--no-injection", "--out-dir", a]) == 0
    assert main(["generate", "--config", conf, "--ratio", "0.0", "--out-dir", b]) == 0
    assert open(f"{a}/output.pgm", "rb").read() == open(f"{b}/output.pgm", "rb").read()


def test_generate_flags_override_config(tmp_path, conf):
    d = str(tmp_path / "o")
    code = main(
        ["generate", "--config", conf, "--word", "AB", "--predicted", "AB", "--out-dir", d]
    )
    assert code == 0
    man = RunManifest.load(f"{d}/manifest.json")
    assert man.metrics["exact_match"] == 1.0
    d2 = str(tmp_path / "o2")
    assert main(["generate", "--config", conf, "--out-dir", d2]) == 0
    other = RunManifest.load(f"{d2}/manifest.json")
    assert other.checksums["image"] != man.checksums["image"]
    assert other.config_hash != man.config_hash


def test_reconstruct_then_analyze(tmp_path, conf):
    trace_path = str(tmp_path / "trace.bin")
    assert main(["reconstruct", "--config", conf, "--out", trace_path]) == 0
    trace = AttentionTrace.load(trace_path)
    assert trace.steps == 2

    d = str(tmp_path / "an")
    assert main(["analyze", "--config", conf, "--trace", trace_path, "--out-dir", d]) == 0
    lines = open(f"{d}/shift.csv").read().strip().split("\n")
    assert lines[0] == "step,layer,attention_shift,mask_coverage"
    assert len(lines) == 1 + trace.steps * trace.n_layers
    raw, _ = read_tensors(f"{d}/scores_raw.bin")
    sel, _ = read_tensors(f"{d}/scores_selection.bin")
    assert len(raw) == trace.steps * trace.n_layers
    assert len(sel) == trace.steps * trace.n_layers


def test_save_trace_flag(tmp_path, conf):
    d = str(tmp_path / "o")
    assert main(["generate", "--config", conf, "--save-trace", "--out-dir", d]) == 0
    man = RunManifest.load(f"{d}/manifest.json")
    trace = AttentionTrace.load(f"{d}/trace.bin")
    assert trace.checksum() == man.checksums["trace"]


def test_dataset_record_selection(tmp_path, conf):
    data = tmp_path / "set.json"
    data.write_text('[{"word": "A", "style": "x"}, {"word": "B", "style": "y"}]')
    d = str(tmp_path / "o")
    code = main(
        ["generate", "--config", conf, "--dataset", str(data), "--record", "1",
         "--predicted", "B", "--out-dir", d]
    )
    assert code == 0
    man = RunManifest.load(f"{d}/manifest.json")
    assert man.metrics["exact_match"] == 1.0
    d0 = str(tmp_path / "o0")
    assert (
        main(["generate", "--config", conf, "--dataset", str(data), "--record", "0",
              "--predicted", "B", "--out-dir", d0])
        == 0
    )
    zero = RunManifest.load(f"{d0}/manifest.json")
    assert zero.metrics["exact_match"] == 0.0
    assert zero.checksums["image"] != man.checksums["image"]
    assert (
        main(["generate", "--config", conf, "--dataset", str(data), "--record", "7",
              "--out-dir", d])
        == 2
    )


def test_sweep_exit_codes(tmp_path, conf, capsys):
    base = TINY_CONF + "sweep.ratios = 0.25,0.5\nsweep.steps = 1,2\n"
    good = tmp_path / "good.conf"
    good.write_text(base)
    d = str(tmp_path / "ok")
    assert main(["sweep", "--config", str(good), "--out-dir", d]) == 0
    text = open(f"{d}/sweep_mask_coverage.csv").read()
    assert text.startswith("ratio,step,mask_coverage\n")
    assert len(text.strip().split("\n")) == 5

    part = tmp_path / "part.conf"
    part.write_text(TINY_CONF + "sweep.ratios = 0.0,0.5\nsweep.steps = 1\n")
    capsys.readouterr()
    assert main(["sweep", "--config", str(part), "--out-dir", str(tmp_path / "p")]) == 4
    assert "cell (0.0, 1) failed" in capsys.readouterr().err
    assert "0.0,1,NA" in open(tmp_path / "p" / "sweep_mask_coverage.csv").read()

    dead = tmp_path / "dead.conf"
    dead.write_text(TINY_CONF + "sweep.ratios = 0.0\nsweep.steps = 1\n")
    assert main(["sweep", "--config", str(dead), "--out-dir", str(tmp_path / "d")]) == 3


def test_sweep_full_runs_writes_cell_images(tmp_path):
    conf = tmp_path / "c.conf"
    conf.write_text(TINY_CONF + "sweep.ratios = 0.5\nsweep.steps = 1\n")
    d = tmp_path / "cells"
    assert main(["sweep", "--config", str(conf), "--full-runs", "--out-dir", str(d)]) == 0
    assert list(d.glob("cell_*.pgm"))


def test_export_heatmap_roundtrip(tmp_path):
    scores = tmp_path / "s.bin"
    write_tensors(
        str(scores),
        {"a": np.array([0.0, 0.5, 1.0, 0.25]), "b": np.zeros(4)},
    )
    out = tmp_path / "h.pgm"
    code = main(
        ["export-heatmap", "--scores", str(scores), "--grid", "2", "--out", str(out)]
    )
    assert code == 0
    arr = np.rint(read_netpbm(out) * 255).astype(int)
    assert np.array_equal(arr, [[0, 128], [255, 64]])

    named = tmp_path / "h2.pgm"
    assert (
        main(["export-heatmap", "--scores", str(scores), "--name", "b", "--grid", "2",
              "--out", str(named)])
        == 0
    )
    assert np.array_equal(read_netpbm(named), np.zeros((2, 2)))
    assert (
        main(["export-heatmap", "--scores", str(scores), "--name", "zz", "--grid", "2",
              "--out", str(named)])
        == 2
    )


def test_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.conf"
    bad.write_text("model.bogus = 1\n")
    code = main(["generate", "--config", str(bad), "--out-dir", str(tmp_path / "o")])
    assert code == 2
    assert "error:" in capsys.readouterr().err


def test_empty_word_writes_error_manifest(tmp_path, conf):
    d = str(tmp_path / "o")
    code = main(["generate", "--config", conf, "--word", "", "--out-dir", d])
    assert code == 2
    man = RunManifest.load(f"{d}/manifest.json")
    assert man.error["type"] == "EmptyWord"


def test_numeric_failure_exit_code(tmp_path, conf, capsys):
    d = str(tmp_path / "o")
    with np.errstate(over="ignore"):  # the overflow is the point of this run
        code = main(
            ["generate", "--config", conf, "--guidance", "1e308", "--steps", "3",
             "--out-dir", d]
        )
    assert code == 3
    assert "error:" in capsys.readouterr().err
    man = RunManifest.load(f"{d}/manifest.json")
    assert man.error["type"] == "NonFiniteActivation"


def test_argparse_and_version_exits(capsys):
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert "glyphflow" in capsys.readouterr().out
