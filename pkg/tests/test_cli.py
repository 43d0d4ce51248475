import logging
import time

import numpy as np
import pytest

from biplanar.cli import file_digest, main, split_cases
from biplanar.config import RunConfig
from biplanar.drr import ProjectionGeometry, save_geometry
from biplanar.losses import projection_loss_to, projections
from biplanar.phantoms import phantom
from biplanar.recon import load_trace
from biplanar.volume import Image2D, Volume3D, load_image, load_volume, save_image, save_volume


@pytest.fixture
def raw_dir(tmp_path):
    d = tmp_path / "raw"
    r = np.random.default_rng(0)
    for i in range(5):
        vals = r.uniform(0, 4095, size=(10, 10, 6)).astype(np.int16)
        save_volume(Volume3D(vals, (2.0, 2.0, 3.0), (0.0, 0.0, 0.0)), d / f"case{i}.hdr")
    return d


def run(*argv):
    return main([str(a) for a in argv])


def test_split_cases_counts():
    names = [f"c{i:04d}" for i in range(1018)]
    labels = split_cases(names, 0.1, 7)
    assert sum(v == "test" for v in labels.values()) == 102
    assert sum(v == "train" for v in labels.values()) == 916
    assert split_cases(names, 0.1, 7) == labels
    assert split_cases(names, 0.1, 8) != labels


def test_prepare(tmp_path, raw_dir):
    out = tmp_path / "prep"
    assert run("prepare", raw_dir, "--out", out, "--spacing", 2.0, "--cube-mm", 16, "--seed", 3) == 0
    lines = (out / "manifest.txt").read_text().splitlines()
    assert len(lines) == 5
    assert sum(line.endswith(" test") for line in lines) == 1
    vol = load_volume(out / "case0.hdr")
    assert vol.dims == (8, 8, 8) and vol.spacing == (2.0, 2.0, 2.0)
    assert vol.values.dtype == np.float32
    assert 0 <= vol.values.min() and vol.values.max() <= 1


def test_prepare_same_seed_same_manifest(tmp_path, raw_dir):
    for name in ("a", "b"):
        assert run("prepare", raw_dir, "--out", tmp_path / name, "--cube-mm", 12, "--seed", 9) == 0
    a = (tmp_path / "a" / "manifest.txt").read_text().replace(str(tmp_path / "a"), "")
    b = (tmp_path / "b" / "manifest.txt").read_text().replace(str(tmp_path / "b"), "")
    assert a == b
    assert file_digest(tmp_path / "a" / "case3.hdr") == file_digest(tmp_path / "b" / "case3.hdr")


def test_prepare_errors(tmp_path, raw_dir):
    (tmp_path / "empty").mkdir()
    assert run("prepare", tmp_path / "empty", "--out", tmp_path / "o") == 1
    (raw_dir / "broken.hdr").write_text("dims = 4 4 4\n")
    assert run("prepare", raw_dir, "--out", tmp_path / "o", "--cube-mm", 12) == 0
    assert len((tmp_path / "o" / "manifest.txt").read_text().splitlines()) == 5
    bad = tmp_path / "bad"
    bad.mkdir()
    (bad / "x.hdr").write_text("nonsense\n")
    assert run("prepare", bad, "--out", tmp_path / "p") == 1


def test_phantom_and_synthesize(tmp_path):
    assert run("phantom", "cube", "--dims", 32, "--value", 1024, "--spacing", 10, "--out", tmp_path / "c.hdr") == 0
    assert run("synthesize", tmp_path / "c.hdr", "--detector", 16, "--out", tmp_path / "x") == 0
    pa, lat = load_image(tmp_path / "x" / "pa.hdr"), load_image(tmp_path / "x" / "lateral.hdr")
    assert pa.values.shape == lat.values.shape == (16, 16)
    # default cube spans half the grid: 160 mm of water through the centre
    assert pa.values[8, 8] == pytest.approx(1 - np.exp(-0.02 * 160), rel=0.01)
    np.testing.assert_allclose(pa.values, lat.values, atol=1e-9)


def test_synthesize_zero_volume_and_geometry_file(tmp_path):
    save_volume(Volume3D.centered(np.zeros((8, 8, 8))), tmp_path / "z.hdr")
    save_geometry(ProjectionGeometry(detector_dims=(128, 128)), tmp_path / "g.txt")
    assert run("synthesize", tmp_path / "z.hdr", "--geometry", tmp_path / "g.txt",
               "--out-pa", tmp_path / "p.hdr", "--out-lat", tmp_path / "l.hdr") == 0
    pa = load_image(tmp_path / "p.hdr")
    assert pa.values.shape == (128, 128) and np.all(pa.values == 0)


def test_synthesize_missing_volume(tmp_path):
    assert run("synthesize", tmp_path / "nope.hdr", "--out", tmp_path) == 1


def _images(tmp_path, n=32):
    r = np.random.default_rng(1)
    save_image(Image2D(r.uniform(size=(n, n))), tmp_path / "pa.hdr")
    save_image(Image2D(r.uniform(size=(n, n))), tmp_path / "lat.hdr")


def test_forward_desk_biplanar(tmp_path):
    _images(tmp_path)
    t0 = time.perf_counter()
    assert run("forward", "--pa", tmp_path / "pa.hdr", "--lat", tmp_path / "lat.hdr", "--seed", 4,
               "--out", tmp_path / "a.hdr") == 0
    assert time.perf_counter() - t0 < 60
    vol = load_volume(tmp_path / "a.hdr")
    assert vol.dims == (32, 32, 32)
    stats = (tmp_path / "a.stats.txt").read_text()
    assert "biplanar = true" in stats and "shape.output = 1x32x32x32" in stats
    assert "shape.fuse.dec.3 = " in stats


def test_forward_hash_determinism(tmp_path):
    _images(tmp_path)
    # identical invocations into separate directories; headers name their payload file
    for name, seed in (("a", 2), ("b", 2), ("c", 3)):
        assert run("forward", "--pa", tmp_path / "pa.hdr", "--seed", seed, "--out", tmp_path / name / "v.hdr") == 0
    assert file_digest(tmp_path / "a" / "v.hdr") == file_digest(tmp_path / "b" / "v.hdr")
    assert (tmp_path / "a" / "v.stats.txt").read_bytes() == (tmp_path / "b" / "v.stats.txt").read_bytes()
    assert file_digest(tmp_path / "a" / "v.hdr") != file_digest(tmp_path / "c" / "v.hdr")


def test_forward_weight_bundle(tmp_path):
    _images(tmp_path)
    assert run("forward", "--pa", tmp_path / "pa.hdr", "--seed", 5, "--save-weights", tmp_path / "w",
               "--out", tmp_path / "a" / "v.hdr") == 0
    assert run("forward", "--pa", tmp_path / "pa.hdr", "--weights", tmp_path / "w",
               "--out", tmp_path / "b" / "v.hdr") == 0
    assert file_digest(tmp_path / "a" / "v.hdr") == file_digest(tmp_path / "b" / "v.hdr")


def test_forward_biplanar_without_lateral_is_usage_error(tmp_path):
    _images(tmp_path)
    with pytest.raises(SystemExit) as exc:
        run("forward", "--pa", tmp_path / "pa.hdr", "--biplanar", "--out", tmp_path / "a.hdr")
    assert exc.value.code == 2


def test_forward_wrong_size(tmp_path):
    save_image(Image2D(np.zeros((16, 16))), tmp_path / "pa.hdr")
    assert run("forward", "--pa", tmp_path / "pa.hdr", "--out", tmp_path / "a.hdr") == 1


def test_reconstruct_phantom(tmp_path):
    assert run("reconstruct", "--phantom", "cube", "--dims", 16, "--out", tmp_path / "r.hdr") == 0
    trace = load_trace(tmp_path / "r.trace.txt")
    assert len(trace) == 2000
    vol = load_volume(tmp_path / "r.hdr")
    assert projection_loss_to(vol.values, projections(phantom("cube", 16))) < 1e-3


def test_reconstruct_zero_targets_and_single_iteration(tmp_path):
    t = tmp_path / "targets"
    for plane in ("axial", "coronal", "sagittal"):
        save_image(Image2D(np.zeros((6, 6))), t / f"{plane}.hdr")
    assert run("reconstruct", "--targets", t, "--iterations", 1, "--out", tmp_path / "r.hdr",
               "--trace", tmp_path / "t.txt") == 0
    assert (tmp_path / "t.txt").read_text().splitlines() == ["0 0.0"]
    assert np.all(load_volume(tmp_path / "r.hdr").values == 0)


def test_reconstruct_needs_a_source(tmp_path):
    assert run("reconstruct", "--out", tmp_path / "r.hdr") == 1


def test_evaluate(tmp_path, capsys):
    p, t = tmp_path / "p", tmp_path / "t"
    r = np.random.default_rng(2)
    for name in ("a", "b"):
        v = r.uniform(0, 4095, (8, 8, 8))
        save_volume(Volume3D(v), p / f"{name}.hdr")
        save_volume(Volume3D(v), t / f"{name}.hdr")
    assert run("evaluate", p, t) == 0
    out = capsys.readouterr().out
    assert "a inf 1.000000" in out and "psnr_inf_excluded=2" in out
    save_volume(Volume3D(np.zeros((8, 8, 8))), tmp_path / "zero.hdr")
    save_volume(Volume3D(np.full((8, 8, 8), 4095.0)), tmp_path / "full.hdr")
    assert run("evaluate", tmp_path / "zero.hdr", tmp_path / "full.hdr", "--out", tmp_path / "rep.txt") == 0
    assert "zero 0.0000" in capsys.readouterr().out
    assert (tmp_path / "rep.txt").exists()


def test_evaluate_two_case_aggregate(tmp_path, capsys):
    p, t = tmp_path / "p", tmp_path / "t"
    base = np.zeros((8, 8, 8))
    save_volume(Volume3D(base), t / "a.hdr")
    save_volume(Volume3D(base), t / "b.hdr")
    # offsets of max/10 and max/sqrt(1000) give exactly 20 dB and 30 dB
    save_volume(Volume3D(base + 409.5), p / "a.hdr")
    save_volume(Volume3D(base + 4095 / np.sqrt(1000)), p / "b.hdr")
    assert run("evaluate", p, t) == 0
    assert "PSNR 25.00(±5.00)" in capsys.readouterr().out


def test_evaluate_unpaired(tmp_path, caplog):
    p, t = tmp_path / "p", tmp_path / "t"
    save_volume(Volume3D(np.zeros((8, 8, 8))), p / "a.hdr")
    save_volume(Volume3D(np.zeros((8, 8, 8))), t / "b.hdr")
    with caplog.at_level(logging.ERROR):
        assert run("evaluate", p, t) == 1
    assert "a.hdr" in caplog.text and "b.hdr" in caplog.text


def test_synthesize_then_evaluate_identity(tmp_path, raw_dir, capsys):
    assert run("prepare", raw_dir, "--out", tmp_path / "prep", "--cube-mm", 16) == 0
    vol = tmp_path / "prep" / "case1.hdr"
    assert run("synthesize", vol, "--normalized", "--detector", 8, "--out", tmp_path / "x") == 0
    assert run("evaluate", vol, vol, "--normalized") == 0
    assert "case1 inf 1.000000" in capsys.readouterr().out


def test_config_file_and_unknown_keys(tmp_path, caplog):
    cfg_path = tmp_path / "run.cfg"
    cfg_path.write_text("# desk run\nseed = 11\ndetector = 64\nmode = cone\nbogus = 1\nlambda3 = 5\n")
    with caplog.at_level(logging.WARNING):
        cfg = RunConfig.load(cfg_path, {"seed": 12})
    assert "bogus" in caplog.text
    assert cfg.seed == 12 and cfg.detector == 64 and cfg.loss_weights().lambda3 == 5
    assert cfg.geometry().mode == "cone_beam"
    cfg_path.write_text("detector = many\n")
    with pytest.raises(ValueError):
        RunConfig.load(cfg_path)
    with pytest.raises(ValueError):
        RunConfig.load(None, {"test_fraction": 1.5})


def test_config_generator_presets():
    assert RunConfig.load(None).generator_config().input_size == 32
    full = RunConfig.load(None, {"preset": "full", "biplanar": True}).generator_config()
    assert full.input_size == 128 and full.biplanar
    small = RunConfig.load(None, {"input_size": 16, "levels": 2}).generator_config()
    assert small.input_size == small.output_size == 16
