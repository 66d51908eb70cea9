import filecmp
import os

import numpy as np
import pytest
from PIL import Image

from vexflow import cli, fileio
from vexflow.exponent import ExponentField
from vexflow.grid import Grid2D, MatrixField, VectorField

from conftest import random_field


class TestImages:
    def test_white_png_loads_as_ones(self, tmp_path):
        path = tmp_path / "white.png"
        Image.new("RGB", (2, 2), (255, 255, 255)).save(path)
        u = fileio.load_image(path)
        assert u.values.shape == (2, 2, 3)
        assert np.all(u.values == 1.0)
        assert u.grid.h == 1.0

    def test_grayscale_single_channel(self, tmp_path):
        path = tmp_path / "gray.png"
        Image.new("L", (3, 2), 128).save(path)
        u = fileio.load_image(path)
        assert u.values.shape == (3, 2, 1)
        assert np.allclose(u.values, 128 / 255)

    def test_8bit_round_trip_exact(self, tmp_path, rng):
        q = rng.integers(0, 256, (5, 7, 3), dtype=np.uint8)
        u = VectorField(Grid2D(5, 7), q.astype(np.float64) / 255.0)
        path = tmp_path / "rt.png"
        fileio.save_image(path, u)
        back = fileio.load_image(path)
        assert np.array_equal(back.values, u.values)

    def test_ppm_and_png_identical_content(self, tmp_path, rng):
        q = rng.integers(0, 256, (4, 4, 3), dtype=np.uint8)
        u = VectorField(Grid2D(4, 4), q.astype(np.float64) / 255.0)
        fileio.save_image(tmp_path / "a.png", u)
        fileio.save_image(tmp_path / "a.ppm", u)
        a = fileio.load_image(tmp_path / "a.png")
        b = fileio.load_image(tmp_path / "a.ppm")
        assert np.array_equal(a.values, b.values)

    def test_orientation_preserved(self, tmp_path):
        # a pixel bright only at image column x=2, row y=0 maps to values[2, 0]
        img = Image.new("L", (4, 3), 0)
        img.putpixel((2, 0), 255)
        path = tmp_path / "pix.png"
        img.save(path)
        u = fileio.load_image(path)
        assert u.values.shape == (4, 3, 1)
        assert u.values[2, 0, 0] == 1.0
        assert u.values.sum() == 1.0

    def test_unsupported_extension(self, rng, tmp_path):
        u = random_field(rng, 4, 4, n=3)
        with pytest.raises(ValueError):
            fileio.save_image(tmp_path / "x.jpg", u)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            fileio.load_image(tmp_path / "nope.png")


class TestFloatGrids:
    def test_field_round_trip_bit_exact(self, tmp_path, rng):
        u = VectorField(Grid2D(6, 5, h=0.37), rng.standard_normal((6, 5, 3)))
        path = tmp_path / "u.fgrid"
        fileio.save_field(path, u)
        back = fileio.load_field(path)
        assert back.grid == u.grid
        assert np.array_equal(back.values, u.values)

    def test_load_image_sniffs_fgrid(self, tmp_path, rng):
        u = VectorField(Grid2D(4, 4), rng.standard_normal((4, 4, 1)))
        path = tmp_path / "u.fgrid"
        fileio.save_field(path, u)
        back = fileio.load_image(path)
        assert np.array_equal(back.values, u.values)

    def test_exponent_round_trip(self, tmp_path):
        grid = Grid2D(6, 6)
        vals = np.where(np.arange(6)[:, None] < 3, 1.0, 1.7) * np.ones((1, 6))
        p = ExponentField(grid, vals, p_plus=1.7, gap=0.2)
        path = tmp_path / "p.pgrid"
        fileio.save_exponent(path, p)
        back = fileio.load_exponent(path)
        assert np.array_equal(back.values, p.values)
        assert back.p_plus == 1.7 and back.gap == 0.2

    def test_corrupt_header_rejected(self, tmp_path):
        path = tmp_path / "bad.fgrid"
        path.write_bytes(b"fgrid 4 4\n" + b"\x00" * 16)
        with pytest.raises(ValueError):
            fileio.load_field(path)

    def test_payload_size_mismatch(self, tmp_path):
        path = tmp_path / "short.fgrid"
        path.write_bytes(b"fgrid 4 4 1 1\n" + b"\x00" * 8)
        with pytest.raises(ValueError):
            fileio.load_field(path)


class TestNoisePsnr:
    def test_sigma_zero_identity(self, rng):
        u = random_field(rng, 4, 4, n=3)
        assert fileio.add_gaussian_noise(u, 0.0, seed=5) is u

    def test_seeded_determinism(self, rng):
        u = VectorField(Grid2D(8, 8), rng.uniform(0, 1, (8, 8, 3)))
        a = fileio.add_gaussian_noise(u, 0.1, seed=42)
        b = fileio.add_gaussian_noise(u, 0.1, seed=42)
        c = fileio.add_gaussian_noise(u, 0.1, seed=43)
        assert np.array_equal(a.values, b.values)
        assert not np.array_equal(a.values, c.values)

    def test_psnr_oracle(self):
        grid = Grid2D(4, 4)
        a = VectorField(grid, np.zeros((4, 4, 1)))
        b = VectorField(grid, np.full((4, 4, 1), 0.1))
        # mse = 0.01 -> psnr = 10 log10(1/0.01) = 20
        assert fileio.psnr(a, b) == pytest.approx(20.0, abs=1e-12)
        assert fileio.psnr(a, a) == np.inf


def make_test_image(path, side=16, seed=0):
    rng = np.random.default_rng(seed)
    q = rng.integers(0, 256, (side, side, 3), dtype=np.uint8)
    q[: side // 2] //= 4  # darker half: a real edge for the exponent map
    Image.fromarray(np.transpose(q, (1, 0, 2)), mode="RGB").save(path)
    return path


class TestCli:
    def test_denoise_identity_run(self, tmp_path):
        img = make_test_image(tmp_path / "in.png")
        out = tmp_path / "out"
        rc = cli.main([
            "denoise", "--input", str(img), "--output-dir", str(out),
            "--sigma", "0", "--T", "0.01", "--eps", "1e-2",
        ])
        assert rc == 0
        for name in ("restored.png", "restored.fgrid", "energy.csv",
                     "exponent.pgrid", "manifest.txt"):
            assert (out / name).exists()
        assert not (out / "noisy.png").exists()

    def test_denoise_deterministic(self, tmp_path):
        img = make_test_image(tmp_path / "in.png")
        outs = []
        for tag in ("a", "b"):
            out = tmp_path / tag
            rc = cli.main([
                "denoise", "--input", str(img), "--output-dir", str(out),
                "--sigma", "0.05", "--seed", "7", "--T", "0.01",
            ])
            assert rc == 0
            outs.append(out)
        for name in ("restored.fgrid", "energy.csv", "restored.png", "noisy.png"):
            assert filecmp.cmp(outs[0] / name, outs[1] / name, shallow=False), name

    def test_denoise_prox_scheme(self, tmp_path):
        img = make_test_image(tmp_path / "in.png", side=8)
        out = tmp_path / "out"
        rc = cli.main([
            "denoise", "--input", str(img), "--output-dir", str(out),
            "--scheme", "prox", "--T", "0.02", "--tau", "0.01",
        ])
        assert rc == 0
        m = cli.parse_manifest(out / "manifest.txt")
        assert m["scheme"] == "prox"
        assert m["steps"] == "2"

    def test_config_file_and_flag_precedence(self, tmp_path):
        img = make_test_image(tmp_path / "in.png", side=8)
        cfg = tmp_path / "run.ini"
        cfg.write_text("[run]\nsigma = 0.2\nT = 0.01\neps = 0.5\n")
        out = tmp_path / "out"
        rc = cli.main([
            "denoise", "--input", str(img), "--output-dir", str(out),
            "--config", str(cfg), "--sigma", "0.0",
        ])
        assert rc == 0
        m = cli.parse_manifest(out / "manifest.txt")
        assert m["sigma"] == 0.0  # flag beats config
        assert m["eps"] == 0.5  # config beats default
        assert m["T"] == 0.01

    def test_unknown_config_key_errors(self, tmp_path):
        img = make_test_image(tmp_path / "in.png", side=8)
        cfg = tmp_path / "run.ini"
        cfg.write_text("[run]\nbogus = 1\n")
        rc = cli.main([
            "denoise", "--input", str(img), "--output-dir", str(tmp_path / "o"),
            "--config", str(cfg),
        ])
        assert rc == 2

    def test_exponent_map_outputs_and_stats(self, tmp_path, capsys):
        img = make_test_image(tmp_path / "in.png")
        out = tmp_path / "out"
        rc = cli.main(["exponent-map", "--input", str(img), "--output-dir", str(out)])
        assert rc == 0
        for name in ("exponent.pgrid", "exponent.png", "critical_mask.png",
                     "exponent_stats.txt"):
            assert (out / name).exists()
        p = fileio.load_exponent(out / "exponent.pgrid")
        stats = dict(
            line.split(" = ") for line in
            (out / "exponent_stats.txt").read_text().strip().splitlines()
        )
        assert float(stats["p_minus"]) == p.p_minus
        assert float(stats["p_plus"]) == p.p_plus
        assert int(stats["critical_cells"]) == int((p.values == 1.0).sum())

    def test_trace_compare(self, tmp_path, capsys):
        from vexflow.functionals import write_energy_csv

        rows = [(0, 0.0, 1.0, 2.0, 3.0, 3.0), (1, 0.1, 0.9, 1.8, 2.7, 2.7)]
        a = tmp_path / "a.csv"
        b = tmp_path / "b.csv"
        write_energy_csv(a, rows)
        write_energy_csv(b, rows)
        assert cli.main(["trace-compare", str(a), str(b)]) == 0
        rows2 = [(0, 0.0, 1.0, 2.0, 3.0, 3.0), (1, 0.1, 0.9, 1.8, 2.8, 2.8)]
        write_energy_csv(b, rows2)
        assert cli.main(["trace-compare", str(a), str(b)]) == 1
        assert cli.main(["trace-compare", str(a), str(b), "--tol", "0.2"]) == 0

    def test_manifest_round_trip(self, tmp_path):
        settings = dict(cli.DEFAULTS)
        settings["eps"] = 0.012345678901234567
        path = tmp_path / "manifest.txt"
        cli.write_manifest(path, settings)
        back = cli.parse_manifest(path)
        assert back["eps"] == settings["eps"]
        assert back["scheme"] == "explicit"
        assert back["dt"] is None


class TestVerify:
    def test_all_checks_pass(self, capsys):
        ns = type("A", (), {"seed": 0})()
        rc = cli.cmd_verify(ns)
        out = capsys.readouterr().out.strip().splitlines()
        assert rc == 0
        assert len(out) == len(cli.CHECKS)
        assert all("PASS" in line for line in out)

    def test_divergence_sign_canary_fails(self, capsys):
        # an injected sign error in the divergence must be caught
        from vexflow.grid import divergence

        def broken(a):
            good = divergence(a)
            return VectorField(good.grid, -good.values)

        ns = type("A", (), {"seed": 0})()
        rc = cli.cmd_verify(ns, divergence_fn=broken)
        out = capsys.readouterr().out
        assert rc == 1
        assert "FAIL" in out

    def test_cli_entry_point(self, capsys):
        assert cli.main(["verify", "--seed", "1"]) == 0
