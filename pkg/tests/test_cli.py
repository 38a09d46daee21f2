import numpy as np
import pytest

from neonlab.cli import EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC, EXIT_OK, main
from neonlab.core import Checkpoint, ResultTable
from neonlab.io import read_checkpoint, write_checkpoint


def run(argv):
    return main([str(a) for a in argv])


@pytest.fixture()
def two_ckpts(tmp_path):
    r = tmp_path / "r.ckpt"
    s = tmp_path / "s.ckpt"
    write_checkpoint(r, Checkpoint(params=[1.0, 2.0], model_kind="gaussian"))
    write_checkpoint(s, Checkpoint(params=[0.0, 0.0], model_kind="gaussian"))
    return r, s


class TestMergeCli:
    def test_merge(self, tmp_path, two_ckpts):
        r, s = two_ckpts
        out = tmp_path / "m.ckpt"
        assert run(["merge", "--base", r, "--degraded", s, "-w", 1.0, "--out", out]) == EXIT_OK
        assert np.array_equal(read_checkpoint(out).params, [2.0, 4.0])

    def test_missing_file_is_io_error(self, tmp_path, two_ckpts):
        r, _ = two_ckpts
        code = run(["merge", "--base", r, "--degraded", tmp_path / "nope.ckpt",
                    "-w", 0.5, "--out", tmp_path / "m.ckpt"])
        assert code == EXIT_IO

    def test_corrupt_file_is_io_error(self, tmp_path, two_ckpts):
        r, s = two_ckpts
        s.write_bytes(b"not a checkpoint")
        code = run(["merge", "--base", r, "--degraded", s, "-w", 0.5,
                    "--out", tmp_path / "m.ckpt"])
        assert code == EXIT_IO

    def test_kind_mismatch_is_config_error(self, tmp_path, two_ckpts):
        r, s = two_ckpts
        write_checkpoint(s, Checkpoint(params=[0.0, 0.0], model_kind="ddpm"))
        code = run(["merge", "--base", r, "--degraded", s, "-w", 0.5,
                    "--out", tmp_path / "m.ckpt"])
        assert code == EXIT_CONFIG


class TestAlignCli:
    def test_align_with_z(self, tmp_path):
        rd = tmp_path / "rd.ckpt"
        rs = tmp_path / "rs.ckpt"
        out = tmp_path / "align.csv"
        write_checkpoint(rd, Checkpoint(params=[1.0, 1.0], model_kind="gaussian"))
        write_checkpoint(rs, Checkpoint(params=[-1.0, -1.0], model_kind="gaussian"))
        assert run(["align", "--rd", rd, "--rs", rs, "--alpha", 0.1,
                    "--z", 4.0, "--out", out]) == EXIT_OK
        t = ResultTable.read_csv(out)
        row = dict(zip(t.columns, t.rows[0]))
        assert row["s"] == -2.0 and row["w_star"] == pytest.approx(5.0)
        assert row["cos_sim"] == pytest.approx(-1.0, abs=1e-12)

    def test_align_without_z_gives_nan_w_star(self, tmp_path):
        rd = tmp_path / "rd.ckpt"
        rs = tmp_path / "rs.ckpt"
        out = tmp_path / "align.csv"
        write_checkpoint(rd, Checkpoint(params=[1.0, 0.0], model_kind="gaussian"))
        write_checkpoint(rs, Checkpoint(params=[0.0, 1.0], model_kind="gaussian"))
        assert run(["align", "--rd", rd, "--rs", rs, "--alpha", 0.1, "--out", out]) == EXIT_OK
        t = ResultTable.read_csv(out)
        row = dict(zip(t.columns, t.rows[0]))
        assert np.isnan(row["w_star"])


FIG2_SMALL = (
    "n_base=200\nn_synth=500\nn_oracle=400\nepochs=300\n"
    "ws_min=-0.2\nws_max=0.4\nws_step=0.2\nwo_min=-0.2\nwo_max=0.4\nwo_step=0.2\n"
)


class TestExperimentCli:
    def test_unknown_config_key(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("frobnicate=1\n")
        assert run(["fig2-grid", "--config", cfg, "--out-dir", tmp_path]) == EXIT_CONFIG

    def test_numeric_divergence_exit(self, tmp_path):
        cfg = tmp_path / "hot.cfg"
        # a near-overflow covariance blows up the NLL on the first epoch
        cfg.write_text("sigma_true=8e307,0,0,8e307\n" + FIG2_SMALL)
        assert run(["fig2-grid", "--config", cfg, "--out-dir", tmp_path]) == EXIT_NUMERIC

    def test_fig2_outputs_and_determinism(self, tmp_path):
        cfg = tmp_path / "small.cfg"
        cfg.write_text(FIG2_SMALL)
        out1, out2 = tmp_path / "run1", tmp_path / "run2"
        assert run(["fig2-grid", "--config", cfg, "--out-dir", out1, "--seed", 5]) == EXIT_OK
        assert run(["fig2-grid", "--config", cfg, "--out-dir", out2, "--seed", 5]) == EXIT_OK
        grid = ResultTable.read_csv(out1 / "grid.csv")
        assert len(grid.rows) == 4 * 4
        assert (out1 / "grid.csv").read_bytes() == (out2 / "grid.csv").read_bytes()
        assert (out1 / "summary.csv").read_bytes() == (out2 / "summary.csv").read_bytes()

    def test_meta_sidecar(self, tmp_path):
        cfg = tmp_path / "small.cfg"
        cfg.write_text(FIG2_SMALL)
        out = tmp_path / "run"
        assert run(["fig2-grid", "--config", cfg, "--out-dir", out, "--seed", 3]) == EXIT_OK
        meta = (out / "grid.csv.meta").read_text()
        assert "config_hash=" in meta
        assert "seed=3" in meta
        assert "version=neonlab-" in meta

    def test_ar_verify_reproducible(self, tmp_path):
        cfg = tmp_path / "ar.cfg"
        cfg.write_text("draws=20\n")
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert run(["ar-verify", "--config", cfg, "--out-dir", out1]) == EXIT_OK
        assert run(["ar-verify", "--config", cfg, "--out-dir", out2]) == EXIT_OK
        assert (out1 / "ar_alignment.csv").read_bytes() == (out2 / "ar_alignment.csv").read_bytes()


TINY_EXP1 = (
    "n_base=64\nn_synth=64\nn_eval=128\nn_ref=128\nepochs=30\nbatch_size=32\n"
    "hidden=8\ntime_dim=4\nzetas=1.1\nbudgets=2\n"
    "w_min=-0.2\nw_max=0.2\nw_step=0.1\n"
)


class TestParallelism:
    def test_thread_count_independence(self, tmp_path, monkeypatch):
        cfg = tmp_path / "tiny.cfg"
        cfg.write_text(TINY_EXP1)
        outputs = {}
        for threads in ("1", "4"):
            out = tmp_path / f"t{threads}"
            monkeypatch.setenv("NEON_THREADS", threads)
            assert run(["toy-exp1", "--config", cfg, "--out-dir", out]) == EXIT_OK
            outputs[threads] = (out / "fid_vs_w_zeta1.1_budget2.csv").read_bytes()
        assert outputs["1"] == outputs["4"]

    def test_bad_thread_env_rejected(self, tmp_path, monkeypatch):
        cfg = tmp_path / "tiny.cfg"
        cfg.write_text(TINY_EXP1)
        monkeypatch.setenv("NEON_THREADS", "lots")
        assert run(["toy-exp1", "--config", cfg, "--out-dir", tmp_path]) == EXIT_CONFIG
