import numpy as np
import pytest

from neonlab.core import Checkpoint
from neonlab.io import (
    MAGIC,
    CheckpointFormatError,
    ConfigError,
    load_config,
    parse_config_text,
    read_checkpoint,
    write_checkpoint,
)


@pytest.fixture()
def sample_ckpt():
    return Checkpoint(
        params=np.array([1.5, -2.25, 1e-300, 0.1 + 0.2]),
        model_kind="ddpm",
        seed=42,
        budget_images=1234,
        lr=3e-4,
        meta=(("hidden", "16"), ("note", "abc")),
    )


class TestCheckpointFile:
    def test_round_trip_bitwise(self, tmp_path, sample_ckpt):
        path = tmp_path / "a.ckpt"
        write_checkpoint(path, sample_ckpt)
        back = read_checkpoint(path)
        assert np.array_equal(back.params, sample_ckpt.params)
        assert back.params.tobytes() == sample_ckpt.params.tobytes()
        assert back.model_kind == "ddpm" and back.seed == 42
        assert back.budget_images == 1234 and back.lr == 3e-4
        assert dict(back.meta) == {"hidden": "16", "note": "abc"}

    def test_rewrite_is_deterministic(self, tmp_path, sample_ckpt):
        p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        write_checkpoint(p1, sample_ckpt)
        write_checkpoint(p2, sample_ckpt)
        assert p1.read_bytes() == p2.read_bytes()

    def test_bad_magic_names_expected(self, tmp_path, sample_ckpt):
        path = tmp_path / "a.ckpt"
        write_checkpoint(path, sample_ckpt)
        raw = bytearray(path.read_bytes())
        raw[0] ^= 0xFF
        path.write_bytes(bytes(raw))
        with pytest.raises(CheckpointFormatError, match=MAGIC.decode()):
            read_checkpoint(path)

    def test_unsupported_version(self, tmp_path, sample_ckpt):
        path = tmp_path / "a.ckpt"
        write_checkpoint(path, sample_ckpt)
        raw = bytearray(path.read_bytes())
        raw[len(MAGIC)] = 99
        path.write_bytes(bytes(raw))
        with pytest.raises(CheckpointFormatError, match="version 99"):
            read_checkpoint(path)

    def test_truncation(self, tmp_path, sample_ckpt):
        path = tmp_path / "a.ckpt"
        write_checkpoint(path, sample_ckpt)
        raw = path.read_bytes()
        path.write_bytes(raw[:-5])
        with pytest.raises(CheckpointFormatError):
            read_checkpoint(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "a.ckpt"
        path.write_bytes(b"")
        with pytest.raises(CheckpointFormatError):
            read_checkpoint(path)


SCHEMA = {
    "seed": 0,
    "lr": 1e-4,
    "zetas": [0.9, 1.1],
    "fixed_reference": False,
    "out_dir": ".",
}


class TestConfig:
    def test_parse_comments_and_blanks(self):
        text = "# header\nseed = 3  # trailing\n\nlr=0.01\n"
        assert parse_config_text(text) == {"seed": "3", "lr": "0.01"}

    def test_parse_rejects_bad_line(self):
        with pytest.raises(ConfigError, match="key=value"):
            parse_config_text("just words\n")

    def test_parse_rejects_duplicates(self):
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config_text("a=1\na=2\n")

    def test_load_coerces_types(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("seed=7\nlr=2e-3\nzetas=0.8,1.0,1.2\nfixed_reference=true\n")
        cfg = load_config(p, SCHEMA)
        assert cfg["seed"] == 7 and cfg["lr"] == 2e-3
        assert cfg["zetas"] == [0.8, 1.0, 1.2]
        assert cfg["fixed_reference"] is True
        assert cfg["out_dir"] == "."  # default preserved

    def test_unknown_key_is_error(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("wat=1\n")
        with pytest.raises(ConfigError, match="unknown config key"):
            load_config(p, SCHEMA)

    def test_bad_value_is_error(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("seed=many\n")
        with pytest.raises(ConfigError, match="cannot parse"):
            load_config(p, SCHEMA)

    def test_bad_bool_is_error(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("fixed_reference=maybe\n")
        with pytest.raises(ConfigError):
            load_config(p, SCHEMA)

    def test_missing_file_is_config_error(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            load_config(tmp_path / "nope.cfg", SCHEMA)
