"""Tests for the command-line entry point."""

import json
from pathlib import Path

import pytest

from gle_homog import cli
from gle_homog.utils import errors


@pytest.fixture
def homogenize_config(write_json, tmp_path):
    """A small homogenize config writing into the temporary directory."""
    return write_json(
        "homogenize.json",
        {
            "kind": "homogenize",
            "model": "bundled:ou-benchmark",
            "output_dir": str(tmp_path / "out"),
            "grid": {"points": 5},
        },
    )


class TestRun:
    """Test the run subcommand."""

    def test_run_writes_manifest(self, homogenize_config, tmp_path, capsys):
        """Test that a successful run exits 0 and prints the manifest path."""
        assert cli.main(["run", "--config", homogenize_config]) == 0

        manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
        assert [f["path"] for f in manifest["files"]] == ["drift_table.csv", "summary.json"]
        assert capsys.readouterr().out.strip().endswith("manifest.json")

    def test_out_and_seed_override(self, homogenize_config, tmp_path):
        """Test that --out and --seed override the config file."""
        target = tmp_path / "elsewhere"

        assert cli.main(["run", "--config", homogenize_config, "--out", str(target), "--seed", "9"]) == 0

        manifest = json.loads((target / "manifest.json").read_text())
        assert manifest["seed"] == 9

    def test_malformed_config_exits_2(self, write_json):
        """Test that a malformed config maps to exit code 2."""
        path = write_json("broken.json", "{not json")
        assert cli.main(["run", "--config", path]) == 2

    def test_unreadable_model_exits_2(self, write_json, tmp_path):
        """Test that a missing model file maps to exit code 2."""
        path = write_json("c.json", {"kind": "homogenize", "model": str(tmp_path / "absent.json")})
        assert cli.main(["run", "--config", path]) == 2

    def test_invalid_threads_env_exits_2(self, homogenize_config, monkeypatch):
        """Test that a non-integer GLEH_THREADS is a configuration error."""
        monkeypatch.setenv("GLEH_THREADS", "many")
        assert cli.main(["run", "--config", homogenize_config]) == 2

    def test_unknown_log_level_exits_2(self, homogenize_config, monkeypatch):
        """Test that an unknown LOG_LEVEL is a configuration error."""
        monkeypatch.setenv("LOG_LEVEL", "chatty")
        assert cli.main(["run", "--config", homogenize_config]) == 2

    def test_version_flag(self, capsys):
        """Test that --version prints the package banner."""
        with pytest.raises(SystemExit) as exc:
            cli.main(["--version"])

        assert exc.value.code == 0
        assert capsys.readouterr().out.startswith("gle_homog ")

    def test_threads_env_fallback(self, monkeypatch):
        """Test that the environment supplies the default thread count."""
        monkeypatch.setenv("GLEH_THREADS", "3")
        assert cli._default_threads(None) == 3
        assert cli._default_threads(2) == 2

    def test_epsilons_parsing(self):
        """Test the comma-separated epsilon list."""
        assert cli._epsilons("0.2, 0.1,0.05") == [0.2, 0.1, 0.05]

    def test_seed_out_of_range_edge(self, homogenize_config):
        """Test that seeds beyond 64 bits are rejected by the parser."""
        with pytest.raises(SystemExit) as exc_info:
            cli.main(["run", "--config", homogenize_config, "--seed", str(2**64)])
        assert exc_info.value.code == 2


class TestValidate:
    """Test the validate subcommand."""

    def test_bundled_model_passes(self, capsys):
        """Test that the OU benchmark validates and prints the report."""
        assert cli.main(["validate", "--config", "bundled:ou-benchmark"]) == 0
        assert "All checks passed" in capsys.readouterr().out

    def test_unstable_kernel_exits_3(self, write_json, tmp_path, capsys):
        """Test that a failing check exits 3 and writes validation.json when asked."""
        model = {
            "name": "unstable",
            "gle": {
                "coefficients": {"g": "1", "sigma": "1"},
                "kernel": {"kind": "triple", "gamma": [[-1.0]], "m": [[1.0]], "c": [[1.0]]},
                "noise": {"kind": "ou", "alpha": 1.0},
            },
        }
        out = tmp_path / "report"

        assert cli.main(["validate", "--config", write_json("m.json", model), "--out", str(out)]) == 3

        assert "[FAIL] kernel: Gamma positive stable" in capsys.readouterr().out
        report = json.loads(Path(out / "validation.json").read_text())
        assert report["passed"] is False


class TestHandleError:
    """Test the mapping of exceptions to exit codes."""

    @pytest.mark.parametrize(
        "error, code",
        [
            (errors.ConfigParseError("bad"), 2),
            (errors.NotPositiveStableError("unstable"), 3),
            (errors.UnstableStepError("step"), 4),
            (RuntimeError("unexpected"), 1),
        ],
    )
    def test_exit_codes(self, error, code):
        """Test each error family's exit code."""
        assert cli.handle_error(error) == code
