"""
Tests for run configuration
"""

import json
import os

import pytest

from core.config import SEED_ENV, RunConfig, load_config_file, resolve_seed
from models.mixture import POOL_UNLABELED
from utils.exceptions import ConfigError


@pytest.fixture
def clean_env(monkeypatch, tmp_path):
    """No seed variable and no .env file in the working directory"""
    monkeypatch.delenv(SEED_ENV, raising=False)
    monkeypatch.chdir(tmp_path)
    return monkeypatch


class TestSeedPrecedence:
    """Test cases for where the run seed comes from"""

    def test_default_is_zero(self, clean_env):
        """Test the seed with nothing set"""
        assert resolve_seed(None, None) == 0

    def test_environment_variable(self, clean_env):
        """Test the seed from the environment"""
        clean_env.setenv(SEED_ENV, "17")
        assert resolve_seed(None, None) == 17

    def test_dotenv_file(self, clean_env, tmp_path):
        """Test the seed from a .env file in the working directory"""
        (tmp_path / ".env").write_text(f"{SEED_ENV}=23\n")
        try:
            assert resolve_seed(None, None) == 23
        finally:
            os.environ.pop(SEED_ENV, None)

    def test_file_beats_environment(self, clean_env):
        """Test that the config file value wins over the environment"""
        clean_env.setenv(SEED_ENV, "17")
        assert resolve_seed(None, 5) == 5

    def test_flag_beats_everything(self, clean_env):
        """Test that the command-line flag wins"""
        clean_env.setenv(SEED_ENV, "17")
        assert resolve_seed(3, 5) == 3
        config = RunConfig.build("fit", {"seed": 5}, {"seed": 3, "threads": 1})
        assert config.seed == 3

    def test_bad_values(self, clean_env):
        """Test that non-integer and negative seeds are rejected"""
        clean_env.setenv(SEED_ENV, "abc")
        with pytest.raises(ConfigError):
            resolve_seed(None, None)
        with pytest.raises(ConfigError):
            resolve_seed(-1, None)
        with pytest.raises(ConfigError):
            resolve_seed(None, "7")


class TestRunConfig:
    """Test cases for merging and validating settings"""

    def test_flags_override_file(self, clean_env):
        """Test that flag values replace file values and None flags are ignored"""
        config = RunConfig.build(
            "fit",
            {"k": 3, "alpha": 0.6, "threads": 2},
            {"k": 4, "alpha": None},
        )
        assert config.get("k") == 4
        assert config.get("alpha") == 0.6
        assert config.threads == 2
        assert config.noisy_config().alpha == 0.6

    def test_sections_receive_seed_and_threads(self, clean_env):
        """Test that algorithm configs get the top-level seed and threads"""
        config = RunConfig.build(
            "fit",
            {
                "seed": 9,
                "threads": 3,
                "gmm": {"n_restarts": 2},
                "lts": {"n_starts": 50},
            },
        )
        gmm = config.gmm_config()
        assert (gmm.seed, gmm.n_jobs, gmm.n_restarts) == (9, 3, 2)
        lts = config.lts_config()
        assert (lts.seed, lts.n_jobs, lts.n_starts) == (9, 3, 50)
        assert config.moe_config().seed == 9

    def test_noisy_settings(self, clean_env):
        """Test the top-level noisy MoE keys"""
        config = RunConfig.build(
            "fit", {"gmm_pool": POOL_UNLABELED, "screen_radius": 4.0, "threads": 1}
        )
        noisy = config.noisy_config()
        assert noisy.gmm_pool == POOL_UNLABELED
        assert noisy.screen_radius == 4.0

    def test_unknown_key(self, clean_env):
        """Test that keys outside the command's schema are rejected"""
        with pytest.raises(ConfigError):
            RunConfig.build("fit", {"alpah": 0.5})
        with pytest.raises(ConfigError):
            RunConfig.build("predict", {"k": 2})
        with pytest.raises(ConfigError):
            RunConfig.build("fit", {"gmm": {"tolerance": 1e-3}})

    def test_seed_inside_section(self, clean_env):
        """Test that seeds belong at the top level only"""
        with pytest.raises(ConfigError):
            RunConfig.build("fit", {"lts": {"seed": 1}})

    def test_invalid_values(self, clean_env):
        """Test values that fail validation before any work starts"""
        with pytest.raises(ConfigError):
            RunConfig.build("fit", {"alpha": 0.3})
        with pytest.raises(ConfigError):
            RunConfig.build("fit", {"threads": 0})
        with pytest.raises(ConfigError):
            RunConfig.build("fit", {"error_family": "laplace"})
        with pytest.raises(ConfigError):
            RunConfig.build("bench", {"simulation": {"k": 0}})

    def test_unknown_command(self):
        """Test that only known subcommands have a schema"""
        with pytest.raises(ConfigError):
            RunConfig(command="train")


class TestConfigFile:
    """Test cases for reading the JSON config file"""

    def test_reads_object(self, tmp_path):
        """Test a valid file"""
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"k": 2, "seed": 4}))
        assert load_config_file(path) == {"k": 2, "seed": 4}

    def test_rejects_bad_files(self, tmp_path):
        """Test missing, malformed and non-object files"""
        with pytest.raises(ConfigError):
            load_config_file(tmp_path / "missing.json")
        bad = tmp_path / "bad.json"
        bad.write_text("{")
        with pytest.raises(ConfigError):
            load_config_file(bad)
        listing = tmp_path / "list.json"
        listing.write_text("[1, 2]")
        with pytest.raises(ConfigError):
            load_config_file(listing)
