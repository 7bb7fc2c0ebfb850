import pytest

from cate_fusion.exceptions import ConfigurationError
from cate_fusion.settings import Settings


@pytest.fixture
def clean_env(monkeypatch, tmp_path):
    for name in Settings.model_fields:
        monkeypatch.delenv(f"CATE_FUSION_{name.upper()}", raising=False)
    env_file = tmp_path / ".env"
    env_file.write_text("")
    return env_file


class TestFromEnv:
    def test_defaults(self, clean_env):
        settings = Settings.from_env(env_file=str(clean_env))
        assert settings == Settings()
        assert settings.threshold_rule == "exact" and settings.target_z == 1

    def test_environment_values(self, clean_env, monkeypatch):
        monkeypatch.setenv("CATE_FUSION_METHOD", "ridge")
        monkeypatch.setenv("CATE_FUSION_BETA_EXPONENT", "0.3")
        monkeypatch.setenv("CATE_FUSION_REFIT_FULL", "true")
        settings = Settings.from_env(env_file=str(clean_env))
        assert settings.method == "ridge"
        assert settings.beta_exponent == 0.3
        assert settings.refit_full is True

    def test_env_file(self, clean_env):
        clean_env.write_text("CATE_FUSION_GRID_SIZE=7\nCATE_FUSION_BANDWIDTH=auto\n")
        settings = Settings.from_env(env_file=str(clean_env))
        assert settings.grid_size == 7 and settings.bandwidth is None

    def test_environment_beats_env_file(self, clean_env, monkeypatch):
        clean_env.write_text("CATE_FUSION_METHOD=ridge\n")
        monkeypatch.setenv("CATE_FUSION_METHOD", "unpenalized")
        assert Settings.from_env(env_file=str(clean_env)).method == "unpenalized"

    def test_invalid_value(self, clean_env, monkeypatch):
        monkeypatch.setenv("CATE_FUSION_TRAIN_FRAC", "1.5")
        with pytest.raises(ConfigurationError, match="train_frac"):
            Settings.from_env(env_file=str(clean_env))


class TestSettings:
    def test_merged_skips_none(self):
        settings = Settings(method="ridge").merged(method=None, grid_size=5)
        assert settings.method == "ridge" and settings.grid_size == 5

    @pytest.mark.parametrize(
        "values", [{"method": "bogus"}, {"beta_exponent": 0.5}, {"epsilon": 0.0}, {"unknown": 1}]
    )
    def test_invalid(self, values):
        with pytest.raises(ConfigurationError):
            Settings.create(**values)

    def test_combiner(self):
        config = Settings(method="ridge", beta_exponent=0.3, se_variant="conservative").combiner(2.0)
        assert (config.method, config.lambda_, config.beta_exponent, config.se_variant) == (
            "ridge", 2.0, 0.3, "conservative"
        )

    def test_frozen(self):
        with pytest.raises(ValueError):
            Settings().method = "ridge"


def test_target_population_from_environment(clean_env, monkeypatch):
    monkeypatch.setenv("CATE_FUSION_TARGET_Z", "0")
    assert Settings.from_env(env_file=str(clean_env)).target_z == 0
