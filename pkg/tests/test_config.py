import pytest

from src.utils.config import DEFAULTS, ENV_OVERRIDES, load_settings

VARIABLES = list(ENV_OVERRIDES) + ["PSNP_CONFIG"]


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch):
    # setenv first so teardown also removes anything a .env file adds
    for variable in VARIABLES:
        monkeypatch.setenv(variable, "")
        monkeypatch.delenv(variable)


@pytest.fixture
def no_env_file(tmp_path):
    return str(tmp_path / "absent.env")


def test_defaults(no_env_file):
    settings = load_settings(env_file=no_env_file)
    assert settings == DEFAULTS
    assert settings is not DEFAULTS


def test_toml_overrides(tmp_path, no_env_file):
    path = tmp_path / "psnp.toml"
    path.write_text('[solver]\nsigma = 0.001\nmax_iter = 500\n\n[bench]\nthreads = 4\n')
    settings = load_settings(str(path), env_file=no_env_file)
    assert settings["solver"]["sigma"] == 0.001
    assert settings["solver"]["max_iter"] == 500
    assert settings["bench"]["threads"] == 4
    assert settings["solver"]["gamma"] == 0.5


def test_unknown_keys_are_ignored(tmp_path, no_env_file, caplog):
    path = tmp_path / "psnp.toml"
    path.write_text('[solver]\nmomentum = 0.9\n\n[plots]\ncolor = "red"\n')
    settings = load_settings(str(path), env_file=no_env_file)
    assert settings == DEFAULTS
    assert "momentum" in caplog.text


def test_environment_beats_toml(tmp_path, monkeypatch, no_env_file):
    path = tmp_path / "psnp.toml"
    path.write_text("[bench]\nthreads = 4\n")
    monkeypatch.setenv("PSNP_THREADS", "8")
    monkeypatch.setenv("PSNP_LOG_LEVEL", "debug")
    settings = load_settings(str(path), env_file=no_env_file)
    assert settings["bench"]["threads"] == 8
    assert settings["logging"]["level"] == "DEBUG"


def test_config_from_environment_path(tmp_path, monkeypatch, no_env_file):
    path = tmp_path / "custom.toml"
    path.write_text("[bench]\ntrials = 3\n")
    monkeypatch.setenv("PSNP_CONFIG", str(path))
    assert load_settings(env_file=no_env_file)["bench"]["trials"] == 3


def test_dotenv_file(tmp_path):
    env_file = tmp_path / ".env"
    env_file.write_text("PSNP_SEED=7\n")
    assert load_settings(env_file=str(env_file))["bench"]["seed"] == 7


def test_invalid_values(tmp_path, monkeypatch, no_env_file):
    monkeypatch.setenv("PSNP_THREADS", "many")
    with pytest.raises(ValueError):
        load_settings(env_file=no_env_file)
    monkeypatch.setenv("PSNP_THREADS", "0")
    with pytest.raises(ValueError):
        load_settings(env_file=no_env_file)


def test_missing_files(tmp_path, monkeypatch, no_env_file):
    with pytest.raises(FileNotFoundError):
        load_settings(str(tmp_path / "nope.toml"), env_file=no_env_file)
    monkeypatch.setenv("PSNP_CONFIG", str(tmp_path / "nope.toml"))
    with pytest.raises(FileNotFoundError):
        load_settings(env_file=no_env_file)


def test_malformed_toml(tmp_path, no_env_file):
    path = tmp_path / "psnp.toml"
    path.write_text("[solver\nsigma = \n")
    with pytest.raises(ValueError):
        load_settings(str(path), env_file=no_env_file)
