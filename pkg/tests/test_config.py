import pytest

from mmattn.config import SEED_ENV, ConfigError, ExperimentConfig, parse_config


def test_defaults_round_trip_through_dump():
    cfg = ExperimentConfig()
    again = parse_config(cfg.dumps())
    assert again.dumps() == cfg.dumps()


def test_values_are_typed():
    cfg = parse_config("seed = 7\nmodel.fusion = sum  # trailing comment\ntrain.learning_rate = 0.01\nmodel.use_image = no\n")
    assert cfg.seed == 7 and cfg.train.seed == 7
    assert cfg.model.fusion == "sum" and cfg.train.learning_rate == 0.01 and cfg.model.use_image is False


@pytest.mark.parametrize(
    "text",
    ["model.colour = red\n", "bogus = 1\n", "optim.lr = 1\n", "seed = 1\nseed = 2\n", "train.batch_size = big\n",
     "model.use_image = maybe\n", "just words\n", "train.seed = 3\n"],
)
def test_bad_documents_are_rejected(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_seed_environment_override(monkeypatch):
    monkeypatch.setenv(SEED_ENV, "99")
    cfg = parse_config("seed = 5\n")
    assert cfg.seed == 99 and cfg.train.seed == 99
    assert "seed = 99\n" in cfg.dumps()
