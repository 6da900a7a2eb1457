import pytest

from pseudo_action.config import RunConfig, config_diff, parse_config
from pseudo_action.errors import ConfigurationError
from pseudo_action.modes import Algo, RunMode

SHARED_DEFAULTS = [
    ("tau", 0.005),
    ("gamma", 0.99**0.25),
    ("frame_stack", 4),
    ("update_every", 4),
    ("actor_update_freq", 2),
    ("min_replay", 500),
    ("embedding_dim", 8),
    ("repeat", 4),
    ("mode", RunMode.Baseline),
    ("twin_q", False),
    ("canonical_weight", 1.0),
]

PER_ALGO_DEFAULTS = [
    ("sac", "learning_rate", 0.001),
    ("sac", "batch_size", 32),
    ("sac", "env", "pendulum"),
    ("dqn", "learning_rate", 0.0003),
    ("dqn", "batch_size", 64),
    ("dqn", "env", "pushbar"),
]


@pytest.mark.parametrize("algo", ["sac", "dqn"])
@pytest.mark.parametrize("key, expected", SHARED_DEFAULTS)
def test_shared_defaults(algo, key, expected):
    assert getattr(parse_config(overrides={"algo": algo}), key) == expected


@pytest.mark.parametrize("algo, key, expected", PER_ALGO_DEFAULTS)
def test_per_algorithm_defaults(algo, key, expected):
    assert getattr(parse_config(overrides={"algo": algo}), key) == expected


def test_empty_config_is_sac():
    config = parse_config()
    assert config.algo == Algo.Sac and config.learning_rate == 0.001


def test_file_values_are_coerced_and_overrides_win(tmp_path):
    path = tmp_path / "run.env"
    path.write_text(
        "# continuous ablation\n"
        "algo = sac\n"
        "mode = pseudo\n"
        "repeat = 8\n"
        "twin_q = yes\n"
        "tau = 0.01\n"
        "max_episode_steps =\n"
    )
    config = parse_config(path, {"repeat": 2, "seed": None})
    assert config.mode == RunMode.Pseudo
    assert config.repeat == 2
    assert config.twin_q is True
    assert config.tau == 0.01
    assert config.seed == 0
    assert config.max_episode_steps is None


def test_learning_rate_from_a_file_replaces_the_algorithm_default(tmp_path):
    path = tmp_path / "run.env"
    path.write_text("algo = dqn\nlearning_rate = 0.001\n")
    config = parse_config(path)
    assert config.learning_rate == 0.001 and config.batch_size == 64


def test_written_config_reads_back_equal(tmp_path):
    config = RunConfig(algo="dqn", mode="pseudo", repeat=8, seed=3, reward_clip=False, canonical_weight=2.5)
    path = tmp_path / "config.env"
    path.write_text(config.to_env_text())
    assert parse_config(path) == config


@pytest.mark.parametrize(
    "overrides, message",
    [
        ({"repeats": 4}, "unknown config key 'repeats'"),
        ({"repeat": 0}, "repeat must be >= 1"),
        ({"repeat": "four"}, "repeat must be int"),
        ({"repeat": 2.5}, "repeat must be int"),
        ({"tau": 1.5}, r"tau must lie in \[0, 1\]"),
        ({"mode": "hybrid"}, "mode must be one of baseline, pseudo"),
        ({"twin_q": "maybe"}, "twin_q must be true or false"),
        ({"env": "cartpole"}, "env must be one of"),
        ({"algo": "dqn", "env": "pendulum"}, "cannot drive env 'pendulum'"),
        ({"n_layers": 1}, "n_layers must be >= 2"),
        ({"canonical_weight": 0}, "canonical_weight must be > 0"),
        ({"learning_rate": -1}, "learning_rate must be > 0"),
    ],
)
def test_bad_values_raise_named_errors(overrides, message):
    with pytest.raises(ConfigurationError, match=message):
        parse_config(overrides=overrides)


def test_missing_file_is_a_configuration_error(tmp_path):
    with pytest.raises(ConfigurationError, match="does not exist"):
        parse_config(tmp_path / "nope.env")


def test_unknown_key_in_a_file(tmp_path):
    path = tmp_path / "run.env"
    path.write_text("gama = 0.9\n")
    with pytest.raises(ConfigurationError, match="unknown config key 'gama'"):
        parse_config(path)


def test_baseline_and_pseudo_configs_differ_in_mode_only():
    baseline = parse_config(overrides={"mode": "baseline", "repeat": 8})
    pseudo = parse_config(overrides={"mode": "pseudo", "repeat": 8})
    assert config_diff(baseline, pseudo) == ["mode"]
    assert baseline.mode.sample_mode != pseudo.mode.sample_mode


def test_run_name_and_replace():
    config = RunConfig(algo="dqn", repeat=8, seed=2).replace(mode="pseudo")
    assert config.run_name == "pushbar-dqn-pseudo-T8-s2"
    with pytest.raises(ConfigurationError, match="unknown config key"):
        config.replace(lr=0.1)
