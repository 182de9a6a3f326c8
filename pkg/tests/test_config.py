import dataclasses

import pytest

from fcca.config import (
    ConfigError,
    RunConfig,
    build_config,
    config_to_dict,
    load_config_file,
    parse_q_list,
    with_updates,
)


class TestValidation:
    def test_defaults_are_valid(self):
        cfg = RunConfig()
        assert cfg.target == "gb" and cfg.q == (0.0,)

    @pytest.mark.parametrize(
        "kw,msg",
        [
            ({"p0": 0.4}, "p0"),
            ({"p0": 0.9, "p1": 0.8}, "p0"),
            ({"p1": 1.2}, "p0"),
            ({"target": "svm"}, "target"),
            ({"lambda1": -0.5}, "nonnegative"),
            ({"margin": 0.0}, "margin"),
            ({"q": ()}, "at least one Q"),
            ({"q": (1.5,)}, r"\[0, 1\]"),
            ({"depth": 0}, "depth"),
            ({"folds": 1}, "folds"),
            ({"cap": 2, "folds": 5}, "cap"),
            ({"fold_limit": 0}, "fold_limit"),
            ({"eps_scope": "global"}, "eps_scope"),
            ({"n_estimators": 0}, "n_estimators"),
            ({"target_depth": 0}, "target_depth"),
        ],
    )
    def test_rejects_bad_values(self, kw, msg):
        with pytest.raises(ConfigError, match=msg):
            RunConfig(**kw)

    def test_frozen(self):
        with pytest.raises(dataclasses.FrozenInstanceError):
            RunConfig().seed = 1


class TestQList:
    def test_single_and_list(self):
        assert parse_q_list("0.5") == (0.5,)
        assert parse_q_list("0, 0.3 ,0.9") == (0.0, 0.3, 0.9)
        assert parse_q_list(0.7) == (0.7,)

    def test_bad_values(self):
        with pytest.raises(ConfigError, match="bad Q"):
            parse_q_list("0.1,x")
        with pytest.raises(ConfigError, match="empty"):
            parse_q_list(" , ")


class TestFileAndPrecedence:
    def test_flat_file_with_sections(self, tmp_path):
        p = tmp_path / "run.ini"
        p.write_text(
            "dataset = data.csv\nseed = 7\nq = 0.0,0.5\n"
            "[surrogate]\ndepth = 2\nlambda_reg = none\n"
            "[gtre]\ngtre_prune = yes\n"
        )
        values = load_config_file(p)
        assert values["dataset"] == "data.csv"
        assert values["seed"] == 7
        assert values["q"] == (0.0, 0.5)
        assert values["depth"] == 2
        assert values["lambda_reg"] is None
        assert values["gtre_prune"] is True

    def test_overrides_beat_file(self, tmp_path):
        p = tmp_path / "run.ini"
        p.write_text("seed = 7\ndepth = 2\n")
        cfg = build_config(p, {"seed": 9, "depth": None})
        assert cfg.seed == 9  # override wins
        assert cfg.depth == 2  # None override is "not given"

    def test_unknown_keys_rejected(self, tmp_path):
        p = tmp_path / "run.ini"
        p.write_text("sede = 7\n")
        with pytest.raises(ConfigError, match="unknown config key"):
            build_config(p)
        with pytest.raises(ConfigError, match="unknown config keys"):
            build_config(None, {"sede": 7})

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            load_config_file(tmp_path / "none.ini")

    def test_bad_typed_value(self, tmp_path):
        p = tmp_path / "run.ini"
        p.write_text("folds = many\n")
        with pytest.raises(ConfigError, match="bad value for folds"):
            load_config_file(p)

    def test_bool_parsing(self, tmp_path):
        p = tmp_path / "run.ini"
        p.write_text("gtre_prune = off\n")
        assert load_config_file(p)["gtre_prune"] is False
        p.write_text("gtre_prune = maybe\n")
        with pytest.raises(ConfigError, match="boolean"):
            load_config_file(p)


class TestHelpers:
    def test_config_to_dict_is_json_friendly(self):
        d = config_to_dict(RunConfig(q=(0.0, 0.5)))
        assert d["q"] == [0.0, 0.5]
        assert isinstance(d, dict) and d["folds"] == 5

    def test_with_updates(self):
        cfg = with_updates(RunConfig(), seed=3, q=(0.2,))
        assert cfg.seed == 3 and cfg.q == (0.2,)
        with pytest.raises(ConfigError):
            with_updates(RunConfig(), p0=0.1)
