"""Experiment config: schema enforcement, defaults, canonical hashing."""

import pytest

from superbranch import Cosine, cubic_recipe
from superbranch.config import ConfigError, ExperimentConfig


def minimal(**extra):
    raw = {
        "mode": "mckean",
        "boundary": {"family": "constant", "c": 0.5},
        "horizon": 1.0,
    }
    raw.update(extra)
    return raw


def super_raw(**extra):
    raw = minimal(
        mode="super",
        recipe=cubic_recipe().to_json(),
        rescaling="type2-paper",
        betas=[0.4, 0.2],
    )
    raw.update(extra)
    return raw


def test_minimal_config_resolves_defaults():
    cfg = ExperimentConfig.from_dict(minimal())
    assert cfg.data["replicas"] == 10000
    assert cfg.data["points"] == [0.0]
    assert cfg.data["tolerances"]["z_max"] == 3.0
    assert cfg.data["oracle"]["points"] == 256


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="schema"):
        ExperimentConfig.from_dict(minimal(betas_list=[0.1]))
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(minimal(boundary={"family": "constant", "c": 1, "x": 2}))


def test_missing_required_rejected():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"mode": "mckean", "horizon": 1.0})


def test_super_needs_recipe_and_betas():
    with pytest.raises(ConfigError, match="recipe"):
        ExperimentConfig.from_dict(minimal(mode="super", betas=[0.2]))
    with pytest.raises(ConfigError, match="beta"):
        ExperimentConfig.from_dict(
            minimal(mode="super", recipe=cubic_recipe().to_json())
        )


def test_bad_rescaling_label():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(super_raw(rescaling="type7"))


def test_boundary_and_recipe_materialize():
    cfg = ExperimentConfig.from_dict(
        super_raw(boundary={"family": "cosine", "a": 0.1, "omega": 0.5})
    )
    assert cfg.boundary() == Cosine(0.1, 0.5)
    assert cfg.recipe().intensity_exponent == 2


def test_run_spec_cell():
    cfg = ExperimentConfig.from_dict(super_raw(points=[0.0, 1.0], replicas=123))
    spec = cfg.run_spec(beta=0.4, x=1.0)
    assert spec.beta == 0.4
    assert spec.x == 1.0
    assert spec.replicas == 123
    assert spec.rescaling.kind == "type2"


def test_hash_stable_and_sensitive():
    a = ExperimentConfig.from_dict(minimal())
    b = ExperimentConfig.from_dict(minimal())
    c = ExperimentConfig.from_dict(minimal(seed=1))
    assert a.hash == b.hash
    assert a.hash != c.hash
    assert len(a.hash) == 64


def test_overrides_apply_before_hashing():
    base = ExperimentConfig.from_dict(minimal())
    overridden = ExperimentConfig.from_dict(minimal(), overrides={"seed": 9})
    assert overridden.data["seed"] == 9
    assert overridden.hash != base.hash


def test_load_round_trip(tmp_path):
    import json

    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(minimal()))
    assert ExperimentConfig.load(path).hash == ExperimentConfig.from_dict(minimal()).hash
    with pytest.raises(ConfigError):
        ExperimentConfig.load(tmp_path / "missing.json")
