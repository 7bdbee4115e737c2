import math

import pytest

from gmclab.config import DEFAULTS, ConfigError, dump_defaults, from_dict, load_config


def _problems(raw):
    with pytest.raises(ConfigError) as exc:
        from_dict(raw)
    return exc.value.problems


def test_defaults_load():
    cfg = load_config()
    assert cfg.seed == DEFAULTS["seed"]
    assert cfg.region.grid_n == 128 and math.isclose(cfg.region.area, 0.36)
    assert cfg.kernel.mode_cutoff == 512
    assert cfg.ladder.count == 5 and cfg.ladder.eps_min == 2.0 ** -7
    assert list(cfg.mollifiers) == ["circle", "box"]
    assert cfg.gammas == (0.0, 0.5, 1.0, 1.4, 1.6) and cfg.alpha == 1.8
    assert any("grid/eps coupling" in w for w in cfg.warnings)


def test_dumped_defaults_reload(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text(dump_defaults())
    assert load_config(p).hash == load_config().hash


def test_truncation_alpha_below_gamma_cites_hypothesis():
    probs = _problems({"truncation": {"gamma": 1.6, "alpha": 1.5}})
    assert any("alpha > gamma" in p for p in probs)


def test_supercritical_gamma_cites_condition():
    probs = _problems({"gammas": [0.5, 2.1]})
    assert any("gamma < sqrt(2d)" in p and "gammas[1]" in p for p in probs)


def test_exponent_gate():
    probs = _problems({"cauchy": {"gammas": [1.9], "alpha": 3.8}})
    assert any("exponent gate" in p for p in probs)


def test_all_violations_collected():
    probs = _problems({"gammas": [3.0], "bogus": 1, "ladder": {"count": 0, "extra": 2},
                       "output": {"formats": ["xml"]}})
    text = "\n".join(probs)
    for needle in ("gammas[0]", "bogus", "ladder.extra", "ladder", "output.formats"):
        assert needle in text
    assert len(probs) >= 5


def test_unknown_key_is_error():
    assert any("typo" in p for p in _problems({"moments": {"typo": 1}}))


def test_margin_and_grid_coupling():
    assert any("margin condition" in p for p in _problems({"region": {"rect": [0.01, 0.99, 0.2, 0.8]}}))
    assert any("grid/eps coupling" in p for p in _problems({"region": {"grid_n": 16}}))
    assert any("series cutoff" in p for p in _problems({"kernel": {"mode_cutoff": 64}}))


def test_parse_error_reports_line(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("seed: 3\ngammas: [0.5, 1.0\nalpha: 2\n")
    with pytest.raises(ConfigError) as exc:
        load_config(p)
    assert "line" in exc.value.problems[0]


def test_seed_override_changes_hash():
    cfg = load_config()
    assert cfg.with_seed(7).seed == 7 and cfg.with_seed(7).hash != cfg.hash


def test_output_section_excluded_from_hash():
    assert from_dict({"output": {"dir": "elsewhere"}}).hash == load_config().hash


def test_section_and_mollifier_lookup():
    cfg = load_config()
    assert cfg.section("kl-martingale")["levels"] == [16, 64, 256, 1024]
    assert cfg.mollifier("truncated_gaussian").family == "truncated_gaussian"
    with pytest.raises(KeyError):
        cfg.mollifier("nope")
