import pytest

from rcpmod.config import PRESETS, RATIO_SETTINGS, TrainConfig, build_config, parse_assignments
from rcpmod.errors import ConfigError


def test_defaults():
    c = TrainConfig()
    assert (c.batch_size, c.total_epochs, c.warm_epochs, c.impute_start_epoch) == (256, 200, 100, 50)
    assert (c.knn_switch_epoch, c.knn_refresh_interval, c.tau, c.bank_window) == (50, 5, 0.5, 8)
    assert (c.learning_rate, c.lambda1, c.lambda2, c.eta, c.k) == (1e-3, 1.0, 1.0, 0.05, 6)
    assert c.bank_capacity == 13 * 8


def test_presets():
    assert (PRESETS["bdgp"]["mu1"], PRESETS["bdgp"]["mu2"]) == (0.01, 0.2)
    assert (PRESETS["landuse21"]["mu1"], PRESETS["landuse21"]["mu2"]) == (0.02, 0.2)
    assert (PRESETS["scene15"]["mu1"], PRESETS["scene15"]["mu2"]) == (0.02, 0.4)
    assert (PRESETS["fashion"]["mu1"], PRESETS["fashion"]["mu2"]) == (0.05, 0.4)
    assert (PRESETS["synthetic"]["mu1"], PRESETS["synthetic"]["mu2"]) == (0.02, 0.2)
    c = build_config(preset="bdgp")
    assert c.widths == (1024, 64) and c.mu1 == 0.01
    assert build_config(preset="bdgp", mu1=0.03).mu1 == 0.03
    assert RATIO_SETTINGS[1] == (0.02, 0.05, 0.08)


def test_file_and_overrides(tmp_path):
    p = tmp_path / "c.txt"
    p.write_text("# comment\nseed = 4\nwidths = 64, 16\nuse_sr = false  # trailing\n")
    c = build_config(p, ["seed=5", "tau = 0.25"])
    assert c.seed == 5 and c.widths == (64, 16) and c.use_sr is False and c.tau == 0.25


def test_dumps_roundtrip():
    c = build_config(seed=3, widths=(8, 4), use_na=False)
    again = build_config(overrides=c.dumps().splitlines())
    assert again == c and again.hash() == c.hash()
    assert c.hash() != c.replace(seed=4).hash()


@pytest.mark.parametrize("kwargs", [
    dict(eta=0.0), dict(eta=1.0), dict(batch_size=0), dict(impute_start_epoch=300),
    dict(warm_epochs=200), dict(mu1=0.5, mu2=0.1), dict(k_pos=7), dict(rank_sign="other"),
    dict(preset="nope"), dict(missing_rate=1.0),
])
def test_invalid(kwargs):
    with pytest.raises(ConfigError):
        build_config(**kwargs)


@pytest.mark.parametrize("lines", [["seed"], ["nokey = 1"], ["seed = x"], ["use_sr = maybe"]])
def test_bad_assignments(lines):
    with pytest.raises(ConfigError):
        parse_assignments(lines)
