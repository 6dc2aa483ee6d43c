import pytest

from labnet.config import (BRANCH_ALIASES, PRESETS, RunConfig,
                           load_config_file, parse_config_text, resolve)
from labnet.errors import ConfigError


def test_defaults_build_the_shipped_model():
    cfg = RunConfig()
    mc = cfg.model_config()
    assert mc.rates == ((1, 4, 16), (2, 8, 32), (4, 16, 64))
    assert mc.branch_mode == "two"
    assert cfg.loss_weights().lambda1 == 10.0
    assert cfg.loss_weights().lambda2 == 100.0


def test_preset_expansion():
    istd = resolve(preset="istd")
    assert (istd.image_size, istd.batch_size, istd.epochs, istd.lsa_m) \
        == (256, 2, 300, 256)
    srd = resolve(preset="srd")
    assert (srd.image_size, srd.batch_size, srd.epochs, srd.lsa_m) \
        == (400, 1, 500, 128)


def test_unknown_preset_rejected():
    with pytest.raises(ConfigError, match="preset"):
        resolve(preset="imagenet")


def test_text_roundtrip_is_lossless():
    cfg = RunConfig(image_size=48, lsa_downsample=False,
                    stage_channels=(48, 32, 16), seed=7)
    back = resolve(file_values=parse_config_text(cfg.to_text()))
    assert back == cfg


def test_parse_comments_and_blank_lines():
    vals = parse_config_text("# a comment\n\nseed = 3   # trailing\nlr=0.01\n")
    assert vals == {"seed": 3, "lr": 0.01}


def test_parse_rates_and_channels():
    vals = parse_config_text("rates = 1,2,3; 4,5,6\nstage_channels = 8, 16,24\n")
    assert vals["rates"] == ((1, 2, 3), (4, 5, 6))
    assert vals["stage_channels"] == (8, 16, 24)


def test_parse_bool_spellings():
    for text, want in (("true", True), ("on", True), ("1", True),
                       ("false", False), ("off", False), ("0", False)):
        assert parse_config_text(f"lsa_downsample = {text}\n") \
            == {"lsa_downsample": want}
    with pytest.raises(ConfigError):
        parse_config_text("lsa_downsample = maybe\n")


def test_parse_rejects_unknown_key():
    with pytest.raises(ConfigError, match="unknown config key"):
        parse_config_text("momentum = 0.9\n")


def test_parse_rejects_malformed_line():
    with pytest.raises(ConfigError, match=":2:"):
        parse_config_text("seed = 1\nthis is not a setting\n")


def test_parse_rejects_bad_int():
    with pytest.raises(ConfigError, match="seed"):
        parse_config_text("seed = soon\n")


def test_resolution_precedence():
    # preset supplies 256, the file overrides to 64, the flag wins with 32
    cfg = resolve(preset="istd", file_values={"image_size": 64},
                  overrides={"image_size": 32})
    assert cfg.image_size == 32
    assert cfg.batch_size == 2  # untouched preset value survives


def test_none_overrides_are_ignored():
    cfg = resolve(preset="istd", overrides={"image_size": None})
    assert cfg.image_size == 256


def test_branch_aliases_cover_the_three_modes():
    assert BRANCH_ALIASES["two-branch"] == ("two", "lab")
    assert BRANCH_ALIASES["lab-together"] == ("single", "lab")
    assert BRANCH_ALIASES["rgb-together"] == ("single", "rgb")


def test_bad_switch_value_is_a_config_error():
    with pytest.raises(ConfigError):
        RunConfig(eca_mode="median")
    with pytest.raises(ConfigError):
        RunConfig(color_space="hsv")


def test_save_and_load_file(tmp_path):
    cfg = resolve(preset="srd", overrides={"seed": 11})
    p = tmp_path / "run" / "manifest.cfg"
    cfg.save(p)
    assert resolve(file_values=load_config_file(p)) == cfg


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config_file(tmp_path / "absent.cfg")


def test_layout_override_dirs():
    cfg = RunConfig(mask_dir="/elsewhere/masks")
    lay = cfg.layout("train")
    assert lay.shadow_dir == "train_A"
    assert lay.mask_dir == "/elsewhere/masks"
    assert lay.free_dir == "train_C"


def test_presets_table_is_complete():
    assert set(PRESETS) == {"custom", "istd", "srd"}
