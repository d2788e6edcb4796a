import os
import stat

import pandas as pd
import pytest

from geomv.application.use_cases.blinding import (
    KEY_FILE,
    blind,
    blind_name,
    load_key,
    make_key,
    save_key,
    unblind,
    unblind_name,
)
from geomv.domain.entities.feature import Method
from geomv.domain.errors import ConfigError

RAIN = ["chirps", "arc2", "tamsat"]
TEMP = ["era5_tp", "cpc_tp"]


@pytest.fixture
def key():
    return make_key(list(Method), RAIN, TEMP, seed=11)


def test_codes_are_a_bijection(key):
    assert sorted(key.methods.values()) == sorted(f"x{i}" for i in range(10))
    assert sorted(key.products[p] for p in RAIN) == ["rf1", "rf2", "rf3"]
    assert sorted(key.products[p] for p in TEMP) == ["tp1", "tp2"]


def test_key_is_seeded():
    assert make_key(list(Method), RAIN, TEMP, seed=11) == make_key(list(Method), RAIN, TEMP, seed=11)
    shuffles = {tuple(make_key(list(Method), RAIN, TEMP, seed=s).methods.values()) for s in range(5)}
    assert len(shuffles) > 1


def test_product_named_like_a_method_is_rejected():
    with pytest.raises(ConfigError):
        make_key(list(Method), ["hh_simple"], [], seed=0)


def test_blind_leaves_no_names_and_round_trips(key):
    frame = pd.DataFrame(
        {
            "feature_id": ["h1:hh_bilinear", "h1:admin_zone", "h2:ea_mod_simple"],
            "method": ["hh_bilinear", "admin_zone", "ea_mod_simple"],
            "product": ["chirps", "arc2", "era5_tp"],
            "beta1": [0.1, 0.2, 0.3],
            "note": ["chirps vs arc2", None, "ea_simple"],
        }
    )
    coded = blind(frame, key)
    text = coded.to_csv(index=False)
    for name in [m.value for m in Method] + RAIN + TEMP:
        assert name not in text
    assert coded["beta1"].tolist() == [0.1, 0.2, 0.3]
    pd.testing.assert_frame_equal(unblind(coded, key), frame)


def test_blind_matches_whole_tokens_only(key):
    # ea_simple must not be rewritten inside ea_mod_simple, nor hh_simple inside a longer word
    code = key.methods[Method.EA_MOD_SIMPLE]
    assert blind_name("ea_mod_simple", key) == code
    assert blind_name("xhh_simple", key) == "xhh_simple"


def test_blind_headers(key):
    frame = pd.DataFrame({"chirps": [1.0]})
    assert list(blind(frame, key).columns) == [key.products["chirps"]]


def test_name_round_trip(key):
    name = "h7:admin_center_bilinear"
    assert unblind_name(blind_name(name, key), key) == name


def test_save_key_is_owner_only(tmp_path, key):
    path = save_key(key, tmp_path / "sealed")
    assert path.name == KEY_FILE
    assert stat.S_IMODE(os.stat(path).st_mode) == 0o600
    assert load_key(path) == key
