import math

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings, strategies as st

from svrconf.dataset import Dataset
from svrconf.errors import EmptyGroup, InvalidDate, NoVariance, UnknownColumn
from svrconf.features import (
    FeaturePipeline,
    SelectionScenario,
    Standardizer,
    apply_scenario,
    augment_stats,
    expand_date,
    load_scenarios,
    read_holidays,
    save_scenarios,
    select_by_correlation,
)


def test_saturday_is_weekend():
    d = expand_date("2021-07-03")
    assert d["isWeekend"] == 1.0 and d["weekday"] == 5.0
    assert expand_date("2021-07-05")["isWeekend"] == 0.0


def test_seasons_and_holidays():
    assert expand_date("2021-01-15")["season"] == 0.0
    assert expand_date("2021-04-15")["season"] == 1.0
    assert expand_date("2021-07-15")["season"] == 2.0
    assert expand_date("2021-10-15")["season"] == 3.0
    assert expand_date("2021-12-25", ["2021-12-25"])["isHoliday"] == 1.0
    assert expand_date("2020-12-31")["yearday"] == 366.0


def test_invalid_date():
    with pytest.raises(InvalidDate):
        expand_date("2020-02-30")


@given(st.dates())
@settings(max_examples=200, deadline=None)
def test_cyclical_pairs_on_unit_circle(d):
    e = expand_date(d)
    for k in ("weekday", "yearday"):
        assert abs(e[f"{k}_sin"] ** 2 + e[f"{k}_cos"] ** 2 - 1.0) < 1e-12
    assert math.isclose(e["yearday_sin"], math.sin(2 * math.pi * e["yearday"] / 365.25))


def test_augment_stats():
    s = augment_stats({"g": [1, 2, 3], "h": [5]})
    assert (s["g_min"], s["g_max"], s["g_mean"], s["g_sum"]) == (1, 3, 2, 6)
    assert abs(s["g_sd"] - 0.8164966) < 1e-7
    assert s["h_min"] == s["h_max"] == s["h_mean"] == s["h_sum"] == 5 and s["h_sd"] == 0
    with pytest.raises(EmptyGroup):
        augment_stats({"e": []})


def test_standardizer_moments(rng):
    X = rng.normal(3, 5, size=(200, 4))
    X[:, 2] = 7.0
    sc = Standardizer.fit(X, [True, True, True, False])
    Z = sc.transform(X)
    assert np.allclose(Z[:, :2].mean(0), 0, atol=1e-9) and np.allclose(Z[:, :2].var(0), 1, atol=1e-9)
    assert np.all(Z[:, 2] == 0) and np.array_equal(Z[:, 3], X[:, 3])
    back = Standardizer.from_dict(sc.to_dict())
    assert np.array_equal(back.transform(X), Z)


def test_pipeline_schema_is_fixed(tmp_path):
    hol = tmp_path / "hol.txt"
    hol.write_text("# holidays\n2021-01-01\n")
    raw = pd.DataFrame({"date": ["2021-01-01", "2021-06-02"], "a": [1.0, 2.0], "b": [3.0, 5.0], "z": [0, 0]})
    pipe = FeaturePipeline(date_column="date", stats_groups={"ab": ["a", "b"]},
                           holidays=tuple(str(d) for d in read_holidays(hol)), drop=("z",))
    out = pipe.fit_transform(raw)
    assert out.loc[0, "isHoliday"] == 1.0 and out.loc[1, "ab_sum"] == 7.0
    assert "z" not in out.columns
    again = FeaturePipeline.from_dict(pipe.to_dict()).transform(raw.iloc[::-1])
    assert list(again.columns) == list(out.columns)
    assert np.array_equal(again.iloc[::-1].to_numpy(), out.to_numpy())
    with pytest.raises(UnknownColumn):
        pipe.transform(raw.drop(columns=["a"]))


def corr_ds(rng, n=60):
    y = rng.random(n)
    frame = pd.DataFrame({
        "instance_id": [f"i{k // 3}" for k in range(n)],
        "const": 1.0,
        "noise": rng.normal(size=n),
        "copy1": y * 3 + 1,
        "copy2": y * 3 + 1,
        "weak": y + rng.normal(scale=1.0, size=n),
        "b0": rng.integers(0, 2, size=n),
        "p_raw": y,
        "p_norm": y,
    })
    return Dataset(frame, ("const", "noise", "copy1", "copy2", "weak"), ("b0",))


def test_correlation_ranking_and_redundancy(rng):
    ds = corr_ds(rng)
    scen = select_by_correlation(ds, 5)
    assert scen.kept_feature_columns[0] == "copy1"
    assert "copy2" not in scen.kept_feature_columns and "const" not in scen.kept_feature_columns
    assert len(select_by_correlation(ds, 1).kept_feature_columns) == 1


def test_correlation_row_order_invariant(rng):
    ds = corr_ds(rng)
    shuffled = ds.with_frame(ds.frame.sample(frac=1.0, random_state=3).reset_index(drop=True))
    assert select_by_correlation(ds, 3) == select_by_correlation(shuffled, 3)


def test_all_constant_raises(rng):
    ds = corr_ds(rng)
    frame = ds.frame.copy()
    for c in ds.feature_names:
        frame[c] = 2.0
    with pytest.raises(NoVariance):
        select_by_correlation(ds.with_frame(frame), 3)


def test_apply_scenario(rng, tmp_path):
    ds = corr_ds(rng)
    kept = apply_scenario(ds, SelectionScenario("k", ("copy1",), ()))
    assert kept.feature_names == ("copy1",) and len(kept) <= len(ds)
    ident = apply_scenario(ds, SelectionScenario("noFS"))
    assert len(ident) == len(ds)
    with pytest.raises(UnknownColumn):
        apply_scenario(ds, SelectionScenario("bad", ("gone",), None))
    save_scenarios(tmp_path / "s.json", [SelectionScenario("k", ("copy1",), ("b0",)), SelectionScenario("noFS")])
    loaded = load_scenarios(tmp_path / "s.json")
    assert loaded["k"].kept_config_columns == ("b0",) and loaded["noFS"].is_identity
