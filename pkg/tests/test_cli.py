import copy
import json

import numpy as np
import pytest

from elastica_np.cli import (
    COLUMNS,
    ConfigError,
    ConvergenceRecord,
    export_csv,
    fit_rate,
    load_config,
    main,
    read_csv,
    run_config,
)
from elastica_np.spectra import GapRow, SpectralReport

BASE = {
    "run": {"seed": 0},
    "geometry": {
        "outer": {"kind": "circle", "center": [0, 0], "radius": 2.0},
        "omega": {"kind": "circle", "center": [0, 0], "radius": 0.25},
        "eps": 1.0,
        "N_incl": 64,
        "N_outer": 256,
    },
    "material": {"lambda": 2.0, "mu": 0.5,
                 "contrast": {"case": 1, "values": [1e2, 1e3, 1e4, 1e5]}},
    "load": {"A": [[1.0, 0.0], [0.0, -1.0]]},
}


def _cfg(**changes):
    cfg = copy.deepcopy(BASE)
    for path, v in changes.items():
        d = cfg
        *head, last = path.split("__")
        for k in head:
            d = d[k]
        if v is None:
            d.pop(last)
        else:
            d[last] = v
    return cfg


def _write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def _rec(x, err):
    return ConvergenceRecord(1, x, err, 1.0, 1.0, 0.0)


# ---- rate fitting ------------------------------------------------------------------

def test_fit_rate_exact_power_laws():
    xs = [10.0, 100.0, 1000.0]
    slope, r2 = fit_rate([_rec(x, 1 / x) for x in xs])
    assert slope == pytest.approx(-1.0, abs=1e-12) and r2 == pytest.approx(1.0, abs=1e-12)
    slope, _ = fit_rate([_rec(x, x) for x in xs])
    assert slope == pytest.approx(1.0, abs=1e-12)


def test_fit_rate_preconditions():
    with pytest.raises(ValueError):
        fit_rate([_rec(10.0, 0.1), _rec(1000.0, 0.001)])
    with pytest.raises(ValueError, match="nothing to fit"):
        fit_rate([_rec(x, 0.0) for x in (10.0, 100.0, 1000.0)])
    with pytest.raises(ValueError, match="decades"):
        fit_rate([_rec(x, 1 / x) for x in (10.0, 20.0, 40.0)])


# ---- CSV ---------------------------------------------------------------------------

def test_export_empty_is_header_only(tmp_path):
    p = export_csv([], tmp_path / "e.csv")
    assert p.read_text() == ",".join(COLUMNS["converge"]) + "\n"


def test_export_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    recs = [ConvergenceRecord(2, float(x), float(e), float(g), float(f), float(s))
            for x, e, g, f, s in rng.random((6, 5)) * 10.0 ** rng.integers(-12, 12, (6, 5))]
    header, rows = read_csv(export_csv(recs, tmp_path / "c.csv"))
    assert header == COLUMNS["converge"]
    for r, row in zip(recs, rows):
        assert row == [r.case, r.param, r.error, r.load_norm, r.phi_norm, r.seconds]


def test_export_spectrum_sorted(tmp_path):
    rep = SpectralReport("N", "full", np.array([0.3, -0.2, 0.5, 0.1]), 0.0, {"eps": 1.0})
    header, rows = read_csv(export_csv([rep], tmp_path / "s.csv"))
    assert header == COLUMNS["spectrum"]
    theta = [r[-1] for r in rows]
    assert theta == sorted(theta) and [r[3] for r in rows] == [0, 1, 2, 3]


def test_export_gap_rows(tmp_path):
    row = GapRow(0.5, -0.35, 0.12, -0.34, 0.13, 37)
    header, rows = read_csv(export_csv([row], tmp_path / "g.csv"))
    assert header == COLUMNS["gap"]
    assert rows[0] == [0.5, -0.35, 0.12, -0.34, 0.13, row.delta1]


def test_export_unwritable_path(tmp_path):
    with pytest.raises(OSError, match="cannot write CSV"):
        export_csv([], tmp_path / "missing" / "x.csv")


# ---- config validation --------------------------------------------------------------

@pytest.mark.parametrize("change", [
    {"material__mu": -1.0},
    {"material__lambda": -2.0},
    {"geometry__N_incl": 63},
    {"geometry__outer": {"kind": "square"}},
    {"load__A": [[1.0, 0.5], [0.0, 1.0]]},
    {"load": None},
    {"run__kind": "plot"},
    {"run__colour": "red"},
])
def test_invalid_configs_rejected(change):
    with pytest.raises(ConfigError, match="config field"):
        load_config(_cfg(**change))


def test_config_errors_name_the_field():
    with pytest.raises(ConfigError, match="material/mu"):
        load_config(_cfg(material__mu=-1.0))


def test_kind_mismatch_rejected(tmp_path):
    with pytest.raises(ConfigError, match="run/kind"):
        run_config(_cfg(run__kind="gap"), "spectrum", tmp_path)


# ---- runs ---------------------------------------------------------------------------

def test_converge_case1(tmp_path):
    man = run_config(_cfg(), "converge", tmp_path)
    header, rows = read_csv(tmp_path / "converge.csv")
    assert header == COLUMNS["converge"] and len(rows) == 4
    errs = [r[2] for r in rows]
    assert all(a > b for a, b in zip(errs, errs[1:]))
    res = man["results"]
    assert res["slope"] == pytest.approx(-1.0, abs=0.15) and res["r_squared"] >= 0.98
    assert all(r[4] <= res["phi_bound_constant"] * r[3] for r in rows)
    saved = json.loads((tmp_path / "converge.json").read_text())
    assert saved["config"] == _cfg() and saved["csv"] == "converge.csv"


def test_spectrum_single_circle_row_count(tmp_path):
    cfg = _cfg(geometry__eps=None)
    assert main(["spectrum", "--config", _write(tmp_path, cfg), "--out", str(tmp_path)]) == 0
    _, rows = read_csv(tmp_path / "spectrum.csv")
    assert len(rows) == 2 * 64
    assert [r[-1] for r in rows] == sorted(r[-1] for r in rows)


def test_malformed_config_exit_code(tmp_path, capsys):
    path = _write(tmp_path, _cfg(material__mu=-1.0))
    assert main(["spectrum", "--config", path, "--out", str(tmp_path)]) == 2
    assert "material/mu" in capsys.readouterr().err
    assert main(["spectrum", "--config", str(tmp_path / "nope.json")]) == 2


def test_numeric_failure_exit_code(tmp_path, capsys):
    path = _write(tmp_path, _cfg(geometry__eps=3.0))
    assert main(["spectrum", "--config", path, "--out", str(tmp_path)]) == 3
    assert "no cells fit" in capsys.readouterr().err


def test_solve_rows(tmp_path):
    cfg = _cfg(geometry__eps=None, material__contrast={"case": 3, "values": [10.0]})
    run_config(cfg, "solve", tmp_path)
    header, rows = read_csv(tmp_path / "solve.csv")
    assert header == COLUMNS["solve"]
    assert len(rows) == 2 * 64
    assert {r[1] for r in rows} == {"transmission", "limit_rigid"}


def test_gap_requires_period(tmp_path):
    with pytest.raises(ConfigError, match="geometry/eps"):
        run_config(_cfg(geometry__eps=None), "gap", tmp_path)


def test_spectrum_deterministic(tmp_path):
    cfg = _cfg(geometry__eps=None)
    run_config(cfg, "spectrum", tmp_path / "a")
    run_config(cfg, "spectrum", tmp_path / "b")
    assert (tmp_path / "a" / "spectrum.csv").read_bytes() == (tmp_path / "b" / "spectrum.csv").read_bytes()


def test_threads_give_same_results(tmp_path, monkeypatch):
    cfg = _cfg(material__contrast={"case": 2, "values": [0.1, 0.01, 0.001]})
    run_config(cfg, "converge", tmp_path / "one", threads=1)
    monkeypatch.setenv("ELASTICA_NP_THREADS", "3")
    man = run_config(cfg, "converge", tmp_path / "three")
    assert man["threads"] == 3
    _, a = read_csv(tmp_path / "one" / "converge.csv")
    _, b = read_csv(tmp_path / "three" / "converge.csv")
    # the wall-time column is the only one allowed to differ
    assert [r[:-1] for r in a] == [r[:-1] for r in b]
    assert [r[1] for r in b] == sorted(r[1] for r in b)
