import math

import numpy as np
import pytest

from qrlink.channel import to_decibel
from qrlink.params import (
    ChannelParams,
    PlatformParams,
    ProtocolKind,
    ProtocolSpec,
    builtin_platforms,
    find_platform,
    resolve_context,
)
from qrlink.rates import UNBOUNDED, evaluate
from qrlink.sweep import (
    CSV_COLUMNS,
    Mode,
    RegimeReport,
    classify_regime,
    csv_lines,
    fitted_db_slope,
    sqrt_eta_slope,
    sweep_rr,
    sweep_skr,
)

CH = ChannelParams()
NSP = ProtocolSpec(ProtocolKind.NSP_CELL)
NRP = ProtocolSpec(ProtocolKind.NRP_CELL_IDEAL)


def _platform(era, name):
    return find_platform(builtin_platforms(era), name)


def test_sqrt_eta_slope():
    assert sqrt_eta_slope(22.0) == pytest.approx(-0.0987032913416481, rel=1e-12)


def test_rubidium_future_nrp_zero_length_row():
    res = sweep_skr(_platform("future", "Rubidium"), NRP, CH, [0.0], UNBOUNDED)
    (row,) = res.rows
    assert row.rate == pytest.approx(0.284374972232165, rel=1e-9)
    assert row.rate_db == pytest.approx(-5.461086, abs=1e-5)
    assert res.mode is Mode.SKR_GIVEN


@pytest.mark.parametrize("policy", ["fixed", "optimal", 3, UNBOUNDED])
def test_skr_rows_are_per_mode(policy):
    plat = _platform("current", "NV")
    grid = [0.0, 20.0, 100.0]
    res = sweep_skr(plat, NSP, CH, grid, policy)
    for row in res.rows:
        pt = evaluate(resolve_context(plat, NSP, CH, row.distance_km), row.cutoff_m)
        assert row.rate == pytest.approx(pt.raw_rate / 2 * pt.secret_fraction, rel=1e-12)
        if row.rate > 0:
            assert row.rate_db == pytest.approx(float(to_decibel(row.rate)), abs=1e-12)


def test_rr_rows_are_raw_rate_over_two():
    plat = _platform("current", "Rubidium")
    res = sweep_rr(plat, NSP, CH, [2.0, 40.0])
    for row in res.rows:
        pt = evaluate(resolve_context(plat, NSP, CH, row.distance_km), row.cutoff_m)
        assert row.rate == pytest.approx(pt.raw_rate / 2, rel=1e-14)
        assert row.fidelity >= 0.95


def test_rr_without_decoherence_is_unbounded():
    plat = PlatformParams("ideal memory", 0.5, 10.0, 1e300)
    res = sweep_rr(plat, NRP, CH, [0.0, 100.0, 200.0])
    assert all(r.cutoff_m == UNBOUNDED for r in res.rows)
    p = 0.5 * math.exp(-50 / 22)
    assert res.rows[1].rate == pytest.approx(p * (2 - p) / (3 - 2 * p) / 2)


def test_rr_absent_beyond_constant_dephasing_limit():
    # F <= (1 + e^{-2 L / (c tau)}) / 2 drops below 0.95 near 105 km for 10 ms
    plat = _platform("current", "NV")
    res = sweep_rr(plat, NSP, CH, np.arange(2.0, 401.0, 2.0))
    present = [r.rate is not None for r in res.rows]
    first_absent = present.index(False)
    assert not any(present[first_absent:])
    assert 0 < first_absent and res.rows[first_absent].distance_km <= 106


def test_quantum_dots_current_rr_absent():
    res = sweep_rr(_platform("current", "quantum dots"), NSP, CH, np.arange(2.0, 401.0, 2.0))
    assert all(r.rate is None and r.cutoff_m is None for r in res.rows)
    assert classify_regime(res) == RegimeReport(None, None)


def test_quantum_dots_current_below_realistic_bound():
    res = sweep_skr(_platform("current", "quantum dots"), NSP, CH, np.arange(2.0, 401.0, 2.0))
    assert all(r.rate_db < r.realistic_ppl_db for r in res.rows)
    assert res.regime_crossings == RegimeReport(None, None)


def test_regime_crossing_interpolated_in_db():
    res = sweep_skr(_platform("current", "Rubidium"), NSP, CH, np.arange(0.0, 401.0, 2.0))
    x = res.regime_crossings.ideal_crossing_km
    assert x is not None and 0 < x <= 400
    i = int(np.searchsorted(res.distances(), x))
    lo, hi = res.rows[i - 1], res.rows[i]
    assert lo.rate_db <= lo.ideal_bound_db and hi.rate_db > hi.ideal_bound_db


def test_rubidium_future_nrp_slope():
    res = sweep_skr(_platform("future", "Rubidium"), NRP, CH, np.arange(0.0, 401.0, 2.0))
    slope = fitted_db_slope(res, 200, 400)
    assert slope == pytest.approx(sqrt_eta_slope(), rel=0.10)


def test_single_distance_single_row():
    res = sweep_skr(_platform("current", "NV"), NSP, CH, [50.0])
    assert len(res.rows) == 1


@pytest.mark.parametrize("grid", [[], [10.0, 5.0], [-1.0, 2.0]])
def test_bad_grid(grid):
    with pytest.raises(ValueError):
        sweep_skr(_platform("current", "NV"), NSP, CH, grid)


def test_bad_policy():
    with pytest.raises(ValueError):
        sweep_skr(_platform("current", "NV"), NSP, CH, [0.0], "best")


def test_workers_do_not_change_rows():
    plat = _platform("future", "SiV")
    grid = np.arange(0.0, 401.0, 8.0)
    assert sweep_skr(plat, NSP, CH, grid, "optimal") == sweep_skr(plat, NSP, CH, grid, "optimal", workers=4)
    assert sweep_rr(plat, NSP, CH, grid) == sweep_rr(plat, NSP, CH, grid, workers=4)


def test_csv_layout():
    res = sweep_rr(_platform("current", "quantum dots"), NSP, CH, [2.0, 4.0])
    lines = csv_lines(res)
    assert lines[0] == ",".join(CSV_COLUMNS)
    cells = lines[1].split(",")
    assert cells[:6] == ["2", "none", "NA", "NA", "NA", "NA"]
    assert float(cells[6]) == pytest.approx(float(to_decibel(-math.log2(1 - math.exp(-2 / 22)))), rel=1e-8)
    combined = csv_lines(res, with_platform=True)
    assert combined[0].startswith("platform,") and combined[1].startswith("quantum dots,")


def test_csv_nine_significant_digits_and_infinities():
    res = sweep_skr(_platform("future", "Rubidium"), NRP, CH, [0.0], UNBOUNDED)
    cells = dict(zip(CSV_COLUMNS, csv_lines(res)[1].split(",")))
    assert cells["cutoff_m"] == "unbounded"
    assert cells["rate_linear"] == "0.284374972"
    assert cells["ideal_bound_db"] == "inf"
