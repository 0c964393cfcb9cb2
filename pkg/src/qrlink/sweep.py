"""Rate-versus-distance sweeps with benchmark columns and regime crossings."""
from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .channel import benchmark, to_decibel
from .cutoff import (
    DEFAULT_MAX_SEARCH,
    fixed_cutoff_over_range,
    max_cutoff_for_fidelity,
    optimal_cutoff_for_skr,
)
from .params import ChannelParams, PlatformParams, ProtocolSpec, resolve_context
from .rates import UNBOUNDED, evaluate

DEFAULT_GRID = tuple(float(x) for x in range(0, 401, 2))
CSV_COLUMNS = (
    "distance_km",
    "cutoff_m",
    "rate_linear",
    "rate_db",
    "fidelity",
    "e_x",
    "ideal_bound_db",
    "realistic_ppl_db",
    "sqrt_eta_db",
)


class Mode(str, enum.Enum):
    SKR_FIXED = "skr-fixed-cutoff"
    SKR_OPTIMAL = "skr-optimal-cutoff"
    SKR_GIVEN = "skr-given-cutoff"
    RR_FIDELITY = "rr-fidelity-floor"


def sqrt_eta_slope(l_att: float = 22.0) -> float:
    """dB/km slope of a rate scaling like sqrt(eta)."""
    return -10.0 * math.log10(math.e) / (2.0 * l_att)


@dataclass(frozen=True)
class SweepRow:
    """One distance. ``rate`` is None when no cutoff meets the fidelity floor."""

    distance_km: float
    cutoff_m: int | float | None
    rate: float | None
    rate_db: float | None
    ideal_bound_db: float
    realistic_ppl_db: float
    sqrt_eta_db: float
    fidelity: float | None
    e_x: float | None


@dataclass(frozen=True)
class RegimeReport:
    ideal_crossing_km: float | None
    realistic_crossing_km: float | None


@dataclass(frozen=True)
class SweepResult:
    platform: str
    protocol: str
    era: str | None
    mode: Mode
    rows: list[SweepRow]
    regime_crossings: RegimeReport | None = field(default=None)

    def distances(self) -> np.ndarray:
        return np.array([r.distance_km for r in self.rows])

    def rates(self) -> np.ndarray:
        """Linear rates with NaN for absent rows."""
        return np.array([np.nan if r.rate is None else r.rate for r in self.rows])


def _check_grid(distances) -> list[float]:
    grid = [float(d) for d in distances]
    if not grid:
        raise ValueError("distance grid must not be empty")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("distance grid must be strictly increasing")
    if grid[0] < 0:
        raise ValueError("distances must be non-negative")
    return grid


def _map(fn, items, workers):
    if workers is None or workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _row(distance, m, rate, fidelity, e_x, p_link, channel) -> SweepRow:
    bench = benchmark(distance, p_link, channel.l_att)
    return SweepRow(
        distance_km=distance,
        cutoff_m=m,
        rate=rate,
        rate_db=None if rate is None else float(to_decibel(rate)),
        ideal_bound_db=float(to_decibel(bench.ideal_bound)),
        realistic_ppl_db=float(to_decibel(bench.realistic_ppl)),
        sqrt_eta_db=float(to_decibel(bench.sqrt_eta_line)),
        fidelity=fidelity,
        e_x=e_x,
    )


def _finish(platform, protocol, mode, rows) -> SweepResult:
    era = platform.era.value if platform.era is not None else None
    result = SweepResult(platform.name, protocol.kind.value, era, mode, rows)
    return replace(result, regime_crossings=classify_regime(result))


def sweep_skr(
    platform: PlatformParams,
    protocol: ProtocolSpec,
    channel: ChannelParams = ChannelParams(),
    distances: Sequence[float] = DEFAULT_GRID,
    cutoff_policy="fixed",
    *,
    objective: str = "worst",
    m_max_search: int = DEFAULT_MAX_SEARCH,
    workers: int | None = None,
) -> SweepResult:
    """Key rate per channel use per mode along ``distances``.

    ``cutoff_policy`` is ``"fixed"`` (one cutoff for the whole grid),
    ``"optimal"`` (re-optimised at each distance), a non-negative int, or
    ``UNBOUNDED``.
    """
    grid = _check_grid(distances)

    def ctx_at(d):
        return resolve_context(platform, protocol, channel, d)

    if cutoff_policy == "optimal":
        mode = Mode.SKR_OPTIMAL
        cutoffs = _map(lambda d: optimal_cutoff_for_skr(ctx_at(d), m_max_search).m,
                       grid, workers)
    else:
        if cutoff_policy == "fixed":
            mode = Mode.SKR_FIXED
            m = fixed_cutoff_over_range(ctx_at, grid, objective, m_max_search,
                                        workers=workers).m
        elif cutoff_policy == UNBOUNDED or (
            isinstance(cutoff_policy, (int, np.integer)) and cutoff_policy >= 0
        ):
            mode = Mode.SKR_GIVEN
            m = cutoff_policy
        else:
            raise ValueError(f"unknown cutoff policy {cutoff_policy!r}")
        cutoffs = [m] * len(grid)

    def one(item):
        d, m = item
        point = evaluate(ctx_at(d), m, d)
        return _row(d, point.cutoff_m, point.skr, point.fidelity, point.e_x,
                    platform.p_link, channel)

    rows = _map(one, list(zip(grid, cutoffs)), workers)
    return _finish(platform, protocol, mode, rows)


def sweep_rr(
    platform: PlatformParams,
    protocol: ProtocolSpec,
    channel: ChannelParams = ChannelParams(),
    distances: Sequence[float] = DEFAULT_GRID,
    f_min: float = 0.95,
    *,
    workers: int | None = None,
) -> SweepResult:
    """Raw rate per channel use per mode at the largest cutoff meeting ``f_min``.

    Distances where even ``m = 0`` misses the floor give rows with
    ``rate=None``.
    """
    grid = _check_grid(distances)

    def one(d):
        ctx = resolve_context(platform, protocol, channel, d)
        choice = max_cutoff_for_fidelity(ctx, f_min)
        if choice.m is None:
            return _row(d, None, None, None, None, platform.p_link, channel)
        point = evaluate(ctx, choice.m, d)
        return _row(d, point.cutoff_m, point.raw_rate / ctx.n_modes, point.fidelity,
                    point.e_x, platform.p_link, channel)

    rows = _map(one, grid, workers)
    return _finish(platform, protocol, Mode.RR_FIDELITY, rows)


def _first_crossing(distances, rate_db, bound_db):
    prev_d, prev_diff = None, None
    for d, r, b in zip(distances, rate_db, bound_db):
        diff = -math.inf if r is None else r - b
        if diff > 0:
            if prev_diff is None or not math.isfinite(prev_diff):
                return d
            # linear in dB between the bracketing grid points
            return prev_d + (0.0 - prev_diff) * (d - prev_d) / (diff - prev_diff)
        prev_d, prev_diff = d, diff
    return None


def classify_regime(sweep: SweepResult) -> RegimeReport:
    """First distances where the rate beats the ideal and the realistic bound."""
    distances = [r.distance_km for r in sweep.rows]
    rate_db = [r.rate_db for r in sweep.rows]
    return RegimeReport(
        ideal_crossing_km=_first_crossing(
            distances, rate_db, [r.ideal_bound_db for r in sweep.rows]),
        realistic_crossing_km=_first_crossing(
            distances, rate_db, [r.realistic_ppl_db for r in sweep.rows]),
    )


def fitted_db_slope(sweep: SweepResult, l_from: float, l_to: float) -> float:
    """Least-squares slope (dB/km) of the rate over ``[l_from, l_to]``."""
    d = sweep.distances()
    with np.errstate(divide="ignore"):
        r = 10.0 * np.log10(sweep.rates())
    sel = (d >= l_from) & (d <= l_to) & np.isfinite(r)
    if sel.sum() < 2:
        return math.nan
    return float(np.polyfit(d[sel], r[sel], 1)[0])


def _fmt(x) -> str:
    if x is None:
        return "NA"
    if x == UNBOUNDED:
        return "inf"
    if x == -math.inf:
        return "-inf"
    return f"{x:.9g}"


def _fmt_cutoff(m) -> str:
    if m is None:
        return "none"
    return "unbounded" if m == UNBOUNDED else str(int(m))


def csv_lines(sweep: SweepResult, with_platform: bool = False) -> list[str]:
    """Header plus one line per row; absent operating points are ``NA``."""
    head = ("platform",) + CSV_COLUMNS if with_platform else CSV_COLUMNS
    lines = [",".join(head)]
    for r in sweep.rows:
        cells = [
            _fmt(r.distance_km), _fmt_cutoff(r.cutoff_m), _fmt(r.rate), _fmt(r.rate_db),
            _fmt(r.fidelity), _fmt(r.e_x), _fmt(r.ideal_bound_db),
            _fmt(r.realistic_ppl_db), _fmt(r.sqrt_eta_db),
        ]
        if with_platform:
            cells.insert(0, sweep.platform)
        lines.append(",".join(cells))
    return lines
