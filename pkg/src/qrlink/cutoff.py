"""Choosing the memory cutoff.

Three policies are provided: the largest cutoff that keeps the fidelity above
a floor, the cutoff maximising the key rate at one distance, and a single
cutoff used over a whole distance range.

All searches treat ``UNBOUNDED`` as a candidate. Because the key rate only
approaches its unbounded value from below, ``UNBOUNDED`` wins whenever its
key rate is at least the best finite one.
"""
from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .params import LinkContext
from .rates import UNBOUNDED, _skr_kernel, effective_fidelity, skr

DEFAULT_MAX_SEARCH = 10**6
_SCAN_BLOCK = 64
_FANOUT = 16


class Criterion(str, enum.Enum):
    FIDELITY_FLOOR = "fidelity-floor"
    SKR_OPTIMAL = "skr-optimal"
    FIXED_OVER_RANGE = "fixed-over-range"


@dataclass(frozen=True)
class CutoffChoice:
    """A chosen cutoff.

    ``m`` is an int, ``UNBOUNDED``, or None when no cutoff satisfies the
    criterion. ``achieved_value`` is the fidelity (fidelity floor), the key
    rate (per-distance optimum) or the worst-case ratio to the per-distance
    optimum (fixed over a range).
    """

    m: int | float | None
    criterion: Criterion
    achieved_value: float | None
    f_min: float | None = None

    @property
    def is_unbounded(self) -> bool:
        return self.m == UNBOUNDED


def max_cutoff_for_fidelity(ctx: LinkContext, f_min: float) -> CutoffChoice:
    """Largest cutoff whose effective fidelity is still at least ``f_min``.

    Returns ``m=None`` when even ``m=0`` misses the floor.
    """
    if not (0.5 < f_min < 1.0):
        raise ValueError(f"f_min must be in (1/2, 1), got {f_min}")

    def fid(m):
        return effective_fidelity(ctx.p, m, ctx.t0, ctx.tau_coh, ctx.extra_units)

    f0 = float(fid(0))
    if f0 < f_min:
        return CutoffChoice(None, Criterion.FIDELITY_FLOOR, f0, f_min)
    f_inf = float(fid(UNBOUNDED))
    if f_inf >= f_min:
        return CutoffChoice(UNBOUNDED, Criterion.FIDELITY_FLOOR, f_inf, f_min)

    # fidelity is non-increasing in m: grow an upper bracket, then bisect
    lo, hi = 0, 1
    while fid(hi) >= f_min:
        lo, hi = hi, hi * 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if fid(mid) >= f_min:
            lo = mid
        else:
            hi = mid
    return CutoffChoice(lo, Criterion.FIDELITY_FLOOR, float(fid(lo)), f_min)


def _best_finite(ctx: LinkContext, m_max_search: int) -> tuple[int, float]:
    """Exact maximiser of skr over 0..m_max_search, smallest m on ties.

    Blocks of cutoffs are pruned when their upper bound falls below the best
    value seen; survivors are split until they are short enough to scan.
    """
    rate, block_bound = _skr_kernel(ctx)
    best_m, best = 0, float(rate(np.zeros(1))[0])
    lo = np.array([0.0])
    hi = np.array([float(m_max_search)])
    while lo.size:
        short = hi - lo < _SCAN_BLOCK
        if short.any():
            ms = np.concatenate([np.arange(a, b + 1.0) for a, b in zip(lo[short], hi[short])])
            values = rate(ms)
            i = int(np.argmax(values))
            if values[i] > best or (values[i] == best and ms[i] < best_m):
                best_m, best = int(ms[i]), float(values[i])
            lo, hi = lo[~short], hi[~short]
            if not lo.size:
                break
        # split each block into _FANOUT children and probe their left edges
        width = np.floor((hi - lo + 1.0) / _FANOUT)
        k = np.arange(_FANOUT)
        child_lo = (lo[:, None] + k * width[:, None]).ravel()
        child_hi = np.concatenate([child_lo[1:] - 1.0, [0.0]]).reshape(-1, _FANOUT)
        child_hi[:, -1] = hi
        child_hi = child_hi.ravel()
        values = rate(child_lo)
        i = int(np.argmax(values))
        if values[i] > best or (values[i] == best and child_lo[i] < best_m):
            best_m, best = int(child_lo[i]), float(values[i])
        bound = block_bound(child_lo, child_hi)
        keep = (bound > best) | ((bound == best) & (child_lo < best_m))
        lo, hi = child_lo[keep], child_hi[keep]
    return best_m, best


def optimal_cutoff_for_skr(
    ctx: LinkContext, m_max_search: int = DEFAULT_MAX_SEARCH
) -> CutoffChoice:
    """Cutoff in {0..m_max_search, UNBOUNDED} maximising the key rate.

    Ties among finite cutoffs go to the smaller one.
    """
    if m_max_search < 1:
        raise ValueError("m_max_search must be at least 1")
    best_m, best = _best_finite(ctx, m_max_search)
    at_inf = float(skr(ctx, UNBOUNDED))
    if at_inf >= best:
        return CutoffChoice(UNBOUNDED, Criterion.SKR_OPTIMAL, at_inf)
    return CutoffChoice(best_m, Criterion.SKR_OPTIMAL, best)


def _range_objective(ratios: np.ndarray, objective: str) -> np.ndarray:
    if objective == "worst":
        return ratios.min(axis=0)
    if objective == "mean":
        return ratios.mean(axis=0)
    raise ValueError(f"unknown objective {objective!r}")


def fixed_cutoff_over_range(
    ctx_at: Callable[[float], LinkContext],
    distances: Sequence[float],
    objective: str = "worst",
    m_max_search: int = DEFAULT_MAX_SEARCH,
    workers: int | None = None,
) -> CutoffChoice:
    """One cutoff for all ``distances``.

    Each candidate cutoff is scored by its key rate relative to the
    per-distance optimum; the score over the grid is the minimum
    (``objective="worst"``) or the mean (``"mean"``) of those ratios.

    Candidates are every per-distance optimum, ``UNBOUNDED`` and a
    log-spaced set spanning the optima, followed by an integer refinement
    around the best candidate.
    """
    distances = list(distances)
    if not distances:
        raise ValueError("distance grid must not be empty")
    contexts = [ctx_at(d) for d in distances]
    if workers is not None and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            optima = list(pool.map(lambda c: optimal_cutoff_for_skr(c, m_max_search),
                                   contexts))
    else:
        optima = [optimal_cutoff_for_skr(c, m_max_search) for c in contexts]
    best_rates = np.array([o.achieved_value for o in optima])

    def score(candidates):
        cand = np.asarray(candidates, dtype=float)
        rates = np.array([np.atleast_1d(skr(c, cand)) for c in contexts])
        with np.errstate(invalid="ignore", divide="ignore"):
            ratios = np.where(best_rates[:, None] > 0, rates / best_rates[:, None], 1.0)
        return _range_objective(ratios, objective)

    finite = sorted({o.m for o in optima if o.m != UNBOUNDED})
    lo = finite[0] if finite else 0
    hi = finite[-1] if finite else 0
    if any(o.m == UNBOUNDED for o in optima):
        hi = max(hi, m_max_search)
    sweep = np.unique(np.round(np.geomspace(lo + 1, hi + 1, 400)) - 1)
    candidates = np.unique(np.concatenate([finite, sweep, [0]])).astype(float)
    candidates = candidates[candidates <= m_max_search]

    scores = score(candidates)
    i = int(np.argmax(scores))
    m_best, s_best = float(candidates[i]), float(scores[i])

    # refine between the neighbouring candidates
    left = int(candidates[i - 1]) if i > 0 else int(m_best)
    right = int(candidates[i + 1]) if i + 1 < len(candidates) else int(m_best)
    if right - left > 2:
        window = np.arange(left, right + 1, dtype=float)
        if len(window) > 4096:
            window = np.unique(np.round(np.linspace(left, right, 4096)))
        local = score(window)
        j = int(np.argmax(local))
        if local[j] > s_best:
            m_best, s_best = float(window[j]), float(local[j])

    s_inf = float(score([UNBOUNDED])[0])
    if s_inf >= s_best:
        return CutoffChoice(UNBOUNDED, Criterion.FIXED_OVER_RANGE, s_inf)
    return CutoffChoice(int(m_best), Criterion.FIXED_OVER_RANGE, s_best)
