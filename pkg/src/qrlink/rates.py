"""Raw rate, dephasing and secret-key rate of a single-node repeater cell.

Both half-links are attempted in lock-step. ``M`` is the number of steps the
first loaded memory waits for the second one; a memory cutoff ``m`` aborts
and restarts the protocol once ``M`` would exceed ``m``. The cutoff is an
integer or :data:`UNBOUNDED` (``math.inf``), which has its own closed forms.

Functions taking ``m`` accept numpy arrays of cutoffs and broadcast.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import entr

from .params import LinkContext

UNBOUNDED = math.inf
_LN2 = math.log(2.0)

# below this p, log1p(-p) is replaced by its series to keep q**m accurate
_SMALL_P = 1e-6


def _check_p(p):
    if not (0.0 < p <= 1.0):
        raise ValueError(f"p must be in (0, 1], got {p}")


def _check_cutoff(m):
    m = np.asarray(m, dtype=float)
    if np.any(m < 0) or np.any((m != np.floor(m)) & np.isfinite(m)):
        raise ValueError("cutoff must be a non-negative integer or UNBOUNDED")
    return m


def _log_q(p: float) -> float:
    if p < _SMALL_P:
        return -p - p * p / 2.0 - p**3 / 3.0
    return math.log1p(-p)


def _one_minus_pow(log_base: float, n):
    """1 - exp(n * log_base) without cancellation; handles n = inf."""
    n = np.asarray(n, dtype=float)
    with np.errstate(invalid="ignore"):
        out = -np.expm1(n * log_base)
    return np.where(np.isinf(n), 1.0, out)


@dataclass(frozen=True)
class WaitingDistribution:
    """Truncated distribution of the waiting time M.

    Attributes:
        p: Single-attempt success probability of a half-link.
        cutoff_m: Largest kept value of M, or ``UNBOUNDED``.
        masses: Renormalised probabilities for M = 0, 1, ..., listed up to
            ``cutoff_m`` (or up to ``n_listed - 1`` when unbounded).
    """

    p: float
    cutoff_m: float
    masses: np.ndarray

    def pmf(self, j: int) -> float:
        return float(self.masses[j]) if 0 <= j < len(self.masses) else 0.0


def waiting_distribution(p: float, m, n_listed: int = 200) -> WaitingDistribution:
    """Return P(M = j) for j = 0..m, renormalised to the retained range.

    Untruncated, P(M=0) = p/(2-p) and P(M=j) = 2 p q**j / (2-p) for j >= 1.
    For ``m = UNBOUNDED`` the first ``n_listed`` masses are listed and no
    renormalisation is applied.
    """
    _check_p(p)
    _check_cutoff(m)
    q = 1.0 - p
    top = n_listed - 1 if m == UNBOUNDED else int(m)
    j = np.arange(top + 1)
    with np.errstate(divide="ignore"):
        masses = np.where(j == 0, p / (2.0 - p), 2.0 * p * q**j / (2.0 - p))
    if m != UNBOUNDED:
        masses = masses / masses.sum()
    return WaitingDistribution(p=p, cutoff_m=float(m) if m == UNBOUNDED else int(m),
                               masses=masses)


def _dephasing_expectation(p: float, m, ratio: float):
    _check_p(p)
    m = _check_cutoff(m)
    if p == 1.0:
        return np.ones_like(m)[()]
    log_q = _log_q(p)
    q = math.exp(log_q)
    log_qa = log_q - ratio
    qa = math.exp(log_qa)
    one_minus_qa = -math.expm1(log_qa)
    # mass on M >= 1 with and without the dephasing weight a**M
    kept = 2.0 * q * _one_minus_pow(log_q, m) / p
    weighted = 2.0 * qa * _one_minus_pow(log_qa, m) / one_minus_qa
    return ((1.0 + weighted) / (1.0 + kept))[()]


def dephasing_expectation(p: float, m, t0: float, tau_coh: float):
    """E[exp(-M t0 / tau_coh)] over the cutoff-truncated waiting distribution."""
    if not (t0 > 0 and tau_coh > 0):
        raise ValueError("t0 and tau_coh must be positive")
    return _dephasing_expectation(p, m, t0 / tau_coh)


def raw_rate(p: float, m, p_bm: float = 1.0):
    """Qubits delivered per channel use under cutoff ``m``.

    R(m) = p (2 - p - 2 q**(m+1)) / (3 - 2p - 2 q**(m+1)) * p_bm, which is
    p**2 * p_bm at m = 0 and p (2-p) / (3-2p) * p_bm without cutoff.
    """
    _check_p(p)
    m = _check_cutoff(m)
    if not (0.0 < p_bm <= 1.0):
        raise ValueError(f"p_bm must be in (0, 1], got {p_bm}")
    if p == 1.0:
        return np.full_like(m, p_bm)[()]
    # 1 - q**(m+1), written to survive p -> 0 with large m
    s = _one_minus_pow(_log_q(p), m + 1.0)
    return (p * (2.0 * s - p) / (1.0 - 2.0 * p + 2.0 * s) * p_bm)[()]


def effective_fidelity(p: float, m, t0: float, tau_coh: float, extra_units: int = 0):
    """Weight of |phi+> in the final Bell mixture.

    F = (1 + exp(-extra_units * t0 / tau_coh) * E_m) / 2; ``extra_units`` is
    the number of constant dephasing steps (2 for NSP, 0 for NRP).
    """
    ratio = t0 / tau_coh
    return (0.5 * (1.0 + math.exp(-extra_units * ratio)
                   * _dephasing_expectation(p, m, ratio)))[()]


def binary_entropy(x):
    """h(x) = -x log2 x - (1-x) log2(1-x), with h(0) = h(1) = 0."""
    x = np.asarray(x, dtype=float)
    if np.any((x < 0) | (x > 1)):
        raise ValueError("binary entropy argument must lie in [0, 1]")
    return ((entr(x) + entr(1.0 - x)) / _LN2)[()]


def secret_key_fraction(e_x, e_z=0.0):
    """Asymptotic BB84 key fraction max(0, 1 - h(e_x) - h(e_z)).

    Uses the biased-basis variant, so there is no sifting factor.
    """
    e_x = np.clip(e_x, 0.0, 0.5)
    out = 1.0 - binary_entropy(e_x)
    if np.any(e_z):
        out = out - binary_entropy(np.clip(e_z, 0.0, 0.5))
    return np.maximum(0.0, out)[()]


@dataclass(frozen=True)
class RatePoint:
    """One evaluation of a link at fixed cutoff. Rates are per channel use;
    ``skr`` is additionally per mode."""

    distance_km: float | None
    cutoff_m: float
    raw_rate: float
    expectation_e: float
    fidelity: float
    e_x: float
    e_z: float
    secret_fraction: float
    skr: float


def _skr_terms(ctx: LinkContext, m):
    ratio = ctx.dephasing_ratio
    expectation = _dephasing_expectation(ctx.p, m, ratio)
    fidelity = 0.5 * (1.0 + math.exp(-ctx.extra_units * ratio) * expectation)
    e_x = np.clip(1.0 - fidelity, 0.0, 0.5)
    raw = raw_rate(ctx.p, m, ctx.p_bm)
    fraction = secret_key_fraction(e_x, 0.0)
    return raw, expectation, fidelity, e_x, fraction


def skr(ctx: LinkContext, m):
    """Secret bits per channel use per mode; vectorised over ``m``."""
    if ctx.p == 0.0:
        raise ValueError("p = 0: no attempt can ever succeed")
    raw, _, _, _, fraction = _skr_terms(ctx, m)
    return (raw / ctx.n_modes * fraction)[()]


def _skr_kernel(ctx: LinkContext):
    """Fast key rate over float arrays of finite cutoffs, unvalidated.

    Returns ``(rate, block_bound)``: ``rate(ms)`` agrees with :func:`skr` to
    rounding, and ``block_bound(lo, hi)`` bounds ``rate`` on each integer
    interval [lo, hi] using the same arithmetic, since the raw rate is
    non-decreasing and the key fraction non-increasing in the cutoff.
    """
    p, ratio = ctx.p, ctx.dephasing_ratio
    scale = p * ctx.p_bm / ctx.n_modes
    damp = math.exp(-ctx.extra_units * ratio)
    if p == 1.0:
        value = scale * float(secret_key_fraction(0.5 * (1.0 - damp)))
        return ((lambda ms: np.full(np.shape(ms), value)),
                (lambda lo, hi: np.full(np.shape(lo), value)))
    log_q = _log_q(p)
    log_qa = log_q - ratio
    c_kept = 2.0 * math.exp(log_q) / p
    c_weighted = 2.0 * math.exp(log_qa) / -math.expm1(log_qa)
    raw_inf = (2.0 - p) / (3.0 - 2.0 * p)

    def fraction(ms):
        kept = -np.expm1(ms * log_q)
        expectation = (1.0 - c_weighted * np.expm1(ms * log_qa)) / (1.0 + c_kept * kept)
        e_x = np.clip(0.5 * (1.0 - damp * expectation), 0.0, 0.5)
        return np.maximum(0.0, 1.0 - (entr(e_x) + entr(1.0 - e_x)) / _LN2)

    def rate(ms):
        return scale * raw(ms) * fraction(ms)

    def raw(ms):
        s = -np.expm1((ms + 1.0) * log_q)
        return np.minimum((2.0 * s - p) / (1.0 - 2.0 * p + 2.0 * s), raw_inf)

    def block_bound(lo, hi):
        # skr on [lo, hi] is at most raw(hi) * fraction(lo)
        return scale * raw(hi) * fraction(lo)

    return rate, block_bound


def evaluate(ctx: LinkContext, m, distance_km: float | None = None) -> RatePoint:
    """Assemble raw rate, fidelity, error rates and key rate at cutoff ``m``."""
    if ctx.p == 0.0:
        raise ValueError("p = 0: no attempt can ever succeed")
    raw, expectation, fidelity, e_x, fraction = _skr_terms(ctx, m)
    raw = float(raw)
    fraction = float(fraction)
    return RatePoint(
        distance_km=distance_km,
        cutoff_m=m if m == UNBOUNDED else int(m),
        raw_rate=raw,
        expectation_e=float(expectation),
        fidelity=float(fidelity),
        e_x=float(1.0 - fidelity),
        e_z=0.0,
        secret_fraction=fraction,
        skr=raw / ctx.n_modes * fraction,
    )
