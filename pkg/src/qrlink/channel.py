"""Fibre transmission and the direct-transmission benchmarks."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# rates below this are reported as NEG_INF_DB
DB_FLOOR = 1e-30
NEG_INF_DB = -math.inf


class OutOfDomain(ValueError):
    """Raised when a bound is evaluated where it diverges (eta = 1)."""


def end_to_end_transmission(distance_km, l_att: float = 22.0):
    """exp(-L / L_att); accepts scalars or arrays."""
    if np.any(np.asarray(distance_km) < 0):
        raise ValueError("distance must be non-negative")
    return np.exp(-np.asarray(distance_km, dtype=float) / l_att)[()]


def ideal_repeaterless_bound(eta):
    """Secret-key capacity of a pure-loss channel, -log2(1 - eta).

    Raises:
        OutOfDomain: if any ``eta`` equals 1 (lossless channel, unbounded).
    """
    eta = np.asarray(eta, dtype=float)
    if np.any((eta < 0) | (eta > 1)):
        raise ValueError("eta must lie in [0, 1)")
    if np.any(eta == 1.0):
        raise OutOfDomain("repeaterless bound diverges at eta = 1")
    return (-np.log1p(-eta) / math.log(2))[()]


def realistic_ppl_rate(p_link, eta):
    """Per-mode key rate of error-free direct transmission, p_link * eta / 2."""
    return (np.asarray(p_link, dtype=float) * np.asarray(eta, dtype=float) / 2.0)[()]


def sqrt_eta_line(eta):
    """Reference line for optimal single-node repeater scaling (bare sqrt(eta))."""
    return np.sqrt(np.asarray(eta, dtype=float))[()]


def to_decibel(rate):
    """10*log10(rate); non-positive or sub-floor rates map to ``-inf``."""
    rate = np.asarray(rate, dtype=float)
    ok = rate >= DB_FLOOR
    out = np.full(rate.shape, NEG_INF_DB)
    out[ok] = 10.0 * np.log10(rate[ok])
    return out[()]


@dataclass(frozen=True)
class BenchmarkPoint:
    distance_km: float
    eta: float
    ideal_bound: float
    realistic_ppl: float
    sqrt_eta_line: float


def benchmark(distance_km: float, p_link: float, l_att: float = 22.0) -> BenchmarkPoint:
    eta = float(end_to_end_transmission(distance_km, l_att))
    # capacity diverges at L = 0
    ideal = math.inf if eta == 1.0 else float(ideal_repeaterless_bound(eta))
    return BenchmarkPoint(
        distance_km=float(distance_km),
        eta=eta,
        ideal_bound=ideal,
        realistic_ppl=float(realistic_ppl_rate(p_link, eta)),
        sqrt_eta_line=float(sqrt_eta_line(eta)),
    )
