"""Monte Carlo simulation of the cutoff-restart protocol.

Each time step both half-links are attempted with success probability ``p``.
If both succeed in the same step the qubit is delivered with ``M = 0``. If
only one succeeds, its memory waits while the other side keeps trying; a
success within ``m`` further steps delivers the qubit with ``M`` equal to the
number of steps waited, otherwise both memories are reset and the protocol
restarts on the next step. Every time step is one channel use.

Runs of steps with no event are drawn as geometric variates rather than
stepped one by one, which keeps 10**6-trial runs cheap even for small ``p``.

Trials are split into fixed-size partitions with independent random streams
spawned from ``(seed, stream)``, so results do not depend on how many workers
run them.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .rates import UNBOUNDED, dephasing_expectation, effective_fidelity, raw_rate

DEFAULT_STEP_BUDGET = 10**9
PARTITION_SIZE = 1 << 16
Z_THRESHOLD = 4.0


class BudgetExceeded(RuntimeError):
    def __init__(self, budget: int):
        self.budget = budget
        super().__init__(f"simulation exceeded the step budget of {budget} time steps")


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float

    def z(self, reference: float) -> float:
        diff = reference - self.value
        if self.stderr > 0:
            return diff / self.stderr
        return 0.0 if diff == 0 else math.copysign(math.inf, diff)


@dataclass(frozen=True)
class McEstimate:
    raw_rate: Estimate
    expectation: Estimate
    fidelity: Estimate
    mean_attempts: Estimate
    trials: int
    seed: int


def _run_partition(rng: np.random.Generator, p: float, m, n: int, budget: float):
    """Simulate ``n`` trials; return per-trial (steps, waited)."""
    steps = np.zeros(n, dtype=np.int64)
    waited = np.zeros(n, dtype=np.int64)
    active = np.arange(n)
    q = 1.0 - p
    p_event = 1.0 - q * q
    p_both = p * p / p_event
    total = 0
    while active.size:
        k = active.size
        # steps until at least one half-link succeeds
        gap = rng.geometric(p_event, size=k)
        both = rng.random(k) < p_both
        wait = rng.geometric(p, size=k)
        done = both | (wait <= m)
        spent = gap + np.where(both, 0, np.where(done, wait, 0 if m == UNBOUNDED else m))
        steps[active] += spent
        waited[active] = np.where(both, 0, wait)
        total += int(spent.sum())
        if total > budget:
            raise BudgetExceeded(int(budget))
        active = active[~done]
    return steps, waited


def _partitions(trials: int):
    sizes = [PARTITION_SIZE] * (trials // PARTITION_SIZE)
    if trials % PARTITION_SIZE:
        sizes.append(trials % PARTITION_SIZE)
    return sizes


def _validate(p, m, trials):
    if not (0.0 < p <= 1.0):
        raise ValueError(f"p must be in (0, 1], got {p}")
    if m != UNBOUNDED and (m < 0 or int(m) != m):
        raise ValueError("cutoff must be a non-negative integer or UNBOUNDED")
    if trials < 1:
        raise ValueError("trials must be at least 1")


def _map_partitions(p, m, trials, seed, stream, step_budget, workers, reduce):
    sizes = _partitions(trials)
    children = np.random.SeedSequence(seed, spawn_key=(stream,)).spawn(len(sizes))

    def job(i):
        rng = np.random.Generator(np.random.PCG64(children[i]))
        share = step_budget * sizes[i] / trials
        return reduce(*_run_partition(rng, p, m, sizes[i], share))

    if workers is None or workers <= 1 or len(sizes) == 1:
        return [job(i) for i in range(len(sizes))]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(job, range(len(sizes))))


def sample_cell(p: float, m, trials: int, seed: int, stream: int = 0,
                step_budget: int = DEFAULT_STEP_BUDGET, workers: int | None = None):
    """Per-trial channel uses and waiting times, as two int64 arrays."""
    _validate(p, m, trials)
    parts = _map_partitions(p, m, trials, seed, stream, step_budget, workers,
                            lambda s, w: (s, w))
    return (np.concatenate([s for s, _ in parts]),
            np.concatenate([w for _, w in parts]))


def _mean_se(total: float, total_sq: float, n: int) -> Estimate:
    mean = total / n
    if n < 2:
        return Estimate(mean, math.inf if mean else 0.0)
    var = max(total_sq - n * mean * mean, 0.0) / (n - 1)
    return Estimate(mean, math.sqrt(var / n))


def simulate_cell(
    p: float,
    m,
    t0: float,
    tau_coh: float,
    extra_units: int = 0,
    trials: int = 10**6,
    seed: int = 0,
    *,
    stream: int = 0,
    step_budget: int = DEFAULT_STEP_BUDGET,
    workers: int | None = None,
) -> McEstimate:
    """Estimate raw rate, dephasing expectation, fidelity and mean channel uses.

    The raw rate is ``trials / total steps`` with a delta-method standard
    error; the others are per-trial means.

    Raises:
        BudgetExceeded: if the run needs more than ``step_budget`` steps.
    """
    _validate(p, m, trials)
    ratio = t0 / tau_coh
    constant = math.exp(-extra_units * ratio)

    def reduce(steps, waited):
        s = steps.astype(float)
        w = np.exp(-waited * ratio)
        # pairwise-summed partials, merged in partition order below
        return np.array([s.sum(), (s * s).sum(), w.sum(), (w * w).sum()])

    stats = np.zeros(4)
    for part in _map_partitions(p, m, trials, seed, stream, step_budget, workers, reduce):
        stats += part
    n = trials
    attempts = _mean_se(stats[0], stats[1], n)
    expectation = _mean_se(stats[2], stats[3], n)
    rate = 1.0 / attempts.value
    rate_se = attempts.stderr / attempts.value**2
    fidelity = Estimate(0.5 * (1.0 + constant * expectation.value),
                        0.5 * constant * expectation.stderr)
    return McEstimate(
        raw_rate=Estimate(rate, rate_se),
        expectation=expectation,
        fidelity=fidelity,
        mean_attempts=attempts,
        trials=trials,
        seed=seed,
    )


@dataclass(frozen=True)
class ComparisonRow:
    p: float
    m: float
    ratio: float
    analytic: tuple[float, float, float]
    estimate: McEstimate
    z: tuple[float, float, float]

    @property
    def passed(self) -> bool:
        return all(abs(z) < Z_THRESHOLD for z in self.z)


@dataclass(frozen=True)
class ComparisonReport:
    rows: list[ComparisonRow]
    trials: int
    seed: int
    extra_units: int

    @property
    def passed(self) -> bool:
        return all(row.passed for row in self.rows)

    @property
    def max_abs_z(self) -> float:
        return max(abs(z) for row in self.rows for z in row.z)

    def to_text(self) -> str:
        lines = [
            f"# trials={self.trials} seed={self.seed} extra_units={self.extra_units}"
            f" threshold=|z|<{Z_THRESHOLD:g}",
            f"{'p':>8} {'m':>9} {'T0/tcoh':>9} {'R':>12} {'R_mc':>12} {'z_R':>7}"
            f" {'E':>10} {'E_mc':>10} {'z_E':>7} {'F':>10} {'F_mc':>10} {'z_F':>7}  ok",
        ]
        for r in self.rows:
            e = r.estimate
            m = "unbounded" if r.m == UNBOUNDED else str(int(r.m))
            lines.append(
                f"{r.p:>8.4g} {m:>9} {r.ratio:>9.4g}"
                f" {r.analytic[0]:>12.6g} {e.raw_rate.value:>12.6g} {r.z[0]:>7.2f}"
                f" {r.analytic[1]:>10.6f} {e.expectation.value:>10.6f} {r.z[1]:>7.2f}"
                f" {r.analytic[2]:>10.6f} {e.fidelity.value:>10.6f} {r.z[2]:>7.2f}"
                f"  {'yes' if r.passed else 'NO'}"
            )
        lines.append(f"max|z|={self.max_abs_z:.3f} result={'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines) + "\n"


DEFAULT_GRID = tuple(
    (p, m, r)
    for p in (0.05, 0.2, 0.5, 0.9)
    for m in (0, 1, 2, 5, 20)
    for r in (0.01, 0.3)
)


def compare_with_analytic(
    grid: Sequence[tuple[float, float, float]] = DEFAULT_GRID,
    trials: int = 10**6,
    seed: int = 42,
    extra_units: int = 0,
    step_budget: int = DEFAULT_STEP_BUDGET,
    workers: int | None = None,
) -> ComparisonReport:
    """Run the simulation at each ``(p, m, T0/tau_coh)`` and z-score the closed forms.

    Each grid point gets its own random stream, so the report is a pure
    function of the arguments.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("comparison grid must not be empty")
    rows = []
    for i, (p, m, ratio) in enumerate(grid):
        est = simulate_cell(p, m, ratio, 1.0, extra_units, trials, seed,
                            stream=i, step_budget=step_budget, workers=workers)
        analytic = (
            float(raw_rate(p, m)),
            float(dephasing_expectation(p, m, ratio, 1.0)),
            float(effective_fidelity(p, m, ratio, 1.0, extra_units)),
        )
        z = (est.raw_rate.z(analytic[0]), est.expectation.z(analytic[1]),
             est.fidelity.z(analytic[2]))
        rows.append(ComparisonRow(p, m, ratio, analytic, est, z))
    return ComparisonReport(rows, trials, seed, extra_units)
