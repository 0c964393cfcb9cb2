import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qrlink.cutoff import (
    fixed_cutoff_over_range,
    max_cutoff_for_fidelity,
    optimal_cutoff_for_skr,
)
from qrlink.params import (
    ChannelParams,
    LinkContext,
    ProtocolKind,
    ProtocolSpec,
    builtin_platforms,
    find_platform,
    resolve_context,
)
from qrlink.rates import UNBOUNDED, effective_fidelity, skr


def _fid(ctx, m):
    return float(effective_fidelity(ctx.p, m, ctx.t0, ctx.tau_coh, ctx.extra_units))


def test_fidelity_floor_hand_example():
    ctx = LinkContext(p=0.5, t0=1.0, tau_coh=1.0)
    choice = max_cutoff_for_fidelity(ctx, 0.8)
    assert choice.m == 1
    assert choice.achieved_value == pytest.approx(0.841969860292861)


def test_fidelity_floor_unbounded_without_decoherence():
    ctx = LinkContext(p=0.1, t0=1e-3, tau_coh=1e300)
    assert max_cutoff_for_fidelity(ctx, 0.95).m == UNBOUNDED


def test_fidelity_floor_none_when_constant_dephasing_fails():
    # (1 + e^{-0.2}) / 2 = 0.909 < 0.95
    ctx = LinkContext(p=0.5, t0=0.1, tau_coh=1.0, extra_units=2)
    choice = max_cutoff_for_fidelity(ctx, 0.95)
    assert choice.m is None


@settings(max_examples=60, deadline=None)
@given(p=st.floats(1e-4, 1.0), ratio=st.floats(1e-6, 1.0),
       extra=st.sampled_from([0, 2]), f_min=st.floats(0.51, 0.999))
def test_fidelity_floor_is_maximal(p, ratio, extra, f_min):
    ctx = LinkContext(p=p, t0=ratio, tau_coh=1.0, extra_units=extra)
    m = max_cutoff_for_fidelity(ctx, f_min).m
    if m is None:
        assert _fid(ctx, 0) < f_min
        return
    assert _fid(ctx, m) >= f_min
    if m != UNBOUNDED:
        assert _fid(ctx, m + 1) < f_min


def test_skr_optimum_matches_brute_force():
    ctx = LinkContext(p=0.1, t0=0.1, tau_coh=1.0)
    values = skr(ctx, np.arange(501))
    choice = optimal_cutoff_for_skr(ctx, 500)
    assert choice.m == int(np.argmax(values))
    assert choice.achieved_value == pytest.approx(values.max(), rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(p=st.floats(1e-3, 0.99), ratio=st.floats(1e-5, 0.5), extra=st.sampled_from([0, 2]))
def test_skr_optimum_matches_brute_force_randomised(p, ratio, extra):
    ctx = LinkContext(p=p, t0=ratio, tau_coh=1.0, extra_units=extra)
    values = skr(ctx, np.arange(3001))
    choice = optimal_cutoff_for_skr(ctx, 3000)
    assert choice.achieved_value >= values.max() * (1 - 1e-12)
    if choice.m != UNBOUNDED:
        assert values[choice.m] == pytest.approx(values.max(), rel=1e-12)


def test_skr_optimum_unbounded_without_decoherence():
    ctx = LinkContext(p=0.3, t0=1e-3, tau_coh=1e300)
    assert optimal_cutoff_for_skr(ctx).m == UNBOUNDED


def test_skr_optimum_small_for_fast_decoherence():
    ctx = LinkContext(p=0.3, t0=5.0, tau_coh=1.0)
    m = optimal_cutoff_for_skr(ctx).m
    assert m != UNBOUNDED and m <= 2


@pytest.mark.parametrize("p, ratio", [(0.01, 1e-4), (0.5, 0.01), (0.05, 1e-3)])
def test_skr_optimum_never_below_endpoints(p, ratio):
    ctx = LinkContext(p=p, t0=ratio, tau_coh=1.0, extra_units=2)
    best = optimal_cutoff_for_skr(ctx).achieved_value
    assert best >= max(skr(ctx, 0), skr(ctx, UNBOUNDED))


def test_skr_optimum_flat_rate_goes_to_unbounded():
    # with p = 1 every cutoff gives the same rate; unbounded wins the tie
    ctx = LinkContext(p=1.0, t0=0.1, tau_coh=1.0)
    choice = optimal_cutoff_for_skr(ctx, 100)
    assert choice.m == UNBOUNDED
    assert choice.achieved_value == pytest.approx(float(skr(ctx, 0)))


def test_fixed_single_point_equals_optimum():
    ctx = LinkContext(p=0.1, t0=0.1, tau_coh=1.0)
    fixed = fixed_cutoff_over_range(lambda d: ctx, [10.0])
    assert fixed.m == optimal_cutoff_for_skr(ctx).m
    assert fixed.achieved_value == pytest.approx(1.0)


def test_fixed_unbounded_without_decoherence():
    def ctx_at(d):
        return LinkContext(p=0.5 * math.exp(-d / 44), t0=1e-3, tau_coh=1e300)

    assert fixed_cutoff_over_range(ctx_at, [0.0, 50.0, 100.0]).m == UNBOUNDED


def test_fixed_rubidium_current_nsp_cell():
    rb = find_platform(builtin_platforms("current"), "Rubidium")
    spec, channel = ProtocolSpec(ProtocolKind.NSP_CELL), ChannelParams()

    def ctx_at(d):
        return resolve_context(rb, spec, channel, d)

    grid = np.arange(10.0, 401.0, 10.0)
    choice = fixed_cutoff_over_range(ctx_at, grid)
    for d in grid:
        best = optimal_cutoff_for_skr(ctx_at(d)).achieved_value
        assert skr(ctx_at(d), choice.m) >= 0.5 * best
    assert choice.achieved_value >= 0.5


def test_fixed_mean_objective_at_least_worst():
    rb = find_platform(builtin_platforms("current"), "Rubidium")
    spec, channel = ProtocolSpec(ProtocolKind.NSP_CELL), ChannelParams()
    grid = np.arange(10.0, 401.0, 30.0)
    worst = fixed_cutoff_over_range(lambda d: resolve_context(rb, spec, channel, d), grid)
    mean = fixed_cutoff_over_range(lambda d: resolve_context(rb, spec, channel, d), grid, "mean")
    assert mean.achieved_value >= worst.achieved_value


def test_fixed_rejects_empty_grid():
    with pytest.raises(ValueError):
        fixed_cutoff_over_range(lambda d: None, [])


def test_fixed_independent_of_workers():
    rb = find_platform(builtin_platforms("future"), "NV")
    spec, channel = ProtocolSpec(ProtocolKind.NSP_CELL), ChannelParams()
    grid = np.arange(0.0, 401.0, 20.0)

    def ctx_at(d):
        return resolve_context(rb, spec, channel, d)

    assert fixed_cutoff_over_range(ctx_at, grid) == fixed_cutoff_over_range(ctx_at, grid, workers=4)
