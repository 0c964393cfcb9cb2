"""Rate analysis for elementary memory-based quantum repeater links."""

__version__ = "0.1.0"

from .channel import (
    end_to_end_transmission,
    ideal_repeaterless_bound,
    realistic_ppl_rate,
    to_decibel,
)
from .cutoff import (
    CutoffChoice,
    fixed_cutoff_over_range,
    max_cutoff_for_fidelity,
    optimal_cutoff_for_skr,
)
from .montecarlo import McEstimate, compare_with_analytic, simulate_cell
from .params import (
    ChannelParams,
    LinkContext,
    PlatformParams,
    ProtocolKind,
    ProtocolSpec,
    builtin_platforms,
    load_platforms,
    resolve_context,
)
from .rates import (
    UNBOUNDED,
    RatePoint,
    binary_entropy,
    dephasing_expectation,
    effective_fidelity,
    evaluate,
    raw_rate,
    secret_key_fraction,
    waiting_distribution,
)
from .sweep import SweepResult, classify_regime, sweep_rr, sweep_skr
