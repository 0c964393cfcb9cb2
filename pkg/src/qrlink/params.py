"""Platform presets, protocol kinds and link-budget resolution.

A platform is described by three numbers: the zero-length link coupling
efficiency ``p_link``, the source/memory clock rate and the memory coherence
time. Together with a protocol kind and a fibre channel these resolve, for a
given total distance, into a :class:`LinkContext` holding the per-half-link
success probability and the duration of one attempt.
"""
from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, field

N_MODES = 2


class ConfigError(ValueError):
    """Raised for malformed platform config text or invalid parameter values."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class Era(str, enum.Enum):
    CURRENT = "current"
    FUTURE = "future"


class ProtocolKind(str, enum.Enum):
    NSP_CELL = "nsp-cell"
    NSP_TWO_SEGMENT = "nsp-two-segment"
    NRP_CELL_IDEAL = "nrp-cell"
    NRP_CELL_BM_WRITE_IN = "nrp-cell-bm"

    @property
    def is_nsp(self) -> bool:
        return self in (ProtocolKind.NSP_CELL, ProtocolKind.NSP_TWO_SEGMENT)


@dataclass(frozen=True)
class PlatformParams:
    """One hardware platform.

    Attributes:
        name: Display label.
        p_link: Zero-length link coupling efficiency, in (0, 1].
        clock_rate: Source/memory clock rate in MHz.
        tau_coh: Memory coherence time in ms.
        era: Which parameter table the entry belongs to, if any.
    """

    name: str
    p_link: float
    clock_rate: float
    tau_coh: float
    era: Era | None = None

    def __post_init__(self):
        if not (0.0 < self.p_link <= 1.0):
            raise ConfigError(f"p_link must be in (0, 1], got {self.p_link}")
        if not self.clock_rate > 0:
            raise ConfigError(f"clock_mhz must be positive, got {self.clock_rate}")
        if not self.tau_coh > 0:
            raise ConfigError(f"tcoh_ms must be positive, got {self.tau_coh}")

    @property
    def clock_period_ms(self) -> float:
        # MHz -> period in ms
        return 1e-3 / self.clock_rate


@dataclass(frozen=True)
class ProtocolSpec:
    kind: ProtocolKind
    p_bm: float = 1.0
    extra_dephasing_units: int = field(default=-1)

    def __post_init__(self):
        kind = ProtocolKind(self.kind)
        object.__setattr__(self, "kind", kind)
        expected = 2 if kind.is_nsp else 0
        if self.extra_dephasing_units == -1:
            object.__setattr__(self, "extra_dephasing_units", expected)
        elif self.extra_dephasing_units != expected:
            raise ConfigError(
                f"extra_dephasing_units must be {expected} for {kind.value}, "
                f"got {self.extra_dephasing_units}"
            )
        if not (0.0 < self.p_bm <= 1.0):
            raise ConfigError(f"p_bm must be in (0, 1], got {self.p_bm}")


@dataclass(frozen=True)
class ChannelParams:
    """Fibre channel: attenuation length (km) and signal speed (km/ms)."""

    l_att: float = 22.0
    signal_speed: float = 200.0

    def __post_init__(self):
        if not self.l_att > 0:
            raise ConfigError(f"l_att_km must be positive, got {self.l_att}")
        if not self.signal_speed > 0:
            raise ConfigError(
                f"signal_speed_km_per_ms must be positive, got {self.signal_speed}"
            )


@dataclass(frozen=True)
class LinkContext:
    """Everything the rate formulas need for one (platform, protocol, distance).

    ``p`` is the success probability of a single attempt on one half-link and
    ``t0`` the duration of that attempt in ms.
    """

    p: float
    t0: float
    tau_coh: float
    p_bm: float = 1.0
    extra_units: int = 0
    n_modes: int = N_MODES

    def __post_init__(self):
        if not (0.0 <= self.p <= 1.0):
            raise ValueError(f"p must be in [0, 1], got {self.p}")
        if not self.t0 > 0:
            raise ValueError(f"t0 must be positive, got {self.t0}")
        if not self.tau_coh > 0:
            raise ValueError(f"tau_coh must be positive, got {self.tau_coh}")
        if self.n_modes != N_MODES:
            raise ValueError(f"n_modes is fixed at {N_MODES}")

    @property
    def dephasing_ratio(self) -> float:
        """T0 / tau_coh."""
        return self.t0 / self.tau_coh


def _p(name, era, p_link_percent, clock_mhz, tcoh_ms):
    return PlatformParams(name, p_link_percent / 100.0, clock_mhz, tcoh_ms, era)


_CURRENT = (
    _p("NV", Era.CURRENT, 5, 50, 10),
    _p("SiV", Era.CURRENT, 5, 30, 1),
    _p("quantum dots", Era.CURRENT, 10, 1000, 0.003),
    _p("Calcium", Era.CURRENT, 0.4, 0.06, 0.8),
    _p("Rubidium", Era.CURRENT, 70, 5, 100),
)

_FUTURE = (
    _p("NV", Era.FUTURE, 50, 250, 10000),
    _p("SiV", Era.FUTURE, 50, 500, 100),
    _p("quantum dots", Era.FUTURE, 60, 1000, 0.3),
    _p("Calcium", Era.FUTURE, 10, 1, 1),
    _p("Rubidium", Era.FUTURE, 70, 100, 1000),
)


def builtin_platforms(era: Era | str) -> list[PlatformParams]:
    """Return the five tabulated platforms for ``era`` ("current" or "future")."""
    era = Era(era)
    return list(_CURRENT if era is Era.CURRENT else _FUTURE)


def find_platform(platforms, name: str) -> PlatformParams:
    wanted = _slug(name)
    for platform in platforms:
        if _slug(platform.name) == wanted:
            return platform
    known = ", ".join(p.name for p in platforms)
    raise KeyError(f"unknown platform {name!r} (known: {known})")


def _slug(name: str) -> str:
    return re.sub(r"[^a-z0-9]+", "", name.lower())


_PLATFORM_KEYS = {"name", "p_link", "clock_mhz", "tcoh_ms"}
_CHANNEL_KEYS = {"l_att_km", "signal_speed_km_per_ms"}


def parse_config(text: str) -> tuple[list[PlatformParams], ChannelParams]:
    """Parse platform config text into platforms and channel overrides.

    The format is a sequence of ``[platform]`` blocks, each followed by
    ``key=value`` assignments (several per line are allowed, separated by
    whitespace). Channel overrides may appear anywhere outside a platform
    block or before the first one. ``#`` starts a comment line.
    """
    platforms: list[PlatformParams] = []
    channel: dict[str, float] = {}
    block: dict[str, str] | None = None
    block_line = 0

    def close_block():
        if block is None:
            return
        missing = _PLATFORM_KEYS - block.keys()
        if missing:
            raise ConfigError(
                f"platform block missing {', '.join(sorted(missing))}", block_line
            )
        try:
            platforms.append(
                PlatformParams(
                    name=block["name"],
                    p_link=_to_float(block, "p_link", block_line),
                    clock_rate=_to_float(block, "clock_mhz", block_line),
                    tau_coh=_to_float(block, "tcoh_ms", block_line),
                )
            )
        except ConfigError as exc:
            if exc.line is not None:
                raise
            raise ConfigError(str(exc), block_line) from None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("["):
            header, _, rest = line.partition("]")
            section = header[1:].strip().lower()
            if section != "platform":
                raise ConfigError(f"unknown section [{section}]", lineno)
            close_block()
            block, block_line = {}, lineno
            line = rest.strip()
            if not line:
                continue
        for key, value in _assignments(line, lineno):
            if key in _CHANNEL_KEYS:
                channel[key] = value
            elif key in _PLATFORM_KEYS:
                if block is None:
                    raise ConfigError(f"{key} outside a [platform] block", lineno)
                block[key] = value
            else:
                raise ConfigError(f"unknown key {key!r}", lineno)
    close_block()

    try:
        channel_params = ChannelParams(
            l_att=float(channel.get("l_att_km", 22.0)),
            signal_speed=float(channel.get("signal_speed_km_per_ms", 200.0)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return platforms, channel_params


def load_platforms(config_text: str) -> list[PlatformParams]:
    """Parse only the platform blocks of a config text."""
    return parse_config(config_text)[0]


_ASSIGN = re.compile(r"([A-Za-z_][A-Za-z0-9_]*)\s*=\s*")


def _assignments(line: str, lineno: int):
    # name values may contain spaces, so split on the key= markers
    matches = list(_ASSIGN.finditer(line))
    if not matches or matches[0].start() != 0:
        raise ConfigError(f"expected key=value, got {line!r}", lineno)
    for i, match in enumerate(matches):
        end = matches[i + 1].start() if i + 1 < len(matches) else len(line)
        value = line[match.end():end].strip()
        if not value:
            raise ConfigError(f"empty value for {match.group(1)}", lineno)
        yield match.group(1).lower(), value


def _to_float(block: dict[str, str], key: str, lineno: int) -> float:
    try:
        return float(block[key])
    except ValueError:
        raise ConfigError(f"{key} is not a number: {block[key]!r}", lineno) from None


def format_config(platforms, channel: ChannelParams | None = None) -> str:
    lines = []
    if channel is not None:
        lines.append(f"l_att_km={channel.l_att!r}")
        lines.append(f"signal_speed_km_per_ms={channel.signal_speed!r}")
    for p in platforms:
        lines.append("[platform]")
        lines.append(f"name={p.name}")
        lines.append(
            f"p_link={p.p_link!r} clock_mhz={p.clock_rate!r} tcoh_ms={p.tau_coh!r}"
        )
    return "\n".join(lines) + "\n"


def resolve_context(
    platform: PlatformParams,
    protocol: ProtocolSpec,
    channel: ChannelParams,
    distance_km: float,
) -> LinkContext:
    """Compose the half-link success probability and attempt time at ``distance_km``.

    Cell protocols use ``p_link`` directly as the half-link coupling. The
    two-segment NSP scheme and the BM-assisted NRP write-in treat ``p_link``
    as the source-times-detector composite entering ``(p_link)**2 / 2``.
    NSP attempts last one classical round trip (``L/c`` for the cell,
    ``L/2c`` for two segments), never shorter than one clock period; NRP
    attempts last one clock period.
    """
    if distance_km < 0:
        raise ValueError(f"distance must be non-negative, got {distance_km}")
    half_link = math.exp(-(distance_km / 2.0) / channel.l_att)
    kind = protocol.kind
    if kind in (ProtocolKind.NSP_CELL, ProtocolKind.NRP_CELL_IDEAL):
        coupling = platform.p_link
    else:
        coupling = 0.5 * platform.p_link**2

    period = platform.clock_period_ms
    if kind is ProtocolKind.NSP_CELL:
        t0 = max(distance_km / channel.signal_speed, period)
    elif kind is ProtocolKind.NSP_TWO_SEGMENT:
        t0 = max(distance_km / (2.0 * channel.signal_speed), period)
    else:
        t0 = period

    return LinkContext(
        p=coupling * half_link,
        t0=t0,
        tau_coh=platform.tau_coh,
        p_bm=protocol.p_bm,
        extra_units=protocol.extra_dephasing_units,
    )
