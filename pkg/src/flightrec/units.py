"""Duration and rate formatting shared by the analyzer and report renderers."""

from __future__ import annotations

NS_PER_US = 1_000
NS_PER_MS = 1_000_000
NS_PER_S = 1_000_000_000


def fmt_duration(ns: int) -> str:
    """Render a nanosecond duration with a magnitude-chosen unit, 3 significant digits.

    1_234_567 -> "1.23 ms", 345 -> "345 ns", 1_500 -> "1.50 µs".
    """
    if ns < 0:
        return "-" + fmt_duration(-ns)
    if ns < NS_PER_US:
        return f"{ns} ns"
    if ns < NS_PER_MS:
        return _sig3(ns / NS_PER_US) + " µs"
    if ns < NS_PER_S:
        return _sig3(ns / NS_PER_MS) + " ms"
    return _sig3(ns / NS_PER_S) + " s"


def _sig3(x: float) -> str:
    if x >= 100:
        return f"{x:.0f}"
    if x >= 10:
        return f"{x:.1f}"
    return f"{x:.2f}"


def fmt_share(ratio: float) -> str:
    return f"{ratio * 100:.1f}%"


def fmt_rate(events_per_s: float) -> str:
    return f"{events_per_s:.1f}/s"
