"""Scale a tariff's capacity prices until its grid-cost recovery hits a target."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

from .errors import CalibrationError, TariffError
from .tariffs import TariffPolicy

log = logging.getLogger(__name__)


@dataclass
class CalibrationResult:
    tariff: TariffPolicy
    multiplier: float
    ratio: float  # achieved recovery / reference
    evaluations: int
    history: list[tuple[float, float]] = field(default_factory=list)  # (multiplier, recovery)


def calibrate(
    tariff: TariffPolicy,
    evaluate: Callable[[TariffPolicy], float],
    reference: float,
    tolerance: float = 0.02,
    max_evaluations: int = 30,
    start: float = 1.0,
    max_multiplier: float = 1e3,
) -> CalibrationResult:
    """Find a capacity-price multiplier whose recovery lies within ``tolerance`` of ``reference``.

    Safeguarded secant: secant steps until the target is bracketed, then
    secant inside the bracket with bisection whenever a step leaves it.
    Recovery is assumed nondecreasing in the multiplier.
    """
    if not 0 < tolerance <= 0.1:
        raise TariffError(f"tolerance must lie in (0, 0.1], got {tolerance}")
    if not reference > 0:
        raise TariffError("reference recovery must be positive")
    history: list[tuple[float, float]] = []

    def gap(m: float) -> float:
        rec = float(evaluate(tariff.scaled(m)))
        history.append((m, rec))
        log.debug("calibration eval %d: multiplier %.6g -> ratio %.6f", len(history), m, rec / reference)
        return rec / reference - 1.0

    def done(m: float, g: float) -> CalibrationResult:
        return CalibrationResult(tariff.scaled(m), m, 1.0 + g, len(history), history)

    def fail(msg: str):
        m, rec = min(history, key=lambda h: abs(h[1] / reference - 1.0))
        raise CalibrationError(msg, rec / reference, m, len(history))

    m0 = float(start)
    g0 = gap(m0)
    if abs(g0) <= tolerance:
        return done(m0, g0)
    if not tariff.has_capacity_component:
        fail(f"{tariff.id} has no capacity component to scale")

    lo = hi = None  # (m, g) with g < 0 and g > 0
    if g0 < 0:
        lo = (m0, g0)
    else:
        hi = (m0, g0)
    # first trial step assumes recovery roughly proportional to the multiplier
    m1 = min(m0 / (1.0 + g0), max_multiplier) if g0 > -1.0 else m0 * 8.0
    if m1 == m0:
        m1 = m0 * 2 if g0 < 0 else m0 / 2
    prev = (m0, g0)
    m = m1
    while len(history) < max_evaluations:
        g = gap(m)
        if abs(g) <= tolerance:
            return done(m, g)
        if g < 0 and (lo is None or m > lo[0]):
            lo = (m, g)
        if g > 0 and (hi is None or m < hi[0]):
            hi = (m, g)
        slope = (g - prev[1]) / (m - prev[0]) if m != prev[0] else 0.0
        cand = m - g / slope if slope > 0 else None
        if lo is not None and hi is not None:
            if cand is None or not (lo[0] < cand < hi[0]):
                cand = 0.5 * (lo[0] + hi[0])
        else:
            if cand is None:
                cand = m * 2.0 if g < 0 else m / 2.0
            if g < 0:
                cand = min(max(cand, m), m * 8.0, max_multiplier)
                if m >= max_multiplier:
                    fail("target recovery not reachable below the multiplier ceiling")
            else:
                cand = max(min(cand, m), m / 8.0)
                if m <= 1e-9:
                    fail("target recovery not reachable with a zero capacity price")
                if cand < 1e-6:
                    cand = 0.0
        prev = (m, g)
        m = cand
    fail("no multiplier within tolerance found")
