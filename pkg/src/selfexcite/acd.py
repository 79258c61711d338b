"""Exponential ACD(1,1): simulation, conditional intensity, derived quantities.

Durations follow dt_i = psi_i * eps_i with iid unit-mean exponential
innovations and the recursion psi_i = omega + alpha * dt_{i-1} + beta * psi_{i-1}.
The combined parameter alpha + beta (the model's persistence) controls
stationarity exactly like the branching ratio does for the Hawkes process.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .core import EventSeries, RngSpec, SimulationExplosion, ValidationError

__all__ = [
    "ACDParams",
    "ACDRealization",
    "simulate_acd",
    "acd_intensity_at",
    "expected_duration",
]


@dataclass(frozen=True)
class ACDParams:
    """Parameters (omega, alpha, beta) of the exponential ACD(1,1)."""

    omega: float
    alpha: float
    beta: float

    def __post_init__(self):
        if not (self.omega > 0.0 and math.isfinite(self.omega)):
            raise ValidationError("omega must be finite and positive")
        if not (self.alpha >= 0.0 and math.isfinite(self.alpha)):
            raise ValidationError("alpha must be finite and non-negative")
        if not (self.beta >= 0.0 and math.isfinite(self.beta)):
            raise ValidationError("beta must be finite and non-negative")

    @property
    def persistence(self) -> float:
        """alpha + beta; the model is stationary iff this is below 1."""
        return self.alpha + self.beta

    @property
    def is_stationary(self) -> bool:
        return self.persistence < 1.0


@dataclass(frozen=True)
class ACDRealization:
    """Simulated events plus the conditional expected durations psi_i.

    durations[i] and psi[i] are aligned: durations[i] = psi[i] * eps[i].
    The exact recursion values are stored so the defining identity can be
    verified without round-tripping through the cumulative event times.
    """

    events: EventSeries
    durations: np.ndarray
    psi: np.ndarray

    def __post_init__(self):
        d = np.array(self.durations, dtype=np.float64, copy=True).reshape(-1)
        p = np.array(self.psi, dtype=np.float64, copy=True).reshape(-1)
        d.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "durations", d)
        object.__setattr__(self, "psi", p)
        if d.size != self.events.n or p.size != self.events.n:
            raise ValidationError("durations and psi must align with the event series")
        if d.size and (d <= 0.0).any():
            raise ValidationError("durations must be strictly positive")

    def to_csv(self) -> str:
        lines = ["index,time,duration,psi"]
        for i, t in enumerate(self.events.times):
            lines.append(f"{i},{t!r},{self.durations[i]!r},{self.psi[i]!r}")
        return "\n".join(lines) + "\n"


@njit(cache=True)
def _acd_recursion(eps, omega, alpha, beta, psi1, guard):
    n = eps.shape[0]
    durations = np.empty(n)
    psi = np.empty(n)
    times = np.empty(n)
    p = psi1
    s = 0.0
    comp = 0.0
    for i in range(n):
        if i > 0:
            p = omega + alpha * durations[i - 1] + beta * psi[i - 1]
        if p > guard:
            return durations, psi, times, i, True
        psi[i] = p
        d = p * eps[i]
        durations[i] = d
        # compensated accumulation keeps times consistent with the durations
        v = d + comp
        t = s + v
        if abs(s) >= abs(v):
            comp = (s - t) + v
        else:
            comp = (v - t) + s
        s = t
        times[i] = s + comp
    return durations, psi, times, n, False


def simulate_acd(params: ACDParams, n_events: int, rng: RngSpec) -> ACDRealization:
    """Simulate n_events durations of the exponential ACD(1,1).

    The persistence alpha + beta may equal 1 (the critical sweep endpoint)
    but not exceed it. psi_1 starts at the stationary mean omega/(1 - a - b)
    when it exists, else at omega; innovations are -log(u) with u uniform on
    (0, 1), so durations are strictly positive. A guard aborts if psi exceeds
    1e9 * omega.
    """
    if n_events < 1:
        raise ValidationError("n_events must be at least 1")
    z = params.persistence
    if z > 1.0:
        raise ValidationError("alpha + beta must not exceed 1 for simulation")
    gen = rng.generator()
    u = gen.random(n_events)
    while (u == 0.0).any():
        mask = u == 0.0
        u[mask] = gen.random(int(mask.sum()))
    eps = -np.log(u)
    psi1 = params.omega / (1.0 - z) if z < 1.0 else params.omega
    guard = 1e9 * params.omega
    durations, psi, times, n, overflowed = _acd_recursion(
        eps, params.omega, params.alpha, params.beta, psi1, guard
    )
    if overflowed:
        partial = None
        if n:
            partial = ACDRealization(
                EventSeries(times[:n], float(times[n - 1])), durations[:n], psi[:n]
            )
        raise SimulationExplosion(
            f"conditional duration exceeded 1e9 * omega after {n} events", partial=partial
        )
    events = EventSeries(times, horizon=float(times[-1]))
    return ACDRealization(events, durations, psi)


def acd_intensity_at(t: float, realization: ACDRealization, params: ACDParams) -> float:
    """Conditional intensity 1 / psi_{N(t)+1}; piecewise constant between events.

    For t beyond the last event the next conditional duration is extended by
    one recursion step.
    """
    events = realization.events
    if not (0.0 <= t <= events.horizon):
        raise ValidationError("t must lie within [0, horizon]")
    k = int(np.searchsorted(events.times, t, side="right"))  # N(t)
    if k < events.n:
        return float(1.0 / realization.psi[k])
    psi_next = (
        params.omega
        + params.alpha * realization.durations[-1]
        + params.beta * realization.psi[-1]
    )
    return float(1.0 / psi_next)


def expected_duration(params: ACDParams) -> float:
    """Stationary mean duration omega / (1 - alpha - beta); diverges at 1."""
    z = params.persistence
    if z >= 1.0:
        raise ValidationError("mean duration diverges for alpha + beta >= 1")
    return params.omega / (1.0 - z)
