"""Hawkes process: kernels, conditional intensity, likelihood, and two simulators.

The conditional intensity is lambda(t) = mu + sum_{t_i < t} h(t - t_i) with a
causal kernel h. Two kernel families are supported, both parametrized so that
the kernel integral equals the branching ratio eta exactly:

    exponential: h(t) = (eta / tau) * exp(-t / tau)
    power law:   h(t) = eta * (phi - 1) * c**(phi - 1) * (t + c)**(-phi)

The two simulators (Ogata thinning and branching-cluster construction) are
independent implementations of the same law and are cross-validated against
each other in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from numba import njit, prange

from .core import EventSeries, RngSpec, SimulationExplosion, ValidationError

__all__ = [
    "ExponentialKernel",
    "PowerLawKernel",
    "KernelSpec",
    "HawkesParams",
    "BranchingRealization",
    "kernel_value",
    "intensity_at",
    "compensator",
    "event_compensators",
    "log_likelihood",
    "simulate_thinning",
    "simulate_branching",
]


@dataclass(frozen=True)
class ExponentialKernel:
    """Markovian kernel (eta/tau) * exp(-t/tau); integral over [0, inf) is eta."""

    eta: float
    tau: float

    def __post_init__(self):
        if not (self.eta >= 0.0 and math.isfinite(self.eta)):
            raise ValidationError("eta must be finite and non-negative")
        if not (self.tau > 0.0 and math.isfinite(self.tau)):
            raise ValidationError("tau must be finite and positive")

    @property
    def k(self) -> int:
        # parameter count including the background rate, used for AIC
        return 3

    def value(self, lag):
        lag = np.asarray(lag, dtype=np.float64)
        out = np.where(lag >= 0.0, (self.eta / self.tau) * np.exp(-np.maximum(lag, 0.0) / self.tau), 0.0)
        return float(out) if out.ndim == 0 else out

    def integral(self, s):
        """Closed-form integral of the kernel over [0, s]."""
        s = np.asarray(s, dtype=np.float64)
        out = np.where(s > 0.0, self.eta * -np.expm1(-np.maximum(s, 0.0) / self.tau), 0.0)
        return float(out) if out.ndim == 0 else out

    def normalized_value(self, lag):
        """Kernel shape h(t)/eta, a probability density; defined even for eta = 0."""
        lag = np.asarray(lag, dtype=np.float64)
        out = np.where(lag >= 0.0, np.exp(-np.maximum(lag, 0.0) / self.tau) / self.tau, 0.0)
        return float(out) if out.ndim == 0 else out

    def sample_lags(self, gen: np.random.Generator, n: int) -> np.ndarray:
        return gen.exponential(self.tau, n)


@dataclass(frozen=True)
class PowerLawKernel:
    """Omori-style kernel eta*(phi-1)*c^(phi-1) * (t+c)^(-phi); integral is eta.

    Evaluation goes through (1 + t/c)**(-phi) = exp(-phi * log1p(t/c)), which
    stays finite for the large phi and c this family produces when it mimics
    an exponential decay.
    """

    eta: float
    c: float
    phi: float

    def __post_init__(self):
        if not (self.eta >= 0.0 and math.isfinite(self.eta)):
            raise ValidationError("eta must be finite and non-negative")
        if not (self.c > 0.0 and math.isfinite(self.c)):
            raise ValidationError("c must be finite and positive")
        if not (self.phi > 1.0 and math.isfinite(self.phi)):
            raise ValidationError("phi must be finite and greater than 1")

    @property
    def k(self) -> int:
        return 4

    def value(self, lag):
        lag = np.asarray(lag, dtype=np.float64)
        shape = np.exp(-self.phi * np.log1p(np.maximum(lag, 0.0) / self.c))
        out = np.where(lag >= 0.0, self.eta * (self.phi - 1.0) / self.c * shape, 0.0)
        return float(out) if out.ndim == 0 else out

    def integral(self, s):
        s = np.asarray(s, dtype=np.float64)
        tail = np.exp((1.0 - self.phi) * np.log1p(np.maximum(s, 0.0) / self.c))
        out = np.where(s > 0.0, self.eta * (1.0 - tail), 0.0)
        return float(out) if out.ndim == 0 else out

    def normalized_value(self, lag):
        lag = np.asarray(lag, dtype=np.float64)
        shape = np.exp(-self.phi * np.log1p(np.maximum(lag, 0.0) / self.c))
        out = np.where(lag >= 0.0, (self.phi - 1.0) / self.c * shape, 0.0)
        return float(out) if out.ndim == 0 else out

    def sample_lags(self, gen: np.random.Generator, n: int) -> np.ndarray:
        # inverse CDF of the normalized density: s = c * (u**(-1/(phi-1)) - 1)
        u = gen.random(n)
        while (u == 0.0).any():
            mask = u == 0.0
            u[mask] = gen.random(int(mask.sum()))
        return self.c * np.expm1(-np.log(u) / (self.phi - 1.0))


KernelSpec = Union[ExponentialKernel, PowerLawKernel]


@dataclass(frozen=True)
class HawkesParams:
    """Background rate mu plus a kernel.

    eta < 1 is the stationary regime; eta_max is the admissibility ceiling
    (1.0 by default, so critical kernels can still be represented).
    """

    mu: float
    kernel: KernelSpec
    eta_max: float = 1.0

    def __post_init__(self):
        if not (self.mu > 0.0 and math.isfinite(self.mu)):
            raise ValidationError("mu must be finite and positive")
        if not isinstance(self.kernel, (ExponentialKernel, PowerLawKernel)):
            raise ValidationError("kernel must be an ExponentialKernel or PowerLawKernel")
        if self.kernel.eta > self.eta_max:
            raise ValidationError(
                f"kernel integral eta={self.kernel.eta} exceeds eta_max={self.eta_max}"
            )

    @property
    def eta(self) -> float:
        return self.kernel.eta

    @property
    def is_stationary(self) -> bool:
        return self.kernel.eta < 1.0


@dataclass(frozen=True)
class BranchingRealization:
    """Events of a cluster simulation with their genealogy.

    parents[i] is the index of the triggering event, or -1 for immigrants;
    generations[i] is 0 for immigrants and parent's generation + 1 otherwise.
    """

    events: EventSeries
    parents: np.ndarray
    generations: np.ndarray

    def __post_init__(self):
        p = np.array(self.parents, dtype=np.int64, copy=True).reshape(-1)
        g = np.array(self.generations, dtype=np.int64, copy=True).reshape(-1)
        p.setflags(write=False)
        g.setflags(write=False)
        object.__setattr__(self, "parents", p)
        object.__setattr__(self, "generations", g)
        n = self.events.n
        if p.size != n or g.size != n:
            raise ValidationError("labels must align with the event series")
        if n == 0:
            return
        imm = p < 0
        if (g[imm] != 0).any():
            raise ValidationError("immigrants must have generation 0")
        child = np.flatnonzero(~imm)
        if child.size:
            if (p[child] >= np.arange(n)[child]).any():
                raise ValidationError("every parent must precede its descendant")
            if (g[child] != g[p[child]] + 1).any():
                raise ValidationError("generation must increase by one from parent to child")

    @property
    def is_immigrant(self) -> np.ndarray:
        return self.parents < 0

    @property
    def offspring_fraction(self) -> float:
        if self.events.n == 0:
            return 0.0
        return float(np.mean(self.parents >= 0))

    def to_csv(self) -> str:
        lines = ["index,time,parent,generation"]
        for i, t in enumerate(self.events.times):
            parent = "" if self.parents[i] < 0 else str(int(self.parents[i]))
            lines.append(f"{i},{t!r},{parent},{int(self.generations[i])}")
        return "\n".join(lines) + "\n"


def kernel_value(kernel: KernelSpec, lag) -> float:
    """h(lag); zero for negative lags (causality)."""
    return kernel.value(lag)


def intensity_at(t: float, events: EventSeries, params: HawkesParams) -> float:
    """Conditional intensity mu + sum over strictly earlier events of h(t - t_i)."""
    past = events.times[events.times < t]
    if past.size == 0:
        return float(params.mu)
    return float(params.mu + np.sum(params.kernel.value(t - past)))


def compensator(t: float, events: EventSeries, params: HawkesParams) -> float:
    """Integrated intensity Lambda(t) = mu*t + sum H(t - t_i), for t <= horizon."""
    if t > events.horizon:
        raise ValidationError("compensator is only defined up to the horizon")
    if t <= 0.0:
        return 0.0
    past = events.times[events.times < t]
    if past.size == 0:
        return float(params.mu * t)
    return float(params.mu * t + np.sum(params.kernel.integral(t - past)))


# --- jitted numerical cores ---------------------------------------------------


@njit(cache=True)
def _exp_loglik_grad(times, T, mu, eta, tau):
    # O(N) via the Markov recursion A_i = exp(-dt_i/tau) * (1 + A_{i-1});
    # B_i carries the lag-weighted sum needed for the tau derivative.
    n = times.shape[0]
    ll = 0.0
    dmu = 0.0
    deta = 0.0
    dtau = 0.0
    A = 0.0
    B = 0.0
    for i in range(n):
        if i > 0:
            dt = times[i] - times[i - 1]
            b = np.exp(-dt / tau)
            B = b * (B + dt * (1.0 + A))
            A = b * (1.0 + A)
        lam = mu + (eta / tau) * A
        ll += np.log(lam)
        inv = 1.0 / lam
        dmu += inv
        deta += (A / tau) * inv
        dtau += (eta / (tau * tau)) * (B / tau - A) * inv
    comp = mu * T
    for i in range(n):
        s = T - times[i]
        e = np.exp(-s / tau)
        comp += eta * (1.0 - e)
        deta -= 1.0 - e
        dtau += (eta / (tau * tau)) * s * e
    dmu -= T
    return ll - comp, dmu, deta, dtau


@njit(cache=True, parallel=True)
def _pow_loglik_grad(times, T, mu, eta, c, phi):
    # O(N^2); the outer loop over events parallelizes cleanly.
    n = times.shape[0]
    ll = 0.0
    dmu = 0.0
    deta = 0.0
    dc = 0.0
    dphi = 0.0
    pref = (phi - 1.0) / c
    for i in prange(n):
        S = 0.0
        dS_dc = 0.0
        dS_dphi = 0.0
        ti = times[i]
        for j in range(i):
            d = ti - times[j]
            L = np.log1p(d / c)
            w = np.exp(-phi * L)
            g = pref * w
            S += g
            dS_dc += (g / c) * (phi * d / (c + d) - 1.0)
            dS_dphi += (w / c) * (1.0 - (phi - 1.0) * L)
        lam = mu + eta * S
        inv = 1.0 / lam
        ll += np.log(lam)
        dmu += inv
        deta += S * inv
        dc += eta * dS_dc * inv
        dphi += eta * dS_dphi * inv
    comp = mu * T
    for i in range(n):
        s = T - times[i]
        M = np.log1p(s / c)
        E = np.exp((1.0 - phi) * M)
        comp += eta * (1.0 - E)
        deta -= 1.0 - E
        dc -= eta * E * (1.0 - phi) * s / (c * (c + s))
        dphi -= eta * E * M
    dmu -= T
    return ll - comp, dmu, deta, dc, dphi


@njit(cache=True)
def _exp_compensators(times, mu, eta, tau):
    # Lambda(t_i) = mu*t_i + eta*((i-1) - A_i) with the same Markov recursion.
    n = times.shape[0]
    out = np.empty(n)
    A = 0.0
    for i in range(n):
        if i > 0:
            A = np.exp(-(times[i] - times[i - 1]) / tau) * (1.0 + A)
        out[i] = mu * times[i] + eta * (i - A)
    return out


@njit(cache=True, parallel=True)
def _pow_compensators(times, mu, eta, c, phi):
    n = times.shape[0]
    out = np.empty(n)
    for i in prange(n):
        acc = 0.0
        ti = times[i]
        for j in range(i):
            acc += 1.0 - np.exp((1.0 - phi) * np.log1p((ti - times[j]) / c))
        out[i] = mu * ti + eta * acc
    return out


@njit(cache=True)
def _thin_exp(gen, mu, eta, tau, n_events, guard):
    # Ogata's modified thinning. Between events the exponential-kernel
    # intensity decays monotonically, so the value just after the current
    # point is a valid local upper bound.
    times = np.empty(n_events)
    n = 0
    t = 0.0
    excite = 0.0  # kernel sum at t+, i.e. lambda(t+) - mu
    while n < n_events:
        lam_bar = mu + excite
        if lam_bar > guard:
            return times, n, True
        dt = gen.standard_exponential() / lam_bar
        t = t + dt
        excite *= np.exp(-dt / tau)
        if gen.random() * lam_bar <= mu + excite:
            if n > 0 and t <= times[n - 1]:
                continue  # candidate collided with the previous float time
            times[n] = t
            n += 1
            excite += eta / tau
    return times, n, False


@njit(cache=True)
def _thin_pow(gen, mu, eta, c, phi, n_events, guard):
    times = np.empty(n_events)
    n = 0
    t = 0.0
    pref = eta * (phi - 1.0) / c
    lam_bar = mu
    while n < n_events:
        if lam_bar > guard:
            return times, n, True
        dt = gen.standard_exponential() / lam_bar
        t = t + dt
        lam = mu
        for j in range(n):
            lam += pref * np.exp(-phi * np.log1p((t - times[j]) / c))
        if gen.random() * lam_bar <= lam:
            if n > 0 and t <= times[n - 1]:
                continue
            times[n] = t
            n += 1
            lam_bar = lam + pref  # intensity just after the accepted event
        else:
            lam_bar = lam  # tighten the bound at the rejected candidate
    return times, n, False


# --- operations ----------------------------------------------------------------


def event_compensators(events: EventSeries, params: HawkesParams) -> np.ndarray:
    """Lambda evaluated at every event time; the residual-process transform."""
    times = events.times
    if times.size == 0:
        return np.empty(0)
    k = params.kernel
    if isinstance(k, ExponentialKernel):
        return _exp_compensators(times, params.mu, k.eta, k.tau)
    return _pow_compensators(times, params.mu, k.eta, k.c, k.phi)


def log_likelihood(events: EventSeries, params: HawkesParams) -> float:
    """sum_i log lambda(t_i) - Lambda(horizon).

    O(N) for the exponential kernel via the Markov recursion, O(N^2) for the
    power law.
    """
    times = events.times
    T = events.horizon
    k = params.kernel
    if isinstance(k, ExponentialKernel):
        return float(_exp_loglik_grad(times, T, params.mu, k.eta, k.tau)[0])
    return float(_pow_loglik_grad(times, T, params.mu, k.eta, k.c, k.phi)[0])


def simulate_thinning(
    params: HawkesParams,
    n_events: int,
    rng: RngSpec,
    guard_factor: float = 1e6,
) -> EventSeries:
    """Draw exactly ``n_events`` events by Ogata's modified thinning.

    Aborts with SimulationExplosion (carrying the partial series) if the
    instantaneous intensity exceeds ``guard_factor * mu``, which can happen
    for eta >= 1.
    """
    if n_events < 1:
        raise ValidationError("n_events must be at least 1")
    gen = rng.generator()
    guard = guard_factor * params.mu
    k = params.kernel
    if isinstance(k, ExponentialKernel):
        times, n, exploded = _thin_exp(gen, params.mu, k.eta, k.tau, int(n_events), guard)
    else:
        times, n, exploded = _thin_pow(gen, params.mu, k.eta, k.c, k.phi, int(n_events), guard)
    if exploded:
        partial = EventSeries(times[:n], float(times[n - 1]) if n else 0.0)
        raise SimulationExplosion(
            f"intensity exceeded {guard_factor:g} * mu after {n} events", partial=partial
        )
    return EventSeries(times, horizon=float(times[-1]))


def simulate_branching(
    params: HawkesParams, horizon: float, rng: RngSpec
) -> BranchingRealization:
    """Cluster construction: Poisson(mu) immigrants on [0, horizon], each event
    spawning Poisson(eta) children at lags drawn from the normalized kernel.

    Requires eta < 1 so that clusters are almost surely finite. Children
    beyond the horizon are truncated (their descendants would fall later
    still, so truncation is exact).
    """
    if not (horizon > 0.0 and math.isfinite(horizon)):
        raise ValidationError("horizon must be finite and positive")
    if params.eta >= 1.0:
        raise ValidationError("branching simulation requires eta < 1")
    gen = rng.generator()
    eta = params.eta
    kernel = params.kernel

    n_imm = int(gen.poisson(params.mu * horizon))
    times = [np.sort(gen.uniform(0.0, horizon, n_imm))]
    parents = [np.full(n_imm, -1, dtype=np.int64)]
    generations = [np.zeros(n_imm, dtype=np.int64)]

    frontier_times = times[0]
    frontier_index = np.arange(n_imm, dtype=np.int64)
    next_index = n_imm
    depth = 0
    while frontier_times.size:
        depth += 1
        counts = gen.poisson(eta, frontier_times.size)
        total = int(counts.sum())
        if total == 0:
            break
        parent_global = np.repeat(frontier_index, counts)
        parent_times = np.repeat(frontier_times, counts)
        child_times = parent_times + kernel.sample_lags(gen, total)
        keep = (child_times <= horizon) & (child_times > parent_times)
        child_times = child_times[keep]
        parent_global = parent_global[keep]
        order = np.argsort(child_times, kind="stable")
        child_times = child_times[order]
        parent_global = parent_global[order]
        times.append(child_times)
        parents.append(parent_global)
        generations.append(np.full(child_times.size, depth, dtype=np.int64))
        frontier_times = child_times
        frontier_index = next_index + np.arange(child_times.size, dtype=np.int64)
        next_index += child_times.size

    all_times = np.concatenate(times)
    all_parents = np.concatenate(parents)
    all_generations = np.concatenate(generations)
    order = np.argsort(all_times, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    sorted_parents = all_parents[order]
    remapped = np.where(sorted_parents >= 0, rank[sorted_parents], -1)
    events = EventSeries(all_times[order], horizon=float(horizon))
    return BranchingRealization(events, remapped, all_generations[order])
