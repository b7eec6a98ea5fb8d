"""Agent population state and the pairwise averaging dynamic.

One interaction between agents i and j with channel noises (Ni, Nj)
replaces the pair values (xi, xj) by

    xi' = (xi + xj + Nj) / 2        # i receives xj + Nj
    xj' = (xi + xj + Ni) / 2        # j receives xi + Ni

before the update rule's rounding/clamping is applied.  The sequential
scheduler performs one uniformly random interaction per step; the
synchronous scheduler performs a uniformly random perfect matching per
round, all pairs updating from the pre-round values.

Self-pairs (i == j), which the sequential sampler draws with probability
1/n and which absorb the leftover agent of an odd-n matching, perform no
exchange: the agent keeps its value and the event records zero noise.
This keeps the exact one-step potential identity valid on every realized
interaction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Union

import numpy as np

from .errors import NumericalDriftError, ParameterError
from .noise import NoiseModel, sample_batch

#: Randomness is drawn in fixed-size chunks so that stream consumption is a
#: deterministic function of the run configuration alone.
CHUNK = 1 << 14


# ---------------------------------------------------------------------------
# update rules
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Real:
    """Store the exact average."""


@dataclass(frozen=True)
class DiscreteRounding:
    """Round the average up or down with equal probability (integers stay put)."""


@dataclass(frozen=True)
class Cutoff:
    """Clamp received values and stored results into [vmin, vmax]."""

    vmin: float
    vmax: float
    rounding: bool = False

    def __post_init__(self) -> None:
        if not self.vmin < self.vmax:
            raise ParameterError(f"cutoff requires vmin < vmax, got [{self.vmin}, {self.vmax}]")


UpdateRule = Union[Real, DiscreteRounding, Cutoff]


def _rule_flags(rule: UpdateRule) -> tuple[bool, bool, float, float]:
    """(do_round, do_clamp, vmin, vmax) for the inner loops."""
    if isinstance(rule, Real):
        return False, False, 0.0, 0.0
    if isinstance(rule, DiscreteRounding):
        return True, False, 0.0, 0.0
    if isinstance(rule, Cutoff):
        return rule.rounding, True, rule.vmin, rule.vmax
    raise ParameterError(f"unknown update rule {rule!r}")


# ---------------------------------------------------------------------------
# population and events
# ---------------------------------------------------------------------------


@dataclass
class Population:
    """Mutable state of one run: agent values plus the frozen initial average."""

    values: np.ndarray
    initial_average: float
    step_count: int = 0

    @property
    def n(self) -> int:
        return len(self.values)

    def copy(self) -> "Population":
        return Population(self.values.copy(), self.initial_average, self.step_count)

    def running_average(self) -> float:
        return float(np.mean(self.values))


def init_population(values) -> Population:
    """Freeze the initial average and wrap the values into a Population."""
    arr = np.asarray(values, dtype=float).copy()
    if arr.ndim != 1 or len(arr) < 2:
        raise ParameterError("population needs at least 2 agents")
    return Population(arr, float(np.mean(arr)), 0)


class Interaction(NamedTuple):
    """Realized randomness of one pairwise exchange.

    ``noise_i`` is the channel noise on agent i's outgoing value (received
    by j) and ``round_i`` the rounding offset applied to agent i's own new
    value: +1 rounded up, -1 rounded down, 0 untouched.
    """

    i: int
    j: int
    noise_i: float
    noise_j: float
    round_i: int
    round_j: int


@dataclass
class StepEvent:
    """All interactions of one step: a single pair (sequential) or a matching."""

    interactions: list[Interaction] = field(default_factory=list)


def parallel_time(t_sequential: int, n: int) -> float:
    """Sequential step count rescaled to parallel time t/n."""
    if n < 1:
        raise ParameterError(f"n must be positive, got {n}")
    return t_sequential / n


# ---------------------------------------------------------------------------
# single-interaction arithmetic (shared by step, replay and the engines)
# ---------------------------------------------------------------------------


def _apply_pair(xi, xj, ni, nj, ui, uj, flags):
    """New values and rounding offsets for one i != j exchange.

    ``ui``/``uj`` are the rounding coins (uniform in [0,1)); they are
    ignored unless the rule rounds and the sum is not exactly even.
    """
    do_round, do_clamp, vmin, vmax = flags
    wi = xj + nj
    wj = xi + ni
    if do_clamp:
        if wi > vmax:
            wi = vmax
        elif wi < vmin:
            wi = vmin
        if wj > vmax:
            wj = vmax
        elif wj < vmin:
            wj = vmin
    si = xi + wi
    sj = xj + wj
    ri = rj = 0
    if do_round:
        fi = si // 2.0
        if si != 2.0 * fi:
            if ui < 0.5:
                vi = fi + 1.0
                ri = 1
            else:
                vi = fi
                ri = -1
        else:
            vi = si * 0.5
        fj = sj // 2.0
        if sj != 2.0 * fj:
            if uj < 0.5:
                vj = fj + 1.0
                rj = 1
            else:
                vj = fj
                rj = -1
        else:
            vj = sj * 0.5
    else:
        vi = si * 0.5
        vj = sj * 0.5
    if do_clamp:
        if vi > vmax:
            vi = vmax
        elif vi < vmin:
            vi = vmin
        if vj > vmax:
            vj = vmax
        elif vj < vmin:
            vj = vmin
    return vi, vj, ri, rj


def _replay_pair(xi, xj, ni, nj, ri, rj, flags):
    """Deterministic re-application of one exchange from recorded offsets."""
    do_round, do_clamp, vmin, vmax = flags
    wi = xj + nj
    wj = xi + ni
    if do_clamp:
        if wi > vmax:
            wi = vmax
        elif wi < vmin:
            wi = vmin
        if wj > vmax:
            wj = vmax
        elif wj < vmin:
            wj = vmin
    si = xi + wi
    sj = xj + wj
    if do_round:
        vi = si // 2.0 + 1.0 if ri > 0 else (si // 2.0 if ri < 0 else si * 0.5)
        vj = sj // 2.0 + 1.0 if rj > 0 else (sj // 2.0 if rj < 0 else sj * 0.5)
    else:
        vi = si * 0.5
        vj = sj * 0.5
    if do_clamp:
        if vi > vmax:
            vi = vmax
        elif vi < vmin:
            vi = vmin
        if vj > vmax:
            vj = vmax
        elif vj < vmin:
            vj = vmin
    return vi, vj


def apply_rule(value: float, rule: UpdateRule, rng: np.random.Generator) -> float:
    """Post-average transform of one stored value under ``rule``.

    Real is the identity; DiscreteRounding rounds a non-integral value up
    or down with equal probability; Cutoff optionally rounds and then
    clamps into [vmin, vmax].  Draws one uniform whenever the rule rounds.
    """
    do_round, do_clamp, vmin, vmax = _rule_flags(rule)
    if do_round:
        u = float(rng.random())
        f = math.floor(value)
        if value != f:
            value = f + 1.0 if u < 0.5 else float(f)
    if do_clamp:
        value = min(max(value, vmin), vmax)
    return value


# ---------------------------------------------------------------------------
# one-step operations
# ---------------------------------------------------------------------------


def sequential_step(
    pop: Population, model: NoiseModel, rule: UpdateRule, rng: np.random.Generator
) -> StepEvent:
    """One uniformly random interaction (i, j drawn with replacement)."""
    n = pop.n
    flags = _rule_flags(rule)
    ij = rng.integers(0, n, size=2)
    i, j = int(ij[0]), int(ij[1])
    noise = sample_batch(model, rng, 2)
    coins = rng.random(2) if flags[0] else (0.0, 0.0)
    if i == j:
        inter = Interaction(i, i, 0.0, 0.0, 0, 0)
    else:
        ni, nj = float(noise[0]), float(noise[1])
        vi, vj, ri, rj = _apply_pair(
            pop.values[i], pop.values[j], ni, nj, coins[0], coins[1], flags
        )
        pop.values[i] = vi
        pop.values[j] = vj
        inter = Interaction(i, j, ni, nj, ri, rj)
    pop.step_count += 1
    return StepEvent([inter])


def synchronous_step(
    pop: Population, model: NoiseModel, rule: UpdateRule, rng: np.random.Generator
) -> StepEvent:
    """One synchronous round: a uniform random perfect matching, all pairs
    updating from the pre-round values.  For odd n the leftover agent
    self-pairs and keeps its value."""
    n = pop.n
    flags = _rule_flags(rule)
    perm = rng.permutation(n)
    npairs = n // 2
    noise = sample_batch(model, rng, 2 * npairs)
    coins = rng.random(2 * npairs) if flags[0] else None
    old = pop.values.copy()
    interactions = []
    for k in range(npairs):
        i, j = int(perm[2 * k]), int(perm[2 * k + 1])
        ni, nj = float(noise[2 * k]), float(noise[2 * k + 1])
        ui, uj = (coins[2 * k], coins[2 * k + 1]) if coins is not None else (0.0, 0.0)
        vi, vj, ri, rj = _apply_pair(old[i], old[j], ni, nj, ui, uj, flags)
        pop.values[i] = vi
        pop.values[j] = vj
        interactions.append(Interaction(i, j, ni, nj, ri, rj))
    if n % 2 == 1:
        k = int(perm[-1])
        interactions.append(Interaction(k, k, 0.0, 0.0, 0, 0))
    pop.step_count += 1
    return StepEvent(interactions)


def replay_event(pop: Population, event: StepEvent, rule: UpdateRule) -> None:
    """Re-apply a recorded event; bit-for-bit identical to the original step."""
    flags = _rule_flags(rule)
    pre = pop.values if len(event.interactions) == 1 else pop.values.copy()
    for it in event.interactions:
        if it.i == it.j:
            continue
        vi, vj = _replay_pair(
            pre[it.i], pre[it.j], it.noise_i, it.noise_j, it.round_i, it.round_j, flags
        )
        pop.values[it.i] = vi
        pop.values[it.j] = vj
    pop.step_count += 1


# ---------------------------------------------------------------------------
# batched engines
# ---------------------------------------------------------------------------


class SequentialEngine:
    """Drives one sequential run with incremental mean/potential tracking.

    The running mean is maintained incrementally from the value deltas and
    periodically recomputed (``resync``); while a decomposition window is
    open the potential about the running mean is additionally tracked via
    the exact one-step change formula.  ``refresh`` recomputes both from
    scratch, raises ``NumericalDriftError`` if the trackers wandered, and
    adopts the exact values.
    """

    def __init__(self, pop: Population, model: NoiseModel, rule: UpdateRule,
                 rng: np.random.Generator):
        self.pop = pop
        self.model = model
        self.rule = rule
        self.rng = rng
        self.flags = _rule_flags(rule)
        self.values: list[float] = pop.values.tolist()
        self.n = len(self.values)
        self.mean = math.fsum(self.values) / self.n
        self.step = pop.step_count
        self.phibar: Optional[float] = None
        self.s_prime = 0.0
        self.s_star = 0.0
        self.s_minus = 0.0
        self._decomp = False
        self._resync_every = max(self.n, 1024)
        self._since_resync = 0

    # -- tracking control ---------------------------------------------------

    def begin_decomposition(self) -> None:
        self.phibar = self._phibar_full()
        self.s_prime = 0.0
        self.s_star = 0.0
        self.s_minus = 0.0
        self._decomp = True

    def end_decomposition(self) -> tuple[float, float, float]:
        sums = (self.s_prime, self.s_star, self.s_minus)
        self._decomp = False
        self.phibar = None
        return sums

    def values_array(self) -> np.ndarray:
        return np.asarray(self.values)

    def _mean_full(self) -> float:
        return math.fsum(self.values) / self.n

    def _phibar_full(self) -> float:
        m = self._mean_full()
        return math.fsum((x - m) * (x - m) for x in self.values)

    def refresh(self, rel_tol: float = 1e-6) -> tuple[float, float]:
        """Recompute mean and potential; verify and resync the trackers."""
        mean_full = self._mean_full()
        phibar_full = math.fsum((x - mean_full) * (x - mean_full) for x in self.values)
        if abs(self.mean - mean_full) > rel_tol * (1.0 + abs(mean_full)):
            raise NumericalDriftError(
                f"running-mean tracker drifted: {self.mean} vs {mean_full} at step {self.step}"
            )
        if self.phibar is not None and abs(self.phibar - phibar_full) > rel_tol * (
            1.0 + phibar_full
        ):
            raise NumericalDriftError(
                f"potential tracker drifted: {self.phibar} vs {phibar_full} at step {self.step}"
            )
        self.mean = mean_full
        if self.phibar is not None:
            self.phibar = phibar_full
        self._since_resync = 0
        return mean_full, phibar_full

    def finish(self) -> None:
        """Write the engine state back into the owned Population."""
        self.pop.values = np.asarray(self.values)
        self.pop.step_count = self.step

    # -- main loop -----------------------------------------------------------

    def advance(self, steps: int, collect: Optional[list] = None) -> None:
        if steps <= 0:
            return
        vals = self.values
        n = self.n
        rng = self.rng
        model = self.model
        do_round, do_clamp, vmin, vmax = self.flags
        decomp = self._decomp
        mean = self.mean
        phibar = self.phibar if decomp else 0.0
        sp = self.s_prime
        ss = self.s_star
        sm = self.s_minus
        inv_n = 1.0 / n
        inv4n = 0.25 * inv_n
        done = 0
        while done < steps:
            b = min(CHUNK, steps - done, self._resync_every - self._since_resync)
            ii = rng.integers(0, n, size=2 * b).tolist()
            noi = sample_batch(model, rng, 2 * b).tolist()
            ru = rng.random(2 * b).tolist() if do_round else None
            k2 = 0
            for _ in range(b):
                i = ii[k2]
                j = ii[k2 + 1]
                ni = noi[k2]
                nj = noi[k2 + 1]
                k2 += 2
                if i == j:
                    if collect is not None:
                        collect.append(StepEvent([Interaction(i, i, 0.0, 0.0, 0, 0)]))
                    continue
                xi = vals[i]
                xj = vals[j]
                wi = xj + nj
                wj = xi + ni
                if do_clamp:
                    if wi > vmax:
                        wi = vmax
                    elif wi < vmin:
                        wi = vmin
                    if wj > vmax:
                        wj = vmax
                    elif wj < vmin:
                        wj = vmin
                si = xi + wi
                sj = xj + wj
                ri = rj = 0
                if do_round:
                    fi = si // 2.0
                    if si != 2.0 * fi:
                        if ru[k2 - 2] < 0.5:
                            vi = fi + 1.0
                            ri = 1
                        else:
                            vi = fi
                            ri = -1
                    else:
                        vi = si * 0.5
                    fj = sj // 2.0
                    if sj != 2.0 * fj:
                        if ru[k2 - 1] < 0.5:
                            vj = fj + 1.0
                            rj = 1
                        else:
                            vj = fj
                            rj = -1
                    else:
                        vj = sj * 0.5
                else:
                    vi = si * 0.5
                    vj = sj * 0.5
                if do_clamp:
                    if vi > vmax:
                        vi = vmax
                    elif vi < vmin:
                        vi = vmin
                    if vj > vmax:
                        vj = vmax
                    elif vj < vmin:
                        vj = vmin
                if decomp:
                    # effective received offsets: a = 2 vi - xi - xj etc.,
                    # equal to channel noise plus rounding offset
                    a = vi + vi - xi - xj
                    c = vj + vj - xi - xj
                    d = xi - xj
                    dsq = d * d
                    nsum = a + c
                    z = (xi + xj) * 0.5 - mean
                    quarter = (a * a + c * c) * 0.25
                    sp += quarter
                    ss += nsum * z
                    if phibar > 0.0:
                        dl = dsq / (phibar + phibar)
                        sm += dl if dl < 1.0 else 1.0
                    else:
                        sm += inv_n
                    phibar += -dsq * 0.5 + quarter - nsum * nsum * inv4n + nsum * z
                mean += (vi - xi + vj - xj) * inv_n
                vals[i] = vi
                vals[j] = vj
                if collect is not None:
                    collect.append(StepEvent([Interaction(i, j, ni, nj, ri, rj)]))
            done += b
            self._since_resync += b
            if self._since_resync >= self._resync_every:
                mean = math.fsum(vals) / n
                if decomp:
                    phibar = math.fsum((x - mean) * (x - mean) for x in vals)
                self._since_resync = 0
        self.mean = mean
        if decomp:
            self.phibar = phibar
            self.s_prime = sp
            self.s_star = ss
            self.s_minus = sm
        self.step += steps


class SynchronousEngine:
    """Drives one synchronous run; ``advance`` counts rounds, not interactions."""

    def __init__(self, pop: Population, model: NoiseModel, rule: UpdateRule,
                 rng: np.random.Generator):
        self.pop = pop
        self.model = model
        self.rule = rule
        self.rng = rng
        self.flags = _rule_flags(rule)
        self.values: list[float] = pop.values.tolist()
        self.n = len(self.values)
        self.mean = math.fsum(self.values) / self.n
        self.step = pop.step_count
        self.phibar = None
        self._resync_every = max(1, 4096 // max(self.n, 1))
        self._since_resync = 0

    def values_array(self) -> np.ndarray:
        return np.asarray(self.values)

    def refresh(self, rel_tol: float = 1e-6) -> tuple[float, float]:
        mean_full = math.fsum(self.values) / self.n
        phibar_full = math.fsum((x - mean_full) * (x - mean_full) for x in self.values)
        if abs(self.mean - mean_full) > rel_tol * (1.0 + abs(mean_full)):
            raise NumericalDriftError(
                f"running-mean tracker drifted: {self.mean} vs {mean_full} at round {self.step}"
            )
        self.mean = mean_full
        self._since_resync = 0
        return mean_full, phibar_full

    def finish(self) -> None:
        self.pop.values = np.asarray(self.values)
        self.pop.step_count = self.step

    def advance(self, rounds: int, collect: Optional[list] = None) -> None:
        if rounds <= 0:
            return
        vals = self.values
        n = self.n
        rng = self.rng
        do_round, do_clamp, vmin, vmax = self.flags
        mean = self.mean
        inv_n = 1.0 / n
        npairs = n // 2
        odd = n % 2 == 1
        for _ in range(rounds):
            perm = rng.permutation(n).tolist()
            noi = sample_batch(self.model, rng, 2 * npairs).tolist()
            ru = rng.random(2 * npairs).tolist() if do_round else None
            interactions = [] if collect is not None else None
            # within a round all pairs are disjoint, so in-place updates in
            # matching order still read pre-round values
            for k in range(npairs):
                i = perm[2 * k]
                j = perm[2 * k + 1]
                ni = noi[2 * k]
                nj = noi[2 * k + 1]
                xi = vals[i]
                xj = vals[j]
                wi = xj + nj
                wj = xi + ni
                if do_clamp:
                    if wi > vmax:
                        wi = vmax
                    elif wi < vmin:
                        wi = vmin
                    if wj > vmax:
                        wj = vmax
                    elif wj < vmin:
                        wj = vmin
                si = xi + wi
                sj = xj + wj
                ri = rj = 0
                if do_round:
                    fi = si // 2.0
                    if si != 2.0 * fi:
                        if ru[2 * k] < 0.5:
                            vi = fi + 1.0
                            ri = 1
                        else:
                            vi = fi
                            ri = -1
                    else:
                        vi = si * 0.5
                    fj = sj // 2.0
                    if sj != 2.0 * fj:
                        if ru[2 * k + 1] < 0.5:
                            vj = fj + 1.0
                            rj = 1
                        else:
                            vj = fj
                            rj = -1
                    else:
                        vj = sj * 0.5
                else:
                    vi = si * 0.5
                    vj = sj * 0.5
                if do_clamp:
                    if vi > vmax:
                        vi = vmax
                    elif vi < vmin:
                        vi = vmin
                    if vj > vmax:
                        vj = vmax
                    elif vj < vmin:
                        vj = vmin
                mean += (vi - xi + vj - xj) * inv_n
                vals[i] = vi
                vals[j] = vj
                if interactions is not None:
                    interactions.append(Interaction(i, j, ni, nj, ri, rj))
            if odd:
                k = perm[-1]
                if interactions is not None:
                    interactions.append(Interaction(k, k, 0.0, 0.0, 0, 0))
            if collect is not None:
                collect.append(StepEvent(interactions))
            self._since_resync += 1
            if self._since_resync >= self._resync_every:
                mean = math.fsum(vals) / n
                self._since_resync = 0
        self.mean = mean
        self.step += rounds
