"""Dominated coupling from the past for the hard-sphere loss system.

The dominating process is the free spatial birth-death process: births at
rate lam (uniform center, law radius), unit-rate exponential lifetimes,
whose stationary law is the unconditioned marked Poisson process.  It is
time reversible, so the backward window is produced by running a forward
copy from D(0) and flipping roles: a copy birth becomes a death inside the
window, a copy death becomes a window birth (which receives a fresh
uniform mark).  Extending the window only appends copy events, so already
generated events never change -- the fixed-randomness CFTP contract.

Replaying a window of n events forward drives a lower chain started empty
and an upper chain started from the full dominating state.  Three update
rules are supported:

  loss    crossed conditional intensities: a birth joins the lower chain
          only if the upper state plus the arrival is overlap-free, and
          joins the upper chain only if the lower state plus the arrival
          is overlap-free.
  noswap  pairwise intensity: membership tests only check overlap against
          the opposite chain, ignoring its internal overlaps, so the lower
          chain accepts births more often.
  swap    birth-death-swap chain: an arrival overlapping at most one
          resident replaces it.

Coalescence is equality of the two id-sets at time zero; distinct births
at identical coordinates are distinct individuals.  Windows can reach
millions of events before coalescing, so the replay runs as a compiled
kernel over flat arrays when numba is available; a pure-Python replay
with identical semantics serves as fallback and test oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import SamplerTimeoutError, StabilityViolationError, UsageError
from .geometry import TORUS, Configuration, SpaceSpec, Sphere
from .radius import ConstantRadius, TwoPointRadius, UniformRadius
from .samplers import RunStats

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False

    def njit(*a, **k):
        def deco(fn):
            return fn
        return deco

LOSS_SYSTEM = "loss"
WITHOUT_SWAPS = "noswap"
WITH_SWAPS = "swap"
RULES = (LOSS_SYSTEM, WITHOUT_SWAPS, WITH_SWAPS)
_RULE_CODE = {LOSS_SYSTEM: 0, WITHOUT_SWAPS: 1, WITH_SWAPS: 2}

_COPY_BIRTH = 0
_COPY_DEATH = 1

_STATUS_MSG = {
    1: "bounding chains lost containment",
    2: "upper chain escaped the dominating state",
    3: "lower chain became unacceptable",
}


class _UniformBlock:
    """Block-buffered U(0,1) draws from one generator."""

    __slots__ = ("rng", "block", "buf", "i")

    def __init__(self, rng, block: int = 8192):
        self.rng = rng
        self.block = block
        self.buf = rng.random(block)
        self.i = 0

    def next(self) -> float:
        i = self.i
        if i == self.block:
            self.buf = self.rng.random(self.block)
            i = 0
        self.i = i + 1
        return self.buf[i]


def _radius_from_uniform(law, u: float) -> float:
    if isinstance(law, ConstantRadius):
        return law.value
    if isinstance(law, TwoPointRadius):
        return law.a_low if u < law.p_low else law.a_high
    if isinstance(law, UniformRadius):
        return law.lo + (law.hi - law.lo) * u
    raise UsageError(f"unsupported radius law {law!r}")


class EventStream:
    """Replayable backward event timeline of the dominating process.

    Individuals are numbered in creation order; the initial population
    (the state at time zero) carries birth index -1 and death index -1
    means still alive in the forward copy.  ``kinds[i]`` records the i-th
    forward-copy event; inside the window it plays in reverse order with
    birth/death roles flipped.
    """

    def __init__(self, space: SpaceSpec, rng):
        self.space = space
        self.rng = rng
        self._u = _UniformBlock(rng)
        cap = max(64, int(2 * space.lam) + 16)
        self.d = space.d
        self._centers = np.empty((cap, space.d))
        self._radii = np.empty(cap)
        self._born = np.empty(cap, dtype=np.int64)
        self._died = np.empty(cap, dtype=np.int64)
        self._marks = np.empty(cap)
        self.n_individuals = 0
        ecap = 256
        self._kinds = np.empty(ecap, dtype=np.int8)
        self._ids = np.empty(ecap, dtype=np.int64)
        self._times = np.empty(ecap)
        self.n_events = 0
        self._alive: list[int] = []
        self._alive_pos: dict[int, int] = {}
        self._t = 0.0
        n0 = int(rng.poisson(space.lam))
        for _ in range(n0):
            self._new_individual(born=-1)
        self.initial_count = n0
        self.births_generated = 0

    # -- storage ----------------------------------------------------------

    def _grow_individuals(self) -> None:
        cap = 2 * self._radii.shape[0]
        self._centers = np.resize(self._centers, (cap, self.d))
        self._radii = np.resize(self._radii, cap)
        self._born = np.resize(self._born, cap)
        self._died = np.resize(self._died, cap)
        self._marks = np.resize(self._marks, cap)

    def _grow_events(self) -> None:
        cap = 2 * self._kinds.shape[0]
        self._kinds = np.resize(self._kinds, cap)
        self._ids = np.resize(self._ids, cap)
        self._times = np.resize(self._times, cap)

    def _new_individual(self, born: int) -> int:
        ident = self.n_individuals
        if ident == self._radii.shape[0]:
            self._grow_individuals()
        u = self._u
        scale = self.space.scale
        for a in range(self.d):
            self._centers[ident, a] = u.next()
        self._radii[ident] = _radius_from_uniform(self.space.radius_law, u.next()) / scale
        self._born[ident] = born
        self._died[ident] = -1
        self._marks[ident] = -1.0
        self.n_individuals = ident + 1
        self._alive_pos[ident] = len(self._alive)
        self._alive.append(ident)
        return ident

    def _step(self) -> None:
        idx = self.n_events
        if idx == self._kinds.shape[0]:
            self._grow_events()
        u = self._u
        k = len(self._alive)
        rate = self.space.lam + k
        self._t -= math.log1p(-u.next()) / rate
        if u.next() < self.space.lam / rate:
            ident = self._new_individual(born=idx)
            self.births_generated += 1
            self._kinds[idx] = _COPY_BIRTH
        else:
            pos = min(int(u.next() * k), k - 1)
            ident = self._alive[pos]
            last = self._alive.pop()
            if last != ident:
                self._alive[pos] = last
                self._alive_pos[last] = pos
            del self._alive_pos[ident]
            self._died[ident] = idx
            # uniform mark attached to the corresponding window birth
            self._marks[ident] = u.next()
            self._kinds[idx] = _COPY_DEATH
        self._ids[idx] = ident
        self._times[idx] = self._t
        self.n_events = idx + 1

    def extend(self, n_events: int) -> "EventStream":
        """Grow the backward window to hold at least n_events events."""
        while self.n_events < n_events:
            self._step()
        return self

    # -- views -------------------------------------------------------------

    @property
    def horizon(self) -> int:
        return self.n_events

    @property
    def kinds(self) -> np.ndarray:
        return self._kinds[: self.n_events]

    @property
    def ids(self) -> np.ndarray:
        return self._ids[: self.n_events]

    @property
    def times(self) -> np.ndarray:
        return self._times[: self.n_events]

    def sphere(self, ident: int) -> Sphere:
        return Sphere(tuple(self._centers[ident]), float(self._radii[ident]), ident)

    def mark(self, ident: int) -> Optional[float]:
        m = float(self._marks[ident])
        return None if m < 0 else m

    def initial_population(self, n: int) -> np.ndarray:
        """Ids alive at the far end of an n-event window."""
        nind = self.n_individuals
        born = self._born[:nind]
        died = self._died[:nind]
        mask = (born <= n - 1) & ((died == -1) | (died > n - 1))
        return np.flatnonzero(mask).astype(np.int64)

    def window_events(self, n: int):
        """Yield (is_birth, id) pairs in forward window order."""
        kinds = self._kinds
        ids = self._ids
        for idx in range(n - 1, -1, -1):
            yield kinds[idx] == _COPY_DEATH, int(ids[idx])

    def configuration_of(self, ids) -> Configuration:
        cfg = Configuration.for_space(self.space)
        for ident in sorted(int(i) for i in ids):
            cfg.add(self.sphere(ident))
        return cfg


@dataclass
class BoundingPair:
    """Lower and upper bounding states at time zero."""

    lower: Configuration
    upper: Configuration
    rule: str


def init_dominating(space: SpaceSpec, rng) -> EventStream:
    """Stationary dominating state at time zero plus an empty window."""
    return EventStream(space, rng)


def extend_backward(stream: EventStream, target_event_count: int) -> EventStream:
    """Extend the window; existing events are never altered."""
    return stream.extend(target_event_count)


# -- compiled window replay -----------------------------------------------------

@njit(cache=True)
def _overlap_hits(centers, radii, torus, ident, mem_list, mem_cnt, limit):
    """(count, first, second) of members overlapping ident, count capped at limit."""
    d = centers.shape[1]
    cnt = 0
    h0 = -1
    h1 = -1
    cx = centers[ident]
    cr = radii[ident]
    for p in range(mem_cnt):
        j = mem_list[p]
        if j == ident:
            continue
        rr = cr + radii[j]
        s = 0.0
        oc = centers[j]
        for a in range(d):
            w = abs(cx[a] - oc[a])
            if torus:
                w = w % 1.0
                if w > 0.5:
                    w = 1.0 - w
            s += w * w
        if s < rr * rr:
            if cnt == 0:
                h0 = j
            elif cnt == 1:
                h1 = j
            cnt += 1
            if cnt >= limit:
                break
    return cnt, h0, h1


@njit(cache=True)
def _replay(kinds, ids, n, init_ids, centers, radii, torus, rule, check):
    """Replay an n-event window under one rule.

    Returns (status, coalesced, upper_ids, lower_ids); status 0 means every
    per-event invariant held (statuses follow _STATUS_MSG).
    """
    n_ind = radii.shape[0]
    big = n_ind + 1
    u_pos = np.full(n_ind, -1, dtype=np.int64)
    l_pos = np.full(n_ind, -1, dtype=np.int64)
    u_list = np.empty(n_ind, dtype=np.int64)
    l_list = np.empty(n_ind, dtype=np.int64)
    alive = np.zeros(n_ind, dtype=np.uint8)
    u_cnt = 0
    l_cnt = 0
    for i in range(init_ids.shape[0]):
        ident = init_ids[i]
        u_pos[ident] = u_cnt
        u_list[u_cnt] = ident
        u_cnt += 1
        alive[ident] = 1
    u_pairs = 0
    if rule == 0:
        for i in range(u_cnt):
            c, _, _ = _overlap_hits(centers, radii, torus, u_list[i], u_list, u_cnt, big)
            u_pairs += c
        u_pairs //= 2

    status = 0
    for idx in range(n - 1, -1, -1):
        ident = ids[idx]
        if kinds[idx] == 0:  # copy birth = window death
            if u_pos[ident] >= 0:
                p = u_pos[ident]
                u_cnt -= 1
                last = u_list[u_cnt]
                u_list[p] = last
                u_pos[last] = p
                u_pos[ident] = -1
                if rule == 0:
                    c, _, _ = _overlap_hits(centers, radii, torus, ident, u_list, u_cnt, big)
                    u_pairs -= c
                if l_pos[ident] >= 0:
                    p = l_pos[ident]
                    l_cnt -= 1
                    last = l_list[l_cnt]
                    l_list[p] = last
                    l_pos[last] = p
                    l_pos[ident] = -1
            alive[ident] = 0
        else:  # copy death = window birth
            alive[ident] = 1
            if rule == 0:
                cu, _, _ = _overlap_hits(centers, radii, torus, ident, u_list, u_cnt, big)
                add_l = u_pairs == 0 and cu == 0
                cl, _, _ = _overlap_hits(centers, radii, torus, ident, l_list, l_cnt, 1)
                if cl == 0:
                    u_pairs += cu
                    u_pos[ident] = u_cnt
                    u_list[u_cnt] = ident
                    u_cnt += 1
                if add_l:
                    l_pos[ident] = l_cnt
                    l_list[l_cnt] = ident
                    l_cnt += 1
            elif rule == 1:
                cu, _, _ = _overlap_hits(centers, radii, torus, ident, u_list, u_cnt, 1)
                if cu == 0:
                    u_pos[ident] = u_cnt
                    u_list[u_cnt] = ident
                    u_cnt += 1
                    l_pos[ident] = l_cnt
                    l_list[l_cnt] = ident
                    l_cnt += 1
                else:
                    cl, _, _ = _overlap_hits(centers, radii, torus, ident, l_list, l_cnt, 1)
                    if cl == 0:
                        u_pos[ident] = u_cnt
                        u_list[u_cnt] = ident
                        u_cnt += 1
            else:
                cu, h0, _ = _overlap_hits(centers, radii, torus, ident, u_list, u_cnt, 2)
                if cu <= 1:
                    if cu == 1:
                        p = u_pos[h0]
                        u_cnt -= 1
                        last = u_list[u_cnt]
                        u_list[p] = last
                        u_pos[last] = p
                        u_pos[h0] = -1
                        if l_pos[h0] >= 0:
                            p = l_pos[h0]
                            l_cnt -= 1
                            last = l_list[l_cnt]
                            l_list[p] = last
                            l_pos[last] = p
                            l_pos[h0] = -1
                    u_pos[ident] = u_cnt
                    u_list[u_cnt] = ident
                    u_cnt += 1
                    l_pos[ident] = l_cnt
                    l_list[l_cnt] = ident
                    l_cnt += 1
                else:
                    cl, g0, _ = _overlap_hits(centers, radii, torus, ident, l_list, l_cnt, 2)
                    if cl < 2:
                        if cl == 1:
                            p = l_pos[g0]
                            l_cnt -= 1
                            last = l_list[l_cnt]
                            l_list[p] = last
                            l_pos[last] = p
                            l_pos[g0] = -1
                        u_pos[ident] = u_cnt
                        u_list[u_cnt] = ident
                        u_cnt += 1

        for i in range(l_cnt):  # sandwich containment, every event
            if u_pos[l_list[i]] < 0:
                status = 1
                break
        if status:
            break
        if check:
            for i in range(u_cnt):
                if alive[u_list[i]] == 0:
                    status = 2
                    break
            if status == 0:
                for i in range(l_cnt):
                    c, _, _ = _overlap_hits(centers, radii, torus, l_list[i],
                                            l_list, l_cnt, 1)
                    if c > 0:
                        status = 3
                        break
            if status:
                break

    coal = u_cnt == l_cnt
    if coal:
        for i in range(u_cnt):
            if l_pos[u_list[i]] < 0:
                coal = False
                break
    return status, coal, u_list[:u_cnt].copy(), l_list[:l_cnt].copy()


def _replay_python(stream: "EventStream", n: int, rule_code: int, check: bool):
    """Reference replay with identical semantics to the compiled kernel."""
    centers = stream._centers[: stream.n_individuals]
    radii = stream._radii[: stream.n_individuals]
    torus = stream.space.metric == TORUS
    d = stream.d

    def hits(ident: int, members: set, limit: int) -> list:
        out = []
        cx = centers[ident]
        cr = radii[ident]
        for j in members:
            if j == ident:
                continue
            rr = cr + radii[j]
            s = 0.0
            for a in range(d):
                w = abs(cx[a] - centers[j][a])
                if torus:
                    w = w % 1.0
                    if w > 0.5:
                        w = 1.0 - w
                s += w * w
            if s < rr * rr:
                out.append(j)
                if len(out) >= limit:
                    break
        return out

    upper = set(int(i) for i in stream.initial_population(n))
    lower: set = set()
    alive = set(upper)
    big = stream.n_individuals + 1
    u_pairs = sum(len(hits(i, upper, big)) for i in upper) // 2 if rule_code == 0 else 0

    for is_birth, ident in stream.window_events(n):
        if not is_birth:
            if ident in upper:
                upper.remove(ident)
                if rule_code == 0:
                    u_pairs -= len(hits(ident, upper, big))
                lower.discard(ident)
            alive.discard(ident)
        else:
            alive.add(ident)
            if rule_code == 0:
                ov_u = hits(ident, upper, big)
                add_l = u_pairs == 0 and not ov_u
                if not hits(ident, lower, 1):
                    u_pairs += len(ov_u)
                    upper.add(ident)
                if add_l:
                    lower.add(ident)
            elif rule_code == 1:
                if not hits(ident, upper, 1):
                    upper.add(ident)
                    lower.add(ident)
                elif not hits(ident, lower, 1):
                    upper.add(ident)
            else:
                ov_u = hits(ident, upper, 2)
                if len(ov_u) <= 1:
                    if ov_u:
                        upper.discard(ov_u[0])
                        lower.discard(ov_u[0])
                    upper.add(ident)
                    lower.add(ident)
                else:
                    ov_l = hits(ident, lower, 2)
                    if len(ov_l) < 2:
                        if ov_l:
                            lower.remove(ov_l[0])
                        upper.add(ident)
        if not lower <= upper:
            return 1, False, np.array(sorted(upper)), np.array(sorted(lower))
        if check:
            if not upper <= alive:
                return 2, False, np.array(sorted(upper)), np.array(sorted(lower))
            if any(hits(i, lower, 1) for i in lower):
                return 3, False, np.array(sorted(upper)), np.array(sorted(lower))
    return (0, lower == upper,
            np.array(sorted(upper), dtype=np.int64),
            np.array(sorted(lower), dtype=np.int64))


def _run_window(stream: EventStream, n: int, rule: str, check: bool,
                force_python: bool = False):
    rule_code = _RULE_CODE[rule]
    if _HAVE_NUMBA and not force_python:
        status, coal, upper, lower = _replay(
            stream.kinds, stream.ids, n, stream.initial_population(n),
            stream._centers[: stream.n_individuals],
            stream._radii[: stream.n_individuals],
            stream.space.metric == TORUS, rule_code, check)
    else:
        status, coal, upper, lower = _replay_python(stream, n, rule_code, check)
    if status:
        raise StabilityViolationError(_STATUS_MSG[status])
    return set(int(i) for i in lower), set(int(i) for i in upper), coal


def run_bounds(stream: EventStream, rule: str,
               n: Optional[int] = None,
               check: bool = False) -> tuple[BoundingPair, bool]:
    """Run the bounding chains over the current (or given) window length."""
    if rule not in RULES:
        raise UsageError(f"unknown update rule {rule!r}")
    if n is None:
        n = stream.horizon
    if n > stream.horizon:
        raise UsageError("window longer than the generated stream")
    lower, upper, coal = _run_window(stream, n, rule, check)
    pair = BoundingPair(lower=stream.configuration_of(lower),
                        upper=stream.configuration_of(upper), rule=rule)
    return pair, coal


def dcftp_sample(space: SpaceSpec, rule: str, rng,
                 max_events: Optional[int] = None,
                 check: bool = False,
                 recompute_verify: bool = False) -> tuple[Configuration, RunStats]:
    """Perfect sample via dominated CFTP with the doubling schedule.

    ``check`` turns on per-event dominating-containment and lower-chain
    acceptability verification (sandwich containment is always verified);
    ``recompute_verify`` re-runs the chains on a doubled window after
    coalescence and demands the identical time-zero state.
    """
    if rule not in RULES:
        raise UsageError(f"unknown update rule {rule!r}")
    stream = EventStream(space, rng)
    stats = RunStats()
    if stream.initial_count == 0:
        stats.iterations = 1
        stats.accepted = True
        return Configuration.for_space(space), stats
    n = 1
    while True:
        stats.iterations += 1
        stream.extend(n)
        lower, upper, coal = _run_window(stream, n, rule, check)
        if coal:
            if recompute_verify:
                stream.extend(2 * n)
                _, upper2, coal2 = _run_window(stream, 2 * n, rule, check)
                if not (coal2 and upper2 == upper):
                    raise StabilityViolationError(
                        "coalesced state changed under window extension")
            cfg = stream.configuration_of(upper)
            if not cfg.is_acceptable():
                raise StabilityViolationError("coalesced state is not acceptable")
            stats.spheres_generated = stream.initial_count + stream.births_generated
            stats.accepted = True
            return cfg, stats
        n *= 2
        if max_events is not None and n > max_events:
            raise SamplerTimeoutError(f"no coalescence within {max_events} events")
