"""Sequential simulation of the cyclic urn.

Random numbers come from a SplitMix64 counter generator.  Replicate ``r`` of
an ensemble seeded with ``master_seed`` uses the 64-bit state
``SeedSequence(master_seed, spawn_key=(r,)).generate_state(1, uint64)[0]``,
so a single replicate can be replayed in isolation with :func:`simulate`.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numba
import numpy as np

from .gammafn import rising_path
from .spectral import InvalidParameter, build_basis

THREADS_ENV = "CYCLIC_URN_THREADS"
if "NUMBA_THREADING_LAYER" not in os.environ:
    numba.config.THREADING_LAYER = "workqueue"

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0


@numba.njit(cache=True, inline="always")
def _next_uniform(state):
    state = state + _GOLDEN
    z = state
    z = (z ^ (z >> _S30)) * _MIX1
    z = (z ^ (z >> _S27)) * _MIX2
    z = z ^ (z >> _S31)
    return state, float(z >> _S11) * _INV53


@numba.njit(cache=True)
def _advance(counts, n_from, n_to, state):
    m = counts.shape[0]
    for n in range(n_from, n_to):
        state, u = _next_uniform(state)
        r = int(u * (n + 1))
        j = 0
        while r >= counts[j]:
            r -= counts[j]
            j += 1
        j += 1
        if j == m:
            j = 0
        counts[j] += 1
    return state


@numba.njit(cache=True)
def _advance_tracked(counts, proj, table, n_from, n_to, state):
    m = counts.shape[0]
    for n in range(n_from, n_to):
        state, u = _next_uniform(state)
        r = int(u * (n + 1))
        j = 0
        while r >= counts[j]:
            r -= counts[j]
            j += 1
        j += 1
        if j == m:
            j = 0
        counts[j] += 1
        for k in range(m):
            proj[k] += table[k, j]
    return state


@numba.njit(cache=True, parallel=True)
def _ensemble_kernel(m, initial_type, checkpoints, seeds):
    reps = seeds.shape[0]
    out = np.zeros((reps, checkpoints.shape[0], m), dtype=np.int64)
    for rep in numba.prange(reps):
        counts = np.zeros(m, dtype=np.int64)
        counts[initial_type] = 1
        state = seeds[rep]
        t = 0
        for c in range(checkpoints.shape[0]):
            state = _advance(counts, t, checkpoints[c], state)
            t = checkpoints[c]
            out[rep, c, :] = counts
    return out


def replicate_seed(master_seed: int, replicate: int) -> np.uint64:
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(replicate),))
    return ss.generate_state(1, dtype=np.uint64)[0]


def replicate_seeds(master_seed: int, reps: int, start: int = 0) -> np.ndarray:
    return np.array([replicate_seed(master_seed, r) for r in range(start, start + reps)], dtype=np.uint64)


@dataclass(frozen=True)
class UrnConfig:
    m: int
    initial_type: int = 0
    steps: int = 0
    seed: int = 0
    checkpoints: tuple[int, ...] = ()

    def __post_init__(self):
        if self.m < 2:
            raise InvalidParameter(f"m must be >= 2, got {self.m}")
        if not 0 <= self.initial_type < self.m:
            raise InvalidParameter(f"initial_type must lie in [0, {self.m}), got {self.initial_type}")
        if self.steps < 0:
            raise InvalidParameter("steps must be >= 0")
        cps = tuple(int(c) for c in self.checkpoints)
        if list(cps) != sorted(set(cps)) or any(c < 0 or c > self.steps for c in cps):
            raise InvalidParameter(f"checkpoints must be sorted, distinct and within [0, {self.steps}]")
        object.__setattr__(self, "checkpoints", cps)


@dataclass(frozen=True)
class Composition:
    counts: tuple[int, ...]
    time: int
    initial_type: int = 0

    @classmethod
    def initial(cls, m: int, j: int = 0) -> Composition:
        counts = [0] * m
        counts[j] = 1
        return cls(tuple(counts), 0, j)

    @property
    def m(self) -> int:
        return len(self.counts)

    def as_array(self) -> np.ndarray:
        return np.array(self.counts, dtype=np.int64)


@dataclass(frozen=True)
class Snapshot:
    time: int
    composition: Composition
    projections: np.ndarray  # u_k(R_n), maintained incrementally
    rising: np.ndarray  # prod_{s<=n} (s + omega^k)/s for every k


@dataclass(frozen=True)
class TrajectoryRecord:
    config: UrnConfig
    snapshots: list[Snapshot] = field(default_factory=list)
    final: Composition | None = None

    def at(self, n: int) -> Snapshot:
        for s in self.snapshots:
            if s.time == n:
                return s
        raise KeyError(f"no snapshot at time {n}")

    @property
    def times(self) -> list[int]:
        return [s.time for s in self.snapshots]


def step(state: Composition, random_draw: int) -> Composition:
    """Draw ball number ``random_draw`` (balls ordered by type) and add its successor type."""
    total = state.time + 1
    if not 0 <= random_draw < total:
        raise IndexError(f"draw {random_draw} outside [0, {total})")
    r = random_draw
    j = 0
    while r >= state.counts[j]:
        r -= state.counts[j]
        j += 1
    counts = list(state.counts)
    counts[(j + 1) % state.m] += 1
    return Composition(tuple(counts), state.time + 1, state.initial_type)


def simulate(config: UrnConfig) -> TrajectoryRecord:
    basis = build_basis(config.m)
    m = config.m
    table = np.ascontiguousarray(basis.dual)
    counts = np.zeros(m, dtype=np.int64)
    counts[config.initial_type] = 1
    proj = np.ascontiguousarray(basis.dual[:, config.initial_type]).astype(complex)
    stops = sorted(set(config.checkpoints) | {config.steps})
    rising = {}
    if config.checkpoints:
        top = config.checkpoints[-1]
        paths = np.array([rising_path(basis.omega(k), top) for k in range(m)])
        rising = {c: paths[:, c].copy() for c in config.checkpoints}
    state = np.uint64(config.seed)
    t = 0
    snaps = []
    for stop in stops:
        state = np.uint64(_advance_tracked(counts, proj, table, t, stop, state))
        t = stop
        if stop in rising:
            comp = Composition(tuple(int(c) for c in counts), stop, config.initial_type)
            snaps.append(Snapshot(stop, comp, proj.copy(), rising[stop]))
    final = Composition(tuple(int(c) for c in counts), config.steps, config.initial_type)
    return TrajectoryRecord(config, snaps, final)


def simulate_ensemble(m: int, checkpoints, reps: int, seed: int, initial_type: int = 0) -> np.ndarray:
    """Counts at each checkpoint for ``reps`` replicates, shape (reps, len(checkpoints), m)."""
    cps = np.asarray(sorted(set(int(c) for c in checkpoints)), dtype=np.int64)
    if m < 2 or reps < 1 or cps.size == 0 or cps[0] < 0:
        raise InvalidParameter("need m >= 2, reps >= 1 and non-negative checkpoints")
    if not 0 <= initial_type < m:
        raise InvalidParameter("initial_type out of range")
    threads = os.environ.get(THREADS_ENV)
    if threads:
        numba.set_num_threads(max(1, min(int(threads), numba.config.NUMBA_NUM_THREADS)))
    return _ensemble_kernel(m, initial_type, cps, replicate_seeds(seed, reps))


def shift_initial_type(traj: TrajectoryRecord, j: int) -> TrajectoryRecord:
    """Re-express a type-0 trajectory as one started from type j (counts rotated by j)."""
    cfg = traj.config
    if cfg.initial_type != 0:
        raise InvalidParameter("shift_initial_type expects a trajectory started from type 0")
    m = cfg.m
    j %= m
    basis = build_basis(m)
    phase = np.array([basis.omega(k * j) for k in range(m)])

    def rot(c: Composition) -> Composition:
        return Composition(tuple(np.roll(c.counts, j).tolist()), c.time, j)

    snaps = [Snapshot(s.time, rot(s.composition), s.projections * phase, s.rising) for s in traj.snapshots]
    new_cfg = UrnConfig(m, j, cfg.steps, cfg.seed, cfg.checkpoints)
    return TrajectoryRecord(new_cfg, snaps, rot(traj.final) if traj.final else None)


def ball_count_ok(comp: Composition) -> bool:
    return sum(comp.counts) == comp.time + 1 and min(comp.counts) >= 0


def one_step_mean(comp: Composition):
    """Exact average of the successor state over all n+1 equally likely draws (as Fractions)."""
    from fractions import Fraction

    total = comp.time + 1
    acc = [Fraction(0)] * comp.m
    for d in range(total):
        nxt = step(comp, d)
        for t in range(comp.m):
            acc[t] += Fraction(nxt.counts[t], total)
    return acc
