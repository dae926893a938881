"""Exact stochastic simulation of the jump process.

Two exact samplers are provided: the direct method (total-intensity
exponential waiting times, channel picked by cumulative-sum inversion of
a uniform mark) and a random-time-change sampler that runs one unit-rate
Poisson clock per channel and fires the channel whose integrated
intensity first reaches its next clock point.  Both sample the same law;
the clock-based sampler is what the common-random-number coupling builds
on: a nominal and a perturbed trajectory driven by the *same* per-channel
clock streams differ only through the perturbation.

Randomness is pinned down explicitly so that results are reproducible
and schedule-independent:

* every stream is a ``random.Random`` (CPython Mersenne Twister) seeded
  through the splitmix64 mixing chain :func:`mix64`;
* trajectory ``i`` of an ensemble uses ``mix64(seed, i)``; channel ``r``
  of a coupled pair uses ``mix64(seed, pair, r)`` for both legs;
* exponentials are inverse-CDF samples ``-log(1 - u)``;
* ensemble reductions run in fixed chunk order, so serial and parallel
  runs produce identical bytes.

The lockstep batch sampler (:func:`batch_states`) trades per-trajectory
streams for one master-seeded vector stream; it is exact and
deterministic but its per-trajectory paths depend on the batch size.
"""

from __future__ import annotations

import math
import os
import random
from dataclasses import dataclass, field
from multiprocessing import get_context
from typing import Sequence

import numpy as np
import scipy.integrate

from .model import (
    Bilinear,
    Constant,
    Dimer,
    Linear,
    MassAction,
    ReactionNetwork,
    canonical_kind,
    propensity_eval,
)

__all__ = [
    "SimulationError",
    "SimConfig",
    "Trajectory",
    "PerturbationSpec",
    "MomentTable",
    "RmsCurve",
    "OdeSolution",
    "mix64",
    "simulate_direct",
    "simulate_rtc",
    "simulate_coupled",
    "ensemble_moments",
    "coupled_rms",
    "batch_states",
    "integrate_rre",
    "worker_count",
]

_MASK64 = (1 << 64) - 1


def mix64(*parts: int) -> int:
    """Fold integers into one 64-bit seed via the splitmix64 finalizer.

    This mixing chain is a documented, frozen part of the reproducibility
    contract: ``z_0 = 0x9E3779B97F4A7C15``; for each part ``p``,
    ``z -> splitmix64_finalizer(z + p)``.
    """
    z = 0x9E3779B97F4A7C15
    for p in parts:
        z = (z + (p & _MASK64)) & _MASK64
        z ^= z >> 30
        z = (z * 0xBF58476D1CE4E5B9) & _MASK64
        z ^= z >> 27
        z = (z * 0x94D049BB133111EB) & _MASK64
        z ^= z >> 31
    return z


class SimulationError(RuntimeError):
    """Hard numerical failure (non-finite propensity, integrator failure)."""


def worker_count(requested: int | None = None) -> int:
    """Resolve the worker count: argument, else JKL_THREADS, else all cores."""
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get("JKL_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


@dataclass(frozen=True)
class SimConfig:
    """Caps and sampling controls for a single run.

    ``state_cap`` bounds the population 1-norm (the localization device:
    the run stops the first time it is exceeded); ``max_events`` bounds
    the number of jumps.  Hitting either is recorded in the trajectory
    status, never silent.
    """

    t_end: float
    seed: int = 0
    max_events: int = 10**8
    state_cap: float = 1e9

    def __post_init__(self):
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if self.max_events <= 0 or self.state_cap <= 0:
            raise ValueError("caps must be positive")


@dataclass(frozen=True)
class Trajectory:
    """A piecewise-constant sample path.

    ``times[0] == 0`` with the initial state; event ``i`` happens at
    ``times[i+1]`` firing channel ``channels[i]``.  ``status`` is one of
    ``"t_end"``, ``"max_events"``, ``"state_cap"``.
    """

    times: np.ndarray  # (E+1,)
    states: np.ndarray  # (E+1, D) int64
    channels: np.ndarray  # (E,) int64
    status: str
    t_end: float
    internal_times: tuple[float, ...] | None = None  # per-channel integrated intensity
    channel_counts: tuple[int, ...] | None = None

    @property
    def n_events(self) -> int:
        return len(self.channels)

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    @property
    def cap_time(self) -> float:
        """Time after which the path is unknown (inf if it ran to t_end)."""
        return math.inf if self.status == "t_end" else float(self.times[-1])

    def sample(self, grid: Sequence[float]) -> np.ndarray:
        """States at the given times (right-continuous piecewise constant)."""
        grid = np.asarray(grid, dtype=float)
        idx = np.searchsorted(self.times, grid, side="right") - 1
        if (idx < 0).any():
            raise ValueError("grid extends before the initial time")
        return self.states[idx]

    def to_csv(self, species: Sequence[str], grid: Sequence[float] | None = None) -> str:
        header = "time," + ",".join(species)
        if grid is None:
            times, states = self.times, self.states
        else:
            times, states = np.asarray(grid, dtype=float), self.sample(grid)
        lines = [header]
        for t, row in zip(times, states):
            lines.append(repr(float(t)) + "," + ",".join(str(int(v)) for v in row))
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class PerturbationSpec:
    """Relative perturbation of named rate constants: k -> k (1 + delta).

    ``delta_total`` is the smallest constant with
    ``|w(x) - w_pert(x)|_1 <= delta |w(x)|_1`` (the largest ``|delta_r|``)
    and ``delta_drift`` the analogue for the drift,
    ``max_r |nu_r| |delta_r|``.
    """

    deltas: dict[str, float] = field(default_factory=dict)

    def reaction_deltas(self, net: ReactionNetwork) -> dict[int, float]:
        out: dict[int, float] = {}
        for name, delta in self.deltas.items():
            hits = net.reactions_for_parameter(name)
            if not hits:
                raise KeyError(f"no reaction rate is bound to parameter {name!r}")
            if 1.0 + delta < 0:
                raise ValueError(f"perturbation {name}={delta} makes the rate negative")
            for j in hits:
                out[j] = delta
        return out

    def apply(self, net: ReactionNetwork) -> ReactionNetwork:
        rd = self.reaction_deltas(net)
        return net.with_scaled_rates({j: 1.0 + d for j, d in rd.items()})

    def totals(self, net: ReactionNetwork) -> tuple[float, float]:
        rd = self.reaction_deltas(net)
        if not rd:
            return 0.0, 0.0
        delta = max(abs(d) for d in rd.values())
        delta_f = max(
            abs(d) * float(np.linalg.norm(net.reactions[j].nu)) for j, d in rd.items()
        )
        return delta, delta_f


# ---------------------------------------------------------------------------
# compiled propensity kernels


def _compile(net: ReactionNetwork):
    """Flatten reactions into (code, rate, i, j, extras) rows plus updates."""
    rows = []
    for rxn in net.reactions:
        prop = canonical_kind(rxn.propensity)
        if isinstance(prop, Constant):
            rows.append((0, prop.rate, 0, 0, ()))
        elif isinstance(prop, Linear):
            rows.append((1, prop.rate, prop.species, 0, ()))
        elif isinstance(prop, Bilinear):
            rows.append((2, prop.rate, prop.species_a, prop.species_b, ()))
        elif isinstance(prop, Dimer):
            rows.append((3, prop.rate, prop.species, 0, ()))
        else:
            assert isinstance(prop, MassAction)
            rows.append((4, prop.rate, 0, 0, prop.reactants))
    updates = [
        tuple((s, d) for s, d in enumerate(rxn.nu) if d) for rxn in net.reactions
    ]
    return rows, updates


def _eval_into(rows, x, w) -> float:
    """Evaluate all propensities at x into list w; returns the total."""
    total = 0.0
    for idx, (code, k, i, j, extra) in enumerate(rows):
        if code == 0:
            v = k
        elif code == 1:
            v = k * x[i]
        elif code == 2:
            v = k * x[i] * x[j]
        elif code == 3:
            xi = x[i]
            v = k * xi * (xi - 1)
        else:
            v = k
            for s, m in extra:
                xs = x[s]
                for step in range(m):
                    v *= xs - step
        w[idx] = v
        total += v
    return total


def _check_state(x0: Sequence[int], net: ReactionNetwork) -> list[int]:
    x = [int(v) for v in x0]
    if len(x) != net.n_species:
        raise ValueError(f"state has dimension {len(x)}, expected {net.n_species}")
    if any(v < 0 for v in x):
        raise ValueError("initial state must be non-negative")
    return x


def _finish(times, states, channels, status, t_end, internal=None, counts=None):
    return Trajectory(
        times=np.array(times, dtype=float),
        states=np.array(states, dtype=np.int64),
        channels=np.array(channels, dtype=np.int64),
        status=status,
        t_end=t_end,
        internal_times=internal,
        channel_counts=counts,
    )


def simulate_direct(net: ReactionNetwork, x0: Sequence[int], cfg: SimConfig) -> Trajectory:
    """Direct-method exact sample path.

    Waiting times are Exp(W(x)) with W the total intensity; the channel
    is the first whose cumulative intensity exceeds a uniform mark times
    W.  Zero total intensity is not an error: the state is frozen and
    the path runs to t_end.
    """
    x = _check_state(x0, net)
    rows, updates = _compile(net)
    n_r = len(rows)
    rng = random.Random(cfg.seed & _MASK64)
    w = [0.0] * n_r
    times = [0.0]
    states = [tuple(x)]
    channels: list[int] = []
    t = 0.0
    status = "t_end"
    while True:
        if len(channels) >= cfg.max_events:
            status = "max_events"
            break
        total = _eval_into(rows, x, w)
        if not total < 1e300:
            raise SimulationError(f"propensity overflow at state {x}")
        if total <= 0.0:
            break
        t_next = t + rng.expovariate(total)
        if t_next > cfg.t_end:
            break
        target = rng.random() * total
        acc = 0.0
        fired = n_r - 1
        for j in range(n_r):
            acc += w[j]
            if target < acc:
                fired = j
                break
        for s, d in updates[fired]:
            x[s] -= d
        t = t_next
        times.append(t)
        states.append(tuple(x))
        channels.append(fired)
        if sum(x) > cfg.state_cap:
            status = "state_cap"
            break
    return _finish(times, states, channels, status, cfg.t_end)


def _rtc_core(net, x0, cfg: SimConfig, channel_rngs) -> Trajectory:
    x = _check_state(x0, net)
    rows, updates = _compile(net)
    n_r = len(rows)
    w = [0.0] * n_r
    # integrated intensity consumed per channel, and its next clock point
    t_int = [0.0] * n_r
    nxt = [rng.expovariate(1.0) for rng in channel_rngs]
    counts = [0] * n_r
    times = [0.0]
    states = [tuple(x)]
    channels: list[int] = []
    t = 0.0
    status = "t_end"
    while True:
        if len(channels) >= cfg.max_events:
            status = "max_events"
            break
        total = _eval_into(rows, x, w)
        if not total < 1e300:
            raise SimulationError(f"propensity overflow at state {x}")
        if total <= 0.0:
            break
        best = math.inf
        fired = -1
        for j in range(n_r):
            wj = w[j]
            if wj > 0.0:
                dt = (nxt[j] - t_int[j]) / wj
                if dt < best:  # strict: ties go to the lowest index
                    best = dt
                    fired = j
        t_next = t + best
        if t_next > cfg.t_end:
            break
        for j in range(n_r):
            wj = w[j]
            if wj > 0.0 and j != fired:
                adv = t_int[j] + wj * best
                t_int[j] = adv if adv < nxt[j] else nxt[j]
        t_int[fired] = nxt[fired]
        nxt[fired] += channel_rngs[fired].expovariate(1.0)
        counts[fired] += 1
        for s, d in updates[fired]:
            x[s] -= d
        t = t_next
        times.append(t)
        states.append(tuple(x))
        channels.append(fired)
        if sum(x) > cfg.state_cap:
            status = "state_cap"
            break
    return _finish(
        times, states, channels, status, cfg.t_end,
        internal=tuple(t_int), counts=tuple(counts),
    )


_CHANNEL_TAG = 0x52544300  # stream-domain separator for per-channel clocks


def simulate_rtc(net: ReactionNetwork, x0: Sequence[int], cfg: SimConfig) -> Trajectory:
    """Random-time-change exact sample path (next-reaction bookkeeping).

    Statistically identical to :func:`simulate_direct`; exposes the
    per-channel integrated intensities, which is the handle the coupling
    uses.  Channel r draws its clock increments from the stream seeded
    ``mix64(seed, _CHANNEL_TAG, r)``.
    """
    rngs = [
        random.Random(mix64(cfg.seed, _CHANNEL_TAG, r)) for r in range(net.n_reactions)
    ]
    return _rtc_core(net, x0, cfg, rngs)


def simulate_coupled(
    net: ReactionNetwork,
    x0: Sequence[int],
    y0: Sequence[int],
    pert: PerturbationSpec,
    cfg: SimConfig,
) -> tuple[Trajectory, Trajectory]:
    """Coupled pair: nominal and perturbed legs on shared channel clocks.

    Both legs consume the *same* per-channel unit-rate Poisson streams
    (re-created from identical seeds), each advancing its own integrated
    intensity.  With equal initial data and zero perturbation the two
    legs coincide event for event.
    """
    pert_net = pert.apply(net)

    def streams():
        return [
            random.Random(mix64(cfg.seed, _CHANNEL_TAG, r))
            for r in range(net.n_reactions)
        ]

    leg_x = _rtc_core(net, x0, cfg, streams())
    leg_y = _rtc_core(pert_net, y0, cfg, streams())
    return leg_x, leg_y


# ---------------------------------------------------------------------------
# ensembles


@dataclass(frozen=True)
class MomentTable:
    """Ensemble moment estimates of |X_t|_1 plus per-species statistics.

    ``moments[g, p-1]`` estimates E|X_t|_1^p at ``times[g]``; standard
    errors are sample standard deviation over sqrt(n_valid).  Capped
    trajectories are excluded from every time at or past their cap and
    counted in ``n_excluded``.
    """

    times: np.ndarray
    p_max: int
    moments: np.ndarray  # (G, p_max)
    stderr: np.ndarray  # (G, p_max)
    species_mean: np.ndarray  # (G, D)
    species_var: np.ndarray  # (G, D)
    n: int
    n_valid: np.ndarray  # (G,)
    n_excluded: np.ndarray  # (G,)

    @property
    def explosion(self) -> bool:
        return bool(self.n_excluded.any())

    def to_csv(self) -> str:
        lines = ["time,p,estimate,stderr,n"]
        for g, t in enumerate(self.times):
            for p in range(1, self.p_max + 1):
                lines.append(
                    f"{float(t)!r},{p},{float(self.moments[g, p - 1])!r},"
                    f"{float(self.stderr[g, p - 1])!r},{int(self.n_valid[g])}"
                )
        return "\n".join(lines) + "\n"


_CHUNK = 256  # fixed reduction granularity: results never depend on workers


def _moment_chunk(args):
    net, x0, grid, p_max, seed, start, stop, max_events, state_cap = args
    grid = np.asarray(grid, dtype=float)
    n_g, dim = len(grid), net.n_species
    t_end = float(grid[-1]) if grid[-1] > 0 else 1.0
    sums = np.zeros((n_g, p_max))
    sq = np.zeros((n_g, p_max))
    s_sum = np.zeros((n_g, dim))
    s_sq = np.zeros((n_g, dim))
    valid = np.zeros(n_g, dtype=np.int64)
    for i in range(start, stop):
        cfg = SimConfig(
            t_end=t_end, seed=mix64(seed, i), max_events=max_events, state_cap=state_cap
        )
        traj = simulate_direct(net, x0, cfg)
        samples = traj.sample(grid).astype(float)
        ok = grid < traj.cap_time
        norms = samples.sum(axis=1)
        powers = norms[:, None] ** np.arange(1, p_max + 1)[None, :]
        okf = ok.astype(float)
        sums += powers * okf[:, None]
        sq += powers**2 * okf[:, None]
        s_sum += samples * okf[:, None]
        s_sq += samples**2 * okf[:, None]
        valid += ok
    return sums, sq, s_sum, s_sq, valid


def _run_chunks(worker, args_list, workers):
    if workers <= 1 or len(args_list) <= 1:
        return [worker(a) for a in args_list]
    ctx = get_context("fork")
    with ctx.Pool(processes=min(workers, len(args_list))) as pool:
        return pool.map(worker, args_list)


def ensemble_moments(
    net: ReactionNetwork,
    x0: Sequence[int],
    grid: Sequence[float],
    p_max: int,
    n: int,
    seed: int,
    workers: int | None = None,
    max_events: int = 10**8,
    state_cap: float = 1e9,
) -> MomentTable:
    """Moments of |X_t|_1 up to order p_max over n independent runs.

    Trajectory i uses the stream ``mix64(seed, i)``; partial sums are
    reduced in fixed chunk order, so the table is bit-identical for any
    worker count (set ``workers`` or the JKL_THREADS variable).
    """
    if n < 2:
        raise ValueError("ensemble needs n >= 2")
    if p_max < 1:
        raise ValueError("p_max must be >= 1")
    grid = np.asarray(grid, dtype=float)
    args = [
        (net, x0, grid, p_max, seed, start, min(start + _CHUNK, n), max_events, state_cap)
        for start in range(0, n, _CHUNK)
    ]
    parts = _run_chunks(_moment_chunk, args, worker_count(workers))
    sums = sum(p[0] for p in parts)
    sq = sum(p[1] for p in parts)
    s_sum = sum(p[2] for p in parts)
    s_sq = sum(p[3] for p in parts)
    valid = sum(p[4] for p in parts)

    nv = np.maximum(valid, 1).astype(float)[:, None]
    mean = sums / nv
    var = np.maximum(sq / nv - mean**2, 0.0)
    bessel = np.where(valid[:, None] > 1, nv / (nv - 1), 1.0)
    stderr = np.sqrt(var * bessel) / np.sqrt(nv)
    sp_mean = s_sum / nv
    sp_var = np.maximum(s_sq / nv - sp_mean**2, 0.0) * bessel
    return MomentTable(
        times=grid,
        p_max=p_max,
        moments=mean,
        stderr=stderr,
        species_mean=sp_mean,
        species_var=sp_var,
        n=n,
        n_valid=valid,
        n_excluded=n - valid,
    )


@dataclass(frozen=True)
class RmsCurve:
    """Ensemble root-mean-square difference of coupled pairs on a grid."""

    times: np.ndarray
    rms: np.ndarray  # sqrt(E |X_t - Y_t|^2)
    stderr: np.ndarray  # delta-method stderr of the rms
    mean_sq: np.ndarray
    species_rms: np.ndarray  # (G, D): per-species sqrt(E (X-Y)_s^2)
    n: int
    n_valid: np.ndarray

    def to_csv(self, species: Sequence[str] | None = None) -> str:
        cols = "time,rms,stderr,n"
        if species is not None:
            cols += "," + ",".join(f"rms_{s}" for s in species)
        lines = [cols]
        for g, t in enumerate(self.times):
            row = (
                f"{float(t)!r},{float(self.rms[g])!r},"
                f"{float(self.stderr[g])!r},{int(self.n_valid[g])}"
            )
            if species is not None:
                row += "," + ",".join(repr(float(v)) for v in self.species_rms[g])
            lines.append(row)
        return "\n".join(lines) + "\n"


def _rms_chunk(args):
    net, pert_net, x0, y0, grid, seed, start, stop, max_events, state_cap = args
    grid = np.asarray(grid, dtype=float)
    n_g, dim = len(grid), net.n_species
    t_end = float(grid[-1]) if grid[-1] > 0 else 1.0
    sq_sum = np.zeros(n_g)
    sq_sq = np.zeros(n_g)
    sp_sq = np.zeros((n_g, dim))
    valid = np.zeros(n_g, dtype=np.int64)
    n_r = net.n_reactions
    for i in range(start, stop):
        pair_seed = mix64(seed, i)
        cfg = SimConfig(
            t_end=t_end, seed=pair_seed, max_events=max_events, state_cap=state_cap
        )

        def streams():
            return [random.Random(mix64(pair_seed, _CHANNEL_TAG, r)) for r in range(n_r)]

        leg_x = _rtc_core(net, x0, cfg, streams())
        leg_y = _rtc_core(pert_net, y0, cfg, streams())
        ok = (grid < leg_x.cap_time) & (grid < leg_y.cap_time)
        diff = (leg_x.sample(grid) - leg_y.sample(grid)).astype(float)
        d2 = (diff**2).sum(axis=1)
        okf = ok.astype(float)
        sq_sum += d2 * okf
        sq_sq += d2**2 * okf
        sp_sq += diff**2 * okf[:, None]
        valid += ok
    return sq_sum, sq_sq, sp_sq, valid


def coupled_rms(
    net: ReactionNetwork,
    x0: Sequence[int],
    y0: Sequence[int],
    pert: PerturbationSpec,
    grid: Sequence[float],
    n: int,
    seed: int,
    workers: int | None = None,
    max_events: int = 10**8,
    state_cap: float = 1e9,
) -> RmsCurve:
    """(E |X_t - Y_t|^2)^(1/2) over n coupled pairs, with standard errors."""
    if n < 2:
        raise ValueError("ensemble needs n >= 2")
    grid = np.asarray(grid, dtype=float)
    pert_net = pert.apply(net)
    args = [
        (net, pert_net, x0, y0, grid, seed, start, min(start + _CHUNK, n), max_events, state_cap)
        for start in range(0, n, _CHUNK)
    ]
    parts = _run_chunks(_rms_chunk, args, worker_count(workers))
    sq_sum = sum(p[0] for p in parts)
    sq_sq = sum(p[1] for p in parts)
    sp_sq = sum(p[2] for p in parts)
    valid = sum(p[3] for p in parts)

    nv = np.maximum(valid, 1).astype(float)
    mean_sq = sq_sum / nv
    var_sq = np.maximum(sq_sq / nv - mean_sq**2, 0.0)
    bessel = np.where(valid > 1, nv / (nv - 1), 1.0)
    se_mean_sq = np.sqrt(var_sq * bessel) / np.sqrt(nv)
    rms = np.sqrt(mean_sq)
    stderr = np.where(rms > 0, se_mean_sq / np.maximum(2 * rms, 1e-300), 0.0)
    return RmsCurve(
        times=grid,
        rms=rms,
        stderr=stderr,
        mean_sq=mean_sq,
        species_rms=np.sqrt(sp_sq / nv[:, None]),
        n=n,
        n_valid=valid,
    )


# ---------------------------------------------------------------------------
# lockstep batch sampler


_BATCH_TAG = 0xBA7C4


def _prop_matrix_into(rows, x: np.ndarray, w: np.ndarray) -> None:
    """Write propensities into the preallocated (R, n) buffer w."""
    for r, (code, k, i, j, extra) in enumerate(rows):
        if code == 0:
            w[r].fill(k)
        elif code == 1:
            np.multiply(x[:, i], k, out=w[r])
        elif code == 2:
            np.multiply(x[:, i], x[:, j], out=w[r])
            w[r] *= k
        elif code == 3:
            np.subtract(x[:, i], 1.0, out=w[r])
            w[r] *= x[:, i]
            w[r] *= k
        else:
            w[r].fill(k)
            for s, m in extra:
                for step in range(m):
                    w[r] *= x[:, s] - step


def batch_states(
    net: ReactionNetwork,
    x0: Sequence[int],
    grid: Sequence[float],
    n: int,
    seed: int,
    state_cap: float = 1e9,
    max_events_per_traj: int = 10**8,
) -> tuple[np.ndarray, np.ndarray]:
    """Direct-method sampling of n trajectories in numpy lockstep.

    Returns ``(states, cap_time)`` with ``states[g, i]`` the state of
    trajectory i at ``grid[g]`` and ``cap_time[i]`` the time trajectory i
    hit a cap (inf if it never did; states past the cap are frozen and
    should be masked by the caller).  Memory is O(len(grid) * n * D).

    Exact per trajectory; the draw order (one exponential and one
    uniform per trajectory per step, full width) is fixed by ``seed``
    and ``n``, independent of anything else.
    """
    grid = np.asarray(grid, dtype=float)
    if (np.diff(grid) <= 0).any():
        raise ValueError("grid must be strictly increasing")
    x_init = np.asarray(x0, dtype=float)
    dim = net.n_species
    n_g = len(grid)
    n_r = net.n_reactions
    t_end = float(grid[-1])
    rng = np.random.Generator(np.random.PCG64(mix64(seed, _BATCH_TAG)))
    rows, _ = _compile(net)

    x = np.tile(x_init, (n, 1))
    t = np.zeros(n)
    gidx = np.zeros(n, dtype=np.int64)
    active = np.ones(n, dtype=bool)
    events = np.zeros(n, dtype=np.int64)
    cap_time = np.full(n, np.inf)
    out = np.empty((n_g, n, dim))
    nu_rows = net.stoichiometry.T.astype(float)  # (R, D)
    traj_idx = np.arange(n)
    w = np.empty((n_r, n))
    cum = np.empty((n_r, n))

    while active.any():
        _prop_matrix_into(rows, x, w)
        total = w.sum(axis=0)
        if not np.isfinite(total[active]).all():
            raise SimulationError("propensity overflow in batch run")
        e = rng.exponential(size=n)
        u = rng.random(n)
        with np.errstate(divide="ignore", invalid="ignore"):
            dt = np.where(total > 0, e / total, np.inf)
        t_new = np.where(active, t + dt, -np.inf)

        # flush grid points strictly before the pending event time (an event
        # landing exactly on a grid point is recorded post-event next pass,
        # matching the right-continuous path convention)
        while True:
            rec = active & (gidx < n_g)
            rec &= grid[np.minimum(gidx, n_g - 1)] < t_new
            if not rec.any():
                break
            out[gidx[rec], traj_idx[rec]] = x[rec]
            gidx[rec] += 1

        # fully recorded trajectories are done; that covers both idle runs
        # (t_new = inf flushes every remaining point) and runs past t_end
        active &= gidx < n_g
        fire = active & (t_new <= t_end)
        if not fire.any():
            continue

        np.cumsum(w, axis=0, out=cum)
        target = u * total
        sel = np.minimum((cum <= target[None, :]).sum(axis=0), n_r - 1)
        x[fire] -= nu_rows[sel[fire]]
        t[fire] = t_new[fire]
        events[fire] += 1

        capped = fire & (
            (x.sum(axis=1) > state_cap) | (events >= max_events_per_traj)
        )
        if capped.any():
            cap_time[capped] = t[capped]
            # freeze and flush the remaining grid with the last state
            while True:
                rec = capped & (gidx < n_g)
                if not rec.any():
                    break
                out[gidx[rec], traj_idx[rec]] = x[rec]
                gidx[rec] += 1
            active[capped] = False
    return out, cap_time


# ---------------------------------------------------------------------------
# deterministic rate equations


@dataclass(frozen=True)
class OdeSolution:
    times: np.ndarray
    states: np.ndarray  # (G, D)

    def to_csv(self, species: Sequence[str]) -> str:
        lines = ["time," + ",".join(species)]
        for t, row in zip(self.times, self.states):
            lines.append(repr(float(t)) + "," + ",".join(repr(float(v)) for v in row))
        return "\n".join(lines) + "\n"


def integrate_rre(
    net: ReactionNetwork,
    x0: Sequence[float],
    grid: Sequence[float],
    tol: float = 1e-8,
) -> OdeSolution:
    """Adaptive embedded Runge-Kutta 4(5) solution of x' = -N w(x).

    Raises:
        SimulationError: when the step size underflows (stiff failure).
    """
    grid = np.asarray(grid, dtype=float)
    x_init = np.asarray(x0, dtype=float)
    if (x_init < 0).any():
        raise ValueError("initial state must be non-negative")
    nmat = net.stoichiometry.astype(float)

    def rhs(_t, x):
        return -(nmat @ propensity_eval(net, x))

    res = scipy.integrate.solve_ivp(
        rhs,
        (float(grid[0]), float(grid[-1])),
        x_init,
        method="RK45",
        t_eval=grid,
        rtol=tol,
        atol=tol,
    )
    if not res.success:
        raise SimulationError(f"rate-equation integration failed: {res.message}")
    return OdeSolution(times=res.t, states=res.y.T)
