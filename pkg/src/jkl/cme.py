"""Brute-force oracle: truncated master equation on an enumerated state set.

The truncation is absorbing: any transition that would leave the
enumerated set routes its probability into an explicit defect channel,
so ``retained mass + defect == 1`` holds exactly and oracle moments come
with a rigorous one-sided bracket ``[value, value + defect * max f]``.
This mirrors the stopping-time localization used by the simulator's
state cap.

Integration uses uniformization (exact up to a truncated Poisson tail)
when ``max |diagonal| * horizon <= 1e6``, otherwise an adaptive
Runge-Kutta fallback on the sparse generator.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.integrate
import scipy.sparse

from .model import ReactionNetwork, propensity_eval

__all__ = [
    "CmeError",
    "StateIndex",
    "GeneratorMatrix",
    "CmeSolution",
    "enumerate_states",
    "build_generator",
    "integrate_cme",
    "cme_moments",
    "point_mass",
]

UNIFORMIZATION_LIMIT = 1e6
DEFAULT_MAX_STATES = 2 * 10**6


class CmeError(RuntimeError):
    pass


@dataclass(frozen=True)
class StateIndex:
    """Bijection between truncated lattice states and dense indices."""

    states: np.ndarray  # (n, D) int64
    lookup: dict
    caps: np.ndarray  # per-species caps (int64)

    @property
    def n_states(self) -> int:
        return len(self.states)

    def index_of(self, state: Sequence[int]) -> int:
        key = tuple(int(v) for v in state)
        if key not in self.lookup:
            raise KeyError(f"state {key} is not in the truncated set")
        return self.lookup[key]

    def to_text(self) -> str:
        """Two-column debug dump: index and state tuple."""
        lines = [f"{i}\t{tuple(int(v) for v in s)}" for i, s in enumerate(self.states)]
        return "\n".join(lines) + "\n"


def enumerate_states(
    net: ReactionNetwork,
    x0: Sequence[int],
    caps: int | Sequence[int],
    max_states: int = DEFAULT_MAX_STATES,
) -> StateIndex:
    """Breadth-first reachable set from x0 within per-species caps.

    Exploring only reachable states keeps closed systems on their
    conservation slice automatically.
    """
    dim = net.n_species
    caps_arr = np.full(dim, caps, dtype=np.int64) if np.isscalar(caps) else np.asarray(
        caps, dtype=np.int64
    )
    if caps_arr.shape != (dim,):
        raise ValueError("caps must be a scalar or one per species")
    start = tuple(int(v) for v in x0)
    if len(start) != dim:
        raise ValueError("initial state has wrong dimension")
    if any(v < 0 for v in start) or (np.array(start) > caps_arr).any():
        raise ValueError("initial state must lie within the caps")

    nus = [np.array(rxn.nu, dtype=np.int64) for rxn in net.reactions]
    lookup = {start: 0}
    order = [start]
    queue = deque([start])
    while queue:
        state = queue.popleft()
        w = propensity_eval(net, state)
        for r, nu in enumerate(nus):
            if w[r] <= 0:
                continue
            nxt = tuple(int(v) for v in (np.array(state, dtype=np.int64) - nu))
            if min(nxt) < 0 or (np.array(nxt) > caps_arr).any():
                continue  # leaves the truncation: becomes defect flow
            if nxt not in lookup:
                if len(order) >= max_states:
                    raise CmeError(
                        f"state set exceeds {max_states} states; tighten the caps"
                    )
                lookup[nxt] = len(order)
                order.append(nxt)
                queue.append(nxt)
    return StateIndex(np.array(order, dtype=np.int64), lookup, caps_arr)


@dataclass(frozen=True)
class GeneratorMatrix:
    """Column generator Q (p' = Q p) with an explicit defect row.

    ``q`` is (n+1) x (n+1): entry (i, j) is the rate from state j into
    state i; the last row is the absorbing defect channel collecting
    outflow across the truncation boundary.  Every column sums to zero,
    so total probability (retained + defect) is conserved exactly; the
    column sums over the interior rows alone are <= 0, with equality iff
    no outflow from that state crosses the boundary.
    """

    q: scipy.sparse.csr_matrix
    index: StateIndex
    lam: float  # max total outflow rate, the uniformization constant

    @property
    def n_states(self) -> int:
        return self.index.n_states


def build_generator(net: ReactionNetwork, idx: StateIndex) -> GeneratorMatrix:
    n = idx.n_states
    defect = n
    rows, cols, vals = [], [], []
    lam = 0.0
    caps = idx.caps
    nus = [np.array(rxn.nu, dtype=np.int64) for rxn in net.reactions]
    for j in range(n):
        state = idx.states[j]
        w = propensity_eval(net, state)
        total = float(w.sum())
        if total > 0:
            rows.append(j)
            cols.append(j)
            vals.append(-total)
            lam = max(lam, total)
        for r, nu in enumerate(nus):
            if w[r] <= 0:
                continue
            nxt = state - nu
            if (nxt < 0).any() or (nxt > caps).any():
                target = defect
            else:
                target = idx.lookup.get(tuple(int(v) for v in nxt), defect)
            rows.append(target)
            cols.append(j)
            vals.append(float(w[r]))
    q = scipy.sparse.coo_matrix(
        (vals, (rows, cols)), shape=(n + 1, n + 1)
    ).tocsr()
    return GeneratorMatrix(q=q, index=idx, lam=lam)


@dataclass(frozen=True)
class CmeSolution:
    """Probability vectors on a time grid plus the defect channel."""

    times: np.ndarray
    probs: np.ndarray  # (G, n) retained probabilities
    defect: np.ndarray  # (G,)
    unreliable: bool  # defect exceeded the configured threshold

    def total_mass(self) -> np.ndarray:
        return self.probs.sum(axis=1) + self.defect


def point_mass(idx: StateIndex, state: Sequence[int]) -> np.ndarray:
    p0 = np.zeros(idx.n_states)
    p0[idx.index_of(state)] = 1.0
    return p0


def _uniformization_step(p, p_op, a, tol):
    """exp(a (P - I)) p via the truncated Poisson series, a = lam * dt."""
    result = p * np.exp(-a)
    term = p.copy()
    weight = np.exp(-a)
    acc = weight
    k = 0
    # the tail after k terms is 1 - acc; stop once it is below tol
    while acc < 1.0 - tol:
        k += 1
        term = p_op @ term
        weight *= a / k
        result += weight * term
        acc += weight
        if k > 10 * a + 1000:
            break
    return result


def integrate_cme(
    gen: GeneratorMatrix,
    p0: np.ndarray,
    grid: Sequence[float],
    tol: float = 1e-10,
    defect_threshold: float = 0.05,
) -> CmeSolution:
    """Integrate p' = Q p on the grid.

    ``p0`` is the probability vector on the state index at time zero;
    grid times are absolute (non-negative, increasing).  Uniformization
    is used when ``lam * horizon <= 1e6`` (splitting long intervals so
    the Poisson series stays in range), otherwise the adaptive RK
    fallback.  ``retained + defect = 1`` holds to within ``tol``.

    Raises:
        CmeError: if the fallback integrator fails (stiffness).
    """
    grid = np.asarray(grid, dtype=float)
    n = gen.n_states
    p0 = np.asarray(p0, dtype=float)
    if p0.shape != (n,):
        raise ValueError(f"p0 must have length {n}")
    if abs(p0.sum() - 1.0) > 1e-9 or (p0 < 0).any():
        raise ValueError("p0 must be a probability vector")

    if (grid < 0).any() or (np.diff(grid) <= 0).any():
        raise ValueError("grid times must be non-negative and increasing")
    horizon = float(grid[-1])
    out = np.empty((len(grid), n))
    defect = np.empty(len(grid))
    p = np.concatenate([p0, [0.0]])

    if gen.lam * horizon <= UNIFORMIZATION_LIMIT:
        ident = scipy.sparse.identity(n + 1, format="csr")
        p_op = (ident + gen.q / gen.lam).tocsr() if gen.lam > 0 else ident
        t_prev = 0.0
        for g, t in enumerate(grid):
            dt = float(t) - t_prev
            if dt > 0 and gen.lam > 0:
                # keep each Poisson series within floating-point range
                n_sub = max(1, int(np.ceil(gen.lam * dt / 500.0)))
                a = gen.lam * dt / n_sub
                step_tol = tol / max(1, len(grid)) / n_sub
                for _ in range(n_sub):
                    p = _uniformization_step(p, p_op, a, step_tol)
            t_prev = float(t)
            out[g] = p[:n]
            defect[g] = p[n]
    else:
        q = gen.q

        def rhs(_t, v):
            return q @ v

        res = scipy.integrate.solve_ivp(
            rhs,
            (0.0, float(grid[-1])),
            p,
            method="RK45",
            t_eval=grid,
            rtol=max(tol, 1e-12),
            atol=max(tol, 1e-12),
        )
        if not res.success:
            raise CmeError(f"master-equation integration failed: {res.message}")
        out[:] = res.y[:n].T
        defect[:] = res.y[n]

    return CmeSolution(
        times=grid,
        probs=out,
        defect=defect,
        unreliable=bool(defect.max() > defect_threshold),
    )


@dataclass(frozen=True)
class CmeMoments:
    """Moments of |X|_1 with defect brackets, plus per-species statistics."""

    moments: np.ndarray  # (p_max,) lower values (retained mass only)
    upper: np.ndarray  # (p_max,) value + defect * max f over the index
    species_mean: np.ndarray
    species_var: np.ndarray
    defect: float


def cme_moments(dist: np.ndarray, idx: StateIndex, p_max: int, defect: float = 0.0) -> CmeMoments:
    """Moments Sum_x p(x) f(x) of one distribution on the index.

    The retained-mass sum is a lower value; adding ``defect * max f``
    over the truncated set gives the bracket's upper end.
    """
    dist = np.asarray(dist, dtype=float)
    states = idx.states.astype(float)
    norms = states.sum(axis=1)
    moments = np.array([float(dist @ norms**p) for p in range(1, p_max + 1)])
    upper = moments + defect * np.array(
        [float((norms**p).max()) if len(norms) else 0.0 for p in range(1, p_max + 1)]
    )
    mean = dist @ states
    var = dist @ states**2 - mean**2
    return CmeMoments(
        moments=moments,
        upper=upper,
        species_mean=mean,
        species_var=np.maximum(var, 0.0),
        defect=float(defect),
    )
