"""Closed-form stability constants for mass-action networks.

For a network with drift ``F(x) = -N w(x)`` this module computes, from
stoichiometry alone, the constants of the four working inequalities that
the moment and perturbation bounds consume:

* drift pair ``(A, alpha)``:        (l, F(x)) <= A + alpha * |x|_l
* Lipschitz pair ``(L, lambda)``:   |w(x)-w(y)|_1 <= (L + lambda |x+y|_1) |x-y|
* growth pair ``(Gamma, gamma)``:   |w(x)|_1 <= Gamma + gamma |x|_1^2
* one-sided pair ``(M, mu)``:       (x-y, F(x)-F(y)) <= (M + mu |x+y|_1) |x-y|^2

The one-sided constants come from per-reaction rank-1 logarithmic-norm
formulas (exact for single reactions) together with a combined
logarithmic norm of the full linear part, whichever is smaller.  All
constants require propensities of at most quadratic growth; order-3
kinds are rejected.

The weight vector ``l`` generalizes the all-ones "outward" direction:
any strictly positive ``l`` with ``l . nu_r >= 0`` on every superlinear
column makes the quadratic terms non-expansive in the weighted norm.
With the normalization ``min(l) = 1`` the weighted norm dominates the
plain 1-norm, so constants stated against ``|.|_1`` stay valid.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
import scipy.optimize

from .model import (
    Bilinear,
    Constant,
    Dimer,
    Linear,
    MassAction,
    Reaction,
    ReactionNetwork,
    canonical_kind,
    drift_eval,
    propensity_eval,
    validate_network,
)

__all__ = [
    "AnalyzerError",
    "CubicUnsupported",
    "QuadraticObstruction",
    "WeightVectorNotFound",
    "InvalidNetworkError",
    "log_norm",
    "log_norm_rank1",
    "find_weight_vector",
    "drift_constants",
    "one_sided_constants",
    "lipschitz_constants",
    "growth_constants",
    "ray_diagnostic",
    "analyze",
    "ReactionContribution",
    "StabilityReport",
]


class AnalyzerError(Exception):
    """Base class for stability-analysis failures."""


class CubicUnsupported(AnalyzerError):
    """An order-3 propensity was found.

    The analysis requires at-most-quadratic propensity growth (the
    growth pair ``|w(x)|_1 <= Gamma + gamma |x|_1^2``); cubic kinds are
    admitted for simulation only, where second moments can blow up in
    finite time.
    """

    def __init__(self, reaction: str):
        self.reaction = reaction
        super().__init__(
            f"reaction {reaction} has an order-3 propensity; the stability "
            "analysis requires at most quadratic growth of the propensities "
            "(finite growth pair (Gamma, gamma)); order-3 kinds are "
            "simulation-only"
        )


class QuadraticObstruction(AnalyzerError):
    """A quadratic reaction increases the weighted population norm."""

    def __init__(self, reaction: str, d: float):
        self.reaction = reaction
        super().__init__(
            f"quadratic reaction {reaction} increases the weighted norm "
            f"(l . nu = {-d:g} < 0), so its quadratic term cannot be "
            "discarded; try find_weight_vector for a better weight"
        )


class WeightVectorNotFound(AnalyzerError):
    """No strictly positive weight vector tames the superlinear columns."""

    def __init__(self, obstructions: list[str]):
        self.obstructions = obstructions
        names = ", ".join(obstructions) if obstructions else "(none identified)"
        super().__init__(
            "no strictly positive weight vector l satisfies l . nu_r >= 0 on "
            f"every superlinear column; obstructing reactions: {names}"
        )


class InvalidNetworkError(AnalyzerError):
    def __init__(self, diagnostics):
        self.diagnostics = diagnostics
        msgs = "; ".join(str(d) for d in diagnostics)
        super().__init__(f"network fails validation: {msgs}")


def log_norm(mtx: np.ndarray) -> float:
    """Euclidean logarithmic norm: top eigenvalue of the symmetric part.

    This is the smallest constant ``M`` with ``(v, B v) <= M |v|^2``.
    """
    mtx = np.asarray(mtx, dtype=float)
    if mtx.size == 0:
        return 0.0
    if not np.isfinite(mtx).all():
        raise ValueError("matrix entries must be finite")
    sym = (mtx + mtx.T) / 2.0
    return float(np.linalg.eigvalsh(sym)[-1])


def log_norm_rank1(a: Sequence[float], b: Sequence[float]) -> float:
    """Logarithmic norm of the rank-1 matrix ``a b^T`` in closed form.

    The symmetric part of ``a b^T`` has extreme eigenvalues
    ``((a, b) +- |a||b|) / 2`` plus zeros; the top one is the
    logarithmic norm.  In dimension one there is no zero eigenvalue and
    the value is just ``a b``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size == 1:
        return float(a[0] * b[0])
    return float((a @ b + np.linalg.norm(a) * np.linalg.norm(b)) / 2.0)


# ---------------------------------------------------------------------------
# reaction classification


@dataclass(frozen=True)
class _Classified:
    constants: list  # (reaction, c)
    linears: list  # (reaction, k, species)
    bilinears: list  # (reaction, k, m, n)
    dimers: list  # (reaction, k, species)


def _classify(net: ReactionNetwork, caller: str = "analysis") -> _Classified:
    out = _Classified([], [], [], [])
    for rxn in net.reactions:
        prop = canonical_kind(rxn.propensity)
        if isinstance(prop, Constant):
            out.constants.append((rxn, prop.rate))
        elif isinstance(prop, Linear):
            out.linears.append((rxn, prop.rate, prop.species))
        elif isinstance(prop, Bilinear):
            out.bilinears.append((rxn, prop.rate, prop.species_a, prop.species_b))
        elif isinstance(prop, Dimer):
            out.dimers.append((rxn, prop.rate, prop.species))
        else:
            assert isinstance(prop, MassAction)
            raise CubicUnsupported(rxn.label)
    return out


def _superlinear_columns(net: ReactionNetwork) -> list[tuple[int, Reaction]]:
    cols = []
    for j, rxn in enumerate(net.reactions):
        prop = canonical_kind(rxn.propensity)
        order = getattr(prop, "order", None)
        if order is None:
            order = prop.order
        if order >= 2:
            cols.append((j, rxn))
    return cols


# ---------------------------------------------------------------------------
# weight vector


def _exact_nullspace(rows: list[tuple[int, ...]], dim: int) -> list[list[Fraction]]:
    """Basis of {l : rows . l = 0} by Gaussian elimination over Fractions."""
    mat = [[Fraction(v) for v in row] for row in rows]
    pivots: list[int] = []
    r = 0
    for c in range(dim):
        pivot = next((i for i in range(r, len(mat)) if mat[i][c] != 0), None)
        if pivot is None:
            continue
        mat[r], mat[pivot] = mat[pivot], mat[r]
        pv = mat[r][c]
        mat[r] = [v / pv for v in mat[r]]
        for i in range(len(mat)):
            if i != r and mat[i][c] != 0:
                f = mat[i][c]
                mat[i] = [a - f * b for a, b in zip(mat[i], mat[r])]
        pivots.append(c)
        r += 1
        if r == len(mat):
            break
    basis = []
    free = [c for c in range(dim) if c not in pivots]
    for fc in free:
        vec = [Fraction(0)] * dim
        vec[fc] = Fraction(1)
        for i, pc in enumerate(pivots):
            vec[pc] = -mat[i][fc]
        basis.append(vec)
    return basis


def _min_norm_positive(n2t: np.ndarray, equality: bool) -> np.ndarray | None:
    """Smallest-norm l with l >= 1 and N2^T l = 0 (or >= 0); None if infeasible."""
    dim = n2t.shape[1]
    if equality:
        cons = [{"type": "eq", "fun": lambda l: n2t @ l, "jac": lambda l: n2t}]
    else:
        cons = [{"type": "ineq", "fun": lambda l: n2t @ l, "jac": lambda l: n2t}]
    res = scipy.optimize.minimize(
        lambda l: l @ l,
        x0=np.ones(dim),
        jac=lambda l: 2 * l,
        bounds=[(1.0, None)] * dim,
        constraints=cons,
        method="SLSQP",
        options={"maxiter": 200, "ftol": 1e-14},
    )
    if not res.success:
        return None
    l = np.asarray(res.x, dtype=float)
    viol = n2t @ l
    tol = 1e-8 * max(1.0, float(np.abs(n2t).max()) * float(l.max()))
    ok = np.abs(viol).max() <= tol if equality else viol.min() >= -tol
    if not ok or l.min() < 1.0 - 1e-9:
        return None
    return l


def _snap_rational(l: np.ndarray, n2_cols: list[tuple[int, ...]], equality: bool):
    """Try to replace a float weight vector by nearby exact rationals."""
    snapped = [Fraction(v).limit_denominator(10**6) for v in l]
    lo = min(snapped)
    if lo <= 0:
        return None
    snapped = [v / lo for v in snapped]
    for col in n2_cols:
        s = sum(c * v for c, v in zip(col, snapped))
        if (equality and s != 0) or (not equality and s < 0):
            return None
    return np.array([float(v) for v in snapped])


def find_weight_vector(net: ReactionNetwork) -> np.ndarray:
    """Strictly positive weight vector taming all superlinear columns.

    Prefers an exact annihilator (``l . nu_r = 0`` for every superlinear
    reaction r, found in the rational null space of the superlinear
    stoichiometry); otherwise falls back to the inequality form
    ``l . nu_r >= 0``.  The result is normalized to ``min(l) = 1``.

    Raises:
        WeightVectorNotFound: if no strictly positive l exists; the
            exception lists the obstructing reaction columns.
    """
    dim = net.n_species
    sup = _superlinear_columns(net)
    if not sup:
        return np.ones(dim)
    cols = [rxn.nu for _, rxn in sup]
    n2t = np.array(cols, dtype=float)  # rows are the superlinear columns of N

    # exact annihilation first: strictly positive element of the null space
    if _exact_nullspace(cols, dim):
        l = _min_norm_positive(n2t, equality=True)
        if l is not None:
            exact = _snap_rational(l, cols, equality=True)
            if exact is not None:
                return exact
            return l / l.min()

    # inequality fallback: minimize sum(l) with l >= 1, N2^T l >= 0
    res = scipy.optimize.linprog(
        c=np.ones(dim),
        A_ub=-n2t,
        b_ub=np.zeros(len(cols)),
        bounds=[(1.0, None)] * dim,
        method="highs",
    )
    if res.status == 0:
        l = np.asarray(res.x, dtype=float)
        exact = _snap_rational(l, cols, equality=False)
        if exact is not None:
            return exact
        return l / l.min()

    obstructions = [
        rxn.label
        for _, rxn in sup
        if min(rxn.nu) < 0 and max(rxn.nu) <= 0 or any(v < 0 for v in rxn.nu)
    ]
    raise WeightVectorNotFound(obstructions)


# ---------------------------------------------------------------------------
# constant pairs


def drift_constants(
    net: ReactionNetwork, l: Sequence[float] | None = None
) -> tuple[float, float]:
    """Drift pair (A, alpha) with (l, F(x)) <= A + alpha * (l, x).

    With ``d_r = -l . nu_r``: constant reactions feed A; linear reactions
    on species n feed the per-species coefficient ``c_n`` with ``d_r k``;
    a dimerization with ``d_r <= 0`` contributes its linear correction
    ``|d_r| k``; quadratic terms with ``d_r <= 0`` are non-positive and
    drop.  ``alpha`` is the largest ``c_n / l_n``.

    Raises:
        CubicUnsupported: for order-3 propensities.
        QuadraticObstruction: if a quadratic reaction has ``d_r > 0``.
    """
    cls = _classify(net)
    dim = net.n_species
    lv = np.ones(dim) if l is None else np.asarray(l, dtype=float)
    if lv.shape != (dim,):
        raise ValueError("weight vector has wrong dimension")
    if dim and lv.min() <= 0:
        raise ValueError("weight vector must be strictly positive")

    def d_of(rxn: Reaction) -> float:
        return -float(lv @ np.array(rxn.nu, dtype=float))

    for rxn, k, *_ in cls.bilinears + cls.dimers:
        d = d_of(rxn)
        if d > 1e-12:
            raise QuadraticObstruction(rxn.label, d)

    a_const = sum(d_of(rxn) * c for rxn, c in cls.constants)
    coeff = np.zeros(dim)
    for rxn, k, n in cls.linears:
        coeff[n] += d_of(rxn) * k
    for rxn, k, n in cls.dimers:
        coeff[n] += abs(d_of(rxn)) * k
    alpha = float((coeff / lv).max()) if dim else 0.0
    return max(0.0, float(a_const)), alpha


@dataclass(frozen=True)
class ReactionContribution:
    """Per-reaction summands of the constant pairs (at the reaction's rate)."""

    label: str
    kind: str
    M: float = 0.0
    mu: float = 0.0
    L: float = 0.0
    lam: float = 0.0
    Gamma: float = 0.0
    gamma: float = 0.0


def _one_sided_details(net: ReactionNetwork):
    cls = _classify(net)
    dim = net.n_species
    rows: dict[str, ReactionContribution] = {}
    special_sum = 0.0
    mu = 0.0
    lin_part = np.zeros((dim, dim))

    for rxn, c in cls.constants:
        rows[rxn.label] = ReactionContribution(rxn.label, "constant")
    for rxn, k, n in cls.linears:
        nu = np.array(rxn.nu, dtype=float)
        m_r = float(k * (-nu[n] + np.linalg.norm(nu)) / 2.0)
        special_sum += m_r
        lin_part -= np.outer(nu, k * _unit(dim, n))
        rows[rxn.label] = ReactionContribution(rxn.label, "linear", M=m_r)
    for rxn, k, m, n in cls.bilinears:
        nu = np.array(rxn.nu, dtype=float)
        mu_r = float(k * max(-nu[j] + np.linalg.norm(nu) for j in (m, n)) / 4.0)
        mu += mu_r
        rows[rxn.label] = ReactionContribution(rxn.label, "bilinear", mu=mu_r)
    for rxn, k, n in cls.dimers:
        nu = np.array(rxn.nu, dtype=float)
        norm = float(np.linalg.norm(nu))
        mu_r = k * (-nu[n] + norm) / 2.0
        m_r = k * (nu[n] + norm) / 2.0
        mu += mu_r
        special_sum += m_r
        # the dimer's linear correction -k x_n joins the combined linear part
        lin_part -= np.outer(nu, -k * _unit(dim, n))
        rows[rxn.label] = ReactionContribution(rxn.label, "dimer", M=m_r, mu=mu_r)

    combined = log_norm(lin_part) if dim else 0.0
    special_sum, combined, mu = float(special_sum), float(combined), float(mu)
    return min(special_sum, combined), mu, special_sum, combined, rows


def _unit(dim: int, n: int) -> np.ndarray:
    e = np.zeros(dim)
    e[n] = 1.0
    return e


def one_sided_constants(net: ReactionNetwork) -> tuple[float, float]:
    """One-sided pair (M, mu) for (x-y, F(x)-F(y)) <= (M + mu|x+y|_1)|x-y|^2.

    M is the smaller of the per-reaction rank-1 sums and the combined
    logarithmic norm of the full linear part (including dimer linear
    corrections); mu sums the per-reaction quadratic contributions.
    """
    m, mu, _, _, _ = _one_sided_details(net)
    return m, mu


def lipschitz_constants(net: ReactionNetwork) -> tuple[float, float]:
    """Lipschitz pair (L, lambda): |w(x)-w(y)|_1 <= (L + lambda|x+y|_1)|x-y|.

    Quadratic propensities ``x^T S x`` obey |w(x)-w(y)| = |(x+y)^T S (x-y)|
    <= |S| |x+y|_1 |x-y|, with |S| = k/2 for a bilinear term and k for a
    squared one; the dimer's linear correction joins L.
    """
    cls = _classify(net)
    big_l = sum(k for _, k, _ in cls.linears) + sum(k for _, k, _ in cls.dimers)
    lam = sum(k / 2.0 for _, k, _, _ in cls.bilinears) + sum(k for _, k, _ in cls.dimers)
    return float(big_l), float(lam)


def growth_constants(net: ReactionNetwork) -> tuple[float, float]:
    """Growth pair (Gamma, gamma): |w(x)|_1 <= Gamma + gamma |x|_1^2.

    Integer-lattice bounds: x_n <= |x|_1 <= |x|_1^2 away from the origin
    (where linear propensities vanish anyway), x_m x_n <= |x|_1^2 / 4,
    and x_n (x_n - 1) <= |x|_1^2.
    """
    cls = _classify(net)
    big_g = sum(c for _, c in cls.constants)
    gamma = (
        sum(k for _, k, _ in cls.linears)
        + sum(k / 4.0 for _, k, _, _ in cls.bilinears)
        + sum(k for _, k, _ in cls.dimers)
    )
    return float(big_g), float(gamma)


# ---------------------------------------------------------------------------
# diagnostics and aggregation


@dataclass(frozen=True)
class RayTable:
    """Exact growth diagnostics along the ray x = N * direction."""

    direction: tuple[float, ...]
    steps: np.ndarray  # N = 0..N_max
    x_dot_F: np.ndarray  # (x, F(x))
    one_dot_F: np.ndarray  # (1, F(x))
    norm2_sq: np.ndarray  # |x|^2
    norm1: np.ndarray  # |x|_1


def ray_diagnostic(net: ReactionNetwork, direction: Sequence[float], n_max: int) -> RayTable:
    """Evaluate (x, F(x)), (1, F(x)), |x|^2 and |x|_1 along a ray.

    Witnesses super-linear growth of (x, F(x)) along bad directions (or
    its absence), which is what rules out norm-based drift conditions.
    """
    direction = np.asarray(direction, dtype=float)
    if direction.shape != (net.n_species,):
        raise ValueError("direction has wrong dimension")
    if (direction < 0).any():
        raise ValueError("direction must be non-negative")
    steps = np.arange(n_max + 1)
    x_dot, one_dot, n2, n1 = [], [], [], []
    for n in steps:
        x = n * direction
        f = drift_eval(net, x)
        x_dot.append(float(x @ f))
        one_dot.append(float(f.sum()))
        n2.append(float(x @ x))
        n1.append(float(x.sum()))
    return RayTable(
        tuple(direction), steps, np.array(x_dot), np.array(one_dot), np.array(n2), np.array(n1)
    )


@dataclass(frozen=True)
class StabilityReport:
    """All stability constants of a network, plus their ingredients.

    ``norm_1tN`` is ``max_r |l . nu_r|``, ``norm_1tN_sq`` its square taken
    elementwise over columns (these enter the moment bounds), and
    ``norm_1tN2`` is ``max_r sum_i nu_{ir}^2`` (which enters the
    perturbation bounds through L', lambda' and delta').
    """

    A: float
    alpha: float
    L: float
    lam: float
    Gamma: float
    gamma: float
    M: float
    mu: float
    l: tuple[float, ...]
    norm_1tN: float
    norm_1tN_sq: float
    norm_1tN2: float
    M_special_sum: float
    M_combined: float
    per_reaction: tuple[ReactionContribution, ...] = field(default_factory=tuple)

    @property
    def L_prime(self) -> float:
        return self.norm_1tN2 * self.L

    @property
    def lam_prime(self) -> float:
        return self.norm_1tN2 * self.lam

    def to_dict(self) -> dict:
        return {
            "A": self.A,
            "alpha": self.alpha,
            "L": self.L,
            "lambda": self.lam,
            "Gamma": self.Gamma,
            "gamma": self.gamma,
            "M": self.M,
            "mu": self.mu,
            "l": list(self.l),
            "norm_1tN": self.norm_1tN,
            "norm_1tN_sq": self.norm_1tN_sq,
            "norm_1tN2": self.norm_1tN2,
            "M_special_sum": self.M_special_sum,
            "M_combined": self.M_combined,
            "per_reaction": [
                {
                    "label": c.label,
                    "kind": c.kind,
                    "M": c.M,
                    "mu": c.mu,
                    "L": c.L,
                    "lambda": c.lam,
                    "Gamma": c.Gamma,
                    "gamma": c.gamma,
                }
                for c in self.per_reaction
            ],
        }


def analyze(net: ReactionNetwork, weight="auto") -> StabilityReport:
    """Aggregate every stability constant into a report.

    Args:
        net: a validated network with propensity order <= 2.
        weight: "ones", "auto" (ones unless a quadratic column obstructs,
            then :func:`find_weight_vector`), or an explicit positive
            vector.

    Raises:
        InvalidNetworkError, CubicUnsupported, QuadraticObstruction,
        WeightVectorNotFound.
    """
    issues = validate_network(net)
    if issues:
        raise InvalidNetworkError(issues)

    dim = net.n_species
    if isinstance(weight, str):
        if weight == "ones":
            lv = np.ones(dim)
            a, alpha = drift_constants(net, lv)
        elif weight == "auto":
            try:
                lv = np.ones(dim)
                a, alpha = drift_constants(net, lv)
            except QuadraticObstruction:
                lv = find_weight_vector(net)
                a, alpha = drift_constants(net, lv)
        else:
            raise ValueError(f"unknown weight policy {weight!r}")
    else:
        lv = np.asarray(weight, dtype=float)
        a, alpha = drift_constants(net, lv)

    m, mu, m_special, m_combined, rows = _one_sided_details(net)
    big_l, lam = lipschitz_constants(net)
    big_g, gamma = growth_constants(net)

    cls = _classify(net)
    for rxn, c in cls.constants:
        rows[rxn.label] = _merge(rows[rxn.label], Gamma=c)
    for rxn, k, _ in cls.linears:
        rows[rxn.label] = _merge(rows[rxn.label], L=k, gamma=k)
    for rxn, k, *_ in cls.bilinears:
        rows[rxn.label] = _merge(rows[rxn.label], lam=k / 2.0, gamma=k / 4.0)
    for rxn, k, _ in cls.dimers:
        rows[rxn.label] = _merge(rows[rxn.label], L=k, lam=k, gamma=k)

    if net.n_reactions:
        nmat = net.stoichiometry.astype(float)
        colsums = lv @ nmat
        norm_1tn = float(np.abs(colsums).max())
        norm_1tn_sq = float((colsums**2).max())
        norm_1tn2 = float((nmat**2).sum(axis=0).max())
    else:
        norm_1tn = norm_1tn_sq = norm_1tn2 = 0.0

    return StabilityReport(
        A=a,
        alpha=alpha,
        L=big_l,
        lam=lam,
        Gamma=big_g,
        gamma=gamma,
        M=m,
        mu=mu,
        l=tuple(float(v) for v in lv),
        norm_1tN=norm_1tn,
        norm_1tN_sq=norm_1tn_sq,
        norm_1tN2=norm_1tn2,
        M_special_sum=m_special,
        M_combined=m_combined,
        per_reaction=tuple(rows[rxn.label] for rxn in net.reactions),
    )


def _merge(row: ReactionContribution, **updates) -> ReactionContribution:
    vals = {
        "label": row.label,
        "kind": row.kind,
        "M": row.M,
        "mu": row.mu,
        "L": row.L,
        "lam": row.lam,
        "Gamma": row.Gamma,
        "gamma": row.gamma,
    }
    vals.update(updates)
    return ReactionContribution(**vals)
