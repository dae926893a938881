"""In-memory representation of mass-action reaction networks.

A network is a list of species, a list of reactions and a map of named
rate constants.  Each reaction carries a stoichiometric column ``nu``
with the sign convention that firing the reaction moves the state from
``x`` to ``x - nu`` (so a pure birth has a negative entry).  Propensities
are mass-action falling-factorial products, with dedicated kinds for the
elementary orders (constant, linear, bilinear, dimerization) and a
general kind for order-3 terms, which are representable for simulation
but rejected by the stability analysis.

All objects in this module are immutable and safe to share between
threads; every operation is a pure function of its inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "Constant",
    "Linear",
    "Bilinear",
    "Dimer",
    "MassAction",
    "Propensity",
    "Reaction",
    "ReactionNetwork",
    "Diagnostic",
    "validate_network",
    "propensity_eval",
    "drift_eval",
    "apply_reaction",
]

MAX_ORDER = 3


@dataclass(frozen=True)
class Constant:
    """Zeroth-order propensity ``w(x) = c`` (units 1/time)."""

    rate: float

    order = 0

    def reactant_counts(self, n_species: int) -> tuple[int, ...]:
        return (0,) * n_species

    def __call__(self, x: Sequence[float]) -> float:
        return self.rate


@dataclass(frozen=True)
class Linear:
    """First-order propensity ``w(x) = k * x[n]``."""

    rate: float
    species: int

    order = 1

    def reactant_counts(self, n_species: int) -> tuple[int, ...]:
        counts = [0] * n_species
        counts[self.species] = 1
        return tuple(counts)

    def __call__(self, x: Sequence[float]) -> float:
        return self.rate * x[self.species]


@dataclass(frozen=True)
class Bilinear:
    """Second-order propensity ``w(x) = k * x[m] * x[n]`` with ``m != n``."""

    rate: float
    species_a: int
    species_b: int

    order = 2

    def __post_init__(self):
        if self.species_a == self.species_b:
            raise ValueError("bilinear propensity requires two distinct species")

    def reactant_counts(self, n_species: int) -> tuple[int, ...]:
        counts = [0] * n_species
        counts[self.species_a] = 1
        counts[self.species_b] = 1
        return tuple(counts)

    def __call__(self, x: Sequence[float]) -> float:
        return self.rate * x[self.species_a] * x[self.species_b]


@dataclass(frozen=True)
class Dimer:
    """Dimerization propensity ``w(x) = k * x[n] * (x[n] - 1)``."""

    rate: float
    species: int

    order = 2

    def reactant_counts(self, n_species: int) -> tuple[int, ...]:
        counts = [0] * n_species
        counts[self.species] = 2
        return tuple(counts)

    def __call__(self, x: Sequence[float]) -> float:
        xn = x[self.species]
        return self.rate * xn * (xn - 1)


@dataclass(frozen=True)
class MassAction:
    """General mass-action propensity over a reactant multiset.

    ``w(x) = k * prod_s x_s (x_s - 1) ... (x_s - nu_s + 1)`` where
    ``reactants`` maps species index -> multiplicity.  Total order is
    capped at 3; order-3 kinds are admitted for simulation only.
    """

    rate: float
    reactants: tuple[tuple[int, int], ...]  # sorted (species, multiplicity)

    def __post_init__(self):
        object.__setattr__(self, "reactants", tuple(sorted(self.reactants)))
        if any(m <= 0 for _, m in self.reactants):
            raise ValueError("reactant multiplicities must be positive")
        if self.order > MAX_ORDER:
            raise ValueError(f"mass-action order {self.order} exceeds {MAX_ORDER}")

    @property
    def order(self) -> int:
        return sum(m for _, m in self.reactants)

    def reactant_counts(self, n_species: int) -> tuple[int, ...]:
        counts = [0] * n_species
        for s, m in self.reactants:
            counts[s] = m
        return tuple(counts)

    def __call__(self, x: Sequence[float]) -> float:
        w = self.rate
        for s, m in self.reactants:
            xs = x[s]
            for j in range(m):
                w *= xs - j
        return w


Propensity = Constant | Linear | Bilinear | Dimer | MassAction


def canonical_kind(prop: Propensity) -> Propensity:
    """Map a MassAction of order <= 2 onto the equivalent specific kind."""
    if not isinstance(prop, MassAction):
        return prop
    r = prop.reactants
    if len(r) == 0:
        return Constant(prop.rate)
    if len(r) == 1 and r[0][1] == 1:
        return Linear(prop.rate, r[0][0])
    if len(r) == 1 and r[0][1] == 2:
        return Dimer(prop.rate, r[0][0])
    if len(r) == 2 and r[0][1] == 1 and r[1][1] == 1:
        return Bilinear(prop.rate, r[0][0], r[1][0])
    return prop


@dataclass(frozen=True)
class Reaction:
    """A reaction channel: firing moves the state from x to x - nu.

    ``rate_name`` records the named constant the rate was bound to (if
    any), which is what relative coefficient perturbations address.
    """

    label: str
    nu: tuple[int, ...]
    propensity: Propensity
    rate_name: str | None = None

    @property
    def rate(self) -> float:
        return self.propensity.rate

    def with_rate(self, rate: float) -> "Reaction":
        prop = self.propensity
        if isinstance(prop, MassAction):
            new = MassAction(rate, prop.reactants)
        elif isinstance(prop, Bilinear):
            new = Bilinear(rate, prop.species_a, prop.species_b)
        elif isinstance(prop, (Linear, Dimer)):
            new = type(prop)(rate, prop.species)
        else:
            new = Constant(rate)
        return Reaction(self.label, self.nu, new, self.rate_name)


@dataclass(frozen=True)
class ReactionNetwork:
    """An immutable mass-action reaction network.

    Attributes:
        species: ordered species names (D entries, unique).
        reactions: ordered reaction list (R entries).
        parameters: named rate constants (values already include any
            volume scaling; the system size is fixed at 1).
    """

    species: tuple[str, ...]
    reactions: tuple[Reaction, ...]
    parameters: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "species", tuple(self.species))
        object.__setattr__(self, "reactions", tuple(self.reactions))
        if len(set(self.species)) != len(self.species):
            raise ValueError("species names must be unique")
        d = self.n_species
        for rxn in self.reactions:
            if len(rxn.nu) != d:
                raise ValueError(f"reaction {rxn.label}: stoichiometry has wrong dimension")
            for s, _ in _reactant_items(rxn.propensity):
                if not 0 <= s < d:
                    raise ValueError(f"reaction {rxn.label}: invalid species index {s}")

    def __eq__(self, other) -> bool:
        if not isinstance(other, ReactionNetwork):
            return NotImplemented
        return (
            self.species == other.species
            and self.reactions == other.reactions
            and self.parameters == other.parameters
        )

    @property
    def n_species(self) -> int:
        return len(self.species)

    @property
    def n_reactions(self) -> int:
        return len(self.reactions)

    @property
    def stoichiometry(self) -> np.ndarray:
        """Stoichiometric matrix N (D x R); column r is reactions[r].nu."""
        d, r = self.n_species, self.n_reactions
        mat = np.zeros((d, r), dtype=np.int64)
        for j, rxn in enumerate(self.reactions):
            mat[:, j] = rxn.nu
        return mat

    def species_index(self, name: str) -> int:
        try:
            return self.species.index(name)
        except ValueError:
            raise KeyError(f"unknown species {name!r}") from None

    def reactions_for_parameter(self, name: str) -> list[int]:
        return [j for j, rxn in enumerate(self.reactions) if rxn.rate_name == name]

    def with_scaled_rates(self, factors: dict[int, float]) -> "ReactionNetwork":
        """Return a copy with reaction ``j``'s rate multiplied by ``factors[j]``."""
        reactions = []
        for j, rxn in enumerate(self.reactions):
            if j in factors:
                rxn = rxn.with_rate(rxn.rate * factors[j])
            reactions.append(rxn)
        params = dict(self.parameters)
        for j, f in factors.items():
            name = self.reactions[j].rate_name
            if name is not None and name in params:
                params[name] = self.parameters[name] * f
        return ReactionNetwork(self.species, tuple(reactions), params)


def _reactant_items(prop: Propensity) -> Iterable[tuple[int, int]]:
    """(species, multiplicity) pairs of the reactant multiset."""
    if isinstance(prop, Constant):
        return ()
    if isinstance(prop, Linear):
        return ((prop.species, 1),)
    if isinstance(prop, Bilinear):
        return ((prop.species_a, 1), (prop.species_b, 1))
    if isinstance(prop, Dimer):
        return ((prop.species, 2),)
    return prop.reactants


@dataclass(frozen=True)
class Diagnostic:
    """A validation finding; the empty list means the network is valid."""

    message: str
    reaction: str | None = None
    line: int | None = None
    column: int | None = None

    def __str__(self) -> str:
        loc = ""
        if self.line is not None:
            loc = f"line {self.line}"
            if self.column is not None:
                loc += f", col {self.column}"
            loc += ": "
        rxn = f" [reaction {self.reaction}]" if self.reaction else ""
        return f"{loc}{self.message}{rxn}"


def validate_network(net: ReactionNetwork) -> list[Diagnostic]:
    """Check lattice conservation and rate sanity; returns diagnostics.

    A reaction conserves the non-negative lattice iff every species it
    consumes (positive stoichiometric entry) appears in its reactant
    multiset with at least that multiplicity: the propensity then
    vanishes before the state could go negative.
    """
    issues: list[Diagnostic] = []
    for rxn in net.reactions:
        k = rxn.propensity.rate
        if not math.isfinite(k):
            issues.append(Diagnostic("rate constant is not finite", rxn.label))
        elif k < 0:
            issues.append(Diagnostic(f"rate constant is negative ({k})", rxn.label))
        required = dict(_reactant_items(rxn.propensity))
        for s, change in enumerate(rxn.nu):
            if change > 0 and required.get(s, 0) < change:
                issues.append(
                    Diagnostic(
                        f"consumes {change} of {net.species[s]} but the propensity "
                        f"only vanishes below {required.get(s, 0)} copies; "
                        "a firing could leave the non-negative lattice",
                        rxn.label,
                    )
                )
    return issues


def propensity_eval(net: ReactionNetwork, x: Sequence[float]) -> np.ndarray:
    """Evaluate the propensity vector w(x) (length R) at a state.

    Falling factorials are formed as integer/float products directly,
    which is exact for integer states.
    """
    if len(x) != net.n_species:
        raise ValueError(f"state has dimension {len(x)}, expected {net.n_species}")
    return np.array([rxn.propensity(x) for rxn in net.reactions], dtype=float)


def drift_eval(net: ReactionNetwork, x: Sequence[float]) -> np.ndarray:
    """Drift F(x) = -N w(x) of the associated rate equations."""
    w = propensity_eval(net, x)
    if net.n_reactions == 0:
        return np.zeros(net.n_species)
    return -(net.stoichiometry @ w)


def apply_reaction(x: Sequence[int], net: ReactionNetwork, r: int) -> np.ndarray:
    """Apply reaction r to state x, returning x - nu_r.

    Raises ValueError if the result leaves the non-negative lattice,
    which indicates a validation gap in the network.
    """
    xv = np.asarray(x, dtype=np.int64)
    nu = np.array(net.reactions[r].nu, dtype=np.int64)
    out = xv - nu
    if (out < 0).any():
        raise ValueError(
            f"reaction {net.reactions[r].label} fired at {list(xv)} leaves "
            "the non-negative lattice (validation gap)"
        )
    return out
