"""Concrete model systems with analytic fundamental relations.

A model supplies a fundamental relation S(E, beta, n) over its stable
equilibrium states.  Built in: the classical ideal gas and ideal-gas mixture
in reduced units (k_B = 1; SI mode applies the single multiplicative constant
k_B), a constant-temperature reservoir relation, and the weight used as a
work accumulator.  Temperature, inverse relations and derivatives are derived
from the relation itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import DomainError, NonConvergence, RangeError, RangeExceeded
from .stoichiometry import Composition, _frozen_array

#: Boltzmann constant used in SI units mode (J/K); reduced mode uses 1.
KB_SI = 1.380649e-23

#: Smallest admissible thermal energy above the ground bound (log singularity).
GROUND_EPS = 1e-12

#: Contract tolerance for energy_of: |S(E*) - S| in entropy units.
TOL_INV = 1e-10

#: Relative step used by finite-difference temperature estimates.
H_E_REL = 1e-6


@dataclass(frozen=True)
class Parameters:
    """Geometric parameters of a system.  Built-in models use beta = [volume]."""

    beta: np.ndarray

    def __post_init__(self):
        arr = np.atleast_1d(np.array(self.beta, dtype=float))
        object.__setattr__(self, "beta", _frozen_array(arr))

    def __len__(self) -> int:
        return self.beta.shape[0]

    @property
    def volume(self) -> float:
        """First parameter entry, the region volume for the built-in models."""
        return float(self.beta[0])

    def with_volume(self, volume: float) -> "Parameters":
        beta = np.array(self.beta)
        beta[0] = volume
        return Parameters(beta)


@dataclass(frozen=True)
class SystemState:
    """Energy, parameters and composition of a system at one instant.

    ``correlated`` marks states in which the system is correlated with its
    environment; entropy is undefined for such states, so every measurement
    in the process engine refuses them.
    """

    energy: float
    params: Parameters
    comp: Composition
    correlated: bool = False

    def __post_init__(self):
        object.__setattr__(self, "energy", float(self.energy))


def state(energy: float, volume: float, amounts) -> SystemState:
    """Shorthand constructor for single-volume states."""
    return SystemState(energy, Parameters([volume]), Composition(np.atleast_1d(amounts)))


class MatterModel:
    """Fundamental relation S(E, beta, n) plus optional analytic shortcuts.

    Subclasses must implement ``entropy`` and ``energy_floor``.  The optional
    hooks return None when no closed form is available; callers then fall
    back to finite differences or bracketed root-finding.
    """

    #: human-readable domain description
    domain = "E above ground bound"

    def entropy(self, energy: float, params: Parameters, comp: Composition) -> float:
        raise NotImplementedError

    def energy_floor(self, params: Parameters, comp: Composition) -> float:
        """Lowest admissible energy for the given parameters and composition."""
        raise NotImplementedError

    def energy_ceiling(self, params: Parameters, comp: Composition) -> float:
        """Highest admissible energy; unbounded for normal systems."""
        return math.inf

    def validate(self, energy: float, params: Parameters, comp: Composition) -> None:
        if energy < self.energy_floor(params, comp):
            raise DomainError(
                f"energy {energy:.6g} below ground bound "
                f"{self.energy_floor(params, comp):.6g}"
            )
        if energy > self.energy_ceiling(params, comp):
            raise DomainError(f"energy {energy:.6g} above admissible range")

    # analytic hooks, all optional

    def ds_de(self, energy, params, comp) -> float | None:
        """Analytic dS/dE at fixed (beta, n), or None."""
        return None

    def ds_dn(self, energy, params, comp) -> np.ndarray | None:
        """Analytic dS/dn_k at fixed (E, beta), or None."""
        return None

    def invert_entropy(self, entropy: float, params, comp) -> float | None:
        """Closed-form E with S(E, beta, n) = entropy, or None."""
        return None

    def energy_at_temperature(self, temperature: float, params, comp) -> float | None:
        """Closed-form E with T(E, beta, n) = temperature, or None."""
        return None

    def volume_on_isentrope(self, entropy: float, temperature: float, comp) -> float | None:
        """Closed-form volume where the isentrope at S meets temperature T, or None."""
        return None


@dataclass(frozen=True)
class Species:
    """One ideal-gas constituent: translational/internal degrees of freedom,
    ground (formation) energy per particle, and entropy constant per particle."""

    name: str
    dof: float
    e0: float = 0.0
    s0: float = 0.0

    def __post_init__(self):
        if self.dof < 1:
            raise ValueError("dof must be at least 1")


class IdealGasMixture(MatterModel):
    """Ideal-gas mixture in a single region of volume V.

    S(E, V, n) = kB * sum_k n_k [ (dof_k/2) ln((dof_k/2) kB T / 1) + ln(V/n_k) + s0_k ]
    with T = 2 (E - sum_k n_k e0_k) / (kB sum_k dof_k n_k).  For one species
    with e0 = s0 = 0 and kB = 1 this reduces to
    S(E, V, n) = n [ (dof/2) ln(E/n) + ln(V/n) ].
    """

    domain = "E - sum n_k e0_k >= 1e-12, V > 0, n >= 0 with some n_k > 0"

    def __init__(self, species, kb: float = 1.0):
        self.species = tuple(species)
        if not self.species:
            raise ValueError("mixture needs at least one species")
        self.kb = float(kb)
        self._dof = np.array([s.dof for s in self.species])
        self._e0 = np.array([s.e0 for s in self.species])
        self._s0 = np.array([s.s0 for s in self.species])

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.species)

    def _check_comp(self, comp: Composition) -> np.ndarray:
        n = comp.amounts
        if n.shape[0] != len(self.species):
            raise DomainError(
                f"composition has {n.shape[0]} entries, model has {len(self.species)} species"
            )
        if not np.any(n > 0):
            raise DomainError("composition is empty")
        return n

    def _check_volume(self, params: Parameters) -> float:
        v = params.volume
        if v <= 0:
            raise DomainError(f"volume must be positive, got {v:.6g}")
        return v

    def dof_total(self, comp: Composition) -> float:
        return float(self._dof @ comp.amounts)

    def energy_offset(self, comp: Composition) -> float:
        return float(self._e0 @ comp.amounts)

    def energy_floor(self, params, comp) -> float:
        self._check_comp(comp)
        return self.energy_offset(comp) + GROUND_EPS

    def temperature_closed_form(self, energy: float, comp: Composition) -> float:
        e_th = energy - self.energy_offset(comp)
        return 2.0 * e_th / (self.kb * self.dof_total(comp))

    def entropy(self, energy, params, comp) -> float:
        n = self._check_comp(comp)
        v = self._check_volume(params)
        e_th = energy - float(self._e0 @ n)
        if e_th <= 0.0:
            raise DomainError(
                f"thermal energy {e_th:.6g} at or below the ground bound"
            )
        t = 2.0 * e_th / (self.kb * float(self._dof @ n))
        total = 0.0
        log_t = math.log(t)
        log_v = math.log(v)
        for nk, dof, s0 in zip(n, self._dof, self._s0):
            if nk <= 0.0:
                continue
            half = 0.5 * dof
            total += nk * (
                half * (math.log(half * self.kb) + log_t)
                + log_v - math.log(nk) + s0
            )
        return self.kb * total

    def ds_de(self, energy, params, comp) -> float:
        self._check_comp(comp)
        return 1.0 / self.temperature_closed_form(energy, comp)

    #: stand-in slope for d(n ln n)/dn at n = 0, where the true slope diverges;
    #: large but finite so downstream linear algebra stays well defined
    LN_DIVERGENCE_CAP = 1e30

    def ds_dn(self, energy, params, comp) -> np.ndarray:
        n = self._check_comp(comp)
        v = self._check_volume(params)
        t = self.temperature_closed_form(energy, comp)
        out = np.empty_like(n)
        for k, (nk, dof, e0, s0) in enumerate(zip(n, self._dof, self._e0, self._s0)):
            if nk <= 0.0:
                out[k] = self.LN_DIVERGENCE_CAP
                continue
            half = 0.5 * dof
            out[k] = (
                self.kb * (half * math.log(half * self.kb * t)
                           + math.log(v / nk) + s0 - 1.0 - half)
                - e0 / t
            )
        return out

    def invert_entropy(self, entropy, params, comp) -> float:
        n = self._check_comp(comp)
        v = self._check_volume(params)
        d_tot = float(self._dof @ n)
        const = 0.0
        for nk, dof, s0 in zip(n, self._dof, self._s0):
            if nk <= 0.0:
                continue
            half = 0.5 * dof
            const += nk * (half * math.log(half * self.kb) + math.log(v / nk) + s0)
        log_t = (entropy / self.kb - const) / (0.5 * d_tot)
        t = math.exp(log_t)
        return float(self._e0 @ n) + 0.5 * d_tot * self.kb * t

    def energy_at_temperature(self, temperature, params, comp) -> float:
        n = self._check_comp(comp)
        if temperature <= 0:
            raise DomainError("temperature must be positive")
        return float(self._e0 @ n) + 0.5 * float(self._dof @ n) * self.kb * temperature

    def volume_on_isentrope(self, entropy, temperature, comp) -> float:
        n = self._check_comp(comp)
        if temperature <= 0:
            raise DomainError("temperature must be positive")
        n_tot = float(n.sum())
        const = 0.0
        for nk, dof, s0 in zip(n, self._dof, self._s0):
            if nk <= 0.0:
                continue
            half = 0.5 * dof
            const += nk * (half * math.log(half * self.kb * temperature)
                           - math.log(nk) + s0)
        return math.exp((entropy / self.kb - const) / n_tot)


def ideal_gas_model(dof_per_particle: float, kb: float = 1.0) -> IdealGasMixture:
    """Single-species ideal gas with the given degrees of freedom."""
    if dof_per_particle < 1:
        raise ValueError("dof must be at least 1")
    return IdealGasMixture([Species("gas", dof_per_particle)], kb=kb)


class ReservoirModel(MatterModel):
    """Fundamental relation of a thermal reservoir: S(E) = E / T_R on a finite
    energy range.  Every stable equilibrium state has the same temperature."""

    def __init__(self, temperature: float, e_min: float, e_max: float):
        if temperature <= 0:
            raise ValueError("reservoir temperature must be positive")
        if not e_min < e_max:
            raise ValueError("reservoir range must be a nonempty interval")
        self.temperature = float(temperature)
        self.e_min = float(e_min)
        self.e_max = float(e_max)
        self.domain = f"E in [{e_min:.6g}, {e_max:.6g}]"

    def entropy(self, energy, params, comp) -> float:
        if not self.e_min <= energy <= self.e_max:
            raise DomainError(
                f"reservoir energy {energy:.6g} outside [{self.e_min:.6g}, {self.e_max:.6g}]"
            )
        return energy / self.temperature

    def energy_floor(self, params, comp) -> float:
        return self.e_min

    def energy_ceiling(self, params, comp) -> float:
        return self.e_max

    def ds_de(self, energy, params, comp) -> float:
        return 1.0 / self.temperature

    def invert_entropy(self, entropy, params, comp) -> float:
        return entropy * self.temperature


@dataclass(frozen=True)
class ThermalReservoir:
    """Fixed-temperature energy sink with a finite admissible energy range.

    All its stable equilibrium states share the temperature, so its entropy
    change in any exchange is dE / temperature.
    """

    temperature: float
    energy: float = 0.0
    e_min: float = -1e9
    e_max: float = 1e9

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("reservoir temperature must be positive")
        if not self.e_min <= self.energy <= self.e_max:
            raise RangeExceeded(
                f"reservoir energy {self.energy:.6g} outside "
                f"[{self.e_min:.6g}, {self.e_max:.6g}]"
            )

    def entropy_change(self, d_energy: float) -> float:
        return d_energy / self.temperature

    def model(self) -> ReservoirModel:
        return ReservoirModel(self.temperature, self.e_min, self.e_max)


def reservoir_exchange(reservoir: ThermalReservoir, d_energy: float) -> ThermalReservoir:
    """Move energy into (positive) or out of (negative) a reservoir.

    Returns the updated reservoir; raises RangeExceeded rather than leaving
    the finite admissible range.
    """
    new_energy = reservoir.energy + d_energy
    if not reservoir.e_min <= new_energy <= reservoir.e_max:
        raise RangeExceeded(
            f"exchange of {d_energy:.6g} would move reservoir to {new_energy:.6g}, "
            f"outside [{reservoir.e_min:.6g}, {reservoir.e_max:.6g}]"
        )
    return ThermalReservoir(reservoir.temperature, new_energy, reservoir.e_min, reservoir.e_max)


@dataclass(frozen=True)
class Weight:
    """Potential-energy accumulator: a mass on a vertical line in uniform gravity."""

    mass: float
    gravity: float
    height: float = 0.0

    def __post_init__(self):
        if self.mass <= 0 or self.gravity <= 0:
            raise ValueError("mass and gravity must be positive")

    def at_height(self, z: float) -> "Weight":
        return Weight(self.mass, self.gravity, z)


def weight_work(weight: Weight, z1: float, z2: float) -> float:
    """Work done BY the system when the weight moves from z1 to z2 (m g dz)."""
    return weight.mass * weight.gravity * (z2 - z1)


def entropy_of(model: MatterModel, st: SystemState) -> float:
    """Evaluate the fundamental relation at a state."""
    model.validate(st.energy, st.params, st.comp)
    return model.entropy(st.energy, st.params, st.comp)


def energy_of(model: MatterModel, entropy: float, params: Parameters,
              comp: Composition, tol: float = TOL_INV) -> float:
    """Invert the fundamental relation: the energy at which S(E) = entropy.

    Uses bracketed root-finding on the strictly increasing S(E); raises
    RangeError when the target entropy is not attained on the admissible
    energy interval.
    """
    floor = model.energy_floor(params, comp)
    ceiling = model.energy_ceiling(params, comp)

    def f(energy: float) -> float:
        return model.entropy(energy, params, comp) - entropy

    # The floor itself may round onto the wrong side of the log singularity;
    # nudge upward until the relation is evaluable.
    lo = floor
    f_lo = None
    for _ in range(64):
        try:
            f_lo = f(lo)
            break
        except DomainError:
            lo = lo + max(GROUND_EPS, abs(lo) * 1e-15)
    if f_lo is None:
        raise RangeError("could not evaluate the relation near the ground bound")
    if f_lo > tol:
        raise RangeError(
            f"entropy {entropy:.6g} below the value {entropy + f_lo:.6g} at the ground bound"
        )
    if f_lo >= 0.0:
        return lo

    scale = max(1.0, abs(lo))
    hi = min(lo + scale, ceiling)
    f_hi = f(hi)
    expansions = 0
    while f_hi < 0.0:
        if hi >= ceiling:
            raise RangeError(f"entropy {entropy:.6g} above the attainable range")
        hi = min(lo + (hi - lo) * 8.0, ceiling)
        f_hi = f(hi)
        expansions += 1
        if expansions > 200:
            raise RangeError("bracket expansion failed to reach the target entropy")

    # solve in log(E - lo): roots just above the ground bound need relative,
    # not absolute, precision
    span = hi - lo

    def g(x: float) -> float:
        return f(lo + math.exp(x))

    x_hi = math.log(span)
    x_lo = x_hi - 600.0  # E - lo down to span * e^-600
    if g(x_lo) >= 0.0:
        root = lo + math.exp(x_lo)
    else:
        x_root = brentq(g, x_lo, x_hi, xtol=1e-14, rtol=1e-15, maxiter=300)
        root = lo + math.exp(x_root)
    if abs(f(root)) > tol:
        raise NonConvergence(
            f"energy_of missed the entropy target by {abs(f(root)):.3g}", best=root
        )
    return float(root)


def solve_energy_at_temperature(model: MatterModel, temperature: float,
                                params: Parameters, comp: Composition) -> float:
    """Energy at which the state (E, params, comp) has the given temperature.

    Uses the model's closed form when available, otherwise bracketed
    root-finding on T(E), which is increasing for the built-in models.
    Raises RangeError when no such state exists.
    """
    closed = model.energy_at_temperature(temperature, params, comp)
    if closed is not None:
        return closed
    floor = model.energy_floor(params, comp)
    ceiling = model.energy_ceiling(params, comp)

    def f(energy: float) -> float:
        return temperature_of(model, SystemState(energy, params, comp)) - temperature

    # keep a margin for the central difference inside temperature_of
    margin = 4.0 * H_E_REL * max(1.0, abs(floor) + 1.0)
    lo = floor + margin
    hi = min(floor + max(1.0, abs(floor)), ceiling)
    for _ in range(200):
        if f(hi) >= 0.0:
            break
        if hi >= ceiling:
            raise RangeError(f"no admissible state at temperature {temperature:.6g}")
        hi = min(floor + (hi - floor) * 8.0, ceiling)
    else:
        raise RangeError(f"no admissible state at temperature {temperature:.6g}")
    for _ in range(200):
        if lo - floor <= margin and f(lo) > 0.0:
            raise RangeError(
                f"temperature {temperature:.6g} unreachable above the ground bound"
            )
        if f(lo) <= 0.0:
            break
        lo = floor + max(margin, (lo - floor) / 8.0)
    else:
        raise RangeError(f"no admissible state at temperature {temperature:.6g}")
    return float(brentq(f, lo, hi, xtol=1e-14 * max(1.0, abs(hi)), rtol=1e-15))


def temperature_of(model: MatterModel, st: SystemState) -> float:
    """Temperature (dE/dS at fixed parameters) of a stable equilibrium state.

    Analytic when the model supplies dS/dE, otherwise a central finite
    difference with step 1e-6 * max(1, |E|).
    """
    model.validate(st.energy, st.params, st.comp)
    slope = model.ds_de(st.energy, st.params, st.comp)
    if slope is None:
        h = H_E_REL * max(1.0, abs(st.energy))
        lo, hi = st.energy - h, st.energy + h
        if lo < model.energy_floor(st.params, st.comp):
            raise DomainError("state too close to the ground bound for a central difference")
        if hi > model.energy_ceiling(st.params, st.comp):
            raise DomainError("state too close to the energy ceiling for a central difference")
        slope = (model.entropy(hi, st.params, st.comp)
                 - model.entropy(lo, st.params, st.comp)) / (2.0 * h)
    if slope <= 0:
        raise DomainError(f"fundamental relation not increasing at E={st.energy:.6g}")
    return 1.0 / slope
