"""Energy and entropy of open-system states via closed proxies and an
elemental-species reference environment.

An open state (arbitrary composition) is reproduced as a closed proxy with
that composition; its entropy is anchored by a reversible measurement against
the environment's reservoir, and compositions with different constituents
become comparable because every scale traces back to the same per-species
reference states at the environment's temperature and pressure.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .equilibrium import EquilibriumProblem, stable_equilibrium, pressure_of
from .errors import (
    DomainError,
    Infeasible,
    NonConvergence,
    NotExpressible,
    RangeError,
    RangeExceeded,
)
from .matter_models import (
    IdealGasMixture,
    MatterModel,
    Parameters,
    SystemState,
    ThermalReservoir,
    energy_of,
    entropy_of,
    solve_energy_at_temperature,
    temperature_of,
)
from .process_engine import measure_entropy
from .stoichiometry import (
    Composition,
    ReactionNetwork,
    TOL_COMPAT,
    RCOND,
    validate_elemental_set,
)

H_N_REL = 1e-6


@dataclass(frozen=True)
class ReferenceEnvironment:
    """Per-species reference states and assigned values at (T0, p0).

    Each elemental species lives in its own box, far from the others, in a
    stable equilibrium state at the environment temperature and pressure.
    ``e0_assigned`` / ``s0_assigned`` are the per-unit-amount values given to
    those states; the chemical convention sets E0 + p0 V0 = 0 and S0 = 0.
    """

    constituents: tuple
    elemental: tuple          # indices of the elemental species
    network: ReactionNetwork
    species_models: tuple     # one single-species model per elemental index
    t0: float
    p0: float
    e0_assigned: np.ndarray   # per unit amount, one entry per elemental species
    s0_assigned: np.ndarray

    def __post_init__(self):
        if self.t0 <= 0 or self.p0 <= 0:
            raise ValueError("reference temperature and pressure must be positive")
        report = validate_elemental_set(self.elemental, self.network)
        if not report.valid:
            raise NotExpressible(
                f"elemental set invalid (complete={report.complete}, "
                f"independent={report.independent})"
            )
        e0 = np.atleast_1d(np.asarray(self.e0_assigned, dtype=float))
        s0 = np.atleast_1d(np.asarray(self.s0_assigned, dtype=float))
        if e0.shape[0] != len(self.elemental) or s0.shape[0] != len(self.elemental):
            raise ValueError("assigned values must align with the elemental species")
        object.__setattr__(self, "constituents", tuple(self.constituents))
        object.__setattr__(self, "elemental", tuple(int(i) for i in self.elemental))
        object.__setattr__(self, "species_models", tuple(self.species_models))
        object.__setattr__(self, "e0_assigned", e0)
        object.__setattr__(self, "s0_assigned", s0)

    # physical reference state of one unit of species i (box at T0, p0)

    def reference_volume(self, i: int) -> float:
        model = self.species_models[i]
        if isinstance(model, IdealGasMixture):
            return model.kb * self.t0 / self.p0
        # generic: root-find the volume whose pressure at T0 is p0
        from scipy.optimize import brentq

        def f(log_v):
            params = Parameters([math.exp(log_v)])
            comp = Composition([1.0])
            e = solve_energy_at_temperature(model, self.t0, params, comp)
            return pressure_of(model, SystemState(e, params, comp)) - self.p0

        lo, hi = math.log(1e-6), math.log(1e6)
        return math.exp(brentq(f, lo, hi, xtol=1e-12))

    def reference_state(self, i: int) -> SystemState:
        model = self.species_models[i]
        params = Parameters([self.reference_volume(i)])
        comp = Composition([1.0])
        energy = solve_energy_at_temperature(model, self.t0, params, comp)
        return SystemState(energy, params, comp)

    def physical_reference(self, i: int) -> tuple[float, float]:
        """(energy, entropy) of one unit of species i at (T0, p0), model scale."""
        st = self.reference_state(i)
        return st.energy, entropy_of(self.species_models[i], st)

    def reservoir(self) -> ThermalReservoir:
        width = 1e9 * max(1.0, self.t0)
        return ThermalReservoir(self.t0, 0.0, -width, width)

    def decompose(self, comp: Composition) -> tuple[np.ndarray, np.ndarray]:
        """Elemental content w and reaction coordinates forming ``comp``.

        Solves the non-elemental rows of n = n_elem(w) + nu eps; raises
        NotExpressible when the composition cannot be reached from the set.
        """
        n = comp.amounts
        if n.shape[0] != len(self.constituents):
            raise NotExpressible(
                f"composition has {n.shape[0]} entries, environment declares "
                f"{len(self.constituents)}"
            )
        in_set = np.zeros(n.shape[0], dtype=bool)
        in_set[list(self.elemental)] = True
        nu = self.network.stoich
        rows_out = nu[~in_set, :]
        target = n[~in_set]
        if rows_out.size:
            eps, *_ = np.linalg.lstsq(rows_out, target, rcond=RCOND)
            if np.max(np.abs(rows_out @ eps - target)) > TOL_COMPAT:
                raise NotExpressible("composition is not reachable from the elemental set")
        else:
            eps = np.zeros(nu.shape[1])
        # fancy indexing keeps w aligned with the declared elemental order
        elem = list(self.elemental)
        w = n[elem] - (nu @ eps)[elem]
        if np.any(w < -TOL_COMPAT):
            raise NotExpressible("composition would need negative elemental amounts")
        return np.where(w < 0.0, 0.0, w), eps

    def physical_sums(self, w) -> tuple[float, float]:
        """Total (energy, entropy) of the elemental boxes holding amounts w."""
        e = s = 0.0
        for i, wi in enumerate(w):
            if wi == 0.0:
                continue
            e_phys, s_phys = self.physical_reference(i)
            e += wi * e_phys
            s += wi * s_phys
        return e, s

    def gauge(self, comp: Composition) -> tuple[float, float]:
        """Additive constants (energy, entropy) relating the model scale to
        the reference scale for the given composition."""
        w, _ = self.decompose(comp)
        e_phys, s_phys = self.physical_sums(w)
        return (float(w @ self.e0_assigned) - e_phys,
                float(w @ self.s0_assigned) - s_phys)

    @classmethod
    def chemical_convention(cls, constituents, elemental, network, species_models,
                            t0: float, p0: float) -> "ReferenceEnvironment":
        """Customary assignment E0 + p0 V0 = 0 and S0 = 0 for each species."""
        env = cls(constituents, elemental, network, species_models, t0, p0,
                  np.zeros(len(elemental)), np.zeros(len(elemental)))
        e0 = np.array([-p0 * env.reference_volume(i) for i in range(len(env.elemental))])
        return cls(constituents, elemental, network, species_models, t0, p0,
                   e0, np.zeros(len(env.elemental)))

    @classmethod
    def natural_convention(cls, constituents, elemental, network, species_models,
                           t0: float, p0: float) -> "ReferenceEnvironment":
        """Assign the model-scale physical values themselves (identity gauge)."""
        env = cls(constituents, elemental, network, species_models, t0, p0,
                  np.zeros(len(elemental)), np.zeros(len(elemental)))
        phys = [env.physical_reference(i) for i in range(len(env.elemental))]
        e0 = np.array([p[0] for p in phys])
        s0 = np.array([p[1] for p in phys])
        return cls(constituents, elemental, network, species_models, t0, p0, e0, s0)


@dataclass(frozen=True)
class OpenState:
    """State of an open system: composition not fixed to a compatibility class.

    ``inflow`` is an informational ledger of particle transfer rates; it is
    carried, not integrated.
    """

    comp: Composition
    energy: float
    params: Parameters
    inflow: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        object.__setattr__(self, "energy", float(self.energy))
        object.__setattr__(self, "inflow", np.atleast_1d(np.asarray(self.inflow, dtype=float)))

    def closed_proxy(self) -> SystemState:
        return SystemState(self.energy, self.params, self.comp)


def reference_values(env: ReferenceEnvironment, comp: Composition) -> tuple[float, float]:
    """Assigned (E0, S0) for a composition: per-species references weighted by
    elemental content."""
    w, _ = env.decompose(comp)
    return float(w @ env.e0_assigned), float(w @ env.s0_assigned)


def _reference_proxy_state(env: ReferenceEnvironment, model: MatterModel,
                           comp: Composition) -> SystemState:
    """Canonical state of the closed proxy at the environment's (T0, p0)."""
    n_tot = comp.total
    if isinstance(model, IdealGasMixture):
        volume = n_tot * model.kb * env.t0 / env.p0
    else:
        volume = n_tot * env.t0 / env.p0
    params = Parameters([volume])
    energy = solve_energy_at_temperature(model, env.t0, params, comp)
    return SystemState(energy, params, comp)


def open_energy_entropy(env: ReferenceEnvironment, model: MatterModel,
                        ost: OpenState) -> tuple[float, float]:
    """Energy and entropy of an open state on the common reference scale.

    The closed proxy at the state's composition is anchored by a reversible
    measurement against the environment reservoir; the anchor itself traces
    to the elemental reference states, so states of different compositions
    land on one comparable scale.
    """
    e0_assigned, s0_assigned = reference_values(env, ost.comp)
    w, _ = env.decompose(ost.comp)
    e_elem, s_elem = env.physical_sums(w)

    ref_state = _reference_proxy_state(env, model, ost.comp)
    s_anchor = s0_assigned + (entropy_of(model, ref_state) - s_elem)
    s_open = measure_entropy(model, ost.closed_proxy(), ref_state, s_anchor,
                             env.reservoir())
    e_open = e0_assigned + (ost.energy - e_elem)
    return e_open, s_open


def open_entropy_direct(env: ReferenceEnvironment, model: MatterModel,
                        ost: OpenState) -> float:
    """Open-scale entropy straight from the fundamental relation (no process);
    the analytic counterpart of open_energy_entropy's measured value."""
    _, s0_assigned = reference_values(env, ost.comp)
    w, _ = env.decompose(ost.comp)
    _, s_elem = env.physical_sums(w)
    return s0_assigned - s_elem + entropy_of(model, ost.closed_proxy())


def _open_energy_function(env, model, ost: OpenState):
    """E_open(S_open, n, beta) around a state, for finite differencing."""

    def e_open(s_open: float, comp: Composition, params: Parameters) -> float:
        if env is None:
            return energy_of(model, s_open, params, comp)
        g_e, g_s = env.gauge(comp)
        return g_e + energy_of(model, s_open - g_s, params, comp)

    return e_open


def total_potential(env: ReferenceEnvironment | None, model: MatterModel,
                    ost: OpenState, k: int) -> float:
    """Total potential of constituent k: dE/dn_k at fixed entropy and parameters.

    Central finite difference on the open fundamental relation; near n_k = 0
    a one-sided difference is used and flagged with a warning.  ``env=None``
    differentiates the closed proxy relation on the model's own scale.
    """
    n = ost.comp.amounts
    if k < 0 or k >= n.shape[0]:
        raise IndexError(f"constituent index {k} out of range")
    h = H_N_REL * max(1.0, n[k])
    if n[k] <= 1e-12:
        raise DomainError(f"amount {k} is at the boundary; no potential defined")

    e_open_fn = _open_energy_function(env, model, ost)
    if env is None:
        s_here = entropy_of(model, ost.closed_proxy())
    else:
        g_e, g_s = env.gauge(ost.comp)
        s_here = g_s + entropy_of(model, ost.closed_proxy())

    n_hi = n.copy()
    n_hi[k] += h
    if n[k] - h > 0.0:
        n_lo = n.copy()
        n_lo[k] -= h
        e_hi = e_open_fn(s_here, Composition(n_hi), ost.params)
        e_lo = e_open_fn(s_here, Composition(n_lo), ost.params)
        return (e_hi - e_lo) / (2.0 * h)
    warnings.warn(f"amount {k} too small for a central difference; using one-sided")
    e_hi = e_open_fn(s_here, Composition(n_hi), ost.params)
    e_0 = e_open_fn(s_here, ost.comp, ost.params)
    return (e_hi - e_0) / h


def gibbs_open_residual(env: ReferenceEnvironment | None, model: MatterModel,
                        ost: OpenState, d_s: float, d_n, d_beta) -> float:
    """Defect of dE = T dS + sum_i mu_i dn_i + sum_j F_j d beta_j on the open
    relation; shrinks quadratically with the perturbation."""
    d_n = np.atleast_1d(np.asarray(d_n, dtype=float))
    d_beta = np.atleast_1d(np.asarray(d_beta, dtype=float))
    n0 = ost.comp.amounts
    beta0 = np.array(ost.params.beta)
    if d_n.shape[0] != n0.shape[0] or d_beta.shape[0] != beta0.shape[0]:
        raise ValueError("perturbation shapes do not match the state")

    e_open_fn = _open_energy_function(env, model, ost)
    if env is None:
        s_here = entropy_of(model, ost.closed_proxy())
        e_here = ost.energy
    else:
        g_e, g_s = env.gauge(ost.comp)
        s_here = g_s + entropy_of(model, ost.closed_proxy())
        e_here = g_e + ost.energy

    e_new = e_open_fn(s_here + d_s, Composition(n0 + d_n), Parameters(beta0 + d_beta))
    delta_e = e_new - e_here

    h_s = 1e-6 * max(1.0, abs(s_here))
    t_fd = (e_open_fn(s_here + h_s, ost.comp, ost.params)
            - e_open_fn(s_here - h_s, ost.comp, ost.params)) / (2.0 * h_s)

    mu = np.array([total_potential(env, model, ost, k) for k in range(n0.shape[0])])

    forces = np.empty_like(beta0)
    for j in range(beta0.shape[0]):
        h_b = 1e-6 * max(1.0, abs(beta0[j]))
        hi, lo = beta0.copy(), beta0.copy()
        hi[j] += h_b
        lo[j] -= h_b
        forces[j] = (e_open_fn(s_here, ost.comp, Parameters(hi))
                     - e_open_fn(s_here, ost.comp, Parameters(lo))) / (2.0 * h_b)

    return abs(delta_e - t_fd * d_s - float(mu @ d_n) - float(forces @ d_beta))


@dataclass(frozen=True)
class OpenGrid:
    """Grid specification for tabulating an open fundamental relation."""

    energies: tuple
    volumes: tuple
    compositions: tuple   # composition vectors (n, or n0 when reactive)
    reactive: bool = False
    network: ReactionNetwork | None = None

    def __post_init__(self):
        object.__setattr__(self, "energies", tuple(float(e) for e in self.energies))
        object.__setattr__(self, "volumes", tuple(float(v) for v in self.volumes))
        object.__setattr__(self, "compositions",
                           tuple(Composition(c) if not isinstance(c, Composition) else c
                                 for c in self.compositions))
        if self.reactive and self.network is None:
            raise ValueError("reactive tabulation needs a network")


@dataclass(frozen=True)
class OpenTableRow:
    energy: float             # open (reference) scale
    volume: float
    n0: tuple
    entropy: float            # open (reference) scale
    eps: tuple
    n_se: tuple
    temperature: float
    pressure: float
    mu: tuple
    status: str = "ok"


def _tabulate_point(env, model, grid, point) -> OpenTableRow:
    energy, volume, comp = point
    params = Parameters([volume])
    try:
        if grid.reactive:
            prob = EquilibriumProblem((model,), (params,), (comp,), energy,
                                      network=grid.network)
            sol = stable_equilibrium(prob)
            st = sol.states[0]
            eps = tuple(float(x) for x in sol.eps_se.epsilon)
        else:
            st = SystemState(energy, params, comp)
            entropy_of(model, st)  # domain check
            eps = ()
        ost = OpenState(st.comp, st.energy, params)
        e_open, s_open = open_energy_entropy(env, model, ost)
        temp = temperature_of(model, st)
        pres = pressure_of(model, st)
        mu = tuple(
            float(total_potential(env, model, ost, k)) if st.comp.amounts[k] > 1e-12
            else math.nan
            for k in range(len(st.comp))
        )
        return OpenTableRow(e_open, volume, tuple(comp.amounts), s_open, eps,
                            tuple(st.comp.amounts), temp, pres, mu)
    except (DomainError, RangeError, RangeExceeded, Infeasible, NonConvergence,
            NotExpressible) as exc:
        nan = math.nan
        return OpenTableRow(nan, volume, tuple(comp.amounts), nan, (), (),
                            nan, nan, (), status=f"gap: {exc}")


def open_fundamental_relation(env: ReferenceEnvironment, model: MatterModel,
                              grid: OpenGrid, workers: int | None = None) -> list[OpenTableRow]:
    """Tabulate the open fundamental relation over a grid.

    Reactive grids solve a chemical equilibrium per point and record the
    equilibrium reaction coordinates.  Failed points become flagged gaps
    rather than aborting the table.  Worker count defaults to the
    ENTROKIT_THREADS environment variable (1 if unset); assembly order is
    the grid order regardless of parallelism.
    """
    points = [
        (e, v, c)
        for e in grid.energies
        for v in grid.volumes
        for c in grid.compositions
    ]
    if workers is None:
        workers = int(os.environ.get("ENTROKIT_THREADS", "1"))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda p: _tabulate_point(env, model, grid, p), points))
    else:
        rows = [_tabulate_point(env, model, grid, p) for p in points]
    return rows
