"""Stable and chemical equilibrium by constrained entropy maximization.

A problem fixes the total energy, the per-subsystem parameters, and an
initial composition; the free variables are the energy split across
subsystems and the reaction coordinates.  The inner split is solved by
temperature equalization (stationarity across subsystems), the outer
maximization over reaction coordinates by damped projected Newton with a
log-barrier fallback near the non-negativity boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import (
    DomainError,
    Infeasible,
    NegativeAmount,
    NonConvergence,
    RangeError,
)
from .matter_models import (
    MatterModel,
    Parameters,
    SystemState,
    energy_of,
    entropy_of,
    solve_energy_at_temperature,
    temperature_of,
)
from .stoichiometry import Composition, ReactionCoordinates, ReactionNetwork

MAX_ITER = 200
TOL_KKT = 1e-10
TOL_T = 1e-9

#: Relative finite-difference step in amounts.
H_N_REL = 1e-6


@dataclass(frozen=True)
class EquilibriumProblem:
    """Entropy maximization over an energy split and reaction coordinates.

    Subsystems share the total energy budget; the network acts on the
    concatenation of their compositions (``n0`` entries in declaration
    order).  ``network=None`` means non-reactive.
    """

    models: tuple
    params: tuple
    n0: tuple
    total_energy: float
    network: ReactionNetwork | None = None

    def __post_init__(self):
        models = tuple(self.models)
        params = tuple(self.params)
        n0 = tuple(self.n0)
        if not (len(models) == len(params) == len(n0)) or not models:
            raise ValueError("models, params and n0 must align and be non-empty")
        object.__setattr__(self, "models", models)
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "n0", n0)
        object.__setattr__(self, "total_energy", float(self.total_energy))
        if self.network is not None:
            r = sum(len(c) for c in n0)
            if self.network.n_constituents != r:
                raise ValueError(
                    f"network has {self.network.n_constituents} constituents, "
                    f"problem concatenates {r}"
                )

    @property
    def n_reactions(self) -> int:
        return 0 if self.network is None else self.network.n_reactions

    def slices(self) -> list[slice]:
        out, start = [], 0
        for comp in self.n0:
            out.append(slice(start, start + len(comp)))
            start += len(comp)
        return out

    def n0_concat(self) -> np.ndarray:
        return np.concatenate([c.amounts for c in self.n0])


@dataclass(frozen=True)
class EquilibriumSolution:
    """A stationary point of the constrained entropy maximization."""

    eps_se: ReactionCoordinates
    energies: tuple
    states: tuple
    entropy: float
    temperature: float
    chemical_potentials: np.ndarray
    affinities: np.ndarray
    kkt_residual: float
    boundary: bool
    active: tuple
    degenerate: bool
    iterations: int


class _Evaluator:
    """Entropy, gradient and split bookkeeping at fixed reaction coordinates."""

    def __init__(self, prob: EquilibriumProblem):
        self.prob = prob
        self.slices = prob.slices()
        self.n0 = prob.n0_concat()
        self.nu = None if prob.network is None else prob.network.stoich

    def amounts(self, eps: np.ndarray) -> np.ndarray:
        if self.nu is None:
            return self.n0
        return self.n0 + self.nu @ eps

    def comps(self, eps: np.ndarray) -> list[Composition]:
        n = self.amounts(eps)
        return [Composition(n[sl]) for sl in self.slices]

    def split(self, comps) -> tuple[list[float], float]:
        """Energy split equalizing subsystem temperatures; returns (energies, T)."""
        prob = self.prob
        if len(prob.models) == 1:
            e = prob.total_energy
            st = SystemState(e, prob.params[0], comps[0])
            return [e], temperature_of(prob.models[0], st)

        floors = [m.energy_floor(p, c) for m, p, c in zip(prob.models, prob.params, comps)]
        if prob.total_energy <= sum(floors):
            raise DomainError("total energy does not exceed the summed ground bounds")

        def excess(t: float) -> float:
            return sum(
                solve_energy_at_temperature(m, t, p, c)
                for m, p, c in zip(prob.models, prob.params, comps)
            ) - prob.total_energy

        t_lo, t_hi = 1.0, 1.0
        for _ in range(400):
            if excess(t_hi) >= 0.0:
                break
            t_hi *= 8.0
        else:
            raise RangeError("no temperature matches the energy budget")
        for _ in range(400):
            if excess(t_lo) <= 0.0:
                break
            t_lo /= 8.0
        else:
            raise RangeError("no temperature matches the energy budget")
        t_eq = brentq(excess, t_lo, t_hi, xtol=1e-15 * max(1.0, t_hi), rtol=1e-15)
        energies = [
            solve_energy_at_temperature(m, t_eq, p, c)
            for m, p, c in zip(prob.models, prob.params, comps)
        ]
        return energies, float(t_eq)

    def entropy_at(self, eps: np.ndarray) -> float:
        comps = self.comps(eps)
        energies, _ = self.split(comps)
        return sum(
            entropy_of(m, SystemState(e, p, c))
            for m, e, p, c in zip(self.prob.models, energies, self.prob.params, comps)
        )

    def ds_dn_concat(self, eps: np.ndarray):
        """dS/dn for each constituent at the equal-temperature split."""
        comps = self.comps(eps)
        energies, t_eq = self.split(comps)
        parts = []
        for model, e, p, c in zip(self.prob.models, energies, self.prob.params, comps):
            d = model.ds_dn(e, p, c)
            if d is None:
                d = _fd_ds_dn(model, e, p, c)
            parts.append(np.asarray(d, dtype=float))
        return np.concatenate(parts), energies, t_eq, comps

    def gradient(self, eps: np.ndarray) -> np.ndarray:
        """dS_total/d eps; the energy-reallocation terms cancel at the split."""
        dsdn, *_ = self.ds_dn_concat(eps)
        return self.nu.T @ dsdn


def _fd_ds_dn(model: MatterModel, energy: float, params: Parameters,
              comp: Composition) -> np.ndarray:
    n = comp.amounts
    out = np.empty_like(n)
    for k in range(n.shape[0]):
        h = H_N_REL * max(1.0, n[k])
        lo = n[k] - h
        if lo > 0.0:
            np_hi, np_lo = n.copy(), n.copy()
            np_hi[k] += h
            np_lo[k] = lo
            s_hi = model.entropy(energy, params, Composition(np_hi))
            s_lo = model.entropy(energy, params, Composition(np_lo))
            out[k] = (s_hi - s_lo) / (2.0 * h)
        else:
            np_hi = n.copy()
            np_hi[k] += h
            s_hi = model.entropy(energy, params, Composition(np_hi))
            s_0 = model.entropy(energy, params, comp)
            out[k] = (s_hi - s_0) / h
    return out


def _feasible_interval_1d(n0: np.ndarray, col: np.ndarray) -> tuple[float, float]:
    lo, hi = -math.inf, math.inf
    for nk, c in zip(n0, col):
        if c > 0:
            lo = max(lo, -nk / c)
        elif c < 0:
            hi = min(hi, nk / (-c))
    return lo, hi


def _interior_start(ev: _Evaluator, rng: np.random.Generator) -> np.ndarray:
    """A strictly feasible starting point with decent slack.

    The zero extent is always feasible (the initial composition is), so a
    width-zero interval degenerates to that single point rather than being
    empty.
    """
    tau = ev.prob.n_reactions
    if tau == 1:
        lo, hi = _feasible_interval_1d(ev.n0, ev.nu[:, 0])
        lo = lo if math.isfinite(lo) else -1.0
        hi = hi if math.isfinite(hi) else 1.0
        return np.array([0.5 * (lo + hi)])
    # probe axis-aligned box around eps = 0 for the best min-slack point
    box = np.empty((tau, 2))
    for j in range(tau):
        lo, hi = _feasible_interval_1d(ev.n0, ev.nu[:, j])
        box[j] = (lo if math.isfinite(lo) else -1.0, hi if math.isfinite(hi) else 1.0)
    best, best_slack = np.zeros(tau), np.min(ev.amounts(np.zeros(tau)))
    for _ in range(256):
        theta = rng.random(tau)
        cand = box[:, 0] + theta * (box[:, 1] - box[:, 0])
        slack = np.min(ev.amounts(cand))
        if slack > best_slack:
            best, best_slack = cand, slack
    if best_slack < 0.0:
        raise Infeasible("no feasible reaction coordinates found")
    return best


def solution_at(prob: EquilibriumProblem, eps, iterations: int = 0) -> EquilibriumSolution:
    """Package the split, potentials and residuals at given reaction coordinates."""
    ev = _Evaluator(prob)
    eps = np.atleast_1d(np.asarray(eps, dtype=float)) if prob.n_reactions else np.zeros(0)
    comps = ev.comps(eps)
    energies, t_eq = ev.split(comps)
    states = tuple(
        SystemState(e, p, c) for e, p, c in zip(energies, prob.params, comps)
    )
    s_total = sum(entropy_of(m, st) for m, st in zip(prob.models, states))

    if prob.n_reactions:
        dsdn, *_ = ev.ds_dn_concat(eps)
        mu = -t_eq * dsdn
        affinities = prob.network.stoich.T @ mu
        grad = ev.nu.T @ dsdn
        n = ev.amounts(eps)
        scale = max(1.0, float(np.max(np.abs(ev.n0))))
        active = tuple(int(k) for k in np.nonzero(n <= 1e-9 * scale)[0])
        if active:
            # residual of the KKT system grad = -sum(lambda_k nu_k), lambda >= 0
            a = ev.nu[list(active), :].T
            lam, *_ = np.linalg.lstsq(a, -grad, rcond=None)
            lam = np.maximum(lam, 0.0)
            kkt = float(np.max(np.abs(grad + a @ lam)))
        else:
            kkt = float(np.max(np.abs(grad)))
        rank = np.linalg.matrix_rank(ev.nu, tol=1e-10 * max(1.0, float(np.max(np.abs(ev.nu)))))
        degenerate = bool(rank < prob.n_reactions)
        if degenerate:
            eps_report, *_ = np.linalg.lstsq(ev.nu, ev.amounts(eps) - ev.n0, rcond=1e-10)
        else:
            eps_report = eps
    else:
        dsdn = np.zeros(0)
        mu = np.zeros(0)
        affinities = np.zeros(0)
        kkt = 0.0
        active = ()
        degenerate = False
        eps_report = eps

    return EquilibriumSolution(
        eps_se=ReactionCoordinates(eps_report) if prob.n_reactions else ReactionCoordinates(np.zeros(0)),
        energies=tuple(energies),
        states=states,
        entropy=float(s_total),
        temperature=t_eq,
        chemical_potentials=mu,
        affinities=affinities,
        kkt_residual=kkt,
        boundary=bool(active),
        active=active,
        degenerate=degenerate,
        iterations=iterations,
    )


def stable_equilibrium(prob: EquilibriumProblem, seed: int = 0,
                       max_iter: int = MAX_ITER, tol: float = TOL_KKT,
                       start=None) -> EquilibriumSolution:
    """Maximize total entropy over the energy split and reaction coordinates.

    Interior optima satisfy equal subsystem temperatures and zero reaction
    affinities; boundary optima (exhausted constituents) are certified by the
    sign of the KKT multipliers.  ``start`` overrides the automatic interior
    starting point.  Raises Infeasible when the constraint set is empty and
    NonConvergence (best iterate attached) when the iteration budget runs out.
    """
    tau = prob.n_reactions
    if tau == 0:
        try:
            return solution_at(prob, np.zeros(0))
        except (DomainError, RangeError) as exc:
            raise Infeasible(str(exc)) from exc

    rng = np.random.default_rng(seed)
    ev = _Evaluator(prob)

    # every reaction pinned (zero-width extent intervals): nothing to optimize
    widths = []
    for j in range(tau):
        lo, hi = _feasible_interval_1d(ev.n0, ev.nu[:, j])
        widths.append((hi - lo) if math.isfinite(lo) and math.isfinite(hi) else math.inf)
    if max(widths) <= 1e-13:
        try:
            return solution_at(prob, np.zeros(tau))
        except (DomainError, RangeError) as exc:
            raise Infeasible(str(exc)) from exc

    if start is not None:
        eps = np.atleast_1d(np.asarray(start, dtype=float))
        if np.min(ev.amounts(eps)) < 0.0:
            raise Infeasible("supplied start is outside the feasible set")
    else:
        eps = _interior_start(ev, rng)
    try:
        s_here = ev.entropy_at(eps)
    except (DomainError, RangeError, NegativeAmount) as exc:
        raise Infeasible(f"no admissible interior point: {exc}") from exc

    n_scale = max(1.0, float(np.max(np.abs(ev.n0))))
    barrier = 0.0  # switched on near the boundary
    for it in range(1, max_iter + 1):
        grad = ev.gradient(eps)
        n_here = ev.amounts(eps)
        if barrier > 0.0:
            grad = grad + barrier * (ev.nu.T @ (1.0 / np.maximum(n_here, 1e-300)))

        interior = np.min(n_here) > 1e-9 * n_scale
        if np.max(np.abs(grad)) <= tol and (interior or barrier > 0.0):
            if barrier > 1e-12:
                barrier /= 64.0
                continue
            return solution_at(prob, eps, iterations=it)

        hess = _fd_hessian(ev, eps, barrier)
        step = _ascent_step(hess, grad)

        # stay strictly feasible: cap the step at the boundary
        alpha = 1.0
        change = ev.nu @ step
        for nk, dk in zip(n_here, change):
            if dk < 0.0:
                alpha = min(alpha, 0.995 * nk / (-dk))
        if alpha <= 0.0:
            alpha = 1e-16

        # backtracking on the (possibly barrier-augmented) objective; once the
        # predicted gain drops below float resolution, take the Newton step
        # as-is so the iteration can polish to machine precision
        base = s_here + barrier * float(np.sum(np.log(np.maximum(n_here, 1e-300))))
        improved = False
        for _ in range(60):
            cand = eps + alpha * step
            try:
                s_cand = ev.entropy_at(cand)
            except (DomainError, RangeError, NegativeAmount):
                alpha *= 0.5
                continue
            n_cand = ev.amounts(cand)
            if np.min(n_cand) <= 0.0:
                alpha *= 0.5
                continue
            merit = s_cand + barrier * float(np.sum(np.log(n_cand)))
            predicted = alpha * float(grad @ step)
            polishing = (
                predicted <= 64.0 * np.finfo(float).eps * max(1.0, abs(base))
                and alpha * float(np.linalg.norm(step)) <= 1e-6 * max(1.0, float(np.linalg.norm(eps)))
            )
            if merit > base + 1e-4 * predicted or polishing:
                eps, s_here = cand, s_cand
                improved = True
                break
            alpha *= 0.5
        if not improved:
            if barrier == 0.0 and np.min(n_here) <= 1e-6 * n_scale:
                barrier = 1e-6 * n_scale  # log-barrier fallback near the boundary
                continue
            if barrier > 1e-12:
                barrier /= 64.0
                continue
            sol = solution_at(prob, eps, iterations=it)
            if sol.kkt_residual <= max(tol, 1e-8):
                return sol
            raise NonConvergence(
                f"no ascent step after {it} iterations "
                f"(kkt residual {sol.kkt_residual:.3g})", best=sol,
            )

    sol = solution_at(prob, eps, iterations=max_iter)
    if sol.kkt_residual <= max(tol, 1e-8):
        return sol
    raise NonConvergence(
        f"iteration budget {max_iter} exhausted (kkt residual {sol.kkt_residual:.3g})",
        best=sol,
    )


def _fd_hessian(ev: _Evaluator, eps: np.ndarray, barrier: float) -> np.ndarray:
    tau = eps.shape[0]
    hess = np.empty((tau, tau))
    for j in range(tau):
        h = 1e-6 * max(1.0, abs(eps[j]))
        hi, lo = eps.copy(), eps.copy()
        hi[j] += h
        lo[j] -= h
        try:
            g_hi = ev.gradient(hi)
            g_lo = ev.gradient(lo)
        except (DomainError, RangeError, NegativeAmount):
            return -np.eye(tau)  # fall back to steepest ascent scaling
        if barrier > 0.0:
            g_hi = g_hi + barrier * (ev.nu.T @ (1.0 / np.maximum(ev.amounts(hi), 1e-300)))
            g_lo = g_lo + barrier * (ev.nu.T @ (1.0 / np.maximum(ev.amounts(lo), 1e-300)))
        hess[:, j] = (g_hi - g_lo) / (2.0 * h)
    return 0.5 * (hess + hess.T)


def _ascent_step(hess: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """Newton ascent direction, guarded against indefinite Hessians."""
    try:
        eigvals = np.linalg.eigvalsh(hess)
        if np.max(eigvals) < -1e-14:
            step = np.linalg.solve(hess, -grad)
            if float(grad @ step) > 0.0:
                return step
    except np.linalg.LinAlgError:
        pass
    norm = float(np.linalg.norm(grad))
    return grad / max(norm, 1e-300)


def equilibrium_residual(sol: EquilibriumSolution, prob: EquilibriumProblem) -> float:
    """Stationarity residual max_l |sum_k nu_kl mu_k| / T with finite-difference
    chemical potentials mu_k = -T dS/dn_k.  Vacuously zero without reactions."""
    if prob.n_reactions == 0:
        return 0.0
    t_eq = sol.temperature
    mu_parts = []
    for model, st in zip(prob.models, sol.states):
        dsdn = _fd_ds_dn(model, st.energy, st.params, st.comp)
        mu_parts.append(-t_eq * dsdn)
    mu = np.concatenate(mu_parts)
    affinity = prob.network.stoich.T @ mu
    return float(np.max(np.abs(affinity)) / t_eq)


def mutual_equilibrium(model_a: MatterModel, st_a: SystemState,
                       model_b: MatterModel, st_b: SystemState) -> bool:
    """Whether two equilibrium states are in mutual stable equilibrium,
    i.e. share a temperature."""
    t_a = temperature_of(model_a, st_a)
    t_b = temperature_of(model_b, st_b)
    return abs(t_a - t_b) <= TOL_T * max(t_a, t_b)


def gibbs_residual(model: MatterModel, st: SystemState, d_s: float,
                   d_beta) -> float:
    """Defect of the differential relation dE = T dS + sum_j F_j d beta_j.

    T and the generalized forces are central finite differences at the state;
    the residual shrinks quadratically with the perturbation.
    """
    d_beta = np.atleast_1d(np.asarray(d_beta, dtype=float))
    if d_beta.shape[0] != len(st.params):
        raise ValueError("d_beta length does not match the parameter vector")
    s0 = entropy_of(model, st)
    beta0 = np.array(st.params.beta)

    e_new = energy_of(model, s0 + d_s, Parameters(beta0 + d_beta), st.comp)
    delta_e = e_new - st.energy

    h_s = 1e-6 * max(1.0, abs(s0))
    t_fd = (energy_of(model, s0 + h_s, st.params, st.comp)
            - energy_of(model, s0 - h_s, st.params, st.comp)) / (2.0 * h_s)

    forces = np.empty_like(beta0)
    for j in range(beta0.shape[0]):
        h_b = 1e-6 * max(1.0, abs(beta0[j]))
        hi, lo = beta0.copy(), beta0.copy()
        hi[j] += h_b
        lo[j] -= h_b
        forces[j] = (energy_of(model, s0, Parameters(hi), st.comp)
                     - energy_of(model, s0, Parameters(lo), st.comp)) / (2.0 * h_b)

    return abs(delta_e - t_fd * d_s - float(forces @ d_beta))


def pressure_of(model: MatterModel, st: SystemState) -> float:
    """Pressure: the negative volume-conjugate force -dE/dV at constant S, n."""
    s0 = entropy_of(model, st)
    v0 = st.params.volume
    h = 1e-6 * max(1.0, v0)
    e_hi = energy_of(model, s0, st.params.with_volume(v0 + h), st.comp)
    e_lo = energy_of(model, s0, st.params.with_volume(v0 - h), st.comp)
    return -(e_hi - e_lo) / (2.0 * h)


def esev_partition(model: MatterModel, states, tol: float = 1e-9) -> list[list[int]]:
    """Group equilibrium states into classes of equal energy and entropy.

    States whose energies and entropies agree within ``tol`` (absolute,
    states assumed O(1)) belong to the same class; returns index groups in
    first-seen order.
    """
    keys = [(st.energy, entropy_of(model, st)) for st in states]
    groups: list[list[int]] = []
    reps: list[tuple[float, float]] = []
    for i, (e, s) in enumerate(keys):
        for g, (er, sr) in enumerate(reps):
            if abs(e - er) <= tol and abs(s - sr) <= tol:
                groups[g].append(i)
                break
        else:
            groups.append([i])
            reps.append((e, s))
    return groups
