import math

import numpy as np
import pytest

from entrokit.errors import NotExpressible
from entrokit.matter_models import (
    IdealGasMixture,
    Parameters,
    Species,
    entropy_of,
    ideal_gas_model,
    state,
    temperature_of,
)
from entrokit.open_systems import (
    OpenGrid,
    OpenState,
    ReferenceEnvironment,
    gibbs_open_residual,
    open_energy_entropy,
    open_entropy_direct,
    open_fundamental_relation,
    reference_values,
    total_potential,
)
from entrokit.process_engine import measure_entropy_difference
from entrokit.stoichiometry import Composition, ReactionNetwork

WATER_NET = ReactionNetwork([[-2.0], [-1.0], [2.0]])
NAMES = ("H2", "O2", "H2O")


def water_env(convention="chemical", t0=1.0, p0=1.0):
    sp_h2 = IdealGasMixture([Species("H2", 5.0)])
    sp_o2 = IdealGasMixture([Species("O2", 5.0)])
    maker = (ReferenceEnvironment.chemical_convention if convention == "chemical"
             else ReferenceEnvironment.natural_convention)
    return maker(NAMES, (0, 1), WATER_NET, (sp_h2, sp_o2), t0, p0)


def water_mix(e0_water=-2.0):
    return IdealGasMixture([
        Species("H2", 5.0), Species("O2", 5.0), Species("H2O", 6.0, e0=e0_water),
    ])


def single_species_env(convention="chemical"):
    no_reactions = ReactionNetwork(np.zeros((1, 0)))
    gas = ideal_gas_model(3.0)
    maker = (ReferenceEnvironment.chemical_convention if convention == "chemical"
             else ReferenceEnvironment.natural_convention)
    return maker(("X",), (0,), no_reactions, (gas,), 1.0, 1.0)


def test_chemical_convention_reference_values():
    env = water_env()
    # E0_i + p0 V0_i = 0 and S0_i = 0, so any composition maps to
    # (-p0 sum w_i V0_i, 0)
    comp = Composition([0.0, 0.0, 2.0])
    e0, s0 = reference_values(env, comp)
    v0 = env.reference_volume(0)
    assert s0 == 0.0
    assert e0 == pytest.approx(-1.0 * (2.0 * v0 + 1.0 * v0), rel=1e-12)


def test_reference_values_empty_composition():
    env = water_env()
    assert reference_values(env, Composition([0.0, 0.0, 0.0])) == (0.0, 0.0)


def test_reference_values_scale_linearly():
    env = water_env()
    comp = Composition([1.0, 0.5, 1.0])
    e1, s1 = reference_values(env, comp)
    e2, s2 = reference_values(env, Composition(2.0 * comp.amounts))
    assert e2 == pytest.approx(2.0 * e1, rel=1e-12)
    assert s2 == pytest.approx(2.0 * s1, abs=1e-12)


def test_decompose_recovers_elemental_content():
    env = water_env()
    w, eps = env.decompose(Composition([0.0, 0.0, 2.0]))
    assert np.allclose(w, [2.0, 1.0])
    assert np.allclose(eps, [1.0])


def test_decompose_respects_declared_elemental_order():
    # declare the elemental set in reverse index order; w must follow it
    sp_o2 = IdealGasMixture([Species("O2", 5.0)])
    sp_h2 = IdealGasMixture([Species("H2", 5.0)])
    env = ReferenceEnvironment.chemical_convention(
        NAMES, (1, 0), WATER_NET, (sp_o2, sp_h2), 1.0, 1.0
    )
    w, _ = env.decompose(Composition([0.0, 0.0, 2.0]))
    assert np.allclose(w, [1.0, 2.0])  # O2 first, as declared


def test_decompose_rejects_wrong_length():
    env = water_env()
    with pytest.raises(NotExpressible):
        env.decompose(Composition([1.0, 1.0]))


def test_open_state_at_the_reference_state_returns_assigned_values():
    env = single_species_env()
    gas = ideal_gas_model(3.0)
    ref = env.reference_state(0)
    ost = OpenState(Composition([1.0]), ref.energy, ref.params)
    e_open, s_open = open_energy_entropy(env, gas, ost)
    assert e_open == pytest.approx(env.e0_assigned[0], abs=1e-9)
    assert s_open == pytest.approx(env.s0_assigned[0], abs=1e-9)


def test_equal_composition_difference_is_the_measured_difference():
    env = single_species_env()
    gas = ideal_gas_model(3.0)
    o1 = OpenState(Composition([1.0]), 1.5, Parameters([1.0]))
    o2 = OpenState(Composition([1.0]), 1.5, Parameters([2.0]))
    _, s1 = open_energy_entropy(env, gas, o1)
    _, s2 = open_energy_entropy(env, gas, o2)
    measured = measure_entropy_difference(
        gas, o1.closed_proxy(), o2.closed_proxy(), env.reservoir()
    )
    assert s2 - s1 == pytest.approx(measured, abs=1e-9)
    assert s2 - s1 == pytest.approx(math.log(2.0), abs=1e-9)


def test_measured_open_entropy_agrees_with_direct_relation():
    env = water_env()
    mix = water_mix()
    ost = OpenState(Composition([1.0, 0.5, 1.0]), 9.0, Parameters([1.5]))
    _, s_measured = open_energy_entropy(env, mix, ost)
    assert s_measured == pytest.approx(open_entropy_direct(env, mix, ost), abs=1e-9)


def test_mixture_against_unreacted_precursors():
    # same energy, same box: the open-scale difference equals the analytic
    # entropy change of the reacting mixture
    env = water_env()
    mix = water_mix()
    volume = Parameters([1.5])
    energy = 9.0
    precursors = OpenState(Composition([2.0, 1.0, 0.0]), energy, volume)
    burned = OpenState(Composition([0.0, 0.0, 2.0]), energy, volume)
    _, s_pre = open_energy_entropy(env, mix, precursors)
    _, s_burn = open_energy_entropy(env, mix, burned)
    analytic = (entropy_of(mix, burned.closed_proxy())
                - entropy_of(mix, precursors.closed_proxy()))
    assert s_burn - s_pre == pytest.approx(analytic, abs=1e-9)


def test_open_energy_uses_reference_scale():
    env = water_env()
    mix = water_mix()
    ost = OpenState(Composition([2.0, 1.0, 0.0]), 9.0, Parameters([1.5]))
    e_open, _ = open_energy_entropy(env, mix, ost)
    w, _ = env.decompose(ost.comp)
    e_elem = sum(wi * env.physical_reference(i)[0] for i, wi in enumerate(w))
    e0_assigned, _ = reference_values(env, ost.comp)
    assert e_open == pytest.approx(e0_assigned + ost.energy - e_elem, rel=1e-12)


def test_gauge_shift_moves_entropies_linearly():
    base = water_env()
    shifted = ReferenceEnvironment(
        NAMES, (0, 1), WATER_NET, base.species_models, base.t0, base.p0,
        base.e0_assigned, base.s0_assigned + np.array([0.25, -0.5]),
    )
    mix = water_mix()
    ost = OpenState(Composition([0.0, 0.0, 2.0]), 9.0, Parameters([1.5]))
    w, _ = base.decompose(ost.comp)
    _, s_base = open_energy_entropy(base, mix, ost)
    _, s_shift = open_energy_entropy(shifted, mix, ost)
    assert s_shift - s_base == pytest.approx(w @ [0.25, -0.5], abs=1e-9)

    # entropy differences at fixed composition are gauge-free
    ost2 = OpenState(ost.comp, 11.0, ost.params)
    _, s2_base = open_energy_entropy(base, mix, ost2)
    _, s2_shift = open_energy_entropy(shifted, mix, ost2)
    assert s2_shift - s_shift == pytest.approx(s2_base - s_base, abs=1e-9)


def test_total_potential_single_species_closed_form():
    # mu = T (-S/n + dof/2 + 1) for the bare relation (identity gauge)
    gas = ideal_gas_model(3.0)
    ost = OpenState(Composition([1.0]), 1.5, Parameters([1.0]))
    s = entropy_of(gas, ost.closed_proxy())
    t = temperature_of(gas, ost.closed_proxy())
    expected = t * (-s / 1.0 + 1.5 + 1.0)
    assert total_potential(None, gas, ost, 0) == pytest.approx(expected, abs=1e-6)


def test_total_potential_is_intensive():
    gas = ideal_gas_model(3.0)
    ost1 = OpenState(Composition([1.0]), 1.5, Parameters([1.0]))
    ost2 = OpenState(Composition([2.0]), 3.0, Parameters([2.0]))
    mu1 = total_potential(None, gas, ost1, 0)
    mu2 = total_potential(None, gas, ost2, 0)
    assert mu1 == pytest.approx(mu2, abs=1e-6)


def test_total_potential_near_zero_uses_one_sided_difference():
    mix = water_mix()
    ost = OpenState(Composition([2.0, 1.0, 1e-7]), 9.0, Parameters([1.0]))
    with pytest.warns(UserWarning):
        mu = total_potential(None, mix, ost, 2)
    assert math.isfinite(mu)


def test_gibbs_open_residual_second_order():
    rng = np.random.default_rng(41)
    mix = water_mix()
    ratios = []
    for _ in range(15):
        comp = Composition(rng.uniform(0.5, 2.0, size=3))
        ost = OpenState(comp, rng.uniform(8.0, 14.0), Parameters([rng.uniform(0.8, 2.5)]))
        d = 1e-3
        r1 = gibbs_open_residual(None, mix, ost, d, [d, -d, d], [d])
        r2 = gibbs_open_residual(None, mix, ost, d / 2, [d / 2, -d / 2, d / 2], [d / 2])
        if r2 > 1e-12:
            ratios.append(r1 / r2)
    assert ratios
    assert all(3.5 <= r <= 4.5 for r in ratios)


def test_nonreactive_table_matches_relation_pointwise():
    env = single_species_env("natural")
    gas = ideal_gas_model(3.0)
    grid = OpenGrid(energies=(1.0, 1.5, 2.0), volumes=(1.0, 2.0),
                    compositions=(Composition([1.0]),))
    rows = open_fundamental_relation(env, gas, grid)
    assert len(rows) == 6
    for row in rows:
        assert row.status == "ok"
        st0 = state(row.energy, row.volume, [1.0])  # natural gauge: open E = model E
        assert row.entropy == pytest.approx(entropy_of(gas, st0), abs=1e-9)


def test_table_monotone_in_energy_along_grid_lines():
    env = water_env()
    mix = water_mix()
    grid = OpenGrid(energies=(7.0, 8.0, 9.0, 10.0), volumes=(1.0,),
                    compositions=(Composition([2.0, 1.0, 0.0]),),
                    reactive=True, network=WATER_NET)
    rows = open_fundamental_relation(env, mix, grid)
    entropies = [r.entropy for r in rows if r.status == "ok"]
    assert len(entropies) == 4
    assert all(b > a for a, b in zip(entropies, entropies[1:]))


def test_reactive_isomerization_table_symmetry():
    iso_net = ReactionNetwork([[-1.0], [1.0]])
    mix = IdealGasMixture([Species("A", 3.0), Species("B", 3.0)])
    no_reactions = ReactionNetwork(np.zeros((2, 0)))
    gasA = IdealGasMixture([Species("A", 3.0)])
    gasB = IdealGasMixture([Species("B", 3.0)])
    env = ReferenceEnvironment.natural_convention(
        ("A", "B"), (0, 1), no_reactions, (gasA, gasB), 1.0, 1.0
    )
    grid = OpenGrid(
        energies=(2.0,), volumes=(1.0,),
        compositions=(Composition([1.0, 0.0]), Composition([0.0, 1.0])),
        reactive=True, network=iso_net,
    )
    rows = open_fundamental_relation(env, mix, grid)
    assert all(r.status == "ok" for r in rows)
    # swapping the initial composition mirrors the equilibrium extent
    n_a, n_b = rows[0].n_se, rows[1].n_se
    assert n_a[0] == pytest.approx(n_b[1], abs=1e-8)
    assert rows[0].entropy == pytest.approx(rows[1].entropy, abs=1e-8)


def test_table_flags_gaps_instead_of_failing():
    env = water_env()
    mix = water_mix()
    grid = OpenGrid(energies=(-50.0, 9.0), volumes=(1.0,),
                    compositions=(Composition([2.0, 1.0, 0.0]),),
                    reactive=True, network=WATER_NET)
    rows = open_fundamental_relation(env, mix, grid)
    statuses = [r.status for r in rows]
    assert any(s.startswith("gap") for s in statuses)
    assert any(s == "ok" for s in statuses)


def test_table_parallel_assembly_deterministic():
    env = water_env()
    mix = water_mix()
    grid = OpenGrid(energies=(8.0, 9.0), volumes=(1.0, 2.0),
                    compositions=(Composition([2.0, 1.0, 0.0]),),
                    reactive=True, network=WATER_NET)
    serial = open_fundamental_relation(env, mix, grid, workers=1)
    threaded = open_fundamental_relation(env, mix, grid, workers=4)
    assert [r.entropy for r in serial] == [r.entropy for r in threaded]


def test_incomplete_elemental_set_rejected_at_construction():
    # an extra constituent no reaction can form breaks completeness
    names = ("H2", "O2", "H2O", "He")
    net = ReactionNetwork([[-2.0], [-1.0], [2.0], [0.0]])
    sp_h2 = IdealGasMixture([Species("H2", 5.0)])
    sp_o2 = IdealGasMixture([Species("O2", 5.0)])
    with pytest.raises(NotExpressible):
        ReferenceEnvironment.chemical_convention(
            names, (0, 1), net, (sp_h2, sp_o2), 1.0, 1.0
        )


def test_composition_needing_negative_elements_not_expressible():
    # A -> B + C with elements {A, B}: a state holding C without its
    # co-product B would need negative elemental B
    names = ("A", "B", "C")
    net = ReactionNetwork([[-1.0], [1.0], [1.0]])
    sp_a = IdealGasMixture([Species("A", 3.0)])
    sp_b = IdealGasMixture([Species("B", 3.0)])
    env = ReferenceEnvironment.chemical_convention(names, (0, 1), net, (sp_a, sp_b), 1.0, 1.0)
    with pytest.raises(NotExpressible):
        env.decompose(Composition([0.0, 0.0, 1.0]))
    w, _ = env.decompose(Composition([0.0, 1.0, 1.0]))
    assert np.allclose(w, [1.0, 0.0])
