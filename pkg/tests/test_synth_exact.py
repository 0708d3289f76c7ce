import numpy as np
import pytest

from conftest import BETA, EPSILON, GAMMA, instance, random_mdp, synthesized
from oracles import entropy_bits as oracle_entropy
from specleak.automata import product, spec_automaton
from specleak.evaluation import exact_satisfaction, simulate, visit_z_scores
from specleak.model import expand, model_from_dict
from specleak.optcore import InfeasibleSpecification
from specleak.policy import PolicyError, extract_policy, load_policy
from specleak.speclang import ProblemInstance, parse_spec
from specleak.synth_exact import assemble_exact_program, build_product, synthesize_exact


def toy_instance():
    mdp = model_from_dict({
        "states": ["u", "v"], "initial": "u", "actions": ["go", "stay"], "atomic_props": ["p"],
        "transitions": [{"from": "u", "action": "go", "to": "v", "prob": 1.0},
                        {"from": "u", "action": "stay", "to": "u", "prob": 1.0},
                        {"from": "v", "action": "go", "to": "u", "prob": 0.5},
                        {"from": "v", "action": "go", "to": "v", "prob": 0.5},
                        {"from": "v", "action": "stay", "to": "v", "prob": 1.0}],
        "labels": {"v": ["p"]},
    })
    specs = (parse_spec("G[1,2] p"), parse_spec("F[2,3] p"), parse_spec("G[0,1] !p"))
    return mdp, ProblemInstance(specs, 0, GAMMA, BETA)


@pytest.fixture(scope="module")
def toy():
    mdp, inst = toy_instance()
    return mdp, inst, synthesize_exact(mdp, inst, EPSILON)


def test_resupply1_has_one_free_binary():
    mdp, inst = instance("resupply-1")
    prog, layout = assemble_exact_program(build_product(mdp, inst), inst)
    counts = prog.counts()
    assert counts["binary"] == 2 and counts["free_binary"] == 1
    assert len(prog.entropy_terms) == 2
    assert (np.asarray(prog.lb)[layout.block.indices] == 0).all()


def test_spec_count_mismatch_is_rejected():
    mdp, inst = instance("resupply-1")
    prod = build_product(mdp, instance("resupply-2")[1])
    with pytest.raises(ValueError, match="automata"):
        assemble_exact_program(prod, inst)


def test_single_spec_gives_zero_entropy():
    mdp, inst = toy_instance()
    single = ProblemInstance(inst.specs[:1], 0, GAMMA, BETA)
    prog, _ = assemble_exact_program(build_product(mdp, single), single)
    assert prog.counts()["free_binary"] == 0
    res = synthesize_exact(mdp, single, EPSILON)
    assert res.entropy == 0.0 and res.theta == 0.0
    assert res.mu[0] >= GAMMA - 1e-6


def test_toy_mu_matches_propagation(toy):
    mdp, inst, res = toy
    for i, f in enumerate(inst.specs):
        assert exact_satisfaction(mdp, res.policy, f) == pytest.approx(res.mu[i], abs=1e-6)
    assert res.candidate_set == [0, 1]
    assert res.entropy == pytest.approx(1.0, abs=1e-3)


def test_result_invariants(toy):
    _, inst, res = toy
    assert res.mu[inst.ground_truth] >= GAMMA - 1e-6
    for m, x in zip(res.mu, res.x):
        assert (x == 1) == (m >= BETA - 1e-6)
    assert res.entropy == pytest.approx(oracle_entropy(res.nu), abs=1e-6)
    assert res.stats["bisection_iterations"] <= 15


def test_absorbing_states_carry_no_occupancy(toy):
    _, _, res = toy
    prod = res.policy.product
    assert np.allclose(res.occupancy[prod.absorbing], 0.0)
    rows = res.policy.decisions
    assert np.allclose(rows.sum(axis=1), 1.0, atol=1e-9)


def test_extract_policy_rules():
    mdp = random_mdp(np.random.default_rng(0), n_states=2, n_actions=4)
    prod = product(expand(mdp, 2), [])
    lam = np.zeros((prod.n_states, 4))
    lam[prod.initial, :2] = 0.2
    pol = extract_policy(lam, prod)
    assert np.allclose(pol.distribution(prod.initial), [0.5, 0.5, 0, 0])
    other = next(j for j in range(prod.n_states) if j != prod.initial)
    assert np.allclose(pol.distribution(other), 0.25)
    lam[other, 1] = -1e-3
    with pytest.raises(PolicyError, match="negative"):
        extract_policy(lam, prod)


def test_simulated_visits_match_occupancy(toy):
    mdp, inst, res = toy
    prod = res.policy.product
    rep = simulate(mdp, res.policy, inst.specs, 100_000, seed=11)
    transient = np.flatnonzero(~prod.absorbing)
    expected = res.occupancy.sum(axis=1)
    z = visit_z_scores(expected, rep, transient)
    assert z.max() <= 3.0, z
    for a in range(prod.n_actions):
        se = np.sqrt(np.maximum(res.occupancy[transient, a], 1e-12) / 100_000)
        assert (np.abs(rep.visits[transient, a] - res.occupancy[transient, a]) <= 3 * se + 1e-9).all()


def test_certain_ground_truth_is_infeasible_on_slippery_grid():
    mdp, inst = instance("resupply-1", gamma=1.0)
    with pytest.raises(InfeasibleSpecification):
        synthesize_exact(mdp, inst, EPSILON)


def test_resupply1_matches_reported_row():
    mdp, inst, res = synthesized("resupply-1", "exact")
    assert res.mu[inst.ground_truth] >= GAMMA - 1e-6
    assert len(res.candidate_set) == 2
    assert res.entropy == pytest.approx(1.0, abs=1e-3)
    for i, f in enumerate(inst.specs):
        assert exact_satisfaction(mdp, res.policy, f) == pytest.approx(res.mu[i], abs=1e-6)


def test_policy_file_roundtrip(toy, tmp_path):
    mdp, inst, res = toy
    path = tmp_path / "policy.json"
    path.write_text(res.policy.dumps([str(s) for s in inst.specs]))
    back = load_policy(path, mdp)
    assert back.product.states == res.policy.product.states
    assert np.allclose(back.decisions, res.policy.decisions)
