"""Small worked examples for each component, alongside randomized oracle checks."""
from pathlib import Path

import numpy as np
import pytest

from sonni.analysis import batching_overhead, monte_carlo, p_one_shot, p_per_round, reproduce_table1
from sonni.cli import main
from sonni.engine import Engine, NoiseModel
from sonni.messages import CLIENT, PROVIDER
from sonni.protocol import (Aborted, Strategies, TransportFailure, canary_hash,
                            make_party, quantize, run_protocol)
from sonni.scenario import Scenario
from sonni.shuffle import (Permutation, identity_plan, insert_canaries, permute_parameters,
                           plan_from_indices, plan_shuffle, shuffle_ciphertext)
from sonni.transport import TcpTransport
from sonni.workload import SlotwiseModel, eval_encrypted, eval_plain, gen_canaries

C, P = 1, 2


def exact(n):
    return Engine(n, NoiseModel(0.0, 0.0), 0)


# --- shuffle -----------------------------------------------------------------

def test_first_index_zero_moves_x0_to_the_end():
    plan = plan_from_indices(2, 1, [0])
    assert plan.permutation.forward.tolist() == [2, 1, 0]


def test_all_canaries_no_client_data():
    plan = plan_shuffle(0, 4, 1)
    assert plan.chosen_indices == (0, 1, 2, 3)
    assert plan.x_positions.size == 0


def test_chosen_among_zero_slots_leaves_x_in_place():
    eng = exact(8)
    plan = plan_from_indices(5, 3, [5, 6, 7])
    pt = np.array([1.0, 2, 3, 4, 5, 0, 0, 0])
    assert np.array_equal(shuffle_ciphertext(eng, eng.encrypt(pt, C), plan).payload, pt)
    assert plan.x_positions.tolist() == [0, 1, 2, 3, 4]


def test_identity_and_swap_parameter_plans():
    f, g = np.array([[1.0, 2.0], [3.0, 4.0]]), np.array([[5.0], [6.0]])
    assert permute_parameters(f, g, identity_plan(2, 1)).tolist() == [[1, 2, 5], [3, 4, 6]]
    swap = plan_from_indices(1, 1, [0])
    assert permute_parameters([[1.0], [2.0]], [[8.0], [9.0]], swap).tolist() == [[8, 1], [9, 2]]


def test_permuted_evaluation_equals_permuted_plain_evaluation():
    d, m = 5, 3
    for seed in range(1000):
        rng = np.random.default_rng(seed)
        plan = plan_shuffle(d, m, rng)
        f, g = SlotwiseModel.random(3, d, rng), SlotwiseModel.random(3, m, rng)
        x, y = rng.uniform(-1, 1, d), rng.uniform(-1, 1, m)
        params = permute_parameters(f.coeffs, g.coeffs, plan)
        inputs = plan.permutation.apply(np.concatenate([x, np.zeros(m)]))
        inputs[list(plan.chosen_indices)] = y
        ideal = plan.permutation.apply(np.concatenate([eval_plain(f, x), eval_plain(g, y)]))
        assert np.allclose(eval_plain(SlotwiseModel(params), inputs), ideal, rtol=0, atol=1e-12)


def test_zero_canaries_change_only_the_keyset():
    eng = exact(4)
    ct = eng.encrypt([1.0, 2.0, 3.0, 0.0], C)
    out = insert_canaries(eng, ct, [0.0], plan_from_indices(3, 1, [3]), P)
    assert np.array_equal(out.payload, ct.payload) and out.keyset == {C, P}


# --- workload ----------------------------------------------------------------

def test_linear_model_and_zero_model():
    eng = exact(1)
    out = eval_encrypted(eng, [eng.encrypt([1.0], P), eng.encrypt([2.0], P)], eng.encrypt([3.0], C))
    assert out.payload.tolist() == [7.0]
    zero = SlotwiseModel(np.zeros((4, 3)))
    assert eval_plain(zero, [1.0, -2.0, 3.0]).tolist() == [0.0, 0.0, 0.0]


def test_identity_model_returns_input():
    eng = Engine(4, NoiseModel(1e-9, 1e-9), 2)
    x = np.array([0.1, -0.4, 0.7, 0.2])
    out = eval_encrypted(eng, [eng.encrypt(np.zeros(4), P), eng.encrypt(np.ones(4), P)],
                         eng.encrypt(x, C))
    assert np.all(np.abs(out.payload - x) <= out.noise)


def test_traced_example_evaluates_to_permuted_model():
    eng = exact(4)
    plan = plan_from_indices(3, 1, [1])
    x, y = np.array([0.5, -0.25, 0.75]), np.array([0.3])
    f = SlotwiseModel(np.array([[1.0, 2.0, 3.0], [0.5, -1.0, 2.0]]))
    g = SlotwiseModel(np.array([[0.1], [0.2]]))
    ct = insert_canaries(eng, shuffle_ciphertext(eng, eng.encrypt(np.append(x, 0.0), C), plan),
                         y, plan, P)
    params = permute_parameters(f.coeffs, g.coeffs, plan)
    out = eval_encrypted(eng, [eng.encrypt(r, P) for r in params], ct)
    assert np.allclose(out.payload, eval_plain(SlotwiseModel(params), ct.payload), atol=1e-15)


def test_horner_issues_degree_mults():
    eng = exact(2)
    before = eng.counts.mults
    eval_encrypted(eng, [eng.encrypt([1.0, 1.0], P)] * 5, eng.encrypt([0.5, 0.5], C))
    assert eng.counts.mults - before == 4


def test_gen_canaries_edge_cases():
    assert gen_canaries(0).size == 0
    y = gen_canaries(100_000, (-2.0, 4.0), seed=1)
    mean_sigma = np.sqrt(3.0 / y.size)  # variance of U(-2, 4) is 3
    assert abs(y.mean() - 1.0) < 5 * mean_sigma
    assert abs(y.var() - 3.0) < 5 * np.sqrt((1.8 * 9 - 9) / y.size)


# --- protocol ----------------------------------------------------------------

def test_client_layout_examples():
    sc = Scenario(slots=4, d=2, m=1, degree=1)
    client = make_party(CLIENT, sc, x=[1.0, 2.0])
    ct = client.submit().ct
    assert np.allclose(ct.payload[:3], [1.0, 2.0, 0.0], atol=sc.encrypt_noise)
    empty = make_party(CLIENT, Scenario(slots=4, d=0, m=1, degree=1), x=np.zeros(0))
    assert np.all(np.abs(empty.submit().ct.payload) <= 1e-9)


def test_legacy_request_is_unshuffled(legacy_small):
    prov = make_party(PROVIDER, legacy_small)
    client = make_party(CLIENT, legacy_small)
    sub = client.submit()
    req = prov.prepare(sub)
    assert req.input_ct is sub.ct
    for row, ct in zip(prov.state.f.coeffs, req.param_cts):
        assert np.allclose(ct.payload[: legacy_small.d], row, atol=1e-9)


def test_identity_plan_request_is_x_then_y(small):
    prov = make_party(PROVIDER, small, plan=identity_plan(small.d, small.m))
    client = make_party(CLIENT, small)
    req = prov.prepare(client.submit())
    expected = np.concatenate([client.x, prov.state.y])
    assert np.allclose(req.input_ct.payload[: small.width], expected, atol=small.noise_bound())


def test_traced_pipeline_recovers_f_of_x_in_order():
    sc = Scenario(slots=4, d=3, m=1, degree=1)
    run = run_protocol(sc, provider_hooks={"plan": plan_from_indices(3, 1, [1])})
    assert run.delivered
    assert np.allclose(run.outcome.value, run.oracle(), atol=sc.noise_bound() / sc.r_min)


def test_mask_applied_slotwise(small):
    run = run_protocol(small)
    prov = run.parties[PROVIDER]
    masked = run.parties[CLIENT].masked[: small.width]
    plan = prov.state.plan
    result = plan.permutation.apply(np.concatenate([run.oracle(), np.zeros(small.m)]))
    result[list(plan.chosen_indices)] = prov.expected_canaries() / prov.state.rand[
        list(plan.chosen_indices)]
    assert np.allclose(masked, result * prov.state.rand, atol=small.noise_bound())
    assert prov.state.positions == plan.chosen_indices


def test_honest_hash_matches_provider(small):
    run = run_protocol(small)
    prov = run.parties[PROVIDER]
    assert prov.received_digests[0] == prov.state.expected_hash


def test_noise_below_half_cell_never_changes_digest():
    step, eta = 1e-3, 2e-4
    for seed in range(1000):
        rng = np.random.default_rng(seed)
        centers = rng.integers(-1000, 1000, 24) * step
        noisy = centers + rng.uniform(-eta, eta, 24)
        assert canary_hash(noisy, step) == canary_hash(centers, step)
        assert np.array_equal(quantize(noisy, step), quantize(centers, step))


def test_abort_path_releases_nothing(small):
    run = run_protocol(small, Strategies(client_response=lambda c, h: bytes(32)))
    client = run.parties[CLIENT]
    assert isinstance(run.outcome, Aborted) and client.output is None
    assert "rand" not in client.view.labels() and "f(x)" not in client.view.labels()
    assert [r.tag for r in run.transcript.canonical()][-1] == "Abort"


def test_party_crash_is_a_transport_failure(small):
    def crash(server, req):
        raise ConnectionError("server lost power")

    run = run_protocol(small, Strategies(server=crash), transport=TcpTransport(timeout=10))
    assert isinstance(run.outcome, TransportFailure)
    assert "server" in run.outcome.reason
    assert not run.transcript.views[PROVIDER].contains_any(run.x)


def test_full_size_scenarios_within_quant_step():
    base = Scenario()
    for seed in range(5):
        run = run_protocol(base.replace(seed=seed))
        assert np.max(np.abs(run.outcome.value - run.oracle())) <= base.quant_step


# --- analysis ----------------------------------------------------------------

def test_probability_edge_cases():
    assert p_per_round(100, 4, 0).p == 1.0
    assert p_one_shot(100, 0, 30).p == 1.0 and p_per_round(100, 0, 30).p == 1.0
    assert p_one_shot(1, 1, 1).p == 0.5
    assert p_per_round(7, 3, 1).p == pytest.approx(0.7)


def test_two_slot_and_per_round_detection_rates():
    assert monte_carlo(1, 1, 1, trials=20_000, seed=5, path="plan").within(0.5, 3)
    est = monte_carlo(1020, 4, 1, "per-round", 10**6, seed=5)
    assert est.within(1020 / 1024, 3)


def test_table_rows():
    rows = {(r["m"], r["k"]): r for r in reproduce_table1()}
    assert rows[(32, 512)]["p_paper"] == 7.07e-11
    assert rows[(512, 10)]["p_one_shot"] == pytest.approx(9.35e-4, rel=1e-3)
    assert rows[(4, 10)]["p_one_shot"] == pytest.approx(0.9615, rel=1e-4)


def test_batching_examples():
    assert batching_overhead(1024, 2) == pytest.approx(0.00195, abs=1e-5)
    assert batching_overhead(1024, 0) == 0.0
    assert batching_overhead(1024, 512) == 0.5


def test_demo_config_runs(capsys):
    demo = Path(__file__).resolve().parents[1] / "configs" / "demo.ini"
    assert main(["run", "--config", str(demo), "--show"]) == 0
    assert "f(x) =" in capsys.readouterr().out


def test_permutation_is_bijective():
    for seed in range(200):
        plan = plan_shuffle(20, 5, seed)
        assert sorted(plan.permutation.forward.tolist()) == list(range(25))
        assert Permutation.from_forward(plan.permutation.inverse).inverse.tolist() == \
            plan.permutation.forward.tolist()
