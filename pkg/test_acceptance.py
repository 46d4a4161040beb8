"""
Experimentos de extremo a extremo. Las variantes `slow` usan los tamaños
completos (minutos); las demás son versiones reducidas con tolerancias más
amplias que corren en la suite por defecto.
"""
import os
from pathlib import Path
from typing import Any, Dict

import numpy as np
import pytest

from analysis import AbsorptionClass, chi_square_against_oracle, enumerate_next_state, fluctuation_monitor
from dynamics import (
    DynamicsSpec,
    Rule,
    Scheme,
    expected_step_operator,
    pair_distribution,
    sample_actions,
    step_consensus,
    transition,
    trial_stream,
)
from graph import GraphModel, expected_trajectory, random_graph, read_graph
from main import prepare_config
from montecarlo import ExperimentPlan, run_experiment, run_trial, sweep_p0
from processors import ExperimentProcessor
from reports import write_trials_csv

HK4_FILE = str(Path(__file__).parent / "configs" / "graphs" / "hk4.txt")
HK4_PI = np.array([3 / 14, 2 / 7, 2 / 7, 3 / 14])
ER20 = {"model": "er:20:0.3", "seed": 11}
WORKERS = max(1, min(4, os.cpu_count() or 1))

PROCESSOR = ExperimentProcessor()


def _plan(graph: Dict[str, Any], dynamics: Dict[str, Any], **top: Any) -> ExperimentPlan:
    """Plan construido por el mismo camino que la CLI (validación y valores por defecto)."""
    data = {"graph": graph, "dynamics": dynamics, "trials": 100, "master_seed": 2024, **top}
    return PROCESSOR.build_plan(prepare_config(data))


def _herd1_frequency_check(plan: ExperimentPlan, expected: float, tolerance: float):
    summary, _ = run_experiment(plan, WORKERS)
    assert summary.polarized_count == 0
    assert summary.unresolved_count == 0
    assert abs(summary.herd1_freq - expected) <= tolerance, (summary.herd1_freq, expected)
    return summary


# --- probabilidad de rebaño igual a q(0) ---

@pytest.mark.slow
@pytest.mark.parametrize("p0", [0.2, 0.5, 0.8])
def test_herd_probability_equals_initial_belief(p0):
    plan = _plan(ER20, {"rule": "consensus", "alpha": 0.3}, trials=5000, epsilon=1e-6, init={"mode": "constant", "p0": p0})
    _herd1_frequency_check(plan, p0, 3 * np.sqrt(p0 * (1 - p0) / 5000))


def test_herd_probability_smoke():
    plan = _plan(ER20, {"rule": "consensus", "alpha": 0.3}, trials=400, epsilon=1e-3, init={"mode": "constant", "p0": 0.5})
    _herd1_frequency_check(plan, 0.5, 4 * np.sqrt(0.25 / 400))


@pytest.mark.parametrize(
    "trials, tolerance",
    [pytest.param(5000, 0.02, marks=pytest.mark.slow), (2000, 0.035)],
    ids=["full", "smoke"],
)
def test_herd_probability_uses_stationary_weights(trials, tolerance):
    plan = _plan(
        {"file": HK4_FILE},
        {"rule": "consensus", "alpha": 0.3},
        trials=trials,
        init={"mode": "explicit", "vector": [1.0, 0.0, 0.0, 1.0]},
    )
    assert plan.pi.pi @ np.array([1.0, 0.0, 0.0, 1.0]) == pytest.approx(3 / 7)
    summary = _herd1_frequency_check(plan, 3 / 7, tolerance)
    # Distinguible de la media simple 1ᵀx(0)/N = 0.5.
    assert summary.herd1_freq + summary.herd1_ci < 0.5


# --- dinámica media ---

def test_mean_dynamics_follow_lazy_matrix():
    g = read_graph(HK4_FILE)
    x0 = np.array([0.2, 0.9, 0.4, 0.6])
    rng = trial_stream(31, 0)
    x = np.tile(x0, (10_000, 1))
    for t in range(1, 201):
        x = step_consensus(x, sample_actions(x, rng), g, 0.3)
        if t == 10:
            np.testing.assert_allclose(x.mean(axis=0), expected_trajectory(g, 0.3, x0, 10), atol=0.02)
    q0 = float(HK4_PI @ x0)
    np.testing.assert_allclose(x.mean(axis=0), q0, atol=0.02)


def test_martingale_drift_and_variance():
    plan = _plan(ER20, {"rule": "consensus", "alpha": 0.3})
    g, pi = plan.graph, plan.pi.pi
    rng = trial_stream(40, 0)
    for x in rng.uniform(0.05, 0.95, size=(5, g.n)):
        siguientes = step_consensus(x, sample_actions(x, rng, size=100_000), g, 0.3)
        dq = siguientes @ pi - pi @ x
        se = dq.std(ddof=1) / np.sqrt(len(dq))
        assert abs(dq.mean()) <= 5 * se
        analitica = 0.3**2 * np.sum(pi**2 * x * (1 - x))
        assert dq.var(ddof=1) == pytest.approx(analitica, rel=0.02)


# --- media y varianza del punto límite ---

@pytest.mark.parametrize(
    "trials, mean_tol, var_tol",
    [pytest.param(5000, 0.02, 0.03, marks=pytest.mark.slow), (500, 0.06, 0.08)],
    ids=["full", "smoke"],
)
def test_limit_mean_and_variance_sweep(trials, mean_tol, var_tol):
    plan = _plan(
        {"model": "complete:5"}, {"rule": "consensus", "alpha": 0.5}, trials=trials, epsilon=1e-3
    )
    filas = sweep_p0(plan, [0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8], WORKERS)
    for fila in filas:
        assert abs(fila.mean_final - fila.p0) <= mean_tol
        assert abs(fila.var_final - fila.p0 * (1 - fila.p0)) <= var_tol


# --- confianza acotada en 4 nodos ---

@pytest.mark.parametrize("steps", [pytest.param(100_000, marks=pytest.mark.slow), 10_000], ids=["full", "smoke"])
def test_bounded_confidence_fluctuates_without_converging(steps):
    burn_in = 100
    plan = _plan(
        {"file": HK4_FILE},
        {"rule": "bounded_confidence", "alpha": 0.3, "tau": 0.25},
        trials=1,
        max_steps=burn_in + steps,
        sample_every=1,
        trajectory_trials=1,
        init={"mode": "explicit", "vector": [0.0, 0.45, 0.55, 1.0]},
    )
    outcome = run_trial(plan, 0)
    assert outcome.steps == burn_in + steps
    assert outcome.absorption is AbsorptionClass.UNRESOLVED

    x = outcome.belief_samples[burn_in:]
    assert np.all(x[:, 0] == 0.0) and np.all(x[:, 3] == 1.0)
    assert np.all((x[:, 1] > 0.25) & (x[:, 1] < 0.5))
    assert np.all((x[:, 2] > 0.5) & (x[:, 2] < 0.75))
    report = fluctuation_monitor(x, window=1000)
    assert report.nonconvergent(1e-3)[1]


# --- refuerzo: rebaño o polarización ---

@pytest.mark.slow
def test_reinforcement_herds_or_polarizes():
    plan = _plan(ER20, {"rule": "reinforcement", "alpha": 0.3}, trials=1000, epsilon=1e-3, master_seed=5)
    summary, _ = run_experiment(plan, WORKERS)
    assert summary.unresolved_count <= 10
    assert summary.herd0_count > 0 and summary.herd1_count > 0 and summary.polarized_count > 0


def test_reinforcement_smoke():
    plan = _plan(ER20, {"rule": "reinforcement", "alpha": 0.3}, trials=100, epsilon=1e-3, master_seed=5)
    summary, _ = run_experiment(plan, WORKERS)
    assert summary.unresolved_count <= 1
    assert summary.herd0_count + summary.herd1_count + summary.polarized_count >= 99


# --- chismorreo por pares desde 0.9 ---

@pytest.mark.parametrize(
    "trials, tolerance", [pytest.param(2000, 0.02, marks=pytest.mark.slow), (300, 0.055)], ids=["full", "smoke"]
)
def test_pairwise_gossip_herds_to_zero_one_time_in_ten(trials, tolerance):
    plan = _plan(
        {"model": "er:10:0.4", "seed": 3},
        {"rule": "random_interactions", "scheme": "pairwise_gossip", "alpha": 0.3},
        trials=trials,
        epsilon=1e-3,
        master_seed=90,
        init={"mode": "constant", "p0": 0.9},
    )
    summary, _ = run_experiment(plan, WORKERS)
    resueltos = trials - summary.unresolved_count - summary.failed_count
    assert abs(summary.herd0_count / resueltos - 0.1) <= tolerance


# --- equivalencia con el oráculo exacto ---

TRIANGLE = random_graph(3, GraphModel("complete"))
ORACLE_SPECS = [
    DynamicsSpec(rule=Rule.CONSENSUS, alpha=0.3),
    DynamicsSpec(rule=Rule.RANDOM_INTERACTIONS, alpha=0.3, scheme=Scheme.PAIRWISE_GOSSIP, frozen_bystanders=False),
    DynamicsSpec(rule=Rule.RANDOM_INTERACTIONS, alpha=0.3, scheme=Scheme.EDGE_SAMPLING, edge_p=0.5),
    DynamicsSpec(rule=Rule.BOUNDED_CONFIDENCE, alpha=0.3, tau=0.4),
    DynamicsSpec(rule=Rule.REINFORCEMENT, alpha=0.3),
]


@pytest.mark.parametrize("samples", [pytest.param(1_000_000, marks=pytest.mark.slow), 20_000], ids=["full", "smoke"])
@pytest.mark.parametrize("spec", ORACLE_SPECS, ids=lambda s: f"{s.rule.value}-{s.scheme.value if s.scheme else ''}")
def test_sampled_steps_match_oracle(spec, samples):
    x = np.array([0.3, 0.6, 0.8])
    rng = trial_stream(77, 0)
    siguientes = np.array([transition(x, spec, TRIANGLE, rng) for _ in range(samples)])
    resultado = chi_square_against_oracle(siguientes, enumerate_next_state(x, spec, TRIANGLE))
    assert resultado.p_value > 0.001


@pytest.mark.parametrize("spec", [s for s in ORACLE_SPECS if s.rule is not Rule.BOUNDED_CONFIDENCE])
def test_oracle_means_match_closed_forms(spec):
    x = np.array([0.3, 0.6, 0.8])
    media = enumerate_next_state(x, spec, TRIANGLE).mean()
    if spec.rule is Rule.REINFORCEMENT:
        esperado = x.copy()
        for (n, k), p in pair_distribution(TRIANGLE):
            esperado[n] += p * spec.alpha * x[n] * (1 - x[n]) * (2 * x[k] - 1)
    else:
        esperado = expected_step_operator(TRIANGLE, spec) @ x
    np.testing.assert_allclose(media, esperado, atol=1e-12)


# --- determinismo ---

def test_trials_csv_independent_of_workers(tmp_path):
    plan = _plan({"file": HK4_FILE}, {"rule": "consensus", "alpha": 0.3}, trials=200, init={"mode": "explicit", "vector": [1.0, 0.0, 0.0, 1.0]})
    _, serial = run_experiment(plan, 1)
    _, paralelo = run_experiment(plan, 3)
    write_trials_csv(serial, tmp_path / "serial.csv")
    write_trials_csv(paralelo, tmp_path / "paralelo.csv")
    assert (tmp_path / "serial.csv").read_bytes() == (tmp_path / "paralelo.csv").read_bytes()
