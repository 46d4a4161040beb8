"""
Orquestación de experimentos Monte Carlo: ensayos individuales, experimentos
completos sobre un pool de procesos, barridos de p0 y diagnósticos de un paso.

Cada ensayo usa su propio flujo aleatorio derivado de (master_seed, trial_id),
por lo que el resultado no depende del número de procesos ni del orden.
"""
import logging
import os
from concurrent.futures import TimeoutError
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pebble import ProcessPool

from analysis import (
    AbsorptionClass,
    chi_square_against_oracle,
    classify,
    delta_q_conditional_variance,
    drift_statistics,
    enumerate_next_state,
    herd_probability_estimate,
    weighted_average,
)
from dynamics import DynamicsSpec, Rule, transition, trial_stream
from errors import ConfigValidationError, TooLargeError
from graph import StationaryDistribution, WeightedGraph

logger = logging.getLogger(__name__)

TRIAL_TIMEOUT_SECONDS = int(os.getenv("HERDSIM_TRIAL_TIMEOUT_SECONDS", "3600"))
CHUNKS_PER_WORKER = int(os.getenv("HERDSIM_CHUNKS_PER_WORKER", "4"))
# Clave de flujo reservada para los estados de diagnóstico; se usa con una tercera
# palabra no nula, porque SeedSequence rellena con ceros y [m, k, 0] equivale a [m, k].
DIAGNOSE_STREAM_KEY = 0xD1A6


class InitMode(str, Enum):
    CONSTANT = "constant"
    IID_UNIFORM_MEAN = "iid_uniform_mean"
    EXPLICIT = "explicit"


class TrialStatus(str, Enum):
    OK = "ok"
    FAILED = "failed"


@dataclass(frozen=True)
class InitSpec:
    mode: InitMode
    p0: Optional[float] = None
    vector: Optional[Tuple[float, ...]] = None

    def draw(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """x(0) según el modo; consume el flujo solo en iid_uniform_mean."""
        if self.mode is InitMode.CONSTANT:
            return np.full(n, float(self.p0))
        if self.mode is InitMode.IID_UNIFORM_MEAN:
            # Uniforme en [max(0, 2p0−1), min(1, 2p0)], de media p0.
            low, high = max(0.0, 2.0 * self.p0 - 1.0), min(1.0, 2.0 * self.p0)
            return rng.uniform(low, high, size=n)
        return np.array(self.vector, dtype=float)


@dataclass(frozen=True)
class ExperimentPlan:
    """Experimento listo para ejecutar: grafo cargado, dinámica y parámetros."""
    graph: WeightedGraph = field(repr=False)
    dynamics: DynamicsSpec
    init: InitSpec
    pi: StationaryDistribution = field(repr=False)
    trials: int
    max_steps: int
    epsilon: float
    master_seed: int
    sample_every: int
    trajectory_trials: int = 0


@dataclass
class TrialOutcome:
    trial_id: int
    seed: int
    absorption: AbsorptionClass
    steps: int
    q0: float
    q_final: float
    final_beliefs: np.ndarray = field(repr=False)
    # Pasos de la malla de muestreo (0, múltiplos de sample_every y el último).
    sample_times: np.ndarray = field(repr=False)
    # q_samples[t] = q(t) para t = 0..steps.
    q_samples: np.ndarray = field(repr=False)
    belief_samples: Optional[np.ndarray] = field(default=None, repr=False)
    status: TrialStatus = TrialStatus.OK
    error: Optional[str] = None

    @classmethod
    def failed(cls, trial_id: int, master_seed: int, error: str) -> "TrialOutcome":
        vacio = np.empty(0)
        return cls(
            trial_id=trial_id,
            seed=stream_seed(master_seed, trial_id),
            absorption=AbsorptionClass.UNRESOLVED,
            steps=0,
            q0=float("nan"),
            q_final=float("nan"),
            final_beliefs=vacio,
            sample_times=vacio.astype(int),
            q_samples=vacio,
            status=TrialStatus.FAILED,
            error=error,
        )


@dataclass(frozen=True)
class ExperimentSummary:
    trials: int
    herd1_freq: Optional[float]
    herd1_ci: Optional[float]
    mean_final_belief: Optional[float]
    var_final_belief: Optional[float]
    mean_q0: Optional[float]
    herd0_count: int
    herd1_count: int
    polarized_count: int
    unresolved_count: int
    failed_count: int
    epsilon: float
    max_steps: int

    def to_dict(self) -> Dict[str, Any]:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass(frozen=True)
class SweepRow:
    p0: float
    mean_final: Optional[float]
    var_final: Optional[float]
    herd1_freq: Optional[float]
    ci: Optional[float]


@dataclass
class DiagnosticsReport:
    states: pd.DataFrame
    drift: pd.DataFrame
    variance: pd.DataFrame
    oracle: Optional[pd.DataFrame] = None


def stream_seed(master_seed: int, trial_id: int) -> int:
    """Identificador de 64 bits del flujo del ensayo (columna `seed` de trials.csv)."""
    state = np.random.SeedSequence([int(master_seed), int(trial_id)]).generate_state(1, dtype=np.uint64)
    return int(state[0])


def run_trial(plan: ExperimentPlan, trial_id: int) -> TrialOutcome:
    g, spec, eps = plan.graph, plan.dynamics, plan.epsilon
    rng = trial_stream(plan.master_seed, trial_id)
    x = plan.init.draw(g.n, rng)

    record = trial_id < plan.trajectory_trials
    # q(t) en cada paso; x(t) completo solo en la malla de muestreo de los ensayos con trayectoria.
    qs = [weighted_average(plan.pi, x)]
    times = [0]
    beliefs = [x.copy()] if record else None

    t = 0
    absorption = classify(x, eps)
    while absorption is AbsorptionClass.UNRESOLVED and t < plan.max_steps:
        x = transition(x, spec, g, rng)
        t += 1
        qs.append(weighted_average(plan.pi, x))
        if t % plan.sample_every == 0:
            times.append(t)
            if record:
                beliefs.append(x.copy())
        absorption = classify(x, eps)

    if times[-1] != t:
        times.append(t)
        if record:
            beliefs.append(x.copy())

    logger.debug(f"Ensayo {trial_id}: {absorption.value} en {t} pasos")
    return TrialOutcome(
        trial_id=trial_id,
        seed=stream_seed(plan.master_seed, trial_id),
        absorption=absorption,
        steps=t,
        q0=qs[0],
        q_final=qs[-1],
        final_beliefs=x,
        sample_times=np.array(times),
        q_samples=np.array(qs),
        belief_samples=np.array(beliefs) if record else None,
    )


# --- Funciones a nivel de módulo para ProcessPool ---
# El pool necesita funciones importables a nivel superior del módulo.

def _run_trial_safe(plan: ExperimentPlan, trial_id: int) -> TrialOutcome:
    try:
        return run_trial(plan, trial_id)
    except Exception as e:
        logger.error(f"❌ Error en el ensayo {trial_id}: {e}")
        return TrialOutcome.failed(trial_id, plan.master_seed, str(e))


def _run_chunk(plan: ExperimentPlan, trial_ids: Sequence[int]) -> List[TrialOutcome]:
    return [_run_trial_safe(plan, trial_id) for trial_id in trial_ids]


def _chunks(trials: int, workers: int) -> List[List[int]]:
    partes = max(1, min(trials, workers * CHUNKS_PER_WORKER))
    return [chunk.tolist() for chunk in np.array_split(np.arange(trials), partes)]


def summarize(outcomes: Sequence[TrialOutcome], epsilon: float, max_steps: int) -> ExperimentSummary:
    """Agrega ensayos; el resultado no depende del orden de `outcomes`."""
    ordenados = sorted(outcomes, key=lambda o: o.trial_id)
    ok = [o for o in ordenados if o.status is TrialStatus.OK]
    clases = [o.absorption for o in ok]

    herd1_freq = herd1_ci = None
    if any(c.resolved for c in clases):
        estimate = herd_probability_estimate(clases)
        herd1_freq, herd1_ci = estimate.p_hat, estimate.ci_halfwidth

    finales = np.array([o.q_final for o in ok])
    iniciales = np.array([o.q0 for o in ok])
    return ExperimentSummary(
        trials=len(ordenados),
        herd1_freq=herd1_freq,
        herd1_ci=herd1_ci,
        mean_final_belief=float(finales.mean()) if len(ok) else None,
        var_final_belief=float(finales.var()) if len(ok) else None,
        mean_q0=float(iniciales.mean()) if len(ok) else None,
        herd0_count=clases.count(AbsorptionClass.HERD0),
        herd1_count=clases.count(AbsorptionClass.HERD1),
        polarized_count=clases.count(AbsorptionClass.POLARIZED),
        unresolved_count=clases.count(AbsorptionClass.UNRESOLVED),
        failed_count=len(ordenados) - len(ok),
        epsilon=epsilon,
        max_steps=max_steps,
    )


def run_experiment(plan: ExperimentPlan, workers: int = 1) -> Tuple[ExperimentSummary, List[TrialOutcome]]:
    logger.info(
        f"🚀 Experimento: {plan.trials} ensayos, regla {plan.dynamics.rule.value}, "
        f"n={plan.graph.n}, procesos={workers}"
    )
    outcomes: List[TrialOutcome] = []

    if workers <= 1:
        outcomes = _run_chunk(plan, range(plan.trials))
    else:
        with ProcessPool(max_workers=workers) as pool:
            future_to_chunk = {
                pool.schedule(_run_chunk, args=(plan, chunk), timeout=TRIAL_TIMEOUT_SECONDS): chunk
                for chunk in _chunks(plan.trials, workers)
            }
            for i, future in enumerate(future_to_chunk.keys()):
                chunk = future_to_chunk[future]
                try:
                    outcomes.extend(future.result())
                except TimeoutError:
                    logger.error(
                        f"❌ El bloque de ensayos {chunk[0]}-{chunk[-1]} excedió el tiempo límite de "
                        f"{TRIAL_TIMEOUT_SECONDS}s y fue terminado."
                    )
                    outcomes.extend(TrialOutcome.failed(t, plan.master_seed, "timeout") for t in chunk)
                except Exception as e:
                    logger.error(f"❌ Error en el bloque de ensayos {chunk[0]}-{chunk[-1]}: {e}")
                    outcomes.extend(TrialOutcome.failed(t, plan.master_seed, str(e)) for t in chunk)
                logger.debug(f"Bloque {i + 1}/{len(future_to_chunk)} completado")

    outcomes.sort(key=lambda o: o.trial_id)
    summary = summarize(outcomes, plan.epsilon, plan.max_steps)
    if summary.failed_count:
        logger.warning(f"⚠️ {summary.failed_count} ensayos fallaron.")
    logger.info(
        f"✅ Experimento terminado: Herd1={summary.herd1_count}, Herd0={summary.herd0_count}, "
        f"Polarized={summary.polarized_count}, Unresolved={summary.unresolved_count}"
    )
    return summary, outcomes


def sweep_p0(plan: ExperimentPlan, p0_grid: Sequence[float], workers: int = 1) -> List[SweepRow]:
    """Un experimento por valor de p0; el modo de inicialización se conserva."""
    if plan.init.mode is InitMode.EXPLICIT:
        raise ConfigValidationError("init.mode", "el barrido de p0 no admite x(0) explícito.")
    for p0 in p0_grid:
        if not 0.0 <= p0 <= 1.0:
            raise ConfigValidationError("p0", f"los valores del barrido deben estar en [0, 1], se recibió {p0}.")

    filas = []
    for p0 in p0_grid:
        summary, _ = run_experiment(replace(plan, init=replace(plan.init, p0=float(p0))), workers)
        filas.append(
            SweepRow(
                p0=float(p0),
                mean_final=summary.mean_final_belief,
                var_final=summary.var_final_belief,
                herd1_freq=summary.herd1_freq,
                ci=summary.herd1_ci,
            )
        )
    return filas


# --- Diagnósticos de un paso ---

def diagnostic_states(plan: ExperimentPlan, count: int, rng: np.random.Generator) -> np.ndarray:
    """Estados de prueba: x = 0, x = 1, x(0) del plan y `count` estados dispersos."""
    n = plan.graph.n
    fijos = [np.zeros(n), np.ones(n), plan.init.draw(n, rng)]
    dispersos = rng.uniform(0.05, 0.95, size=(count, n))
    return np.vstack(fijos + [dispersos])


def run_diagnostics(plan: ExperimentPlan, samples: int, states: int, oracle: bool = False) -> DiagnosticsReport:
    """
    Deriva de Δq, varianza condicional (analítica, enumerada y muestreada) y,
    con `oracle`, chi-cuadrado de los estados muestreados contra la ley exacta.
    """
    g, spec = plan.graph, plan.dynamics
    if oracle and g.n > 12:
        raise TooLargeError(f"El modo oráculo admite hasta 12 agentes; el grafo tiene {g.n}.")
    enumerable = g.n <= 12
    pi = plan.pi.pi
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([plan.master_seed, DIAGNOSE_STREAM_KEY, 1])))
    estados = diagnostic_states(plan, states, rng)

    filas_estados, filas_deriva, filas_varianza, filas_oraculo = [], [], [], []
    for state_id, x in enumerate(estados):
        q = weighted_average(pi, x)
        siguientes = np.array([transition(x, spec, g, rng) for _ in range(samples)])
        dq = siguientes @ pi - q
        deriva = drift_statistics(dq)

        analitica = (
            delta_q_conditional_variance(pi, x, spec.alpha) if spec.rule is Rule.CONSENSUS else float("nan")
        )
        enumerada = exacta = float("nan")
        if enumerable:
            distribucion = enumerate_next_state(x, spec, g)
            media, enumerada = distribucion.weighted_moments(pi)
            exacta = media - q
            if oracle:
                chi = chi_square_against_oracle(siguientes, distribucion)
                filas_oraculo.append(
                    {"state_id": state_id, "outcomes": chi.outcomes, "chi2": chi.chi2, "dof": chi.dof, "p_value": chi.p_value}
                )

        referencia = enumerada if enumerable else float(dq.var(ddof=1))
        rel_err = (
            abs(analitica - referencia) / referencia if referencia > 0 else abs(analitica - referencia)
        )
        filas_estados.append({"state_id": state_id, "q": q, **{f"x{i}": v for i, v in enumerate(x)}})
        filas_deriva.append(
            {
                "state_id": state_id,
                "q": q,
                "mean_dq": deriva.mean,
                "se": deriva.standard_error,
                "z": deriva.z,
                "samples": deriva.count,
                "exact_drift": exacta,
            }
        )
        filas_varianza.append(
            {
                "state_id": state_id,
                "analytic": analitica,
                "enumerated": enumerada,
                "sampled": float(dq.var(ddof=1)),
                "rel_err": rel_err,
            }
        )

    logger.info(f"🔎 Diagnóstico completado sobre {len(estados)} estados con {samples} muestras cada uno")
    return DiagnosticsReport(
        states=pd.DataFrame(filas_estados),
        drift=pd.DataFrame(filas_deriva),
        variance=pd.DataFrame(filas_varianza),
        oracle=pd.DataFrame(filas_oraculo) if oracle else None,
    )
