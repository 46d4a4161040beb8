"""
Diagnósticos estadísticos: promedio ponderado q(t) = πᵀx(t), varianza condicional
de Δq, clasificación de absorción, oráculo de enumeración exacta y estimadores
sobre los resultados de los ensayos.
"""
import logging
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from itertools import product
from typing import Dict, Iterable, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from scipy import stats

from dynamics import (
    DynamicsSpec,
    Rule,
    Scheme,
    bc_gate_probability,
    edge_sampling_interaction,
    pair_distribution,
    pairwise_interaction,
    step_bounded_confidence,
    step_consensus,
    step_random_interactions,
    step_reinforcement,
)
from errors import (
    AnalysisError,
    DimensionMismatchError,
    NoEdgesError,
    NoResolvedTrialsError,
    TooLargeError,
    TooShortError,
)
from graph import Alpha, StationaryDistribution, WeightedGraph, validate_alpha

logger = logging.getLogger(__name__)

ENUMERATION_LIMIT = 12
# Decimales con que se agrupan estados idénticos en el oráculo.
STATE_DECIMALS = 12
MIN_EXPECTED_COUNT = 5.0


class AbsorptionClass(str, Enum):
    HERD0 = "Herd0"
    HERD1 = "Herd1"
    POLARIZED = "Polarized"
    UNRESOLVED = "Unresolved"

    @property
    def resolved(self) -> bool:
        return self is not AbsorptionClass.UNRESOLVED


@dataclass(frozen=True)
class NextStateDistribution:
    """Ley finita de x(t+1): un estado por fila y su probabilidad."""
    states: np.ndarray
    probabilities: np.ndarray

    def __len__(self) -> int:
        return len(self.probabilities)

    def mean(self) -> np.ndarray:
        return self.probabilities @ self.states

    def keys(self) -> List[Tuple[float, ...]]:
        return [state_key(s) for s in self.states]

    def weighted_moments(self, pi: np.ndarray) -> Tuple[float, float]:
        """Media y varianza de πᵀx(t+1)."""
        q = self.states @ pi
        media = float(self.probabilities @ q)
        return media, float(self.probabilities @ (q - media) ** 2)


@dataclass(frozen=True)
class MartingaleDiagnostics:
    q_trajectory: np.ndarray
    drift_estimates: np.ndarray
    conditional_variances: np.ndarray


@dataclass(frozen=True)
class DriftStatistics:
    mean: float
    standard_error: float
    z: float
    count: int


@dataclass(frozen=True)
class HerdProbability:
    p_hat: float
    ci_halfwidth: float
    herd1: int
    resolved: int
    unresolved: int


@dataclass(frozen=True)
class ChiSquareResult:
    chi2: float
    dof: int
    p_value: float
    outcomes: int


@dataclass(frozen=True)
class FluctuationReport:
    minimum: np.ndarray
    maximum: np.ndarray
    rolling_std: np.ndarray = field(repr=False)

    def min_rolling_std(self) -> np.ndarray:
        return self.rolling_std.min(axis=0)

    def nonconvergent(self, threshold: float) -> np.ndarray:
        """Por agente: verdadero si toda ventana tiene desviación mayor que el umbral."""
        return self.min_rolling_std() > threshold


def _pi_vector(pi: Union[StationaryDistribution, np.ndarray]) -> np.ndarray:
    return pi.pi if isinstance(pi, StationaryDistribution) else np.asarray(pi, dtype=float)


def state_key(x: np.ndarray) -> Tuple[float, ...]:
    return tuple(np.round(np.asarray(x, dtype=float), STATE_DECIMALS).tolist())


def weighted_average(pi: Union[StationaryDistribution, np.ndarray], x: np.ndarray) -> float:
    pi = _pi_vector(pi)
    x = np.asarray(x, dtype=float)
    if pi.shape != x.shape:
        raise DimensionMismatchError(f"π tiene forma {pi.shape} y x tiene forma {x.shape}.")
    return min(max(float(pi @ x), 0.0), 1.0)


def delta_q_conditional_variance(pi: Union[StationaryDistribution, np.ndarray], x: np.ndarray, alpha: Alpha) -> float:
    """Var(Δq | x) = Σ_n α_n² π_n² x_n(1 − x_n)."""
    pi = _pi_vector(pi)
    x = np.asarray(x, dtype=float)
    alpha = validate_alpha(alpha, len(pi))
    return float(np.sum((alpha * pi) ** 2 * x * (1.0 - x)))


def classify(x: np.ndarray, epsilon: float) -> AbsorptionClass:
    if not 0.0 < epsilon < 0.5:
        raise AnalysisError(f"ε debe estar en (0, 0.5), se recibió {epsilon}.")
    x = np.asarray(x, dtype=float)
    bajos = x < epsilon
    altos = x > 1.0 - epsilon
    if bajos.all():
        return AbsorptionClass.HERD0
    if altos.all():
        return AbsorptionClass.HERD1
    if (bajos | altos).all():
        return AbsorptionClass.POLARIZED
    return AbsorptionClass.UNRESOLVED


def _action_law(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Todos los vectores de acción con probabilidad positiva y su probabilidad."""
    n = len(x)
    acciones = ((np.arange(2**n)[:, None] >> np.arange(n)) & 1).astype(float)
    probs = np.prod(np.where(acciones == 1, x, 1.0 - x), axis=1)
    soporte = probs > 0
    return acciones[soporte], probs[soporte]


def _merge(outcomes: Iterable[Tuple[np.ndarray, float]]) -> NextStateDistribution:
    acumulado: Dict[Tuple[float, ...], List] = {}
    for state, prob in outcomes:
        if prob == 0:
            continue
        key = state_key(state)
        if key in acumulado:
            acumulado[key][1] += prob
        else:
            acumulado[key] = [np.asarray(state, dtype=float), prob]
    states = np.array([v[0] for v in acumulado.values()])
    probs = np.array([v[1] for v in acumulado.values()])
    return NextStateDistribution(states=states, probabilities=probs)


def enumerate_next_state(
    x: np.ndarray,
    spec: DynamicsSpec,
    g: WeightedGraph,
    pair: Optional[Tuple[int, int]] = None,
) -> NextStateDistribution:
    """
    Ley exacta de x(t+1) dada x(t): enumera los 2^N vectores de acción y, según
    la regla, los pares (refuerzo) o el soporte finito de W(t) (interacciones
    aleatorias). Con `pair` el refuerzo se condiciona a ese par.
    """
    x = np.asarray(x, dtype=float)
    if g.n > ENUMERATION_LIMIT:
        raise TooLargeError(f"La enumeración exacta admite hasta {ENUMERATION_LIMIT} agentes, se recibieron {g.n}.")
    if x.shape != (g.n,):
        raise DimensionMismatchError(f"Se esperaban {g.n} agentes, se recibió forma {x.shape}.")

    if spec.rule is Rule.REINFORCEMENT:
        pares = [(pair, 1.0)] if pair is not None else pair_distribution(g, spec.pair_selection)
        outcomes = []
        for (n, k), p_pair in pares:
            for a_n, a_k in product((0.0, 1.0), repeat=2):
                p = p_pair * (x[n] if a_n else 1.0 - x[n]) * (x[k] if a_k else 1.0 - x[k])
                outcomes.append((step_reinforcement(x, (n, k), a_n, a_k, spec.alpha), p))
        return _merge(outcomes)

    acciones, probs = _action_law(x)

    if spec.rule is Rule.CONSENSUS:
        siguientes = step_consensus(x, acciones, g, spec.alpha)
        return _merge(zip(siguientes, probs))

    if spec.rule is Rule.BOUNDED_CONFIDENCE:
        siguientes = step_bounded_confidence(x, acciones, g, spec.alpha, spec.tau)
        return _merge(zip(siguientes, probs))

    edges = g.undirected_edges
    if len(edges) == 0:
        raise NoEdgesError("El grafo no tiene aristas entre agentes distintos.")
    if spec.scheme is Scheme.PAIRWISE_GOSSIP:
        soporte = [(pairwise_interaction(g, int(n), int(k)), 1.0 / len(edges)) for n, k in edges]
    else:
        if len(edges) > ENUMERATION_LIMIT:
            raise TooLargeError(f"El muestreo de aristas con {len(edges)} aristas excede el límite de enumeración.")
        soporte = []
        for keep in product((False, True), repeat=len(edges)):
            keep = np.array(keep)
            p = float(np.prod(np.where(keep, spec.edge_p, 1.0 - spec.edge_p)))
            if p > 0:
                soporte.append((edge_sampling_interaction(g, keep), p))

    outcomes = []
    for w_t, p_w in soporte:
        siguientes = step_random_interactions(x, acciones, w_t, spec.alpha, spec.frozen_bystanders)
        outcomes.extend(zip(siguientes, p_w * probs))
    return _merge(outcomes)


def herd_probability_estimate(
    outcomes: Iterable[Union[AbsorptionClass, str]], confidence: float = 0.99
) -> HerdProbability:
    """p̂ = #Herd1 / #resueltos con semiancho del intervalo de Wilson."""
    conteo = Counter(AbsorptionClass(o) for o in outcomes)
    unresolved = conteo[AbsorptionClass.UNRESOLVED]
    resolved = sum(conteo.values()) - unresolved
    if resolved == 0:
        raise NoResolvedTrialsError("Ningún ensayo quedó resuelto; no se puede estimar la probabilidad de rebaño.")

    herd1 = conteo[AbsorptionClass.HERD1]
    p_hat = herd1 / resolved
    z = stats.norm.ppf(0.5 + confidence / 2.0)
    denom = 1.0 + z**2 / resolved
    half = z * np.sqrt(p_hat * (1.0 - p_hat) / resolved + z**2 / (4.0 * resolved**2)) / denom
    return HerdProbability(
        p_hat=p_hat, ci_halfwidth=float(half), herd1=herd1, resolved=resolved, unresolved=unresolved
    )


def fluctuation_monitor(trajectory: np.ndarray, window: int) -> FluctuationReport:
    """Envolvente por agente y desviación estándar móvil sobre ventanas deslizantes."""
    trajectory = np.asarray(trajectory, dtype=float)
    if trajectory.ndim != 2:
        raise AnalysisError(f"Se esperaba una trayectoria (T, N), se recibió forma {trajectory.shape}.")
    if window < 1 or len(trajectory) < window:
        raise TooShortError(f"La trayectoria tiene {len(trajectory)} muestras; la ventana requiere {window}.")

    rolling = pd.DataFrame(trajectory).rolling(window).std(ddof=0).iloc[window - 1:]
    return FluctuationReport(
        minimum=trajectory.min(axis=0),
        maximum=trajectory.max(axis=0),
        rolling_std=rolling.to_numpy(),
    )


def martingale_diagnostics(
    pi: Union[StationaryDistribution, np.ndarray], states: np.ndarray, alpha: Alpha
) -> MartingaleDiagnostics:
    """q(t), incrementos Δq(t) y Var(Δq | x(t)) analítica a lo largo de una trayectoria."""
    pi = _pi_vector(pi)
    states = np.asarray(states, dtype=float)
    q = np.clip(states @ pi, 0.0, 1.0)
    varianzas = np.array([delta_q_conditional_variance(pi, x, alpha) for x in states[:-1]])
    return MartingaleDiagnostics(q_trajectory=q, drift_estimates=np.diff(q), conditional_variances=varianzas)


def drift_statistics(samples: np.ndarray) -> DriftStatistics:
    samples = np.asarray(samples, dtype=float)
    if len(samples) < 2:
        raise TooShortError("Se requieren al menos dos muestras de Δq.")
    media = float(samples.mean())
    se = float(samples.std(ddof=1) / np.sqrt(len(samples)))
    z = media / se if se > 0 else (0.0 if media == 0 else float("inf"))
    return DriftStatistics(mean=media, standard_error=se, z=z, count=len(samples))


def chi_square_against_oracle(samples: np.ndarray, oracle: NextStateDistribution) -> ChiSquareResult:
    """Bondad de ajuste de estados muestreados contra la ley exacta; celdas con esperado < 5 se agrupan."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    indice = {key: i for i, key in enumerate(oracle.keys())}
    observados = np.zeros(len(oracle))
    for s in samples:
        key = state_key(s)
        if key not in indice:
            raise AnalysisError(f"Estado muestreado fuera del soporte exacto: {key}")
        observados[indice[key]] += 1

    total = len(samples)
    esperados = oracle.probabilities / oracle.probabilities.sum() * total
    chicas = esperados < MIN_EXPECTED_COUNT
    if chicas.any():
        observados = np.append(observados[~chicas], observados[chicas].sum())
        esperados = np.append(esperados[~chicas], esperados[chicas].sum())

    if len(esperados) < 2:
        return ChiSquareResult(chi2=0.0, dof=0, p_value=1.0, outcomes=len(oracle))
    chi2, p_value = stats.chisquare(observados, esperados)
    return ChiSquareResult(chi2=float(chi2), dof=len(esperados) - 1, p_value=float(p_value), outcomes=len(oracle))


def bc_effective_alpha(x: np.ndarray, g: WeightedGraph, alpha: Alpha, tau: float) -> np.ndarray:
    """α_n(x) = α_n (1 − P_n(x)): tasa efectiva del modelo de confianza acotada."""
    alpha = validate_alpha(alpha, g.n)
    gates = np.array([bc_gate_probability(x, g, tau, n) for n in range(g.n)])
    return alpha * (1.0 - gates)


def final_belief_histogram(values: np.ndarray, bins: int = 20) -> Tuple[np.ndarray, np.ndarray]:
    """Conteos de creencias finales en `bins` intervalos iguales de [0, 1]; devuelve (bordes, conteos)."""
    counts, edges = np.histogram(np.asarray(values, dtype=float), bins=bins, range=(0.0, 1.0))
    return edges, counts


def belief_envelope(states: np.ndarray) -> np.ndarray:
    """Por paso: creencia mínima, máxima y media, como arreglo (T, 3)."""
    states = np.atleast_2d(np.asarray(states, dtype=float))
    return np.column_stack([states.min(axis=1), states.max(axis=1), states.mean(axis=1)])
