"""
Reglas de actualización de creencias guiadas por acciones.

Cada paso es una función pura: recibe x(t) (y la aleatoriedad explícita) y
devuelve x(t+1). Las acciones a(t) se muestrean todas desde x(t) antes de
actualizar (actualización síncrona), salvo el refuerzo, que actualiza un par
por paso.
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Tuple, Union

import numpy as np
from scipy import sparse

from errors import DimensionMismatchError, DynamicsError, NeighborhoodTooLargeError, NoEdgesError
from graph import (
    Alpha,
    LazyMatrix,
    WeightedGraph,
    lazy_matrix,
    validate_alpha,
)

logger = logging.getLogger(__name__)

# Límite de vecinos para las enumeraciones exactas por fila (2^20 combinaciones).
NEIGHBORHOOD_LIMIT = 20


class Rule(str, Enum):
    CONSENSUS = "consensus"
    RANDOM_INTERACTIONS = "random_interactions"
    BOUNDED_CONFIDENCE = "bounded_confidence"
    REINFORCEMENT = "reinforcement"


class Scheme(str, Enum):
    PAIRWISE_GOSSIP = "pairwise_gossip"
    EDGE_SAMPLING = "edge_sampling"


class PairSelection(str, Enum):
    WEIGHTED = "weighted"
    UNIFORM = "uniform"


@dataclass(frozen=True)
class DynamicsSpec:
    """Regla de actualización con sus parámetros (α escalar o por nodo, τ, esquema)."""
    rule: Rule
    alpha: Alpha
    tau: Optional[float] = None
    scheme: Optional[Scheme] = None
    edge_p: float = 1.0
    frozen_bystanders: bool = True
    pair_selection: PairSelection = PairSelection.WEIGHTED

    def __post_init__(self):
        object.__setattr__(self, "rule", Rule(self.rule))
        object.__setattr__(self, "pair_selection", PairSelection(self.pair_selection))
        if self.scheme is not None:
            object.__setattr__(self, "scheme", Scheme(self.scheme))

        if self.rule is Rule.BOUNDED_CONFIDENCE:
            if self.tau is None or not 0.0 < self.tau < 1.0:
                raise DynamicsError(f"bounded_confidence requiere τ en (0, 1), se recibió {self.tau}.")
        if self.rule is Rule.RANDOM_INTERACTIONS:
            if self.scheme is None:
                raise DynamicsError("random_interactions requiere un esquema de interacción.")
            if not 0.0 <= self.edge_p <= 1.0:
                raise DynamicsError(f"edge_p debe estar en [0, 1], se recibió {self.edge_p}.")

    def alpha_for(self, n: int) -> Alpha:
        return validate_alpha(self.alpha, n)


@dataclass(frozen=True)
class SampledInteraction:
    """W(t) de un paso y la máscara de agentes que interactuaron."""
    graph: WeightedGraph
    participants: np.ndarray = field(repr=False)


def trial_stream(master_seed: int, trial_id: int) -> np.random.Generator:
    """Flujo Philox independiente por ensayo, derivado de (semilla maestra, ensayo)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(master_seed), int(trial_id)])))


def _check_state(x: np.ndarray, n: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != n:
        raise DimensionMismatchError(f"Se esperaban {n} agentes, se recibió forma {x.shape}.")
    return x


def _alpha_vector(alpha: Alpha, n: int) -> np.ndarray:
    alpha = validate_alpha(alpha, n)
    return np.full(n, alpha) if np.ndim(alpha) == 0 else np.asarray(alpha)


def social_signal(weights, a: np.ndarray) -> np.ndarray:
    """
    Frecuencia ponderada de la acción 1 entre los vecinos, Σ_k w_nk a_k.

    Se calcula como s1/(s1 + s0) para que un vecindario unánime dé 0 o 1
    exactos; admite un eje de lote inicial en `a`.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        ones = weights @ a
        zeros = weights @ (1.0 - a)
    else:
        ones = (weights @ a.T).T
        zeros = (weights @ (1.0 - a).T).T
    return ones / (ones + zeros)


def sample_actions(x: np.ndarray, rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
    """a_n ~ Bernoulli(x_n), independientes; una variable uniforme por agente en orden."""
    x = np.asarray(x, dtype=float)
    shape = x.shape if size is None else (size,) + x.shape
    return (rng.random(shape) < x).astype(float)


def step_consensus(x: np.ndarray, a: np.ndarray, g: WeightedGraph, alpha: Alpha) -> np.ndarray:
    x = _check_state(x, g.n)
    a = _check_state(a, g.n)
    alpha = _alpha_vector(alpha, g.n)
    s = social_signal(g.weights, a)
    return np.clip(x + alpha * (s - x), 0.0, 1.0)


def pairwise_interaction(g: WeightedGraph, n: int, k: int) -> SampledInteraction:
    """W(t) cuando interactúa el par (n, k): ambas filas promedian sus acciones (CSR)."""
    otros = np.setdiff1d(np.arange(g.n), [n, k])
    rows = np.concatenate([otros, [n, n, k, k]])
    cols = np.concatenate([otros, [n, k, n, k]])
    values = np.concatenate([np.ones(len(otros)), [0.5, 0.5, 0.5, 0.5]])
    participants = np.zeros(g.n, dtype=bool)
    participants[[n, k]] = True
    weights = sparse.csr_array((values, (rows, cols)), shape=(g.n, g.n))
    return SampledInteraction(graph=WeightedGraph(n=g.n, weights=weights), participants=participants)


def edge_sampling_interaction(g: WeightedGraph, keep: np.ndarray) -> SampledInteraction:
    """W(t) conservando las aristas no dirigidas marcadas en `keep` y los lazos propios."""
    edges = g.undirected_edges
    kept = edges[np.asarray(keep, dtype=bool)]
    mask_rows = np.concatenate([np.arange(g.n), kept[:, 0], kept[:, 1]])
    mask_cols = np.concatenate([np.arange(g.n), kept[:, 1], kept[:, 0]])
    mask = sparse.coo_array(
        (np.ones(len(mask_rows)), (mask_rows, mask_cols)), shape=(g.n, g.n)
    ).tocsr()
    mask.data[:] = 1.0

    weights = g.csr.multiply(mask).tocsr()
    sums = np.asarray(weights.sum(axis=1)).ravel()
    aislados = np.flatnonzero(sums == 0)
    diagonal = weights.diagonal()
    participants = sums - diagonal > 0

    weights = sparse.diags_array(np.where(sums > 0, 1.0 / np.where(sums > 0, sums, 1.0), 0.0)) @ weights
    weights = weights + sparse.coo_array(
        (np.ones(len(aislados)), (aislados, aislados)), shape=(g.n, g.n)
    )
    return SampledInteraction(
        graph=WeightedGraph(n=g.n, weights=sparse.csr_array(weights)),
        participants=participants,
    )


def sample_interaction_matrix(
    g: WeightedGraph, scheme: Union[Scheme, str], rng: np.random.Generator, edge_p: float = 1.0
) -> SampledInteraction:
    scheme = Scheme(scheme)
    edges = g.undirected_edges
    if len(edges) == 0:
        raise NoEdgesError("El grafo no tiene aristas entre agentes distintos.")

    if scheme is Scheme.PAIRWISE_GOSSIP:
        n, k = edges[rng.integers(len(edges))]
        return pairwise_interaction(g, int(n), int(k))
    return edge_sampling_interaction(g, rng.random(len(edges)) < edge_p)


def step_random_interactions(
    x: np.ndarray,
    a: np.ndarray,
    w_t: SampledInteraction,
    alpha: Alpha,
    frozen_bystanders: bool = True,
) -> np.ndarray:
    n = w_t.graph.n
    x = _check_state(x, n)
    a = _check_state(a, n)
    alpha = _alpha_vector(alpha, n)
    if frozen_bystanders:
        alpha = np.where(w_t.participants, alpha, 0.0)
    s = social_signal(w_t.graph.weights, a)
    return np.clip(x + alpha * (s - x), 0.0, 1.0)


def expected_interaction_matrix(
    g: WeightedGraph, scheme: Union[Scheme, str], edge_p: float = 1.0
) -> np.ndarray:
    """E[W(t)] exacto, como matriz densa."""
    scheme = Scheme(scheme)
    edges = g.undirected_edges
    if len(edges) == 0:
        raise NoEdgesError("El grafo no tiene aristas entre agentes distintos.")

    if scheme is Scheme.PAIRWISE_GOSSIP:
        total = len(edges)
        expected = np.zeros((g.n, g.n))
        incidencias = np.bincount(edges.ravel(), minlength=g.n)
        for n, k in edges:
            expected[n, n] += 0.5
            expected[n, k] += 0.5
            expected[k, k] += 0.5
            expected[k, n] += 0.5
        expected /= total
        expected[np.diag_indices(g.n)] += (total - incidencias) / total
        return expected

    expected = np.zeros((g.n, g.n))
    for agent in range(g.n):
        idx, w = g.row(agent)
        propio = float(w[idx == agent].sum())
        vecinos, pesos = idx[idx != agent], w[idx != agent]
        d = len(vecinos)
        if d > NEIGHBORHOOD_LIMIT:
            raise NeighborhoodTooLargeError(agent, d, NEIGHBORHOOD_LIMIT)
        combos = ((np.arange(2**d)[:, None] >> np.arange(d)) & 1).astype(bool)
        probs = np.prod(np.where(combos, edge_p, 1.0 - edge_p), axis=1)
        totales = propio + combos @ pesos
        for combo, prob, total in zip(combos, probs, totales):
            if prob == 0:
                continue
            if total == 0:
                expected[agent, agent] += prob
                continue
            expected[agent, agent] += prob * propio / total
            expected[agent, vecinos[combo]] += prob * pesos[combo] / total
    return expected


def expected_step_operator(g: WeightedGraph, spec: DynamicsSpec) -> LazyMatrix:
    """
    Operador M con E[x(t+1) | x(t)] = M x(t) para las reglas lineales.

    Bajo interacciones aleatorias los agentes que no participan tienen fila
    identidad, así que congelarlos no cambia la media, solo la varianza.
    """
    if spec.rule is Rule.CONSENSUS:
        return lazy_matrix(g, spec.alpha)
    if spec.rule is Rule.RANDOM_INTERACTIONS:
        expected = expected_interaction_matrix(g, spec.scheme, spec.edge_p)
        return lazy_matrix(WeightedGraph(n=g.n, weights=expected), spec.alpha)
    raise DynamicsError(f"La regla {spec.rule.value} no tiene un operador de esperanza lineal.")


def rho(z, alpha: float, tau: float):
    """ρ(z) = αz si |z| ≤ τ, 0 en otro caso."""
    z = np.asarray(z, dtype=float)
    result = np.where(np.abs(z) <= tau, alpha * z, 0.0)
    return float(result) if result.ndim == 0 else result


def step_bounded_confidence(
    x: np.ndarray, a: np.ndarray, g: WeightedGraph, alpha: Alpha, tau: float
) -> np.ndarray:
    if not 0.0 < tau < 1.0:
        raise DynamicsError(f"τ debe estar en (0, 1), se recibió {tau}.")
    x = _check_state(x, g.n)
    a = _check_state(a, g.n)
    alpha = _alpha_vector(alpha, g.n)
    desvio = social_signal(g.weights, a) - x
    return np.clip(x + rho(desvio, alpha, tau), 0.0, 1.0)


def bc_gate_probability(x: np.ndarray, g: WeightedGraph, tau: float, agent: int) -> float:
    """P(|Σ_k w_nk a_k − x_n| > τ | x), enumerando las acciones del vecindario."""
    x = _check_state(x, g.n)
    idx, w = g.row(agent)
    d = len(idx)
    if d > NEIGHBORHOOD_LIMIT:
        raise NeighborhoodTooLargeError(agent, d, NEIGHBORHOOD_LIMIT)
    combos = ((np.arange(2**d)[:, None] >> np.arange(d)) & 1).astype(float)
    probs = np.prod(np.where(combos == 1, x[idx], 1.0 - x[idx]), axis=1)
    unos = combos @ w
    ceros = (1.0 - combos) @ w
    desvio = np.abs(unos / (unos + ceros) - x[agent])
    return float(probs[desvio > tau].sum())


def pair_distribution(g: WeightedGraph, selection: Union[PairSelection, str] = PairSelection.WEIGHTED) -> List[Tuple[Tuple[int, int], float]]:
    """Ley exacta de `sample_pair`: lista de ((n, k), probabilidad)."""
    selection = PairSelection(selection)
    pares = []
    for n in range(g.n):
        idx, w = g.row(n)
        keep = idx != n
        idx, w = idx[keep], w[keep]
        if len(idx) == 0:
            raise NoEdgesError(f"El agente {n} no tiene vecinos que observar.")
        p = w / w.sum() if selection is PairSelection.WEIGHTED else np.full(len(idx), 1.0 / len(idx))
        pares.extend(((n, int(k)), float(pk) / g.n) for k, pk in zip(idx, p))
    return pares


def sample_pair(
    g: WeightedGraph, rng: np.random.Generator, selection: Union[PairSelection, str] = PairSelection.WEIGHTED
) -> Tuple[int, int]:
    """n uniforme; k un vecino de n (por peso w_nk o uniforme), nunca n mismo."""
    selection = PairSelection(selection)
    n = int(rng.integers(g.n))
    idx, w = g.row(n)
    keep = idx != n
    idx, w = idx[keep], w[keep]
    if len(idx) == 0:
        raise NoEdgesError(f"El agente {n} no tiene vecinos que observar.")
    if selection is PairSelection.WEIGHTED:
        k = idx[rng.choice(len(idx), p=w / w.sum())]
    else:
        k = idx[rng.integers(len(idx))]
    return n, int(k)


def step_reinforcement(
    x: np.ndarray, pair: Tuple[int, int], a_n: float, a_k: float, alpha: Alpha
) -> np.ndarray:
    n, _ = pair
    x = np.array(x, dtype=float)
    if a_n != a_k:
        return x
    alpha_n = alpha if np.ndim(alpha) == 0 else np.asarray(alpha)[n]
    x[n] = min(max(x[n] + alpha_n * (a_n - x[n]), 0.0), 1.0)
    return x


def transition(x: np.ndarray, spec: DynamicsSpec, g: WeightedGraph, rng: np.random.Generator) -> np.ndarray:
    """Un paso completo de la regla configurada, muestreo incluido."""
    if spec.rule is Rule.CONSENSUS:
        return step_consensus(x, sample_actions(x, rng), g, spec.alpha)

    if spec.rule is Rule.RANDOM_INTERACTIONS:
        w_t = sample_interaction_matrix(g, spec.scheme, rng, spec.edge_p)
        return step_random_interactions(x, sample_actions(x, rng), w_t, spec.alpha, spec.frozen_bystanders)

    if spec.rule is Rule.BOUNDED_CONFIDENCE:
        return step_bounded_confidence(x, sample_actions(x, rng), g, spec.alpha, spec.tau)

    n, k = sample_pair(g, rng, spec.pair_selection)
    u = rng.random(2)
    return step_reinforcement(x, (n, k), float(u[0] < x[n]), float(u[1] < x[k]), spec.alpha)
