"""
Matriz de influencia W (estocástica por filas), su variante perezosa W_α,
distribución estacionaria π y generación/lectura/escritura de grafos.

Convención: w[n, k] es la influencia de la acción del agente k sobre la
creencia del agente n. Una arista (origen, destino, peso) del archivo o de
`build_graph` se guarda en w[origen, destino].
"""
import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np
from scipy import sparse

from errors import (
    AlphaOutOfRangeError,
    ConnectivityFailureError,
    EmptyRowError,
    GraphError,
    GraphFormatError,
    IndexOutOfRangeError,
    NegativeWeightError,
    NoConvergenceError,
    NotIrreducibleError,
)

logger = logging.getLogger(__name__)

# Por encima de este tamaño la matriz se guarda como scipy.sparse (CSR).
DENSE_LIMIT = 4096
# Resolución directa de π para grafos pequeños; iteración de potencia para el resto.
DIRECT_SOLVE_LIMIT = 64
POWER_DAMPING = 0.99
# Filas cuya suma difiere de 1 más que esto se renormalizan; más de RENORM_WARN se avisa.
RENORM_TOLERANCE = 1e-14
RENORM_WARN = 1e-6

GRAPH_HEADER = "herdsim-graph"
# Clave del flujo que fija la semilla de un grafo generado sin semilla explícita.
GRAPH_STREAM_KEY = 0x6A4F
GRAPH_VERSION = "v1"

Matrix = Union[np.ndarray, sparse.csr_array]
Alpha = Union[float, np.ndarray]


@dataclass(frozen=True)
class WeightedGraph:
    """N agentes y su matriz de influencia estocástica por filas (inmutable)."""
    n: int
    weights: Matrix = field(repr=False)
    directed: bool = True
    # True cuando se construyó desde aristas no dirigidas sin pesos (w = 1/grado).
    uniform: bool = False
    # Pesos simétricos antes de normalizar (no dirigido con pesos explícitos).
    edge_weights: Optional[Matrix] = field(default=None, repr=False, compare=False)

    @property
    def is_sparse(self) -> bool:
        return sparse.issparse(self.weights)

    def to_dense(self) -> np.ndarray:
        return self.weights.toarray() if self.is_sparse else np.array(self.weights)

    @cached_property
    def csr(self) -> sparse.csr_array:
        return self.weights if self.is_sparse else sparse.csr_array(self.weights)

    def row(self, agent: int) -> Tuple[np.ndarray, np.ndarray]:
        """Índices y pesos no nulos de la fila `agent`."""
        if self.is_sparse:
            start, end = self.weights.indptr[agent], self.weights.indptr[agent + 1]
            return self.weights.indices[start:end].copy(), self.weights.data[start:end].copy()
        fila = self.weights[agent]
        idx = np.flatnonzero(fila)
        return idx, fila[idx]

    @cached_property
    def undirected_edges(self) -> np.ndarray:
        """Pares {n, k} con n < k y w_nk > 0 o w_kn > 0, como arreglo (E, 2)."""
        if self.is_sparse:
            pattern = (self.weights != 0).astype(np.int8)
            sym = sparse.triu(pattern + pattern.T, k=1).tocoo()
            pares = np.column_stack([sym.row, sym.col])
        else:
            nz = self.weights != 0
            rows, cols = np.nonzero(np.triu(nz | nz.T, k=1))
            pares = np.column_stack([rows, cols])
        pares = pares[np.lexsort((pares[:, 1], pares[:, 0]))] if len(pares) else pares.reshape(0, 2)
        pares.setflags(write=False)
        return pares

    def degree(self, agent: int) -> int:
        idx, _ = self.row(agent)
        return int(np.count_nonzero(idx != agent))


@dataclass(frozen=True)
class StationaryDistribution:
    pi: np.ndarray

    def __len__(self) -> int:
        return len(self.pi)


@dataclass(frozen=True)
class LazyMatrix:
    """W_α = (I − D_α) + D_α W; con α escalar, (1 − α)I + αW."""
    w_alpha: Matrix = field(repr=False)
    alpha: Alpha

    def as_graph(self) -> WeightedGraph:
        return WeightedGraph(n=self.w_alpha.shape[0], weights=self.w_alpha, directed=True)

    def __matmul__(self, x: np.ndarray) -> np.ndarray:
        return self.w_alpha @ x


@dataclass(frozen=True)
class GraphModel:
    """Modelo generador: erdos_renyi(p), ring(k), complete o star."""
    kind: str
    param: Optional[float] = None


def _freeze(matrix: Matrix) -> Matrix:
    if sparse.issparse(matrix):
        matrix.data.setflags(write=False)
    else:
        matrix.setflags(write=False)
    return matrix


def assemble_matrix(rows: Sequence[int], cols: Sequence[int], values: Sequence[float], n: int) -> Matrix:
    """Arma la matriz N×N (densa hasta DENSE_LIMIT, CSR más allá)."""
    coo = sparse.coo_array((np.asarray(values, dtype=float), (np.asarray(rows), np.asarray(cols))), shape=(n, n))
    if n <= DENSE_LIMIT:
        return coo.toarray()
    return coo.tocsr()


def _row_sums(matrix: Matrix) -> np.ndarray:
    return np.asarray(matrix.sum(axis=1)).ravel()


def _normalize_rows(matrix: Matrix, warn: bool = True) -> Matrix:
    sums = _row_sums(matrix)
    vacias = np.flatnonzero(sums == 0)
    if len(vacias):
        raise EmptyRowError(int(vacias[0]))

    desviacion = np.abs(sums - 1.0)
    peor = float(desviacion.max())
    if warn and peor > RENORM_WARN:
        logger.warning(f"⚠️ Filas de W con suma distinta de 1 (desviación máx. {peor:.3e}); se renormalizan.")
    escala = np.where(desviacion > RENORM_TOLERANCE, sums, 1.0)
    if sparse.issparse(matrix):
        return sparse.csr_array(sparse.diags_array(1.0 / escala) @ matrix)
    return matrix / escala[:, None]


def build_graph(edges: Iterable[Sequence[float]], n: int, undirected: bool = False) -> WeightedGraph:
    """
    Construye W a partir de una lista de aristas (origen, destino[, peso]).

    En modo no dirigido cada arista fija w_uv = w_vu; sin peso explícito se usa 1,
    de modo que tras normalizar w_kn = 1/grado(k). Las filas se renormalizan a 1.
    """
    if n < 1:
        raise GraphError(f"El número de agentes debe ser positivo, se recibió {n}.")

    rows: List[int] = []
    cols: List[int] = []
    values: List[float] = []
    vistos = set()
    con_peso = False

    for edge in edges:
        if len(edge) not in (2, 3):
            raise GraphError(f"Arista mal formada: {edge!r}")
        u, v = int(edge[0]), int(edge[1])
        w = float(edge[2]) if len(edge) == 3 else 1.0
        con_peso = con_peso or len(edge) == 3
        for idx in (u, v):
            if not 0 <= idx < n:
                raise IndexOutOfRangeError(idx, n)
        if not w >= 0:
            raise NegativeWeightError(u, v, w)

        pares = [(u, v)] if not undirected or u == v else [(u, v), (v, u)]
        for a, b in pares:
            if (a, b) in vistos:
                raise GraphError(f"Arista duplicada ({a}, {b}); no se admiten multigrafos.")
            vistos.add((a, b))
            if w > 0:
                rows.append(a)
                cols.append(b)
                values.append(w)

    raw = assemble_matrix(rows, cols, values, n)
    # Sin pesos explícitos cada fila suma el grado; solo se avisa con pesos dados.
    weights = _normalize_rows(raw, warn=not undirected or con_peso)
    return WeightedGraph(
        n=n,
        weights=_freeze(weights),
        directed=not undirected,
        uniform=undirected and not con_peso,
        edge_weights=_freeze(raw) if undirected and con_peso else None,
    )


def graph_from_matrix(matrix: Union[Sequence[Sequence[float]], np.ndarray]) -> WeightedGraph:
    """Carga una matriz fila por fila (p. ej. la del ejemplo de 4 nodos)."""
    dense = np.asarray(matrix, dtype=float)
    if dense.ndim != 2 or dense.shape[0] != dense.shape[1]:
        raise GraphError(f"Se esperaba una matriz cuadrada, se recibió forma {dense.shape}.")
    rows, cols = np.nonzero(dense)
    negativos = np.argwhere(dense < 0)
    if len(negativos):
        u, v = negativos[0]
        raise NegativeWeightError(int(u), int(v), float(dense[u, v]))
    return build_graph(zip(rows, cols, dense[rows, cols]), dense.shape[0])


def is_irreducible(g: WeightedGraph) -> bool:
    """Verdadero si el digrafo de pesos no nulos es fuertemente conexo."""
    if g.n == 1:
        return True
    if g.is_sparse:
        digraph = nx.from_scipy_sparse_array(g.weights, create_using=nx.DiGraph)
    else:
        digraph = nx.from_numpy_array((g.weights != 0).astype(np.int8), create_using=nx.DiGraph)
    return nx.is_strongly_connected(digraph)


def _solve_direct(weights: Matrix) -> np.ndarray:
    dense = weights.toarray() if sparse.issparse(weights) else weights
    n = dense.shape[0]
    system = dense.T - np.eye(n)
    # Una de las ecuaciones es redundante: se sustituye por la normalización 1ᵀπ = 1.
    system[-1, :] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    return np.linalg.solve(system, rhs)


def _power_iteration(weights: Matrix, tol: float, max_iter: int) -> np.ndarray:
    n = weights.shape[0]
    transpose = weights.T
    pi = np.full(n, 1.0 / n)
    residual = np.inf
    for _ in range(max_iter):
        # El amortiguamiento conserva π y elimina la periodicidad.
        siguiente = (1.0 - POWER_DAMPING) * pi + POWER_DAMPING * (transpose @ pi)
        siguiente /= siguiente.sum()
        residual = float(np.abs(siguiente - pi).sum())
        pi = siguiente
        if residual < tol:
            return pi
    raise NoConvergenceError(max_iter, residual)


def stationary_distribution(g: WeightedGraph, tol: float = 1e-13, max_iter: int = 100_000) -> StationaryDistribution:
    """Vector propio izquierdo π de W (πᵀW = πᵀ, π > 0, 1ᵀπ = 1)."""
    if not is_irreducible(g):
        raise NotIrreducibleError("La matriz W no es irreducible: el grafo no es fuertemente conexo.")

    if g.n <= DIRECT_SOLVE_LIMIT:
        pi = _solve_direct(g.weights)
    else:
        pi = _power_iteration(g.weights, tol, max_iter)

    pi = np.clip(pi, 0.0, None)
    pi = pi / pi.sum()
    if np.any(pi <= 0):
        raise NoConvergenceError(max_iter, float("nan"))
    pi.setflags(write=False)
    return StationaryDistribution(pi=pi)


def validate_alpha(alpha: Alpha, n: int) -> Alpha:
    """Devuelve α como float o como vector de solo lectura de longitud n."""
    if np.ndim(alpha) == 0:
        value = float(alpha)
        if not 0.0 <= value <= 1.0:
            raise AlphaOutOfRangeError(f"α debe estar en [0, 1], se recibió {value}.")
        return value
    vector = np.array(alpha, dtype=float)
    if vector.shape != (n,):
        raise AlphaOutOfRangeError(f"α por nodo debe tener longitud {n}, se recibió forma {vector.shape}.")
    if np.any(~((vector >= 0.0) & (vector <= 1.0))):
        raise AlphaOutOfRangeError(f"Todas las componentes de α deben estar en [0, 1]: {vector.tolist()}")
    vector.setflags(write=False)
    return vector


def lazy_matrix(g: WeightedGraph, alpha: Alpha) -> LazyMatrix:
    alpha = validate_alpha(alpha, g.n)
    diag = np.full(g.n, alpha) if np.ndim(alpha) == 0 else np.asarray(alpha)

    if g.is_sparse:
        w_alpha = sparse.csr_array(sparse.diags_array(1.0 - diag) + sparse.diags_array(diag) @ g.weights)
    else:
        w_alpha = np.diag(1.0 - diag) + diag[:, None] * g.weights
    return LazyMatrix(w_alpha=_freeze(w_alpha), alpha=alpha)


def expected_trajectory(g: WeightedGraph, alpha: Alpha, x0: np.ndarray, t: int) -> np.ndarray:
    """E[x(t)] = W_α^t x(0), aplicando t productos matriz-vector."""
    if t < 0:
        raise GraphError(f"t debe ser no negativo, se recibió {t}.")
    x = np.array(x0, dtype=float)
    if x.shape != (g.n,):
        raise GraphError(f"x0 debe tener longitud {g.n}, se recibió forma {x.shape}.")
    operador = lazy_matrix(g, alpha)
    for _ in range(t):
        x = operador @ x
    return x


# --- Generadores ---

def parse_graph_model(spec: str) -> Tuple[int, GraphModel]:
    """
    Interpreta 'er:<n>:<p>', 'ring:<n>:<k>', 'complete:<n>' o 'star:<n>'.
    Devuelve (n, modelo).
    """
    partes = [p.strip() for p in str(spec).split(":")]
    kind = partes[0].lower()
    try:
        if kind in ("er", "erdos_renyi") and len(partes) == 3:
            n, p = int(partes[1]), float(partes[2])
            if not 0.0 < p <= 1.0:
                raise ValueError(f"p debe estar en (0, 1], se recibió {p}")
            return n, GraphModel("erdos_renyi", p)
        if kind == "ring" and len(partes) in (2, 3):
            k = int(partes[2]) if len(partes) == 3 else 1
            if k < 1:
                raise ValueError(f"k debe ser al menos 1, se recibió {k}")
            return int(partes[1]), GraphModel("ring", k)
        if kind in ("complete", "star") and len(partes) == 2:
            return int(partes[1]), GraphModel(kind)
    except ValueError as e:
        raise GraphError(f"Modelo de grafo inválido '{spec}': {e}") from e
    raise GraphError(
        f"Modelo de grafo inválido '{spec}'. Formatos: er:<n>:<p>, ring:<n>:<k>, complete:<n>, star:<n>."
    )


def _from_networkx(graph: nx.Graph, n: int) -> WeightedGraph:
    return build_graph(((u, v) for u, v in graph.edges()), n, undirected=True)


def derive_graph_seed(master_seed: int) -> int:
    """Semilla del generador de grafos cuando la configuración no fija una."""
    # La tercera palabra no nula separa este flujo del ensayo número GRAPH_STREAM_KEY.
    state = np.random.SeedSequence([int(master_seed), GRAPH_STREAM_KEY, 1]).generate_state(1, dtype=np.uint64)
    return int(state[0])


def random_graph(n: int, model: GraphModel, seed: int = 0, max_retries: int = 200) -> WeightedGraph:
    """Grafo no dirigido conexo con pesos uniformes 1/grado."""
    if n < 2:
        raise GraphError(f"Se requieren al menos 2 agentes, se recibió {n}.")

    if model.kind == "complete":
        return _from_networkx(nx.complete_graph(n), n)
    if model.kind == "star":
        return _from_networkx(nx.star_graph(n - 1), n)
    if model.kind == "ring":
        k = int(model.param or 1)
        return _from_networkx(nx.circulant_graph(n, range(1, k + 1)), n)
    if model.kind != "erdos_renyi":
        raise GraphError(f"Modelo de grafo desconocido: {model.kind}")

    # Cada intento usa una semilla derivada de la semilla maestra.
    semillas = np.random.default_rng(seed).integers(0, 2**31 - 1, size=max_retries)
    for intento, semilla in enumerate(semillas, start=1):
        candidato = nx.erdos_renyi_graph(n, float(model.param), seed=int(semilla))
        if nx.is_connected(candidato):
            logger.debug(f"Grafo Erdős–Rényi conexo en el intento {intento}")
            return _from_networkx(candidato, n)
    raise ConnectivityFailureError(
        f"No se obtuvo un grafo Erdős–Rényi conexo (n={n}, p={model.param}) tras {max_retries} intentos."
    )


# --- Formato de archivo herdsim-graph v1 ---

def format_decimal(value: float) -> str:
    """Decimal posicional con 17 cifras significativas, sin notación exponencial."""
    return np.format_float_positional(float(value), precision=17, unique=False, fractional=False, trim="-")


def read_graph(path: Union[str, Path]) -> WeightedGraph:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as f:
        lineas = [(num, linea.strip()) for num, linea in enumerate(f, start=1)]
    lineas = [(num, l) for num, l in lineas if l and not l.startswith("#")]
    if not lineas:
        raise GraphFormatError("Archivo vacío, falta el encabezado.", line=1)

    num, encabezado = lineas[0]
    partes = encabezado.split()
    if len(partes) != 4 or partes[0] != GRAPH_HEADER or partes[1] != GRAPH_VERSION:
        raise GraphFormatError(
            f"Encabezado inválido '{encabezado}'; se esperaba '{GRAPH_HEADER} {GRAPH_VERSION} <n> <directed|undirected>'.",
            line=num,
        )
    try:
        n = int(partes[2])
    except ValueError:
        raise GraphFormatError(f"Número de agentes inválido '{partes[2]}'.", line=num)
    modo = partes[3]
    if modo not in ("directed", "undirected"):
        raise GraphFormatError(f"Modo '{modo}' inválido; use directed o undirected.", line=num)

    edges = []
    for num, linea in lineas[1:]:
        campos = linea.split()
        esperados = (3,) if modo == "directed" else (2, 3)
        if len(campos) not in esperados:
            raise GraphFormatError(f"Arista mal formada '{linea}'.", line=num)
        try:
            edge = [int(campos[0]), int(campos[1])] + [float(c) for c in campos[2:]]
        except ValueError:
            raise GraphFormatError(f"Valores no numéricos en '{linea}'.", line=num)
        edges.append(edge)

    g = build_graph(edges, n, undirected=(modo == "undirected"))
    logger.info(f"📂 Grafo cargado desde {path}: n={n}, modo={modo}, aristas={len(edges)}")
    return g


def _weighted_lines(matrix: Matrix) -> List[str]:
    coo = sparse.coo_array(matrix)
    orden = np.lexsort((coo.col, coo.row))
    return [f"{r} {c} {format_decimal(w)}" for r, c, w in zip(coo.row[orden], coo.col[orden], coo.data[orden])]


def write_graph(g: WeightedGraph, path: Union[str, Path]) -> Path:
    """
    Escribe el grafo; los pesos con 17 cifras significativas (ida y vuelta exacta).

    Un grafo no dirigido se escribe como tal: sin peso si es uniforme, con sus
    pesos simétricos originales si no lo es.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lineas = []
    if not g.directed and g.uniform:
        lineas.append(f"{GRAPH_HEADER} {GRAPH_VERSION} {g.n} undirected")
        lineas.extend(f"{u} {v}" for u, v in g.undirected_edges)
        # Los lazos propios no aparecen en undirected_edges.
        lineas.extend(f"{i} {i}" for i in range(g.n) if g.weights[i, i] != 0)
    elif not g.directed and g.edge_weights is not None:
        lineas.append(f"{GRAPH_HEADER} {GRAPH_VERSION} {g.n} undirected")
        lineas.extend(_weighted_lines(sparse.triu(sparse.csr_array(g.edge_weights))))
    else:
        lineas.append(f"{GRAPH_HEADER} {GRAPH_VERSION} {g.n} directed")
        lineas.extend(_weighted_lines(g.weights))
    path.write_text("\n".join(lineas) + "\n", encoding="utf-8")
    return path
