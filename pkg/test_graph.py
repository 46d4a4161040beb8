import logging
from itertools import product

import numpy as np
import pytest

from errors import (
    AlphaOutOfRangeError,
    ConnectivityFailureError,
    EmptyRowError,
    GraphError,
    GraphFormatError,
    IndexOutOfRangeError,
    NegativeWeightError,
    NotIrreducibleError,
)
from graph import (
    GraphModel,
    build_graph,
    derive_graph_seed,
    expected_trajectory,
    format_decimal,
    graph_from_matrix,
    is_irreducible,
    lazy_matrix,
    parse_graph_model,
    random_graph,
    read_graph,
    stationary_distribution,
    write_graph,
)

HK4 = [
    [0.0, 1.0, 0.0, 0.0],
    [0.5, 0.0, 0.25, 0.25],
    [0.25, 0.25, 0.0, 0.5],
    [0.0, 0.0, 1.0, 0.0],
]
SWAP = [[0.0, 1.0], [1.0, 0.0]]


def _path3():
    return build_graph([(0, 1), (1, 2)], 3, undirected=True)


def _reachable_everywhere(pattern: np.ndarray) -> bool:
    """Alcanzabilidad por fuerza bruta: (I + A)^n sin ceros."""
    n = len(pattern)
    reach = np.eye(n, dtype=bool) | pattern
    for _ in range(n):
        reach = reach | ((reach.astype(int) @ reach.astype(int)) > 0)
    return bool(reach.all())


# --- build_graph ---

def test_build_graph_two_cycle():
    g = build_graph([(0, 1, 1), (1, 0, 1)], 2)
    assert np.array_equal(g.to_dense(), np.array(SWAP))


def test_build_graph_uniform_undirected_path():
    g = _path3()
    assert np.array_equal(g.to_dense()[1], [0.5, 0.0, 0.5])
    assert g.uniform and not g.directed


def test_build_graph_hk4_round_trips_unchanged():
    g = graph_from_matrix(HK4)
    assert np.array_equal(g.to_dense(), np.array(HK4))


def test_build_graph_renormalizes_rows():
    g = build_graph([(0, 1, 2.0), (0, 0, 2.0), (1, 0, 0.3)], 2)
    np.testing.assert_allclose(g.to_dense(), [[0.5, 0.5], [1.0, 0.0]], atol=1e-15)
    np.testing.assert_allclose(g.to_dense().sum(axis=1), 1.0, atol=1e-12)


def test_build_graph_errors():
    with pytest.raises(EmptyRowError) as exc:
        build_graph([(0, 1, 1.0)], 2)
    assert exc.value.agent == 1
    with pytest.raises(NegativeWeightError):
        build_graph([(0, 1, -0.5), (1, 0, 1.0)], 2)
    with pytest.raises(IndexOutOfRangeError):
        build_graph([(0, 2, 1.0)], 2)
    with pytest.raises(GraphError):
        build_graph([(0, 1, 1.0), (0, 1, 1.0), (1, 0, 1.0)], 2)


def test_graph_is_immutable():
    g = graph_from_matrix(SWAP)
    with pytest.raises(ValueError):
        g.weights[0, 0] = 1.0


def test_degree_normalization_does_not_warn(caplog):
    with caplog.at_level(logging.WARNING, logger="graph"):
        _path3()
        random_graph(6, GraphModel("complete"))
        random_graph(12, GraphModel("erdos_renyi", 0.4), seed=2)
    assert not caplog.records


def test_unnormalized_weights_warn(caplog):
    with caplog.at_level(logging.WARNING, logger="graph"):
        g = build_graph([(0, 1, 2.0), (1, 0, 3.0)], 2)
    assert np.array_equal(g.to_dense(), np.array(SWAP))
    assert len(caplog.records) == 1 and caplog.records[0].levelno == logging.WARNING

    caplog.clear()
    with caplog.at_level(logging.WARNING, logger="graph"):
        build_graph([(0, 1, 2.0), (1, 2, 1.0)], 3, undirected=True)
    assert len(caplog.records) == 1


# --- is_irreducible ---

def test_is_irreducible_examples():
    assert is_irreducible(graph_from_matrix(SWAP))
    assert is_irreducible(graph_from_matrix(HK4))
    bloques = np.kron(np.eye(2), np.array(SWAP))
    assert not is_irreducible(graph_from_matrix(bloques))


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_is_irreducible_matches_brute_force(n):
    """Todos los patrones fuera de la diagonal; la diagonal se llena para que ninguna fila quede vacía."""
    off = [(i, j) for i in range(n) for j in range(n) if i != j]
    for bits in product((False, True), repeat=len(off)):
        pattern = np.zeros((n, n), dtype=bool)
        for (i, j), on in zip(off, bits):
            pattern[i, j] = on
        edges = [(i, i, 1.0) for i in range(n)] + [(i, j, 1.0) for (i, j), on in zip(off, bits) if on]
        g = build_graph(edges, n)
        assert is_irreducible(g) == _reachable_everywhere(pattern)


# --- stationary_distribution ---

def test_stationary_two_cycle():
    np.testing.assert_allclose(stationary_distribution(graph_from_matrix(SWAP)).pi, [0.5, 0.5], atol=1e-12)


def test_stationary_uniform_path():
    np.testing.assert_allclose(stationary_distribution(_path3()).pi, [0.25, 0.5, 0.25], atol=1e-12)


def test_stationary_hk4():
    g = graph_from_matrix(HK4)
    pi = stationary_distribution(g).pi
    np.testing.assert_allclose(pi, [3 / 14, 2 / 7, 2 / 7, 3 / 14], atol=1e-12)
    assert np.abs(pi @ g.to_dense() - pi).max() < 1e-12
    assert np.all(pi > 0)


def test_stationary_power_iteration_on_periodic_star():
    n = 80
    g = random_graph(n, GraphModel("star"))
    pi = stationary_distribution(g).pi
    assert pi[0] == pytest.approx(0.5, abs=1e-10)
    np.testing.assert_allclose(pi[1:], 1.0 / (2 * (n - 1)), atol=1e-10)
    assert np.abs(pi @ g.to_dense() - pi).max() < 1e-10


def test_stationary_power_iteration_on_random_graph():
    g = random_graph(100, GraphModel("erdos_renyi", 0.1), seed=4)
    pi = stationary_distribution(g).pi
    assert abs(pi.sum() - 1.0) < 1e-10
    assert np.abs(pi @ g.to_dense() - pi).max() < 1e-10
    grados = np.array([g.degree(i) for i in range(g.n)])
    np.testing.assert_allclose(pi, grados / grados.sum(), atol=1e-10)


def test_stationary_rejects_reducible_graph():
    with pytest.raises(NotIrreducibleError):
        stationary_distribution(graph_from_matrix(np.kron(np.eye(2), np.array(SWAP))))


# --- lazy_matrix ---

def test_lazy_matrix_examples():
    g = graph_from_matrix(SWAP)
    assert np.array_equal(lazy_matrix(g, 0.0).w_alpha, np.eye(2))
    assert np.array_equal(lazy_matrix(g, 1.0).w_alpha, np.array(SWAP))
    np.testing.assert_allclose(lazy_matrix(g, 0.5).w_alpha, [[0.5, 0.5], [0.5, 0.5]])


@pytest.mark.parametrize("alpha", [0.0, 0.1, 0.3, 0.77, 1.0])
def test_lazy_matrix_is_stochastic_and_shares_pi(alpha):
    g = graph_from_matrix(HK4)
    w_alpha = lazy_matrix(g, alpha).w_alpha
    assert np.all(w_alpha >= 0)
    np.testing.assert_allclose(w_alpha.sum(axis=1), 1.0, atol=1e-12)
    pi = stationary_distribution(g).pi
    assert np.abs(pi @ w_alpha - pi).max() < 1e-10


def test_lazy_matrix_per_node_alpha():
    g = graph_from_matrix(HK4)
    alpha = np.array([0.1, 0.5, 0.9, 0.3])
    lazy = lazy_matrix(g, alpha)
    np.testing.assert_allclose(lazy.w_alpha.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(np.diag(lazy.w_alpha), 1.0 - alpha)
    # π de W_α es proporcional a π_n / α_n.
    pi = stationary_distribution(g).pi / alpha
    np.testing.assert_allclose(stationary_distribution(lazy.as_graph()).pi, pi / pi.sum(), atol=1e-12)


def test_lazy_matrix_rejects_alpha_out_of_range():
    g = graph_from_matrix(SWAP)
    with pytest.raises(AlphaOutOfRangeError):
        lazy_matrix(g, 1.5)
    with pytest.raises(AlphaOutOfRangeError):
        lazy_matrix(g, [0.5, -0.1])
    with pytest.raises(AlphaOutOfRangeError):
        lazy_matrix(g, [0.5, 0.5, 0.5])


# --- expected_trajectory ---

def test_expected_trajectory_examples():
    g = graph_from_matrix(SWAP)
    x0 = np.array([0.0, 1.0])
    assert np.array_equal(expected_trajectory(g, 0.5, x0, 0), x0)
    np.testing.assert_allclose(expected_trajectory(g, 0.5, x0, 1), [0.5, 0.5])
    np.testing.assert_allclose(expected_trajectory(_path3(), 0.3, np.ones(3), 50), np.ones(3), atol=1e-12)


def test_expected_trajectory_approaches_weighted_average():
    g = random_graph(20, GraphModel("erdos_renyi", 0.3), seed=11)
    x0 = np.random.default_rng(0).random(20)
    pi = stationary_distribution(g).pi
    np.testing.assert_allclose(expected_trajectory(g, 0.3, x0, 200), np.full(20, pi @ x0), atol=1e-6)


# --- random_graph ---

def test_random_graph_complete_and_ring():
    g = random_graph(3, GraphModel("complete"))
    dense = g.to_dense()
    assert np.all(dense[~np.eye(3, dtype=bool)] == 0.5)
    ring = random_graph(4, GraphModel("ring", 1)).to_dense()
    for row in ring:
        assert sorted(row[row > 0].tolist()) == [0.5, 0.5]


def test_random_graph_star_center_is_uniform_over_leaves():
    g = random_graph(5, GraphModel("star"))
    idx, w = g.row(0)
    assert idx.tolist() == [1, 2, 3, 4]
    np.testing.assert_allclose(w, 0.25)


def test_random_graph_erdos_renyi_is_deterministic_and_connected():
    model = GraphModel("erdos_renyi", 0.3)
    a = random_graph(20, model, seed=11)
    b = random_graph(20, model, seed=11)
    assert np.array_equal(a.to_dense(), b.to_dense())
    assert is_irreducible(a)


def test_random_graph_connectivity_failure():
    with pytest.raises(ConnectivityFailureError):
        random_graph(30, GraphModel("erdos_renyi", 0.01), seed=1, max_retries=3)


def test_random_graph_default_seed_is_fixed():
    model = GraphModel("erdos_renyi", 0.5)
    assert np.array_equal(random_graph(12, model).to_dense(), random_graph(12, model).to_dense())


def test_derive_graph_seed():
    assert derive_graph_seed(7) == derive_graph_seed(7)
    assert derive_graph_seed(7) != derive_graph_seed(8)
    assert 0 <= derive_graph_seed(2**64 - 1) < 2**64


def test_parse_graph_model():
    assert parse_graph_model("er:20:0.3") == (20, GraphModel("erdos_renyi", 0.3))
    assert parse_graph_model("ring:10:2") == (10, GraphModel("ring", 2))
    assert parse_graph_model("complete:4") == (4, GraphModel("complete"))
    assert parse_graph_model("star:6") == (6, GraphModel("star"))
    for malo in ("er:20", "ring:x:1", "grid:3", "er:10:1.5"):
        with pytest.raises(GraphError):
            parse_graph_model(malo)


# --- formato de archivo ---

def test_write_read_directed_round_trip(tmp_path):
    g = graph_from_matrix(HK4)
    path = write_graph(g, tmp_path / "hk4.txt")
    assert path.read_text().splitlines()[0] == "herdsim-graph v1 4 directed"
    assert np.array_equal(read_graph(path).to_dense(), g.to_dense())


def test_write_read_renormalized_weights_bit_exact(tmp_path):
    g = build_graph([(0, 1, 0.1), (0, 2, 0.2), (1, 0, 0.7), (2, 1, 0.3), (2, 0, 0.3)], 3)
    again = read_graph(write_graph(g, tmp_path / "g.txt"))
    assert np.array_equal(again.to_dense(), g.to_dense())


def test_write_read_uniform_undirected_round_trip(tmp_path):
    g = random_graph(12, GraphModel("erdos_renyi", 0.4), seed=2)
    path = write_graph(g, tmp_path / "er.txt")
    lineas = path.read_text().splitlines()
    assert lineas[0] == "herdsim-graph v1 12 undirected"
    assert all(len(l.split()) == 2 for l in lineas[1:])
    assert np.array_equal(read_graph(path).to_dense(), g.to_dense())


def test_complete_graph_file_has_six_edges(tmp_path):
    path = write_graph(random_graph(4, GraphModel("complete")), tmp_path / "k4.txt")
    assert len(path.read_text().splitlines()) == 1 + 6


def test_read_graph_format_errors(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("herdsim-graph v2 2 directed\n0 1 1\n1 0 1\n")
    with pytest.raises(GraphFormatError) as exc:
        read_graph(path)
    assert exc.value.line == 1

    path.write_text("herdsim-graph v1 2 directed\n0 1 1\n1 0\n")
    with pytest.raises(GraphFormatError) as exc:
        read_graph(path)
    assert exc.value.line == 3


def test_write_read_weighted_undirected_round_trip(tmp_path):
    g = build_graph([(0, 1, 0.3), (1, 2, 0.7), (0, 2, 0.1), (2, 2, 0.2)], 3, undirected=True)
    assert not g.directed and not g.uniform

    path = write_graph(g, tmp_path / "pesos.txt")
    lineas = path.read_text().splitlines()
    assert lineas[0] == "herdsim-graph v1 3 undirected"
    assert lineas[1:] == ["0 1 0.29999999999999999", "0 2 0.10000000000000001", "1 2 0.69999999999999996", "2 2 0.20000000000000001"]

    again = read_graph(path)
    assert not again.directed
    assert np.array_equal(again.to_dense(), g.to_dense())


def test_format_decimal_never_uses_exponent():
    assert format_decimal(1e-5) == "0.000010000000000000001"
    assert format_decimal(0.5) == "0.5"
    assert format_decimal(1.0) == "1"
    assert format_decimal(0.0) == "0"
    for valor in (1e-5, 1e-12, 0.1, 2 / 3, 123.456):
        texto = format_decimal(valor)
        assert "e" not in texto.lower()
        assert float(texto) == valor
