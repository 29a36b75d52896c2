import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lossynet.graph import (
    GraphError,
    build_graph,
    expected_laplacians,
    expected_laplacians_oracle,
    graph_properties,
    graph_to_json,
    laplacian,
    load_graph,
    make_family,
    parse_graph,
    random_digraph,
    spectrum,
    transpose_graph,
)
from strategies import digraphs, probabilities, undirected_graphs


# construction ------------------------------------------------------------


def test_single_edge_neighbourhoods(single_edge):
    g = single_edge
    assert g.in_neighbours(1) == {2}
    assert g.in_neighbours(2) == set()
    assert list(g.in_degrees()) == [1, 0]
    assert list(g.out_degrees()) == [0, 1]


def test_triangle_degrees(triangle):
    assert list(triangle.in_degrees()) == [2, 2, 2]
    assert list(triangle.out_degrees()) == [2, 2, 2]


@pytest.mark.parametrize(
    "n, edges, needle",
    [
        (2, [(1, 1)], "self-loop"),
        (2, [(1, 3)], "outside"),
        (2, [(0, 1)], "outside"),
        (3, [(1, 2), (1, 2)], "duplicated"),
    ],
)
def test_build_graph_rejects(n, edges, needle):
    with pytest.raises(GraphError, match=needle):
        build_graph(n, edges)


def test_build_graph_names_offending_edge():
    with pytest.raises(GraphError, match=r"\(2, 2\)"):
        build_graph(3, [(1, 2), (2, 2)])


def test_build_graph_bad_vertex_count():
    with pytest.raises(GraphError):
        build_graph(0, [])


def test_edges_are_canonical():
    g = build_graph(3, [(3, 1), (1, 2)])
    assert g.edges == ((1, 2), (3, 1))
    assert g == build_graph(3, [(1, 2), (3, 1)])


# laplacian ---------------------------------------------------------------


def test_laplacian_examples(single_edge, triangle):
    np.testing.assert_array_equal(laplacian(single_edge), [[1, -1], [0, 0]])
    np.testing.assert_array_equal(laplacian(triangle), [[2, -1, -1], [-1, 2, -1], [-1, -1, 2]])
    np.testing.assert_array_equal(laplacian(build_graph(3, [])), np.zeros((3, 3)))


@given(digraphs())
def test_laplacian_structure(g):
    L = laplacian(g)
    np.testing.assert_array_equal(L.sum(axis=1), 0)
    off = L[~np.eye(g.n, dtype=bool)]
    assert set(np.unique(off)) <= {0.0, -1.0}
    np.testing.assert_array_equal(np.diag(L), g.in_degrees())


# properties and transpose ------------------------------------------------


def test_properties_examples(triangle, single_edge, directed_cycle):
    assert tuple(vars(graph_properties(triangle)).values()) == (True, True, True)
    assert tuple(vars(graph_properties(single_edge)).values()) == (False, False, False)
    assert tuple(vars(graph_properties(directed_cycle)).values()) == (False, True, True)


def test_directed_cycle_is_normal_by_hand(directed_cycle):
    L = laplacian(directed_cycle)
    np.testing.assert_array_equal(L @ L.T, L.T @ L)


def test_transpose_examples(single_edge, triangle, directed_cycle):
    t = transpose_graph(single_edge)
    assert t.edges == ((2, 1),)
    np.testing.assert_array_equal(laplacian(t), [[0, 0], [-1, 1]])
    assert transpose_graph(triangle).edges == triangle.edges
    assert transpose_graph(directed_cycle).edges == tuple(sorted([(1, 2), (2, 3), (3, 1)]))


def test_transpose_laplacian_differs_for_unbalanced(single_edge):
    assert not np.array_equal(laplacian(transpose_graph(single_edge)), laplacian(single_edge).T)


@given(digraphs())
def test_transpose_laplacian_when_balanced(g):
    if graph_properties(g).balanced:
        np.testing.assert_array_equal(laplacian(transpose_graph(g)), laplacian(g).T)
    assert transpose_graph(transpose_graph(g)) == g


# expected laplacians -----------------------------------------------------


def test_expected_single_edge(single_edge):
    for p in (0.0, 0.25, 0.6, 1.0):
        ex = expected_laplacians(single_edge, p)
        np.testing.assert_allclose(ex.mean, p * np.array([[1, -1], [0, 0]]), atol=1e-15)
        np.testing.assert_allclose(ex.gram, p * np.array([[1, -1], [-1, 1]]), atol=1e-15)


def test_expected_k2_half(k2):
    np.testing.assert_allclose(expected_laplacians(k2, 0.5).gram, [[1, -1], [-1, 1]], atol=1e-15)


def test_expected_extremes(triangle):
    L = laplacian(triangle)
    ex1 = expected_laplacians(triangle, 1.0)
    np.testing.assert_array_equal(ex1.mean, L)
    np.testing.assert_array_equal(ex1.gram, L.T @ L)
    ex0 = expected_laplacians(triangle, 0.0)
    assert not ex0.mean.any() and not ex0.gram.any()


@pytest.mark.parametrize("p", [-0.1, 1.5, float("nan")])
def test_expected_rejects_bad_p(triangle, p):
    with pytest.raises(ValueError):
        expected_laplacians(triangle, p)


def test_oracle_examples(single_edge, triangle):
    np.testing.assert_allclose(
        expected_laplacians_oracle(single_edge, 0.25).mean, [[0.25, -0.25], [0, 0]], atol=1e-15
    )
    a, b = expected_laplacians(triangle, 0.5), expected_laplacians_oracle(triangle, 0.5)
    np.testing.assert_allclose(a.gram, b.gram, atol=1e-12)
    z = expected_laplacians_oracle(triangle, 0.0)
    assert not z.mean.any() and not z.gram.any()


def test_oracle_refuses_above_cap():
    with pytest.raises(ValueError, match="cap 20"):
        expected_laplacians_oracle(make_family("triangular", 4), 0.5)


def test_oracle_by_explicit_loop():
    # independent per-mode loop, no vectorisation
    g = build_graph(3, [(1, 2), (2, 3), (3, 1), (1, 3)])
    p = 0.3
    mean, gram = np.zeros((3, 3)), np.zeros((3, 3))
    for alive in itertools.product([0, 1], repeat=g.edge_count):
        sub = build_graph(3, [e for e, a in zip(g.edges, alive) if a])
        t = p ** sum(alive) * (1 - p) ** (g.edge_count - sum(alive))
        L = laplacian(sub)
        mean += t * L
        gram += t * L.T @ L
    ex = expected_laplacians(g, p)
    np.testing.assert_allclose(ex.mean, mean, atol=1e-14)
    np.testing.assert_allclose(ex.gram, gram, atol=1e-14)


@given(digraphs(), st.sampled_from([0.0, 0.3, 0.7, 1.0]))
def test_expected_matches_oracle(g, p):
    a, b = expected_laplacians(g, p), expected_laplacians_oracle(g, p)
    np.testing.assert_allclose(a.mean, b.mean, rtol=0, atol=1e-12)
    np.testing.assert_allclose(a.gram, b.gram, rtol=0, atol=1e-12)


@given(digraphs(), probabilities)
def test_expected_invariants(g, p):
    ex = expected_laplacians(g, p)
    np.testing.assert_allclose(ex.mean.sum(axis=1), 0, atol=1e-12)
    np.testing.assert_allclose(ex.gram, ex.gram.T, atol=1e-12)
    assert np.linalg.eigvalsh(ex.gram).min() >= -1e-10


# spectrum ----------------------------------------------------------------


def test_spectrum_k2(k2):
    s = spectrum(laplacian(k2))
    np.testing.assert_allclose(s.eigenvalues, [0, 2], atol=1e-12)
    assert s.zero_multiplicity == 1
    np.testing.assert_allclose(s.basis[:, 0], np.full(2, 1 / np.sqrt(2)))


@pytest.mark.parametrize("n", [3, 4, 5, 8, 11])
def test_spectrum_circular_closed_form(n):
    s = spectrum(laplacian(make_family("circular", n)))
    expected = np.sort(2 - 2 * np.cos(2 * np.pi * np.arange(n) / n))
    np.testing.assert_allclose(s.eigenvalues, expected, atol=1e-12)


def test_spectrum_rejects_directed(single_edge):
    with pytest.raises(ValueError, match="undirected"):
        spectrum(laplacian(single_edge))


def test_spectrum_eigenvalues_only(triangle):
    s = spectrum(laplacian(triangle), vectors=False)
    assert s.basis is None
    np.testing.assert_allclose(s.eigenvalues, [0, 3, 3], atol=1e-12)


def test_spectrum_distinct_groups():
    s = spectrum(laplacian(make_family("circular", 4)))
    assert [(round(v, 9), m) for v, m in s.distinct()] == [(0.0, 1), (2.0, 2), (4.0, 1)]


def test_spectrum_disconnected_zero_multiplicity():
    g = build_graph(4, [(1, 2), (2, 1), (3, 4), (4, 3)])
    assert spectrum(laplacian(g)).zero_multiplicity == 2


@given(undirected_graphs())
def test_spectrum_reconstruction(g):
    L = laplacian(g)
    s = spectrum(L)
    U, lam = s.basis, s.eigenvalues
    scale = max(1.0, np.abs(L).max())
    assert np.abs(U @ np.diag(lam) @ U.T - L).max() <= 1e-9 * scale
    np.testing.assert_allclose(U.T @ U, np.eye(g.n), atol=1e-9)
    assert lam.min() >= -1e-9
    assert np.all(np.diff(lam) >= 0)


def test_spectrum_deterministic():
    L = laplacian(make_family("triangular", 5))
    a, b = spectrum(L), spectrum(L)
    np.testing.assert_array_equal(a.basis, b.basis)


# families and parsing ----------------------------------------------------


def test_circular_five():
    g = make_family("circular", 5)
    assert g.edge_count == 10
    assert list(g.in_degrees()) == [2] * 5 and list(g.out_degrees()) == [2] * 5


def test_circular_two_is_k2(k2):
    assert k2.edges == ((1, 2), (2, 1))


@pytest.mark.parametrize("h", [2, 3, 4, 7, 50])
def test_triangular_counts(h):
    g = make_family("triangular", h)
    assert g.n == h * (h + 1) // 2
    assert g.edge_count == 3 * h * (h - 1)
    assert graph_properties(g).undirected


def test_triangular_two_is_triangle(triangle):
    assert make_family("triangular", 2).edges == triangle.edges


@pytest.mark.parametrize("kind, size", [("circular", 1), ("triangular", 1), ("hexagonal", 4)])
def test_make_family_rejects(kind, size):
    with pytest.raises(GraphError):
        make_family(kind, size)


def test_parse_forms(tmp_path, triangle):
    assert parse_graph("triangular:2").edges == triangle.edges
    d = graph_to_json(triangle)
    assert parse_graph(d) == triangle
    path = tmp_path / "g.json"
    path.write_text('{"n": 2, "edges": [[1, 2]]}')
    assert load_graph(str(path)).edges == ((1, 2),)
    assert load_graph("circular:3").n == 3
    for bad in ("circular", "circular:x", {"n": 2}, 3.0):
        with pytest.raises(GraphError):
            parse_graph(bad)


def test_random_digraph_bounds():
    rng = np.random.default_rng(0)
    for _ in range(200):
        g = random_digraph(rng, 5, 10)
        assert 2 <= g.n <= 5 and g.edge_count <= 10
