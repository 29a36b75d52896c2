"""Hypothesis strategies shared across test modules."""

from hypothesis import strategies as st

from lossynet.graph import build_graph


@st.composite
def digraphs(draw, max_n=5, max_edges=10, min_n=1):
    n = draw(st.integers(min_n, max_n))
    pairs = [(i, j) for i in range(1, n + 1) for j in range(1, n + 1) if i != j]
    edges = draw(st.lists(st.sampled_from(pairs), unique=True, max_size=max_edges)) if pairs else []
    return build_graph(n, edges)


@st.composite
def undirected_graphs(draw, max_n=6):
    n = draw(st.integers(2, max_n))
    pairs = [(i, j) for i in range(1, n + 1) for j in range(i + 1, n + 1)]
    chosen = draw(st.lists(st.sampled_from(pairs), unique=True, min_size=1))
    edges = [e for i, j in chosen for e in ((i, j), (j, i))]
    return build_graph(n, edges)


probabilities = st.floats(0.0, 1.0, allow_nan=False)
