import numpy as np
import pytest

from navcontrast.graphs import NavGraph


def line_graph(n=3, spacing=1.0):
    nodes = [(i, (i * spacing, 0.0, 0.0), i % 3) for i in range(n)]
    edges = [[i, i + 1] for i in range(n - 1)]
    return NavGraph(nodes, edges, graph_id=f"line{n}")


def triangle_graph():
    nodes = [(0, (0.0, 0.0, 0.0), 0), (1, (1.0, 0.0, 0.0), 1),
             (2, (0.5, 1.0, 0.0), 2)]
    return NavGraph(nodes, [[0, 1], [1, 2], [0, 2]], graph_id="triangle")


def cycle_chord_graph():
    """4-cycle 0-1-2-3 plus the 0-2 chord."""
    nodes = [(0, (0.0, 0.0, 0.0), 0), (1, (1.0, 0.0, 0.0), 1),
             (2, (1.0, 1.0, 0.0), 2), (3, (0.0, 1.0, 0.0), 0)]
    return NavGraph(nodes, [[0, 1], [1, 2], [2, 3], [3, 0], [0, 2]],
                    graph_id="cycle_chord")


def grid_graph(rows=3, cols=3, spacing=2.0, landmark_mod=4):
    """Axis-aligned grid; multiple equal-hop routes between corners."""
    nodes, edges = [], []
    for r in range(rows):
        for c in range(cols):
            i = r * cols + c
            nodes.append((i, (c * spacing, r * spacing, 0.0),
                          (r + c) % landmark_mod))
            if c < cols - 1:
                edges.append([i, i + 1])
            if r < rows - 1:
                edges.append([i, i + cols])
    return NavGraph(nodes, edges, graph_id=f"grid{rows}x{cols}")


def random_connected_graph(rng, n, extra_edge_prob=0.3):
    """Random spanning tree plus a few extra edges, random 3-D positions."""
    pos = rng.uniform(-5.0, 5.0, size=(n, 3))
    nodes = [(i, tuple(pos[i]), int(rng.integers(0, 5))) for i in range(n)]
    edges = set()
    order = rng.permutation(n)
    for k in range(1, n):
        a = int(order[k])
        b = int(order[int(rng.integers(0, k))])
        edges.add((min(a, b), max(a, b)))
    for a in range(n):
        for b in range(a + 1, n):
            if (a, b) not in edges and rng.random() < extra_edge_prob:
                edges.add((a, b))
    return NavGraph(nodes, [list(e) for e in sorted(edges)],
                    graph_id=f"rand{n}")


@pytest.fixture
def rng():
    return np.random.default_rng(0)
