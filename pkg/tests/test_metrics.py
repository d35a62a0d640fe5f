"""Episode metrics: identity and failure cases, DTW oracle agreement,
range and ordering invariants, CSV shape."""

import numpy as np
import pytest

from navcontrast import oracles
from navcontrast.graphs import shortest_path
from navcontrast.metrics import (CSV_HEADER, MetricReport, aggregate,
                                 evaluate_episode, reports_to_csv)

from conftest import line_graph, random_connected_graph

RADIUS = 3.0


def test_identity_prediction_scores_one():
    g = line_graph(5, spacing=2.0)
    ref = shortest_path(g, 0, 4)
    rep = evaluate_episode(g, ref, ref, RADIUS)
    assert rep.sr == 1.0 and rep.spl == pytest.approx(1.0)
    assert rep.ndtw == pytest.approx(1.0) and rep.sdtw == pytest.approx(1.0)
    assert rep.cls == pytest.approx(1.0)
    assert rep.ne == 0.0 and rep.tl == pytest.approx(ref.length_m)


def test_zero_length_identity_is_guarded():
    g = line_graph(3)
    ref = g.trajectory([1])
    rep = evaluate_episode(g, ref, ref, RADIUS)
    assert rep.sr == 1.0 and rep.spl == 1.0 and rep.cls == pytest.approx(1.0)


def test_stopping_at_start_far_from_goal_fails():
    g = line_graph(8, spacing=2.0)      # goal 14 m away
    ref = shortest_path(g, 0, 7)
    pred = g.trajectory([0])
    rep = evaluate_episode(g, pred, ref, RADIUS)
    assert rep.sr == 0.0 and rep.spl == 0.0 and rep.sdtw == 0.0
    assert rep.ne == pytest.approx(14.0)
    assert 0.0 < rep.ndtw < 1.0


def test_hand_three_node_case_matches_dtw_oracle():
    g = line_graph(3, spacing=2.0)
    ref = g.trajectory([0, 1, 2])
    pred = g.trajectory([0, 1])
    rep = evaluate_episode(g, pred, ref, RADIUS)
    cost = [[g.geodesic(p, r) for r in ref.node_seq] for p in pred.node_seq]
    want = np.exp(-oracles.dtw_table(cost) / (len(ref.node_seq) * RADIUS))
    assert rep.ndtw == pytest.approx(float(want), abs=1e-12)


def test_geodesic_not_straight_line_error():
    # U-shaped corridor: endpoints close in space, far along the graph
    from navcontrast.graphs import NavGraph
    nodes = [(0, (0, 0, 0), 0), (1, (4, 0, 0), 0), (2, (4, 1, 0), 0),
             (3, (0, 1, 0), 0)]
    g = NavGraph(nodes, [[0, 1], [1, 2], [2, 3]])
    ref = g.trajectory([0, 1, 2, 3])
    pred = g.trajectory([0])
    rep = evaluate_episode(g, pred, ref, RADIUS)
    assert rep.ne == pytest.approx(9.0)     # 4 + 1 + 4, not the 1.0 crow-fly
    assert rep.sr == 0.0


def test_ranges_and_spl_bound_on_random_episodes():
    rng = np.random.default_rng(2)
    for _ in range(50):
        g = random_connected_graph(rng, 9)
        a, b = (int(x) for x in rng.choice(9, size=2, replace=False))
        ref = shortest_path(g, a, b)
        walk = [a]
        for _ in range(int(rng.integers(0, 6))):
            walk.append(int(rng.choice(g.neighbors(walk[-1]))))
        pred = g.trajectory(walk)
        rep = evaluate_episode(g, pred, ref, RADIUS)
        assert rep.spl <= rep.sr + 1e-12
        for name in ("sr", "spl", "ndtw", "cls", "sdtw"):
            assert 0.0 <= getattr(rep, name) <= 1.0 + 1e-12
        assert rep.tl >= 0.0 and rep.ne >= 0.0


def test_csv_header_and_rows():
    rep = MetricReport(1.0, 2.0, 1.0, 0.5, 0.25, 0.75, 0.25)
    text = reports_to_csv([rep])
    lines = text.strip().split("\n")
    assert lines[0] == CSV_HEADER == "TL,NE,SR,SPL,nDTW,CLS,SDTW"
    assert lines[1].split(",")[0] == "1.000000"
    assert len(lines[1].split(",")) == 7


def test_aggregate_is_fieldwise_mean():
    a = MetricReport(2.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0)
    b = MetricReport(4.0, 3.0, 0.0, 0.0, 0.5, 0.5, 0.0)
    agg = aggregate([a, b])
    assert agg.tl == 3.0 and agg.ne == 2.0 and agg.sr == 0.5
    assert agg.ndtw == 0.75
    with pytest.raises(ValueError):
        aggregate([])


def test_bad_radius_rejected():
    g = line_graph(3)
    ref = g.trajectory([0, 1])
    with pytest.raises(ValueError):
        evaluate_episode(g, ref, ref, 0.0)
