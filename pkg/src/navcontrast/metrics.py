"""Episode-level navigation metrics.

All distances are geodesic on the graph, not straight-line, so scores are
meaningful in the presence of walls (missing edges).  Path-shape scores
(nDTW, CLS) follow the usual exponential-decay formulations with the
success radius as the decay scale.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .kernels import dtw_cost

CSV_HEADER = "TL,NE,SR,SPL,nDTW,CLS,SDTW"

FIELDS = ("tl", "ne", "sr", "spl", "ndtw", "cls", "sdtw")


@dataclass(frozen=True)
class MetricReport:
    """One evaluated episode (or an aggregate over many)."""

    tl: float       # trajectory length walked, meters
    ne: float       # geodesic error from stop node to goal, meters
    sr: float       # success: stopped within the success radius
    spl: float      # success weighted by path length
    ndtw: float     # normalized dynamic time warping similarity
    cls: float      # coverage weighted by length score
    sdtw: float     # success weighted by nDTW

    def csv_row(self) -> str:
        return ",".join(f"{getattr(self, name):.6f}" for name in FIELDS)

    def as_dict(self):
        return {name: getattr(self, name) for name in FIELDS}


def evaluate_episode(graph, predicted, reference, success_radius_m) -> MetricReport:
    """Score a predicted trajectory against the reference one.

    Both arguments are Trajectory instances on graph; the reference goal is
    its final node.  success_radius_m must be positive.
    """
    if success_radius_m <= 0.0:
        raise ValueError("success_radius_m must be positive")
    goal = reference.goal
    pred = predicted.node_seq
    ref = reference.node_seq

    tl = predicted.length_m
    ne = graph.geodesic(pred[-1], goal)
    sr = 1.0 if ne <= success_radius_m else 0.0

    ref_len = reference.length_m
    denom = max(tl, ref_len)
    ratio = 1.0 if denom == 0.0 else ref_len / denom
    spl = sr * ratio

    cost = np.empty((len(pred), len(ref)))
    for i, p in enumerate(pred):
        row = graph.geodesic_distances(p)
        for j, r in enumerate(ref):
            cost[i, j] = row[r]
    ndtw = float(np.exp(-dtw_cost(cost) / (len(ref) * success_radius_m)))

    # coverage: how close the prediction comes to each reference node
    near = np.empty(len(ref))
    for j, r in enumerate(ref):
        row = graph.geodesic_distances(r)
        near[j] = min(row[p] for p in pred)
    pc = float(np.mean(np.exp(-near / success_radius_m)))
    epl = pc * ref_len
    ls_denom = epl + abs(epl - tl)
    ls = 1.0 if ls_denom == 0.0 else epl / ls_denom
    cls = pc * ls

    sdtw = sr * ndtw
    return MetricReport(tl, ne, sr, spl, ndtw, cls, sdtw)


def aggregate(reports) -> MetricReport:
    """Field-wise mean over a non-empty report sequence."""
    reports = list(reports)
    if not reports:
        raise ValueError("no reports to aggregate")
    means = {name: float(np.mean([getattr(r, name) for r in reports]))
             for name in FIELDS}
    return MetricReport(**means)


def reports_to_csv(reports) -> str:
    buf = io.StringIO()
    buf.write(CSV_HEADER + "\n")
    for rep in reports:
        buf.write(rep.csv_row() + "\n")
    return buf.getvalue()
