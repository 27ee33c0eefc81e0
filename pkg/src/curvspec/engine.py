"""Time integration, eigenpair continuation and eigenvalue derivatives.

A geometry state is any object exposing ``variable``, ``evolve(delta)``,
``flow_velocity(params)``, ``cfl_limit(params)``, ``curvature()`` and
``eigensolve(c, m)``. States with sampled eigenfunctions also expose
``overlap(u, v)``.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .params import FlowParams
from .types import CurvatureBundle, EigenPair, NumericalAbort, TriangleInequalityError, cluster_ranges

DEFAULT_OVERLAP_THRESHOLD = 0.9


def cfl_limit(state, params: FlowParams, safety: float = 0.1) -> float:
    return state.cfl_limit(params, safety)


def step(state, params: FlowParams, dt: float, safety: float = 0.1):
    """One classical fourth-order Runge-Kutta step of the flow.

    Raises
    ------
    NumericalAbort
        If ``dt`` exceeds the stability limit or the state leaves its domain.
    TriangleInequalityError
        If a mesh face degenerates.
    """
    limit = state.cfl_limit(params, safety)
    if dt > limit * (1 + 1e-12):
        raise NumericalAbort(f"dt={dt:g} exceeds the stability limit {limit:g}")
    k1 = state.flow_velocity(params)
    k2 = state.evolve(0.5 * dt * k1).flow_velocity(params)
    k3 = state.evolve(0.5 * dt * k2).flow_velocity(params)
    k4 = state.evolve(dt * k3).flow_velocity(params)
    return state.evolve(dt * (k1 + 2 * k2 + 2 * k3 + k4) / 6)


@dataclass
class Slice:
    t: float
    state: object
    curvature: CurvatureBundle
    pairs: list
    overlaps: list = field(default_factory=list)

    @property
    def values(self) -> np.ndarray:
        return np.array([p.value for p in self.pairs])

    @property
    def clusters(self) -> list:
        if self.pairs and self.pairs[0].vector is None:
            return [range(k, k + 1) for k in range(len(self.pairs))]
        return cluster_ranges(self.values)


@dataclass
class Trajectory:
    params: FlowParams
    c: float
    dt: float
    slices: list
    flags: list = field(default_factory=list)
    aborted: str | None = None
    continuity_constant: float = 0.0

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.slices])

    def eigenvalues(self) -> np.ndarray:
        return np.array([s.values for s in self.slices])

    def cluster_of(self, k: int, index: int) -> range:
        for r in self.slices[index].clusters:
            if k in r:
                return r
        raise IndexError(f"branch {k} not tracked")

    def branch(self, k: int, index: int = 0) -> np.ndarray:
        """Cluster-mean observable containing branch ``k``, along the whole run."""
        r = self.cluster_of(k, index)
        return np.array([float(np.mean(s.values[r.start : r.stop])) for s in self.slices])

    def index_of(self, t: float) -> int:
        return int(np.argmin(np.abs(self.times - t)))


def _procrustes(block: np.ndarray) -> np.ndarray:
    U, _, Vt = np.linalg.svd(block)
    return Vt.T @ U.T


def continue_eigenpairs(prev: list, next_state, c: float, m: int | None = None, threshold: float = DEFAULT_OVERLAP_THRESHOLD):
    """Solve on ``next_state`` and align the result with ``prev``.

    Returns ``(pairs, overlaps, flags)``. Branch ``k`` of the result continues
    branch ``k`` of ``prev``. Inside a degenerate cluster the basis is rotated
    onto the previous one (orthogonal Procrustes), and the reported overlap is
    the diagonal of the aligned overlap block.
    """
    m = len(prev) if m is None else m
    pairs = next_state.eigensolve(c, m)
    if not prev or pairs[0].vector is None:
        return pairs, [1.0] * len(pairs), []
    mass = getattr(next_state, "mass")
    mass = np.asarray(mass).ravel()
    P = np.array([np.asarray(p.vector).ravel() for p in prev])
    N = np.array([np.asarray(p.vector).ravel() for p in pairs])
    O = (P * mass) @ N.T
    # continued branches keep cluster members adjacent, so index order groups them
    prev_clusters = cluster_ranges([p.value for p in prev])
    next_clusters = cluster_ranges([p.value for p in pairs])
    flags = []

    score = np.array([[np.sum(O[pc.start : pc.stop, nc.start : nc.stop] ** 2) / max(len(pc), len(nc)) for nc in next_clusters] for pc in prev_clusters])
    result: list = [None] * m
    overlaps = [0.0] * m
    used_p, used_n = set(), set()
    for flat in np.argsort(-score, axis=None, kind="stable"):
        i, j = divmod(int(flat), len(next_clusters))
        if i in used_p or j in used_n:
            continue
        used_p.add(i)
        used_n.add(j)
        pc, nc = prev_clusters[i], next_clusters[j]
        if len(pc) == len(nc):
            block = O[pc.start : pc.stop, nc.start : nc.stop]
            Q = _procrustes(block) if len(nc) > 1 else np.array([[1.0 if block[0, 0] >= 0 else -1.0]])
            rotated = Q.T @ N[nc.start : nc.stop]
            aligned = np.diag(block @ Q)
            for off, k in enumerate(pc):
                src = pairs[nc.start + off]
                result[k] = EigenPair(src.value, rotated[off].reshape(np.shape(src.vector)))
                overlaps[k] = float(aligned[off])
        else:
            flags.append(f"cluster of size {len(pc)} at branches {pc.start}-{pc.stop - 1} continued by size {len(nc)}")
            for k, jn in zip(pc, nc):
                src = pairs[jn]
                sgn = 1.0 if O[k, jn] >= 0 else -1.0
                result[k] = EigenPair(src.value, sgn * np.asarray(src.vector))
                overlaps[k] = abs(float(O[k, jn]))
    for k in range(m):
        if result[k] is None:  # unmatched leftovers keep solver order
            result[k] = pairs[k]
            overlaps[k] = abs(float(O[k, k]))
    if any(r.value != p.value for r, p in zip(result, pairs)):
        flags.append("branches reordered")
    for k, ov in enumerate(overlaps):
        if ov < threshold:
            flags.append(f"crossing/reorder: branch {k} overlap {ov:.3f} below {threshold}")
    return result, overlaps, flags


def run(
    state,
    params: FlowParams,
    t_end: float,
    dt: float | None = None,
    m: int = 6,
    c: float | None = None,
    threshold: float = DEFAULT_OVERLAP_THRESHOLD,
    safety: float = 0.1,
) -> Trajectory:
    """Integrate the flow on ``[0, t_end]`` with a uniform step, solving ``m`` eigenpairs per slice.

    ``dt=None`` uses half the stability limit of the initial state. A
    numerical abort ends the run early; the trajectory keeps every valid
    slice and records the reason.
    """
    c = params.c if c is None else c
    if t_end <= 0:
        raise ValueError("time horizon must be positive")
    if dt is None:
        dt = 0.5 * state.cfl_limit(params, safety)
        if not math.isfinite(dt):
            dt = t_end / 10
    steps = max(1, math.ceil(t_end / dt - 1e-9))
    dt = t_end / steps
    pairs = state.eigensolve(c, m) if m else []
    traj = Trajectory(params, c, dt, [Slice(0.0, state, state.curvature(), pairs, [1.0] * len(pairs))])
    jump = 0.0
    for i in range(1, steps + 1):
        try:
            state = step(state, params, dt, safety)
            curv = state.curvature()
        except (NumericalAbort, TriangleInequalityError) as exc:
            traj.aborted = str(exc)
            break
        if m:
            pairs, overlaps, flags = continue_eigenpairs(pairs, state, c, m, threshold)
            traj.flags += [f"t={i * dt:.6g}: {f}" for f in flags]
            prev = traj.slices[-1].values
            jump = max(jump, float(np.max(np.abs(np.array([p.value for p in pairs]) - prev))) / dt)
        else:
            overlaps = []
        traj.slices.append(Slice(i * dt, state, curv, pairs, overlaps))
    traj.continuity_constant = jump
    return traj


@dataclass(frozen=True)
class FDResult:
    value: float
    error_bar: float
    one_sided: bool = False


def lambda_dot_fd(traj: Trajectory, k: int, t: float | None = None, index: int | None = None) -> FDResult:
    """Finite-difference time derivative of the cluster-mean branch ``k``.

    Central differences are used at interior slices, with a Richardson
    error bar from the doubled stencil when available. Boundary slices fall
    back to a first-order one-sided difference and emit a warning.
    """
    i = traj.index_of(t) if index is None else index
    y = traj.branch(k, i)
    return _fd(y, traj.dt, i)


def _fd(y, dt: float, i: int) -> FDResult:
    n = len(y)
    if n < 2:
        raise ValueError("need at least two slices for a time derivative")
    if 0 < i < n - 1:
        d1 = (y[i + 1] - y[i - 1]) / (2 * dt)
        if 1 < i < n - 2:
            d2 = (y[i + 2] - y[i - 2]) / (4 * dt)
            err = abs(d1 - d2) / 3
        else:
            err = abs(y[i + 1] - 2 * y[i] + y[i - 1]) / dt
        return FDResult(float(d1), float(err))
    warnings.warn("one-sided first-order difference at a trajectory boundary", RuntimeWarning, stacklevel=3)
    if i == 0:
        d = (y[1] - y[0]) / dt
        err = abs(y[2] - 2 * y[1] + y[0]) / dt if n > 2 else abs(d)
    else:
        d = (y[-1] - y[-2]) / dt
        err = abs(y[-1] - 2 * y[-2] + y[-3]) / dt if n > 2 else abs(d)
    return FDResult(float(d), float(err), True)


def curvature_dot(traj: Trajectory, index: int) -> np.ndarray:
    """Central difference of the scalar curvature field at an interior slice."""
    if not 0 < index < len(traj.slices) - 1:
        raise ValueError("curvature derivative needs neighbouring slices on both sides")
    a = np.asarray(traj.slices[index - 1].curvature.scalar)
    b = np.asarray(traj.slices[index + 1].curvature.scalar)
    return (b - a) / (2 * traj.dt)


def _g(x) -> str:
    return repr(float(x))


def trajectory_csv(traj: Trajectory) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["t", "k", "lambda", "overlap", "cluster_id"])
    for s in traj.slices:
        cluster_id = {}
        for cid, r in enumerate(s.clusters):
            for k in r:
                cluster_id[k] = cid
        for k, p in enumerate(s.pairs):
            ov = s.overlaps[k] if k < len(s.overlaps) else float("nan")
            writer.writerow([_g(s.t), k, _g(p.value), _g(ov), cluster_id.get(k, k)])
    return buf.getvalue()


def trajectory_summary(traj: Trajectory) -> dict:
    out = {
        "params": traj.params.to_dict(),
        "c": traj.c,
        "dt": traj.dt,
        "steps": len(traj.slices) - 1,
        "aborted": traj.aborted,
        "flags": traj.flags,
        "continuity_constant": traj.continuity_constant,
        "slices": [],
    }
    for s in traj.slices:
        R = np.asarray(s.curvature.scalar)
        out["slices"].append(
            {
                "t": s.t,
                "eigenvalues": [p.value for p in s.pairs],
                "multiplicities": [p.multiplicity for p in s.pairs],
                "overlaps": list(s.overlaps),
                "R_min": float(R.min()),
                "R_max": float(R.max()),
                "r": s.curvature.mean,
            }
        )
    return out


def trajectory_json(traj: Trajectory) -> str:
    return json.dumps(trajectory_summary(traj), indent=2)
