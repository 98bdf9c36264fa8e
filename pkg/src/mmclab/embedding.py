"""Euclidean embedding of ergodic chains and its empirical trajectory version.

A chain maps to the S^2 vector with coordinate (s, s') = sqrt(pi(s)) p(s'|s)
(row-major flattening); a trajectory maps to N(s,s') / sqrt(H N(s)) from its
occupation and transition counts. Stacking embeddings row-wise over the T
trajectories gives the data matrices the spectral stage decomposes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .chains import MarkovModel
from .errors import DimensionMismatch, StateOutOfRange
from .simgen import MixtureInstance, TrajectorySet

__all__ = [
    "CountStats",
    "DataMatrix",
    "count_stats",
    "batch_counts",
    "embed_model",
    "embed_trajectory",
    "embed_counts_batch",
    "build_matrices",
    "two_inf_distance",
    "pi_from_embedding",
    "kernel_from_embedding",
    "save_matrix",
    "load_matrix",
]


@dataclass(frozen=True)
class CountStats:
    """Occupation counts over h in [H] and transition counts over h in [H-1]."""

    visits: np.ndarray       # (S,)
    transitions: np.ndarray  # (S, S)
    H: int


@dataclass(frozen=True)
class DataMatrix:
    """T x S^2 row-stack of embeddings, plus the horizon it was built at."""

    values: np.ndarray  # (T, S*S) float64
    kind: str           # "truth" or "empirical"
    S: int
    H: int

    def __post_init__(self):
        self.values.setflags(write=False)

    @property
    def T(self) -> int:
        return self.values.shape[0]


def count_stats(trajectory: np.ndarray, S: int) -> CountStats:
    """Exact visit and transition counts of a single trajectory."""
    traj = np.asarray(trajectory, dtype=np.int64)
    if traj.ndim != 1 or traj.shape[0] < 2:
        raise DimensionMismatch("trajectory must be 1-D with H >= 2")
    if traj.min() < 0 or traj.max() >= S:
        raise StateOutOfRange(f"state indices must lie in [0, {S - 1}]")
    visits = np.bincount(traj, minlength=S).astype(np.int64)
    pair_idx = traj[:-1] * S + traj[1:]
    transitions = np.bincount(pair_idx, minlength=S * S).reshape(S, S).astype(np.int64)
    return CountStats(visits=visits, transitions=transitions, H=traj.shape[0])


def batch_counts(states: np.ndarray, S: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-trajectory visit (T,S) and transition (T,S,S) counts, vectorized."""
    T, H = states.shape
    t_idx = np.repeat(np.arange(T, dtype=np.int64), H)
    visits = np.bincount(t_idx * S + states.ravel(), minlength=T * S).reshape(T, S)
    t_idx = np.repeat(np.arange(T, dtype=np.int64), H - 1)
    flat = t_idx * (S * S) + states[:, :-1].ravel() * S + states[:, 1:].ravel()
    transitions = np.bincount(flat, minlength=T * S * S).reshape(T, S, S)
    return visits, transitions


def embed_model(M: MarkovModel) -> np.ndarray:
    """Coordinates (s, s') = sqrt(pi(s)) P(s, s'), row-major."""
    return (np.sqrt(M.pi)[:, None] * M.P).ravel()


def embed_trajectory(stats: CountStats) -> np.ndarray:
    """Coordinates N(s,s') / sqrt(H N(s)); rows with N(s) = 0 map to zero.

    N(s) counts all H visits (including the final state, which has no
    outgoing transition), exactly as the population embedding's weight does
    in the limit.
    """
    denom = np.sqrt(stats.H * stats.visits.astype(np.float64))
    out = np.zeros_like(stats.transitions, dtype=np.float64)
    np.divide(stats.transitions, denom[:, None], out=out, where=denom[:, None] > 0)
    return out.ravel()


def embed_counts_batch(visits: np.ndarray, transitions: np.ndarray, H: int) -> np.ndarray:
    """Vectorized :func:`embed_trajectory` over (T,S) visits and (T,S,S) transitions."""
    denom = np.sqrt(H * visits.astype(np.float64))[:, :, None]
    out = np.zeros(transitions.shape, dtype=np.float64)
    np.divide(transitions, denom, out=out, where=denom > 0)
    return out.reshape(out.shape[0], -1)


def build_matrices(instance: MixtureInstance, trajs: TrajectorySet) -> tuple[DataMatrix, DataMatrix]:
    """Ground-truth W (row t = model embedding of f(t)) and empirical W-hat."""
    if trajs.T != instance.T or trajs.H != instance.H:
        raise DimensionMismatch("trajectory set shape does not match the instance")
    S = instance.S
    if trajs.states.max() >= S:
        raise DimensionMismatch("trajectories visit states outside the instance state space")
    model_rows = np.stack([embed_model(m) for m in instance.models])
    W = DataMatrix(values=model_rows[instance.decoding].copy(), kind="truth", S=S, H=instance.H)
    visits, transitions = batch_counts(trajs.states, S)
    W_hat = DataMatrix(values=embed_counts_batch(visits, transitions, trajs.H),
                       kind="empirical", S=S, H=trajs.H)
    return W, W_hat


def two_inf_distance(A: DataMatrix | np.ndarray, B: DataMatrix | np.ndarray) -> float:
    """2->infinity distance: max over rows of the l2 row difference."""
    a = A.values if isinstance(A, DataMatrix) else np.asarray(A, dtype=np.float64)
    b = B.values if isinstance(B, DataMatrix) else np.asarray(B, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.sqrt(((a - b) ** 2).sum(axis=1)).max())


def pi_from_embedding(L: np.ndarray, S: int) -> np.ndarray:
    """Recover pi from a model embedding: summing row s over s' gives
    sqrt(pi(s)) (rows of P sum to one), so pi(s) is the squared row sum."""
    return L.reshape(S, S).sum(axis=1) ** 2


def kernel_from_embedding(L: np.ndarray, S: int) -> np.ndarray:
    """Recover P(s,s') = L(s,s') / sqrt(pi(s)) from a model embedding."""
    root_pi = L.reshape(S, S).sum(axis=1)
    return L.reshape(S, S) / root_pi[:, None]


def save_matrix(mat: DataMatrix, path: str | Path) -> None:
    """Dense row-major f64 binary with a JSON shape sidecar."""
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(mat.values.astype("<f8").tobytes(order="C"))
    sidecar = {"T": mat.T, "cols": mat.values.shape[1], "kind": mat.kind,
               "S": mat.S, "H": mat.H}
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar, indent=2))


def load_matrix(path: str | Path) -> DataMatrix:
    path = Path(path)
    meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    values = np.fromfile(path, dtype="<f8").reshape(meta["T"], meta["cols"])
    return DataMatrix(values=values, kind=meta["kind"], S=int(meta["S"]), H=int(meta["H"]))
