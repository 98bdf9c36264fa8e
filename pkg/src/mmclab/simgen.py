"""Mixture-instance construction and reproducible trajectory sampling.

An instance bundles K chains over a common state space with a ground-truth
decoding (trajectory index -> chain index). Sampling draws each trajectory
from its own counter-based RNG stream keyed by (seed, t), so results are
bit-identical regardless of iteration order or worker count.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .chains import MarkovModel, model_from_json, model_to_json, validate_model
from .errors import (
    DimensionMismatch,
    EmptyClusterAfterRounding,
    StateSpaceMismatch,
)

__all__ = [
    "MixtureInstance",
    "TrajectorySet",
    "make_instance",
    "cluster_sizes",
    "single_chain_instance",
    "sample_trajectories",
    "gen_random_ergodic",
    "gen_separation_models",
    "gen_separation_instance",
    "instance_to_json",
    "instance_from_json",
    "save_instance",
    "load_instance",
    "save_trajectories",
    "load_trajectories",
]


@dataclass(frozen=True)
class MixtureInstance:
    """K chains over a common state space plus the ground-truth decoding."""

    models: tuple[MarkovModel, ...]
    decoding: np.ndarray  # (T,) int, 0-based cluster index per trajectory
    T: int
    H: int

    def __post_init__(self):
        self.decoding.setflags(write=False)

    @property
    def K(self) -> int:
        return len(self.models)

    @property
    def S(self) -> int:
        return self.models[0].S

    @property
    def alpha(self) -> np.ndarray:
        """Relative cluster sizes alpha_k = |f^{-1}(k)| / T."""
        return np.bincount(self.decoding, minlength=self.K) / self.T

    @property
    def alpha_min(self) -> float:
        return float(self.alpha.min())

    def instance_id(self) -> str:
        """Content hash of the generating instance (sha256 of canonical JSON)."""
        doc = instance_to_json(self)
        blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


@dataclass(frozen=True)
class TrajectorySet:
    """T state sequences of length H plus the seed that produced them."""

    states: np.ndarray  # (T, H) int32, 0-based state indices
    seed: int
    instance_id: str

    def __post_init__(self):
        self.states.setflags(write=False)

    @property
    def T(self) -> int:
        return self.states.shape[0]

    @property
    def H(self) -> int:
        return self.states.shape[1]


def cluster_sizes(alpha: np.ndarray, T: int) -> np.ndarray:
    """Largest-remainder rounding of alpha * T with a floor of 1 per cluster."""
    alpha = np.asarray(alpha, dtype=np.float64)
    K = alpha.shape[0]
    if T < K:
        raise EmptyClusterAfterRounding(f"T={T} < K={K}: some cluster must be empty")
    if np.any(alpha <= 0.0):
        raise EmptyClusterAfterRounding("alpha has a zero entry; every cluster must be nonempty")
    raw = alpha * T
    sizes = np.floor(raw).astype(np.int64)
    rem = raw - sizes
    # hand out the remaining slots to the largest remainders (stable order)
    for idx in np.argsort(-rem, kind="stable")[: T - int(sizes.sum())]:
        sizes[idx] += 1
    # floor of 1: take from the largest clusters
    while np.any(sizes == 0):
        sizes[np.argmax(sizes)] -= 1
        sizes[np.argmin(sizes)] += 1
    return sizes


def make_instance(models: Sequence[MarkovModel], alpha: np.ndarray, T: int, H: int,
                  *, shuffle: bool = False, shuffle_seed: int = 0) -> MixtureInstance:
    """Build an instance whose decoding has round(alpha_k * T) trajectories per cluster.

    Clusters are contiguous blocks by default; with ``shuffle`` the decoding is
    permuted by a seeded RNG (all downstream algorithms are permutation
    equivariant in t, which the tests check).
    """
    models = tuple(models)
    if len(models) < 2:
        raise DimensionMismatch("an instance needs K >= 2 models")
    S = models[0].S
    if any(m.S != S for m in models):
        raise StateSpaceMismatch("all models must share the same state space")
    if H < 2:
        raise DimensionMismatch("H must be >= 2")
    sizes = cluster_sizes(np.asarray(alpha, dtype=np.float64), T)
    decoding = np.repeat(np.arange(len(models)), sizes)
    if shuffle:
        rng = np.random.default_rng(shuffle_seed)
        decoding = rng.permutation(decoding)
    return MixtureInstance(models=models, decoding=decoding, T=T, H=H)


def _trajectory_rngs(seed: int, T: int) -> list[np.random.Generator]:
    """One Philox stream per trajectory, keyed by (seed, t)."""
    return [np.random.Generator(np.random.Philox(key=np.array([seed & 0xFFFFFFFFFFFFFFFF, t],
                                                              dtype=np.uint64)))
            for t in range(T)]


def sample_trajectories(instance: MixtureInstance, seed: int,
                        chunk: int = 2048) -> TrajectorySet:
    """Sample all T trajectories; trajectory t uses the (seed, t) sub-stream.

    The walk is vectorized across trajectories (inverse-CDF steps on
    per-trajectory uniforms), which leaves the per-trajectory streams intact:
    trajectory t consumes exactly H uniforms from its own stream.
    """
    T, H, S = instance.T, instance.H, instance.S
    f = instance.decoding
    mu_cdf = np.cumsum(np.stack([m.mu for m in instance.models]), axis=1)
    P_cdf = np.cumsum(np.stack([m.P for m in instance.models]), axis=2)
    # uniforms live in [0,1); an exact 1.0 endpoint keeps inverse-CDF indices in range
    mu_cdf[:, -1] = 1.0
    P_cdf[:, :, -1] = 1.0
    gens = _trajectory_rngs(seed, T)

    states = np.empty((T, H), dtype=np.int64)
    u0 = np.array([g.random() for g in gens])
    states[:, 0] = (u0[:, None] > mu_cdf[f]).sum(axis=1)
    cdf_flat = P_cdf.reshape(-1, S)  # row f*S + s is the CDF of p^{(f)}(.|s)
    base = f * S
    cur = states[:, 0]
    h = 1
    while h < H:
        width = min(chunk, H - h)
        U = np.stack([g.random(width) for g in gens])
        for j in range(width):
            cur = (U[:, j, None] > cdf_flat[base + cur]).sum(axis=1)
            states[:, h + j] = cur
        h += width
    return TrajectorySet(states=states.astype(np.int32), seed=int(seed),
                         instance_id=instance.instance_id())


def single_chain_instance(model: MarkovModel, T: int, H: int) -> MixtureInstance:
    """K = 1 diagnostic instance (all trajectories from one chain).

    Clustering is vacuous here; the instance exists for concentration and
    estimation experiments where every row of the data matrix targets the
    same embedding.
    """
    return MixtureInstance(models=(model,), decoding=np.zeros(T, dtype=np.int64),
                           T=T, H=H)


def gen_random_ergodic(S: int, seed: int, floor: float) -> MarkovModel:
    """Random ergodic chain: Dirichlet rows mixed toward uniform so entries >= floor.

    All-positive entries guarantee irreducibility and aperiodicity, and the
    floor bounds the cross-chain transition ratio eta_p by construction.
    """
    if S < 2:
        raise DimensionMismatch("S must be >= 2")
    if not 0.0 < floor < 1.0 / S:
        raise ValueError(f"floor must lie in (0, 1/S); got {floor}")
    rng = np.random.default_rng(seed)
    lam = S * floor
    P = (1.0 - lam) * rng.dirichlet(np.ones(S), size=S) + floor
    mu = (1.0 - lam) * rng.dirichlet(np.ones(S)) + floor
    # renormalize away accumulated float error before validation
    P /= P.sum(axis=1, keepdims=True)
    mu /= mu.sum()
    return validate_model(P, mu)


def gen_separation_models(S_prime: int) -> tuple[MarkovModel, MarkovModel]:
    """The two-chain construction on S = 2 S' states with swapped 3:1 row pattern.

    Every row of the first chain puts 3/(4S') on each state of the first half
    and 1/(4S') on each state of the second half; the second chain swaps the
    halves. Rows equal the stationary distribution, so both chains mix in one
    step and have pseudo-spectral gap 1.
    """
    if S_prime < 1:
        raise DimensionMismatch("S_prime must be >= 1")
    hi, lo = 3.0 / (4.0 * S_prime), 1.0 / (4.0 * S_prime)
    row1 = np.concatenate([np.full(S_prime, hi), np.full(S_prime, lo)])
    row2 = np.concatenate([np.full(S_prime, lo), np.full(S_prime, hi)])
    S = 2 * S_prime
    m1 = validate_model(np.tile(row1, (S, 1)), row1)
    m2 = validate_model(np.tile(row2, (S, 1)), row2)
    return m1, m2


def gen_separation_instance(S_prime: int, T: int = 2, H: int = 2,
                            alpha: Sequence[float] = (0.5, 0.5)) -> MixtureInstance:
    """Two-cluster instance built from :func:`gen_separation_models`."""
    m1, m2 = gen_separation_models(S_prime)
    return make_instance([m1, m2], np.asarray(alpha), T, H)


# --- persistence ---------------------------------------------------------

def instance_to_json(instance: MixtureInstance) -> dict:
    """JSON document; decoding values are 1-based on disk."""
    return {
        "models": [model_to_json(m) for m in instance.models],
        "decoding": (instance.decoding + 1).tolist(),
        "T": instance.T,
        "H": instance.H,
    }


def instance_from_json(doc: dict) -> MixtureInstance:
    models = tuple(model_from_json(m) for m in doc["models"])
    decoding = np.asarray(doc["decoding"], dtype=np.int64) - 1
    instance = MixtureInstance(models=models, decoding=decoding,
                               T=int(doc["T"]), H=int(doc["H"]))
    if decoding.shape[0] != instance.T:
        raise DimensionMismatch("decoding length does not match T")
    if decoding.min() < 0 or decoding.max() >= instance.K:
        raise DimensionMismatch("decoding values outside [1, K]")
    return instance


def save_instance(instance: MixtureInstance, path: str | Path) -> None:
    Path(path).write_text(json.dumps(instance_to_json(instance), indent=2))


def load_instance(path: str | Path) -> MixtureInstance:
    return instance_from_json(json.loads(Path(path).read_text()))


def save_trajectories(trajs: TrajectorySet, path: str | Path, S: int) -> None:
    """Binary layout: little-endian u32 header (T, H, S), then T*H u16 states (1-based).

    A JSON sidecar ``<path>.json`` records the seed and the instance hash.
    """
    path = Path(path)
    states = trajs.states.astype(np.uint16) + 1
    with open(path, "wb") as fh:
        fh.write(struct.pack("<III", trajs.T, trajs.H, S))
        fh.write(states.astype("<u2").tobytes(order="C"))
    sidecar = {"seed": trajs.seed, "instance_id": trajs.instance_id, "index_base": 1}
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar, indent=2))


def load_trajectories(path: str | Path) -> tuple[TrajectorySet, int]:
    """Read the binary trajectory file; returns (trajectories, S)."""
    path = Path(path)
    with open(path, "rb") as fh:
        T, H, S = struct.unpack("<III", fh.read(12))
        states = np.frombuffer(fh.read(2 * T * H), dtype="<u2").reshape(T, H)
    sidecar = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    states = states.astype(np.int32) - int(sidecar.get("index_base", 1))
    return (TrajectorySet(states=states, seed=int(sidecar["seed"]),
                          instance_id=str(sidecar["instance_id"])), S)
