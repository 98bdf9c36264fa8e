"""Misclassification metric, divergences, separation gaps, and bound evaluators.

Everything here is a pure function of validated models or label vectors. KL
divergences may be +inf (disjoint supports); infinities propagate through the
min/comparison arithmetic rather than raising.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .chains import MarkovModel, pi_min as chains_pi_min
from .embedding import embed_model
from .errors import InvalidRange, LengthMismatch
from .simgen import MixtureInstance

__all__ = [
    "misclassification",
    "brute_force_misclassification",
    "assignment_misclassification",
    "kl_divergence",
    "tv_distance",
    "hellinger_sq",
    "squared_l2",
    "visitation_weights",
    "divergence_D",
    "divergence_D_pi",
    "delta_W_sq",
    "witness_state_gap",
    "eta_params",
    "p_max",
    "InequalityCheck",
    "check_gap_inequalities",
    "GapReport",
    "gap_report",
    "BoundReport",
    "lower_bound_check",
    "necessary_condition_probability_form",
    "predicted_error_rate",
    "c_eta_explicit",
]


# --- misclassification metric -------------------------------------------

def _confusion(f_hat: np.ndarray, f: np.ndarray, K: int) -> np.ndarray:
    C = np.zeros((K, K), dtype=np.int64)
    np.add.at(C, (f_hat, f), 1)
    return C


def _brute_force_match(C: np.ndarray) -> int:
    """max over permutations sigma of sum_b C[sigma(b), b]."""
    K = C.shape[0]
    return max(sum(int(C[sigma[b], b]) for b in range(K))
               for sigma in itertools.permutations(range(K)))


def _assignment_match(C: np.ndarray) -> int:
    """Same maximum via optimal assignment (Hungarian-style)."""
    row, col = linear_sum_assignment(-C)
    return int(C[row, col].sum())


def _prepare_labels(f_hat: np.ndarray, f: np.ndarray, T: int | None) -> tuple[np.ndarray, np.ndarray, int]:
    f_hat = np.asarray(f_hat, dtype=np.int64)
    f = np.asarray(f, dtype=np.int64)
    if f_hat.shape != f.shape or f_hat.ndim != 1:
        raise LengthMismatch(f"label shapes differ: {f_hat.shape} vs {f.shape}")
    if T is not None and T != f.shape[0]:
        raise LengthMismatch(f"T={T} does not match label length {f.shape[0]}")
    if f.shape[0] and (f_hat.min() < 0 or f.min() < 0):
        raise LengthMismatch("labels must be nonnegative")
    K = int(max(f_hat.max(), f.max())) + 1 if f.shape[0] else 1
    return f_hat, f, K


def brute_force_misclassification(f_hat: np.ndarray, f: np.ndarray,
                                  T: int | None = None) -> int:
    """E_T by explicit enumeration of all K! relabelings."""
    f_hat, f, K = _prepare_labels(f_hat, f, T)
    if f.shape[0] == 0:
        return 0
    return f.shape[0] - _brute_force_match(_confusion(f_hat, f, K))


def assignment_misclassification(f_hat: np.ndarray, f: np.ndarray,
                                 T: int | None = None) -> int:
    """E_T via optimal assignment on the confusion matrix."""
    f_hat, f, K = _prepare_labels(f_hat, f, T)
    if f.shape[0] == 0:
        return 0
    return f.shape[0] - _assignment_match(_confusion(f_hat, f, K))


def misclassification(f_hat: np.ndarray, f: np.ndarray, T: int | None = None) -> int:
    """E_T: misclassified count minimized over relabelings of the clusters.

    Label vectors may use different numbers of clusters; the smaller label set
    is padded with empty clusters before the permutation minimization. Brute
    force is used for K <= 8, optimal assignment beyond (they agree; tested).
    """
    f_hat, f, K = _prepare_labels(f_hat, f, T)
    n = f.shape[0]
    if n == 0:
        return 0
    C = _confusion(f_hat, f, K)
    matched = _brute_force_match(C) if K <= 8 else _assignment_match(C)
    return n - matched


# --- divergences between probability vectors ------------------------------

def kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """sum p log(p/q) with 0 log(0/q) = 0 and p>0, q=0 -> +inf."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise LengthMismatch(f"shape mismatch {p.shape} vs {q.shape}")
    pos = p > 0.0
    if np.any(q[pos] == 0.0):
        return math.inf
    return float(np.sum(p[pos] * np.log(p[pos] / q[pos])))


def tv_distance(p: np.ndarray, q: np.ndarray) -> float:
    """Total variation (1/2) sum |p - q|."""
    return float(0.5 * np.abs(np.asarray(p, float) - np.asarray(q, float)).sum())


def hellinger_sq(p: np.ndarray, q: np.ndarray) -> float:
    """Squared Hellinger distance (1/2) sum (sqrt(p) - sqrt(q))^2."""
    return float(0.5 * ((np.sqrt(np.asarray(p, float)) - np.sqrt(np.asarray(q, float))) ** 2).sum())


def squared_l2(p: np.ndarray, q: np.ndarray) -> float:
    """sum (p - q)^2 (the L2 quantity of the KL sandwich)."""
    return float(((np.asarray(p, float) - np.asarray(q, float)) ** 2).sum())


# --- instance-level divergences and gaps ----------------------------------

def visitation_weights(model: MarkovModel, H: int) -> np.ndarray:
    """Average state-visitation over steps 1..H-1 starting from mu, exactly."""
    if H < 2:
        raise InvalidRange("H must be >= 2")
    acc = model.mu.copy()
    total = np.zeros(model.S)
    for _ in range(H - 1):
        total += acc
        acc = acc @ model.P
    return total / (H - 1)


def _pairwise_weighted_kl(models: tuple[MarkovModel, ...],
                          weights: list[np.ndarray]) -> np.ndarray:
    K = len(models)
    out = np.zeros((K, K))
    for k in range(K):
        for kp in range(K):
            if k == kp:
                continue
            out[k, kp] = sum(
                float(weights[k][s]) * kl_divergence(models[k].P[s], models[kp].P[s])
                for s in range(models[k].S) if weights[k][s] > 0.0)
    return out


def divergence_D(instance: MixtureInstance) -> tuple[float, np.ndarray]:
    """Horizon-dependent divergence: initial-distribution KL over (H-1) plus
    visitation-weighted transition KLs; min over ordered pairs k != k'."""
    models = instance.models
    H = instance.H
    weights = [visitation_weights(m, H) for m in models]
    pair = _pairwise_weighted_kl(models, weights)
    K = len(models)
    for k in range(K):
        for kp in range(K):
            if k != kp:
                pair[k, kp] += kl_divergence(models[k].mu, models[kp].mu) / (H - 1)
    off = pair[~np.eye(K, dtype=bool)]
    return float(off.min()), pair


def divergence_D_pi(models: list[MarkovModel] | tuple[MarkovModel, ...]
                    ) -> tuple[float, np.ndarray]:
    """Stationary-weighted version; min over ordered pairs k != k'."""
    models = tuple(models)
    if len(models) < 2:
        raise InvalidRange("need at least two models")
    pair = _pairwise_weighted_kl(models, [m.pi for m in models])
    off = pair[~np.eye(len(models), dtype=bool)]
    return float(off.min()), pair


def delta_W_sq(models: list[MarkovModel] | tuple[MarkovModel, ...]) -> float:
    """Minimum pairwise squared l2 distance between model embeddings."""
    models = tuple(models)
    if len(models) < 2:
        raise InvalidRange("need at least two models")
    rows = [embed_model(m) for m in models]
    return float(min(((rows[k] - rows[kp]) ** 2).sum()
                     for k in range(len(models)) for kp in range(k + 1, len(models))))


def witness_state_gap(models: list[MarkovModel] | tuple[MarkovModel, ...]
               ) -> tuple[float, float, np.ndarray]:
    """Best single-state (alpha, Delta^2) per pair, maximizing their product.

    For each pair, the witness state maximizes
    min(pi_k(s), pi_k'(s)) * ||p_k(.|s) - p_k'(.|s)||_2^2 (the product is the
    only combination entering the gap inequalities); the reported (alpha,
    Delta^2) come from the globally worst pair. witness_states[k, k'] holds
    the maximizing state per pair (-1 on the diagonal).
    """
    models = tuple(models)
    K = len(models)
    if K < 2:
        raise InvalidRange("need at least two models")
    witness = -np.ones((K, K), dtype=np.int64)
    worst = None  # (product, alpha, Delta_sq)
    for k in range(K):
        for kp in range(k + 1, K):
            floor = np.minimum(models[k].pi, models[kp].pi)
            sep = ((models[k].P - models[kp].P) ** 2).sum(axis=1)
            prod = floor * sep
            s_star = int(np.argmax(prod))
            witness[k, kp] = witness[kp, k] = s_star
            cand = (float(prod[s_star]), float(floor[s_star]), float(sep[s_star]))
            if worst is None or cand[0] < worst[0]:
                worst = cand
    return worst[1], worst[2], witness


def eta_params(models: list[MarkovModel] | tuple[MarkovModel, ...]
               ) -> tuple[float, float, float]:
    """Exact maxima of the cross-chain ratio families (eta_mu, eta_pi, eta_p).

    A positive numerator over a zero denominator gives +inf; 0/0 ratios are
    skipped.
    """
    models = tuple(models)
    if len(models) < 2:
        raise InvalidRange("need at least two models")

    def max_ratio(num: np.ndarray, den: np.ndarray) -> float:
        num, den = num.ravel(), den.ravel()
        both_zero = (num == 0.0) & (den == 0.0)
        num, den = num[~both_zero], den[~both_zero]
        if np.any((num > 0.0) & (den == 0.0)):
            return math.inf
        return float((num / den).max()) if num.size else 1.0

    e_mu = e_pi = e_p = 1.0
    for a in models:
        for b in models:
            e_mu = max(e_mu, max_ratio(a.mu, b.mu))
            e_pi = max(e_pi, max_ratio(a.pi, b.pi))
            e_p = max(e_p, max_ratio(a.P, b.P))
    return e_mu, e_pi, e_p


def p_max(models: list[MarkovModel] | tuple[MarkovModel, ...]) -> float:
    """max over models and (s, s') of the transition probability."""
    return float(max(m.P.max() for m in models))


# --- gap inequalities ------------------------------------------------------

LOG_E_OVER_2 = math.log(math.e / 2.0)


@dataclass(frozen=True)
class InequalityCheck:
    name: str
    holds: bool
    slack: float
    lhs: float
    rhs: float


def check_gap_inequalities(models: list[MarkovModel] | tuple[MarkovModel, ...],
                           M_rho: tuple[float, float] | None = None,
                           ) -> list[InequalityCheck]:
    """Evaluate the KL/L2 sandwich and the gap inequalities with explicit constants.

    Returns one check per inequality: (i) the per-row KL sandwich
    c/(pmax v qmax) L2 <= KL <= L2/min q with c = log(e/2); (ii)
    D_pi >= c alpha Delta^2 / p_max; (iii) Delta_W^2 <= min over ordered pairs
    of (2 p_max / c) D_pi(k,k') + 4 Hellinger^2(pi_k, pi_k'); (iv)
    Delta_W^2 >= alpha Delta^2 / 2 - max((sqrt(eta_pi)-1)^2, (1-1/sqrt(eta_pi))^2);
    and, when uniform-ergodicity constants (M, rho) are supplied, (v) the
    relaxed factor-7 form of (iii). Infinite quantities make the affected
    inequality pass vacuously with slack +inf.
    """
    models = tuple(models)
    K = len(models)
    d_pi, pair_dpi = divergence_D_pi(models)
    dW2 = delta_W_sq(models)
    alpha, delta_sq, _ = witness_state_gap(models)
    _, eta_pi_val, _ = eta_params(models)
    pmax = p_max(models)
    tol = 1e-12

    # (i) KL sandwich per conditional row, worst slack over (k, k', s)
    lo_slack = hi_slack = math.inf
    worst_lo = worst_hi = (0.0, 0.0)
    for k in range(K):
        for kp in range(K):
            if k == kp:
                continue
            for s in range(models[k].S):
                p, q = models[k].P[s], models[kp].P[s]
                l2 = squared_l2(p, q)
                kl = kl_divergence(p, q)
                lower = LOG_E_OVER_2 / max(p.max(), q.max()) * l2
                upper = math.inf if q.min() == 0.0 else l2 / q.min()
                if kl - lower < lo_slack:
                    lo_slack, worst_lo = kl - lower, (lower, kl)
                if upper - kl < hi_slack:
                    hi_slack, worst_hi = upper - kl, (kl, upper)
    checks = [
        InequalityCheck("kl_sandwich_lower", lo_slack >= -tol, lo_slack,
                        worst_lo[0], worst_lo[1]),
        InequalityCheck("kl_sandwich_upper", hi_slack >= -tol, hi_slack,
                        worst_hi[0], worst_hi[1]),
    ]

    # (ii) p_max D_pi >= log(e/2) alpha Delta^2
    rhs = LOG_E_OVER_2 * alpha * delta_sq / pmax
    checks.append(InequalityCheck("dpi_vs_witness", d_pi >= rhs - tol,
                                  d_pi - rhs, d_pi, rhs))

    # (iii) Delta_W^2 <= min over ordered pairs of the Hellinger-form bound
    bound = math.inf
    for k in range(K):
        for kp in range(K):
            if k == kp:
                continue
            h2 = hellinger_sq(models[k].pi, models[kp].pi)
            bound = min(bound, (2.0 * pmax / LOG_E_OVER_2) * pair_dpi[k, kp] + 4.0 * h2)
    checks.append(InequalityCheck("deltaW_upper_hellinger", dW2 <= bound + tol,
                                  bound - dW2, dW2, bound))

    # (iv) Delta_W^2 >= alpha Delta^2 / 2 - max((sqrt(eta_pi)-1)^2, (1-1/sqrt(eta_pi))^2)
    if math.isinf(eta_pi_val):
        penalty = math.inf
    else:
        r = math.sqrt(eta_pi_val)
        penalty = max((r - 1.0) ** 2, (1.0 - 1.0 / r) ** 2)
    rhs_iv = 0.5 * alpha * delta_sq - penalty
    checks.append(InequalityCheck("deltaW_lower_witness", dW2 >= rhs_iv - tol,
                                  dW2 - rhs_iv, dW2, rhs_iv))

    # (v) relaxed uniform-ergodicity bound, factor 7
    if M_rho is not None:
        M_const, rho = M_rho
        if not (0.0 < rho < 1.0 and M_const > 0.0):
            raise InvalidRange("need rho in (0,1) and M > 0")
        pimin = chains_pi_min(models)
        contraction = math.ceil(math.log(1.0 / M_const) / math.log(rho)) + 1.0 / (1.0 - rho)
        rhs_v = 7.0 * (pmax * d_pi + contraction * math.sqrt(d_pi / (2.0 * pimin)))
        checks.append(InequalityCheck("deltaW_upper_uniform_ergodic", dW2 <= rhs_v + tol,
                                      rhs_v - dW2, dW2, rhs_v))
    return checks


# --- reports ---------------------------------------------------------------

@dataclass(frozen=True)
class GapReport:
    D: float
    D_pi: float
    pairwise_D: np.ndarray
    pairwise_D_pi: np.ndarray
    delta_W_sq: float
    alpha: float
    Delta_sq: float
    witness_states: np.ndarray
    eta_mu: float
    eta_pi: float
    eta_p: float
    p_max: float
    alpha_min_clusters: float
    pi_min: float
    v_min: float
    gamma_ps_min: float

    def to_json(self) -> dict:
        return {
            "D": self.D, "D_pi": self.D_pi,
            "pairwise_D": self.pairwise_D.tolist(),
            "pairwise_D_pi": self.pairwise_D_pi.tolist(),
            "delta_W_sq": self.delta_W_sq,
            "alpha": self.alpha, "Delta_sq": self.Delta_sq,
            "witness_states": self.witness_states.tolist(),
            "eta_mu": self.eta_mu, "eta_pi": self.eta_pi, "eta_p": self.eta_p,
            "p_max": self.p_max,
            "alpha_min_clusters": self.alpha_min_clusters,
            "pi_min": self.pi_min, "v_min": self.v_min,
            "gamma_ps_min": self.gamma_ps_min,
        }


def gap_report(instance: MixtureInstance) -> GapReport:
    """Every divergence, gap, and regularity parameter of an instance."""
    from .chains import v_min as chains_v_min

    models = instance.models
    D, pair_D = divergence_D(instance)
    d_pi, pair_dpi = divergence_D_pi(models)
    alpha, delta_sq, witness = witness_state_gap(models)
    e_mu, e_pi, e_p = eta_params(models)
    return GapReport(
        D=D, D_pi=d_pi, pairwise_D=pair_D, pairwise_D_pi=pair_dpi,
        delta_W_sq=delta_W_sq(models), alpha=alpha, Delta_sq=delta_sq,
        witness_states=witness, eta_mu=e_mu, eta_pi=e_pi, eta_p=e_p,
        p_max=p_max(models), alpha_min_clusters=instance.alpha_min,
        pi_min=chains_pi_min(models), v_min=chains_v_min(models),
        gamma_ps_min=float(min(m.gamma_ps for m in models)),
    )


@dataclass(frozen=True)
class BoundReport:
    necessary_holds: bool
    lhs_4HD: float
    rhs_eq2: float
    min_H_necessary: int | None
    asymptotic_ratio: float
    predicted_error_rate: float | None = None

    def to_json(self) -> dict:
        return {
            "necessary_holds": self.necessary_holds,
            "lhs_4HD": self.lhs_4HD,
            "rhs_eq2": self.rhs_eq2,
            "min_H_necessary": self.min_H_necessary,
            "asymptotic_ratio": self.asymptotic_ratio,
            "predicted_error_rate": self.predicted_error_rate,
        }


def necessary_condition_probability_form(eps: float, delta: float, T: int, H: int,
                                         D: float, alpha_min: float) -> bool:
    """delta >= (1/2)(alpha_min/(16 e eps))^{eps T} exp(-4 eps T (H-1) D),
    evaluated in log space (independent arithmetic path from the rearranged
    form; the two must agree on pass/fail)."""
    c = eps * T
    log_rhs = -math.log(2.0) + c * math.log(alpha_min / (16.0 * math.e * eps)) \
        - 4.0 * c * (H - 1) * D
    return math.log(delta) >= log_rhs


def lower_bound_check(eps: float, delta: float, T: int, H: int, D: float,
                      alpha_min: float, *, predicted: float | None = None) -> BoundReport:
    """Evaluate the necessary condition 4(H-1)D >= log(1/(2 delta))/(eps T)
    + log(alpha_min/(16 e eps)) and the minimal integer H >= 2 satisfying it.

    ``asymptotic_ratio`` is 2(H-1)D / log(alpha_min/(16 e eps)) (the liminf
    quantity of the asymptotically-stable condition).
    """
    if not 0.0 < eps <= 1.0:
        raise InvalidRange(f"eps must be in (0,1]; got {eps}")
    if not 0.0 < delta <= 0.5:
        raise InvalidRange(f"delta must be in (0, 1/2]; got {delta}")
    if not 0.0 < alpha_min <= 1.0:
        raise InvalidRange(f"alpha_min must be in (0,1]; got {alpha_min}")
    if T < 1 or H < 2 or D < 0.0:
        raise InvalidRange("need T >= 1, H >= 2, D >= 0")

    rhs = math.log(1.0 / (2.0 * delta)) / (eps * T) + math.log(alpha_min / (16.0 * math.e * eps))
    lhs = 4.0 * (H - 1) * D
    holds = lhs >= rhs

    if rhs <= 0.0:
        min_H: int | None = 2
    elif D == 0.0:
        min_H = None
    else:
        min_H = max(2, math.ceil(1.0 + rhs / (4.0 * D)))
        # integer boundary guard: ceil of an almost-integer can overshoot by one
        while min_H > 2 and 4.0 * (min_H - 1 - 1) * D >= rhs:
            min_H -= 1

    denom = math.log(alpha_min / (16.0 * math.e * eps))
    ratio = math.inf if denom == 0.0 else 2.0 * (H - 1) * D / denom
    return BoundReport(necessary_holds=holds, lhs_4HD=lhs, rhs_eq2=rhs,
                       min_H_necessary=min_H, asymptotic_ratio=ratio,
                       predicted_error_rate=predicted)


def predicted_error_rate(T: int, H: int, gamma_ps: float, D_pi: float, C_eta: float) -> float:
    """Predicted error envelope T exp(-C_eta gamma_ps H D_pi)."""
    if T < 1 or H < 1 or not 0.0 < gamma_ps <= 1.0 or D_pi < 0.0 or C_eta <= 0.0:
        raise InvalidRange("need T,H >= 1, gamma_ps in (0,1], D_pi >= 0, C_eta > 0")
    return T * math.exp(-C_eta * gamma_ps * H * D_pi)


def c_eta_explicit(eta_p: float) -> float:
    """The explicit constant 1 / (256 (4 eta_p^2 + 5 log eta_p)) from the
    likelihood-stage analysis."""
    if eta_p < 1.0:
        raise InvalidRange("eta_p must be >= 1")
    return 1.0 / (256.0 * (4.0 * eta_p ** 2 + 5.0 * math.log(eta_p)))
