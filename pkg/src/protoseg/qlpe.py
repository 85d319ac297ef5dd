"""Query-guided re-weighting of support local prototypes via entropic OT.

Cost is ``1 - S`` for the support/query prototype similarity matrix ``S``.
The plan solves ``min <T, C> - eps * H(T)`` subject to the row/column
marginals, by Sinkhorn scaling. Each support prototype's weight is its
transported similarity ``sum_j T_ij S_ij``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .grid import cosine
from .mpg import PrototypeSet

FUSION_MODES = ("paper", "normalized")
LOG_DOMAIN_EPS = 0.05
LOG_DOMAIN_RATIO = 30.0


@dataclass(frozen=True)
class OtConfig:
    epsilon: float = 0.1
    max_iters: int = 500
    marginal_tol: float = 1e-6
    mu: tuple[float, ...] | None = None  # None -> uniform
    nu: tuple[float, ...] | None = None

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.max_iters < 1 or not self.marginal_tol > 0:
            raise ValueError("max_iters and marginal_tol must be positive")
        for name in ("mu", "nu"):
            w = getattr(self, name)
            if w is not None:
                w = tuple(float(x) for x in w)
                _check_distribution(np.array(w), name)
                object.__setattr__(self, name, w)


def _check_distribution(w: np.ndarray, name: str):
    if w.ndim != 1 or len(w) == 0 or np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError(f"{name} must be a nonempty nonnegative vector")
    if abs(w.sum() - 1.0) > 1e-9:
        raise ValueError(f"{name} must sum to 1, sums to {w.sum()!r}")


@dataclass(frozen=True, eq=False)
class TransportPlan:
    plan: np.ndarray
    marginal_error: float
    iterations: int
    log_domain: bool = False
    error_history: tuple[float, ...] = field(default=(), repr=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.plan.shape


def similarity_matrix(ps: PrototypeSet | np.ndarray, pq: PrototypeSet | np.ndarray) -> np.ndarray:
    a = ps.vectors if isinstance(ps, PrototypeSet) else np.asarray(ps, dtype=np.float64)
    b = pq.vectors if isinstance(pq, PrototypeSet) else np.asarray(pq, dtype=np.float64)
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"channel mismatch: {a.shape[1]} vs {b.shape[1]}")
    return cosine(a[:, None, :], b[None, :, :])


def _marginals(cfg: OtConfig, m: int, n: int):
    mu = np.full(m, 1.0 / m) if cfg.mu is None else np.array(cfg.mu)
    nu = np.full(n, 1.0 / n) if cfg.nu is None else np.array(cfg.nu)
    if mu.shape != (m,) or nu.shape != (n,):
        raise ValueError(f"marginals of length {len(mu)}, {len(nu)} do not fit a {m}x{n} problem")
    return mu, nu


def _violation(T, mu, nu) -> float:
    return float(max(np.abs(T.sum(axis=1) - mu).max(), np.abs(T.sum(axis=0) - nu).max()))


def sinkhorn_cost(cost: np.ndarray, cfg: OtConfig | None = None) -> TransportPlan:
    """Entropic OT plan for an explicit cost matrix."""
    cfg = cfg or OtConfig()
    C = np.asarray(cost, dtype=np.float64)
    if C.ndim != 2 or C.size == 0:
        raise ValueError(f"cost must be a nonempty matrix, got shape {C.shape}")
    if not np.all(np.isfinite(C)):
        raise ValueError("cost matrix has non-finite entries")
    mu, nu = _marginals(cfg, *C.shape)
    eps = cfg.epsilon
    if eps < LOG_DOMAIN_EPS or np.abs(C).max() / eps > LOG_DOMAIN_RATIO:
        return _sinkhorn_log(C, mu, nu, cfg)

    K = np.exp(-C / eps)
    u = np.ones_like(mu)
    v = np.ones_like(nu)
    history = []
    it = 0
    err = np.inf
    while it < cfg.max_iters:
        it += 1
        u = mu / (K @ v)
        v = nu / (K.T @ u)
        T = u[:, None] * K * v[None, :]
        err = _violation(T, mu, nu)
        history.append(err)
        if err <= cfg.marginal_tol:
            break
    T = u[:, None] * K * v[None, :]
    return TransportPlan(T, err, it, False, tuple(history))


def _sinkhorn_log(C, mu, nu, cfg: OtConfig) -> TransportPlan:
    eps = cfg.epsilon
    with np.errstate(divide="ignore"):
        log_mu = np.log(mu)
        log_nu = np.log(nu)
    f = np.zeros_like(mu)
    g = np.zeros_like(nu)
    history = []
    it = 0
    err = np.inf
    while it < cfg.max_iters:
        it += 1
        f = eps * log_mu - eps * logsumexp((g[None, :] - C) / eps, axis=1)
        g = eps * log_nu - eps * logsumexp((f[:, None] - C) / eps, axis=0)
        T = np.exp((f[:, None] + g[None, :] - C) / eps)
        err = _violation(T, mu, nu)
        history.append(err)
        if err <= cfg.marginal_tol:
            break
    T = np.exp((f[:, None] + g[None, :] - C) / eps)
    return TransportPlan(T, err, it, True, tuple(history))


def sinkhorn(S: np.ndarray, cfg: OtConfig | None = None) -> TransportPlan:
    """Plan for similarity matrix ``S`` under cost ``1 - S``."""
    S = np.asarray(S, dtype=np.float64)
    if not np.all(np.isfinite(S)):
        raise ValueError("similarity matrix has non-finite entries")
    return sinkhorn_cost(1.0 - S, cfg)


def extract_weights(T: TransportPlan | np.ndarray, S: np.ndarray) -> np.ndarray:
    P = T.plan if isinstance(T, TransportPlan) else np.asarray(T, dtype=np.float64)
    S = np.asarray(S, dtype=np.float64)
    if P.shape != S.shape:
        raise ValueError(f"plan shape {P.shape} != similarity shape {S.shape}")
    return (P * S).sum(axis=1)


def fuse(p_g: np.ndarray, ps: PrototypeSet | np.ndarray, weights: np.ndarray, mode: str = "paper") -> np.ndarray:
    """Global prototype plus the weighted local term.

    ``paper``: ``p_g + mean_i(w_i * p_i)``. ``normalized``: weights rescaled
    to sum to one first, giving ``p_g + sum_i w_i p_i / sum_i w_i``; falls back
    to ``paper`` when the weights sum to 1e-9 or less.
    """
    if mode not in FUSION_MODES:
        raise ValueError(f"unknown fusion mode {mode!r}")
    locs = ps.vectors if isinstance(ps, PrototypeSet) else np.asarray(ps, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    p_g = np.asarray(p_g, dtype=np.float64)
    if w.shape != (locs.shape[0],):
        raise ValueError(f"{len(w)} weights for {locs.shape[0]} prototypes")
    if p_g.shape != (locs.shape[1],):
        raise ValueError("global and local prototypes differ in channel count")
    total = w.sum()
    if mode == "normalized" and total > 1e-9:
        return p_g + (w / total) @ locs
    return p_g + (w @ locs) / len(w)
