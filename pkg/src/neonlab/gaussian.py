"""Analytic 2D Gaussian generative model: NLL gradient-descent fitting,
sampling, closed-form 2-Wasserstein distance, and the two-direction
parameter grid used for the reverse-merge visualization.

Parameterization: mean (2,) plus lower-triangular Cholesky factor L with
positive diagonal, Sigma = L @ L.T.  Flat vector layout is
[m0, m1, L00, L10, L11].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Checkpoint, ResultTable, RngState, as_param_vector

DIAG_FLOOR = 1e-8
LOG_2PI = math.log(2.0 * math.pi)


class NonSPDError(ValueError):
    """Raised when a covariance parameterization is not positive definite."""


@dataclass(frozen=True)
class GaussianParams:
    mean: np.ndarray  # (2,)
    chol: np.ndarray  # (2,2) lower-triangular, positive diagonal

    def __post_init__(self):
        m = np.asarray(self.mean, dtype=np.float64).reshape(2)
        L = np.asarray(self.chol, dtype=np.float64).reshape(2, 2).copy()
        L[0, 1] = 0.0
        if not (np.all(np.isfinite(m)) and np.all(np.isfinite(L))):
            raise ValueError("Gaussian parameters must be finite")
        if L[0, 0] <= 0 or L[1, 1] <= 0:
            raise NonSPDError("Cholesky diagonal must be strictly positive")
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "chol", L)

    def cov(self) -> np.ndarray:
        return self.chol @ self.chol.T

    def to_vector(self) -> np.ndarray:
        L = self.chol
        return np.array([self.mean[0], self.mean[1], L[0, 0], L[1, 0], L[1, 1]])

    @classmethod
    def from_vector(cls, v) -> "GaussianParams":
        v = as_param_vector(v)
        if v.shape[0] != 5:
            raise ValueError(f"expected 5 parameters, got {v.shape[0]}")
        return cls(mean=v[:2], chol=np.array([[v[2], 0.0], [v[3], v[4]]]))

    @classmethod
    def from_moments(cls, mean, cov) -> "GaussianParams":
        cov = np.asarray(cov, dtype=np.float64).reshape(2, 2)
        cov = 0.5 * (cov + cov.T)
        try:
            L = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise NonSPDError(f"covariance is not SPD: {cov.tolist()}") from exc
        return cls(mean=mean, chol=L)


def shrunk(g: GaussianParams, factor: float) -> GaussianParams:
    """Mode-seeking deployment: covariance scaled by `factor` (<1 contracts)."""
    if factor <= 0:
        raise ValueError("shrink factor must be positive")
    return GaussianParams(mean=g.mean, chol=g.chol * math.sqrt(factor))


def sample(g: GaussianParams, n: int, rng: RngState) -> np.ndarray:
    if n < 1:
        raise ValueError("need n >= 1 samples")
    z = rng.generator().standard_normal((n, 2))
    return g.mean + z @ g.chol.T


def nll(g: GaussianParams, data: np.ndarray) -> float:
    """Mean negative log-likelihood of the data under N(mean, L L^T)."""
    d = np.asarray(data, dtype=np.float64) - g.mean
    # Solve L e = d^T per sample; quadratic form is |e|^2.
    e = np.linalg.solve(g.chol, d.T)
    quad = 0.5 * float(np.mean(np.sum(e * e, axis=0)))
    logdet = math.log(g.chol[0, 0]) + math.log(g.chol[1, 1])
    return quad + logdet + LOG_2PI


def _grad_from_moments(g: GaussianParams, xbar: np.ndarray, sbar: np.ndarray) -> np.ndarray:
    """Gradient of mean NLL given E[x] and E[(x-m)(x-m)^T] at the current mean."""
    L = g.chol
    sigma_inv = np.linalg.inv(L @ L.T)
    g_mean = -sigma_inv @ (xbar - g.mean)
    g_chol = (sigma_inv - sigma_inv @ sbar @ sigma_inv) @ L
    return np.array([g_mean[0], g_mean[1], g_chol[0, 0], g_chol[1, 0], g_chol[1, 1]])


def nll_grad(g: GaussianParams, data: np.ndarray) -> np.ndarray:
    """Exact gradient of the mean NLL w.r.t. [m0, m1, L00, L10, L11]."""
    x = np.asarray(data, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError("need at least one sample")
    d = x - g.mean
    xbar = x.mean(axis=0)
    sbar = (d.T @ d) / x.shape[0]
    return _grad_from_moments(g, xbar, sbar)


def population_nll(g: GaussianParams, p_data: GaussianParams) -> float:
    """Closed-form E_{p_data}[NLL] (the exact population risk)."""
    dm = p_data.mean - g.mean
    sigma_inv = np.linalg.inv(g.cov())
    quad = 0.5 * float(np.trace(sigma_inv @ (p_data.cov() + np.outer(dm, dm))))
    logdet = math.log(g.chol[0, 0]) + math.log(g.chol[1, 1])
    return quad + logdet + LOG_2PI


def population_nll_grad(g: GaussianParams, p_data: GaussianParams) -> np.ndarray:
    """Exact gradient of the population risk (same layout as nll_grad)."""
    dm = p_data.mean - g.mean
    sbar = p_data.cov() + np.outer(dm, dm)
    return _grad_from_moments(g, p_data.mean, sbar)


def _check_fittable(data: np.ndarray) -> None:
    x = np.asarray(data, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != 2:
        raise ValueError("data must have shape (n, 2)")
    if x.shape[0] < 3:
        raise ValueError("need at least 3 samples")
    centered = x - x.mean(axis=0)
    sv = np.linalg.svd(centered, compute_uv=False)
    if sv[-1] <= 1e-12 * max(1.0, sv[0]):
        raise ValueError("samples are collinear; covariance would collapse")


def fit_sgd(
    data: np.ndarray,
    init: GaussianParams,
    lr: float = 1e-2,
    epochs: int = 2000,
    rng: RngState | None = None,
    seed: int = 0,
) -> Checkpoint:
    """Full-batch gradient descent on the mean NLL.

    The Cholesky diagonal is clamped at 1e-8 after each step to keep the
    covariance SPD.  Divergence (non-finite loss) aborts with a diagnostic.
    """
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    if epochs < 0:
        raise ValueError("epochs must be nonnegative")
    _check_fittable(data)
    x = np.asarray(data, dtype=np.float64)
    theta = init.to_vector()
    for epoch in range(epochs):
        g = GaussianParams.from_vector(theta)
        loss = nll(g, x)
        if not np.isfinite(loss):
            raise FloatingPointError(
                f"NLL diverged to {loss} at epoch {epoch} (lr={lr})"
            )
        theta = theta - lr * nll_grad(g, x)
        theta[2] = max(theta[2], DIAG_FLOOR)
        theta[4] = max(theta[4], DIAG_FLOOR)
    return Checkpoint(
        params=theta,
        model_kind="gaussian",
        seed=seed,
        budget_images=epochs * x.shape[0],
        lr=lr,
        meta=(("epochs", str(epochs)),),
    )


def fit_mle(data: np.ndarray) -> GaussianParams:
    """Direct moment fit (MLE, covariance denominator n)."""
    _check_fittable(data)
    x = np.asarray(data, dtype=np.float64)
    mean = x.mean(axis=0)
    d = x - mean
    cov = (d.T @ d) / x.shape[0]
    return GaussianParams.from_moments(mean, cov)


def _sqrtm_psd(a: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root of a (symmetrized) 2x2 matrix."""
    a = 0.5 * (a + a.T)
    vals, vecs = np.linalg.eigh(a)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def w2(a: GaussianParams, b: GaussianParams) -> float:
    """Closed-form 2-Wasserstein distance between two Gaussians."""
    sa, sb = a.cov(), b.cov()
    for s in (sa, sb):
        vals = np.linalg.eigvalsh(0.5 * (s + s.T))
        if vals[0] <= 0:
            raise NonSPDError("covariance must be SPD for W2")
    rb = _sqrtm_psd(sb)
    cross = _sqrtm_psd(rb @ sa @ rb)
    gap = float(np.sum((a.mean - b.mean) ** 2))
    trace = float(np.trace(sa + sb - 2.0 * cross))
    return math.sqrt(max(gap + max(trace, 0.0), 0.0))


@dataclass(frozen=True)
class GaussGridSpec:
    ws_min: float
    ws_max: float
    ws_step: float
    wo_min: float
    wo_max: float
    wo_step: float

    def __post_init__(self):
        if self.ws_step <= 0 or self.wo_step <= 0:
            raise ValueError("grid steps must be positive")
        if self.ws_max < self.ws_min or self.wo_max < self.wo_min:
            raise ValueError("grid ranges must be non-empty")

    @staticmethod
    def _axis(lo: float, hi: float, step: float) -> np.ndarray:
        n = int(round((hi - lo) / step)) + 1
        return lo + step * np.arange(n)

    @property
    def ws_values(self) -> np.ndarray:
        return self._axis(self.ws_min, self.ws_max, self.ws_step)

    @property
    def wo_values(self) -> np.ndarray:
        return self._axis(self.wo_min, self.wo_max, self.wo_step)


def oracle_grid(
    theta_r: Checkpoint,
    theta_s: Checkpoint,
    theta_o: Checkpoint,
    spec: GaussGridSpec,
    p_data: GaussianParams,
    deploy_shrink: float = 1.0,
) -> ResultTable:
    """Evaluate log W2 to p_data over the two-direction parameter grid
    theta(ws, wo) = theta_r + ws*(theta_r - theta_s) + wo*(theta_o - theta_r).

    `deploy_shrink` < 1 evaluates each grid model through the same
    mode-seeking covariance contraction used when synthesizing data, so the
    grid reflects the deployed sampling distribution rather than the raw
    density.  Grid points with non-SPD covariance are recorded as nan.
    """
    vr, vs, vo = theta_r.params, theta_s.params, theta_o.params
    if not (vr.shape == vs.shape == vo.shape):
        raise ValueError("checkpoints must share a parameterization")
    table = ResultTable(columns=["ws", "wo", "log_w2"])
    for ws in spec.ws_values:
        for wo in spec.wo_values:
            theta = vr + ws * (vr - vs) + wo * (vo - vr)
            try:
                g = GaussianParams.from_vector(theta)
                dist = w2(shrunk(g, deploy_shrink), p_data)
                val = math.log(dist) if dist > 0 else -math.inf
            except (NonSPDError, ValueError):
                val = math.nan
            table.add_row(float(ws), float(wo), val)
    return table
