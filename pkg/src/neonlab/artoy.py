"""Exactly enumerable single-step categorical model.

Everything here is closed-form or exhaustively enumerated: softmax scores,
the Fisher matrix, the reweighted laws induced by temperature / top-k /
top-p sampling, and the resulting bias and alignment quantities.  The
softmax gauge (all-ones kernel of the Fisher) is handled by restricting
geometry to the mean-zero subspace via pseudo-inverse.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import as_param_vector
from .neon import AlignmentReport, alignment

EIG_TOL = 1e-12


@dataclass(frozen=True)
class CategoricalModel:
    logits: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "logits", as_param_vector(self.logits))

    @property
    def V(self) -> int:
        return self.logits.shape[0]

    def probs(self) -> np.ndarray:
        z = self.logits - self.logits.max()
        e = np.exp(z)
        return e / e.sum()


@dataclass(frozen=True)
class ArSampler:
    kind: str  # "temperature" | "top_k" | "top_p"
    tau: float | None = None
    k: int | None = None
    p: float | None = None

    def __post_init__(self):
        active = [v is not None for v in (self.tau, self.k, self.p)]
        if sum(active) != 1:
            raise ValueError("exactly one of tau/k/p must be set")
        if self.kind == "temperature" and (self.tau is None or self.tau <= 0):
            raise ValueError("temperature needs tau > 0")
        if self.kind == "top_k" and (self.k is None or self.k < 1):
            raise ValueError("top_k needs k >= 1")
        if self.kind == "top_p" and (self.p is None or not 0 < self.p <= 1):
            raise ValueError("top_p needs p in (0, 1]")

    @classmethod
    def temperature(cls, tau: float) -> "ArSampler":
        return cls(kind="temperature", tau=tau)

    @classmethod
    def top_k(cls, k: int) -> "ArSampler":
        return cls(kind="top_k", k=k)

    @classmethod
    def top_p(cls, p: float) -> "ArSampler":
        return cls(kind="top_p", p=p)

    def label(self) -> tuple[str, float]:
        if self.kind == "temperature":
            return "temperature", float(self.tau)
        if self.kind == "top_k":
            return "top_k", float(self.k)
        return "top_p", float(self.p)


def apply_sampler(probs: np.ndarray, s: ArSampler) -> np.ndarray:
    """Exact reweighted law q of a categorical distribution under s."""
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 1 or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError("input must be a probability vector")
    if s.kind == "temperature":
        logq = np.log(np.clip(p, 1e-300, None)) / s.tau
        logq -= logq.max()
        q = np.exp(logq)
    elif s.kind == "top_k":
        if s.k > p.shape[0]:
            raise ValueError("k exceeds alphabet size")
        order = np.argsort(-p, kind="stable")
        q = np.zeros_like(p)
        q[order[: s.k]] = p[order[: s.k]]
    else:  # top_p
        order = np.argsort(-p, kind="stable")
        csum = np.cumsum(p[order])
        cutoff = int(np.searchsorted(csum, s.p - 1e-12)) + 1
        cutoff = min(cutoff, p.shape[0])
        # include any symbols tied with the last kept probability
        threshold = p[order[cutoff - 1]]
        keep = p >= threshold - 1e-15
        q = np.where(keep, p, 0.0)
    total = q.sum()
    assert total > 0, "sampler removed all probability mass"
    return q / total


def score_vec(m: CategoricalModel, x: int) -> np.ndarray:
    """Gradient of log p(x) in the logits: e_x - softmax(logits)."""
    if not 0 <= x < m.V:
        raise ValueError("symbol index out of range")
    u = -m.probs()
    u[x] += 1.0
    return u


def fisher(m: CategoricalModel) -> np.ndarray:
    """F = diag(p) - p p^T; PSD with kernel spanned by the all-ones vector."""
    p = m.probs()
    return np.diag(p) - np.outer(p, p)


def _whiten(F: np.ndarray):
    vals, vecs = np.linalg.eigh(F)
    keep = vals > EIG_TOL * max(vals.max(), 1.0)
    return vals[keep], vecs[:, keep]


def fisher_cos(F: np.ndarray, eps: np.ndarray, b: np.ndarray) -> float:
    """cos of the Fisher-geometry angle between eps and F^+ b (on Im F)."""
    vals, vecs = _whiten(F)
    e_w = np.sqrt(vals) * (vecs.T @ eps)
    b_w = (vecs.T @ b) / np.sqrt(vals)
    ne, nb = np.linalg.norm(e_w), np.linalg.norm(b_w)
    if ne < 1e-14 or nb < 1e-14:
        return float("nan")
    return float(np.dot(e_w, b_w) / (ne * nb))


def sampler_bias(
    theta_star: CategoricalModel, eps: np.ndarray, s: ArSampler
) -> tuple[np.ndarray, float]:
    """Exact sampler bias b = -E_q[score at theta*] and its Fisher angle.

    q is the sampler law at theta_r = theta* + eps, computed exactly;
    b = p* - q by the softmax score identity.  A neutral sampler gives
    b = 0 and the angle is reported as nan.
    """
    eps = as_param_vector(eps)
    if eps.shape[0] != theta_star.V:
        raise ValueError("eps dimension mismatch")
    theta_r = CategoricalModel(theta_star.logits + eps)
    q = apply_sampler(theta_r.probs(), s)
    b = theta_star.probs() - q
    cos_phi = fisher_cos(fisher(theta_star), eps, b)
    return b, cos_phi


def exact_risk(p_data: np.ndarray, m: CategoricalModel) -> float:
    """Exact cross-entropy risk E_{p_data}[-log p_theta]."""
    p = m.probs()
    return float(-np.sum(np.asarray(p_data) * np.log(p)))


def exact_risk_grad(p_data: np.ndarray, m: CategoricalModel) -> np.ndarray:
    """Gradient of the exact risk in the logits: softmax - p_data."""
    return m.probs() - np.asarray(p_data, dtype=np.float64)


def synthetic_risk_grad(m: CategoricalModel, s: ArSampler) -> np.ndarray:
    """Gradient at theta_r of E_q[-log p_theta] with q the sampler law at theta_r."""
    q = apply_sampler(m.probs(), s)
    return m.probs() - q


def alignment_exact(
    p_data: np.ndarray,
    theta_r: CategoricalModel,
    s: ArSampler,
    precond: np.ndarray,
    alpha: float = 1.0,
) -> AlignmentReport:
    """Exact alignment report: enumerated gradients plus the exact quadratic
    coefficient z = r_s^T P^T H P r_s with H the Fisher at theta_r."""
    p_data = np.asarray(p_data, dtype=np.float64)
    if np.any(p_data <= 0):
        raise ValueError("p_data must be strictly positive")
    r_d = exact_risk_grad(p_data, theta_r)
    r_s = synthetic_risk_grad(theta_r, s)
    H = fisher(theta_r)  # Hessian of the cross-entropy risk, data-independent
    d = np.asarray(precond) * r_s
    z = float(d @ H @ d)
    return alignment(r_d, r_s, precond, alpha=alpha, z=z)
