"""Reverse merging of a base model against its self-trained copy.

The merge theta_r - w*(theta_s - theta_r) extrapolates away from the
self-training direction when w > 0.  The helpers here quantify when that
helps: the alignment scalar s = <r_d, P r_s>, the quadratic coefficient z,
the proxy-optimal weight w* = -s/(alpha z), and a probe for how fast the
short fine-tune displacement concentrates on the preconditioned synthetic
gradient direction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Checkpoint, ResultTable, as_param_vector, dot_p, pnorm

FD_STEP = 1e-4


def neon_merge(theta_r: Checkpoint, theta_s: Checkpoint, w: float) -> Checkpoint:
    """theta_r - w*(theta_s - theta_r), evaluated in this stable form."""
    if theta_r.model_kind != theta_s.model_kind:
        raise ValueError(
            f"model kind mismatch: {theta_r.model_kind} vs {theta_s.model_kind}"
        )
    if theta_r.dim != theta_s.dim:
        raise ValueError(f"dimension mismatch: {theta_r.dim} vs {theta_s.dim}")
    if not np.isfinite(w):
        raise ValueError("merge weight must be finite")
    params = theta_r.params - w * (theta_s.params - theta_r.params)
    return theta_r.with_params(
        params,
        merge_w=f"{float(w):.17g}",
        parent_r_seed=theta_r.seed,
        parent_s_seed=theta_s.seed,
        parent_r_budget=theta_r.budget_images,
        parent_s_budget=theta_s.budget_images,
    )


def displacement(theta_r: Checkpoint, theta_s: Checkpoint, alpha: float, T: int) -> np.ndarray:
    """Per-step displacement d_T = (theta_s - theta_r) / (alpha * T)."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if T < 1:
        raise ValueError("T must be at least 1")
    if theta_r.dim != theta_s.dim:
        raise ValueError("dimension mismatch")
    return (theta_s.params - theta_r.params) / (alpha * T)


@dataclass(frozen=True)
class AlignmentReport:
    r_d: np.ndarray
    r_s: np.ndarray
    s: float
    z: float
    cos_sim: float
    w_star: float
    alpha: float
    norm_rd: float
    norm_rs: float

    CSV_COLUMNS = ["s", "z", "cos_sim", "w_star", "alpha", "norm_rd", "norm_rs"]

    def csv_row(self) -> list[float]:
        return [self.s, self.z, self.cos_sim, self.w_star, self.alpha,
                self.norm_rd, self.norm_rs]

    def safe_window(self) -> float:
        """Approximate upper end of the helpful-w window, -2s/(alpha z).

        Reported for inspection only; with an estimated z the window is
        approximate, so nothing asserts containment.
        """
        if self.z > 0 and self.s < 0:
            return -2.0 * self.s / (self.alpha * self.z)
        return float("nan")


def alignment(r_d, r_s, precond, alpha: float, z: float) -> AlignmentReport:
    """Alignment scalar s = <r_d, P r_s>, cosine, and proxy weight w*.

    Zero-norm gradients make cos_sim nan; z <= 0 makes w_star nan.  Those
    sentinels are deliberate: an undefined quantity must never read as 0.
    """
    r_d = as_param_vector(r_d)
    r_s = as_param_vector(r_s)
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    s = dot_p(r_d, r_s, precond)
    nd = pnorm(r_d, precond)
    ns = pnorm(r_s, precond)
    if nd < 1e-300 or ns < 1e-300:
        cos_sim = float("nan")
    else:
        cos_sim = float(np.clip(s / (nd * ns), -1.0, 1.0))
    w_star = -s / (alpha * z) if z > 0 else float("nan")
    return AlignmentReport(
        r_d=r_d, r_s=r_s, s=float(s), z=float(z), cos_sim=cos_sim,
        w_star=float(w_star), alpha=float(alpha), norm_rd=nd, norm_rs=ns,
    )


def quadratic_coeff(grad_fn, theta, direction, step: float = FD_STEP) -> float:
    """z = d^T H d for d = direction, with H d estimated by a central
    finite difference of grad_fn along the unit direction (step 1e-4)."""
    theta = as_param_vector(theta)
    d = as_param_vector(direction)
    norm = float(np.linalg.norm(d))
    if norm == 0.0:
        return 0.0
    u = d / norm
    g_plus = as_param_vector(grad_fn(theta + step * u))
    g_minus = as_param_vector(grad_fn(theta - step * u))
    hu = (g_plus - g_minus) / (2.0 * step)
    return float(norm * norm * np.dot(u, hu))


def risk_along_merge(
    theta_r: Checkpoint, theta_s: Checkpoint, w_list, risk_fn
) -> ResultTable:
    """Rows (w, risk) for the merge sweep; failed evaluations become nan."""
    table = ResultTable(columns=["w", "risk"])
    for w in w_list:
        try:
            r = float(risk_fn(neon_merge(theta_r, theta_s, float(w))))
            if not math.isfinite(r):
                r = float("nan")
        except (ValueError, FloatingPointError, np.linalg.LinAlgError):
            r = float("nan")
        table.add_row(float(w), r)
    return table


def concentration_probe(
    theta_r: Checkpoint,
    finetune,
    alpha: float,
    T_list,
    r_s_ref,
    precond,
) -> ResultTable:
    """Rows (T, cos) where cos compares d_T = (theta_s - theta_r)/(alpha T)
    against -P r_s_ref in plain Euclidean geometry after preconditioning."""
    r_s_ref = as_param_vector(r_s_ref)
    target = -np.asarray(precond, dtype=np.float64) * r_s_ref
    tn = float(np.linalg.norm(target))
    table = ResultTable(columns=["T", "cos"])
    for T in T_list:
        theta_s = finetune(theta_r, alpha, int(T))
        d = displacement(theta_r, theta_s, alpha, int(T))
        dn = float(np.linalg.norm(d))
        if dn < 1e-300 or tn < 1e-300:
            c = float("nan")
        else:
            c = float(np.dot(d, target) / (dn * tn))
        table.add_row(float(T), c)
    return table
