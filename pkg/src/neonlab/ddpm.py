"""Tiny MLP denoiser trained as a T-step DDPM on 2D data, with an ancestral
sampler whose score can be rescaled to dial mode-seeking vs diversity-seeking
behavior.

The network predicts the noise eps from (x_t, t); the score is
-eps(x_t, t)/sqrt(1 - alpha_bar_t), so scaling the predicted noise by zeta
scales the score by zeta.  Everything is explicit numpy with hand-written
backprop so gradients can be verified against finite differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .core import Checkpoint, RngState, as_param_vector

COSINE_OFFSET = 0.008
# Cap on per-step beta.  The usual 0.999 cap targets thousand-step schedules;
# at T=20 it puts alpha_t ~ 1e-3 on the last step, and the 1/sqrt(alpha_t)
# factor then amplifies any score perturbation ~30x, blowing up
# diversity-seeking (zeta < 1) sampling.  A 0.35 cap keeps every step's
# amplification modest while alpha_bar[T-1] stays well under 0.05.
BETA_MAX = 0.35


@dataclass(frozen=True)
class NoiseSchedule:
    T: int
    alpha_bar: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        ab = np.asarray(self.alpha_bar, dtype=np.float64)
        b = np.asarray(self.beta, dtype=np.float64)
        if ab.shape != (self.T,) or b.shape != (self.T,):
            raise ValueError("schedule arrays must have length T")
        if np.any(np.diff(ab) >= 0):
            raise ValueError("alpha_bar must be strictly decreasing")
        if not (0 < ab[-1] and ab[0] <= 1):
            raise ValueError("alpha_bar must lie in (0, 1]")
        if np.any(b <= 0) or np.any(b >= 1):
            raise ValueError("beta must lie in (0, 1)")
        object.__setattr__(self, "alpha_bar", ab)
        object.__setattr__(self, "beta", b)


def cosine_schedule(T: int) -> NoiseSchedule:
    """Cosine alpha_bar schedule with the usual small offset and beta clamp."""
    if T < 2:
        raise ValueError("need T >= 2")
    s = COSINE_OFFSET

    def f(u: float) -> float:
        return math.cos((u + s) / (1.0 + s) * math.pi / 2.0) ** 2

    raw = np.array([f((t + 1) / T) / f(0.0) for t in range(T)])
    prev = np.concatenate([[1.0], raw[:-1]])
    beta = np.clip(1.0 - raw / prev, 1e-12, BETA_MAX)
    alpha_bar = np.cumprod(1.0 - beta)
    return NoiseSchedule(T=T, alpha_bar=alpha_bar, beta=beta)


@dataclass(frozen=True)
class MlpConfig:
    hidden: int = 128
    time_dim: int = 16

    @property
    def in_dim(self) -> int:
        return 2 + self.time_dim


@dataclass(frozen=True)
class MlpParams:
    cfg: MlpConfig
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray

    def __post_init__(self):
        h, d = self.cfg.hidden, self.cfg.in_dim
        shapes = {
            "w1": (d, h), "b1": (h,), "w2": (h, h), "b2": (h,),
            "w3": (h, 2), "b3": (2,),
        }
        for name, shape in shapes.items():
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite entries")
            object.__setattr__(self, name, arr)

    @property
    def dim(self) -> int:
        return sum(getattr(self, n).size for n in ("w1", "b1", "w2", "b2", "w3", "b3"))

    def flatten(self) -> np.ndarray:
        return np.concatenate(
            [getattr(self, n).ravel() for n in ("w1", "b1", "w2", "b2", "w3", "b3")]
        )

    @classmethod
    def unflatten(cls, v, cfg: MlpConfig) -> "MlpParams":
        v = as_param_vector(v)
        h, d = cfg.hidden, cfg.in_dim
        shapes = [("w1", (d, h)), ("b1", (h,)), ("w2", (h, h)), ("b2", (h,)),
                  ("w3", (h, 2)), ("b3", (2,))]
        total = sum(int(np.prod(s)) for _, s in shapes)
        if v.shape[0] != total:
            raise ValueError(f"expected {total} parameters, got {v.shape[0]}")
        out, i = {}, 0
        for name, shape in shapes:
            n = int(np.prod(shape))
            out[name] = v[i : i + n].reshape(shape)
            i += n
        return cls(cfg=cfg, **out)

    @classmethod
    def init(cls, cfg: MlpConfig, rng: RngState) -> "MlpParams":
        gen = rng.generator()
        h, d = cfg.hidden, cfg.in_dim
        return cls(
            cfg=cfg,
            w1=gen.standard_normal((d, h)) / math.sqrt(d),
            b1=np.zeros(h),
            w2=gen.standard_normal((h, h)) / math.sqrt(h),
            b2=np.zeros(h),
            w3=gen.standard_normal((h, 2)) / math.sqrt(h),
            b3=np.zeros(2),
        )


def _silu(z: np.ndarray) -> np.ndarray:
    return z / (1.0 + np.exp(-z))


def _silu_grad(z: np.ndarray) -> np.ndarray:
    sig = 1.0 / (1.0 + np.exp(-z))
    return sig * (1.0 + z * (1.0 - sig))


def time_embedding(t_idx: np.ndarray, dim: int) -> np.ndarray:
    """Sinusoidal embedding of integer step indices, shape (n, dim)."""
    t = np.asarray(t_idx, dtype=np.float64).reshape(-1, 1)
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half) / max(half - 1, 1))
    ang = t * freqs
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)


def _inputs(x: np.ndarray, t_idx: np.ndarray, cfg: MlpConfig) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    return np.concatenate([x, time_embedding(t_idx, cfg.time_dim)], axis=1)


def forward(p: MlpParams, x: np.ndarray, t_idx, sched: NoiseSchedule) -> np.ndarray:
    """Noise prediction for a batch; t_idx is scalar or per-row step index."""
    t = np.broadcast_to(np.asarray(t_idx), (np.atleast_2d(x).shape[0],))
    if np.any(t < 0) or np.any(t >= sched.T):
        raise ValueError("step index out of range")
    inp = _inputs(x, t, p.cfg)
    a1 = _silu(inp @ p.w1 + p.b1)
    a2 = _silu(a1 @ p.w2 + p.b2)
    out = a2 @ p.w3 + p.b3
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("non-finite activation in forward pass")
    return out


def loss_grad(
    p: MlpParams,
    batch: np.ndarray,
    sched: NoiseSchedule,
    rng_or_draws,
) -> tuple[float, np.ndarray]:
    """Monte Carlo denoising loss and its exact backprop gradient.

    The third argument is either an RngState (fresh (t, eps) draws) or a
    pre-drawn (t_idx, eps) pair, which makes the loss a deterministic
    function of the parameters for finite-difference checks.
    """
    x0 = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    n = x0.shape[0]
    if n < 1:
        raise ValueError("batch must be non-empty")
    if isinstance(rng_or_draws, RngState):
        gen = rng_or_draws.generator()
        t_idx = gen.integers(0, sched.T, size=n)
        eps = gen.standard_normal((n, 2))
    else:
        t_idx, eps = rng_or_draws
        t_idx = np.asarray(t_idx)
        eps = np.asarray(eps, dtype=np.float64)

    ab = sched.alpha_bar[t_idx][:, None]
    xt = np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps

    inp = _inputs(xt, t_idx, p.cfg)
    z1 = inp @ p.w1 + p.b1
    a1 = _silu(z1)
    z2 = a1 @ p.w2 + p.b2
    a2 = _silu(z2)
    out = a2 @ p.w3 + p.b3

    resid = out - eps
    loss = float(np.mean(np.sum(resid * resid, axis=1)))

    dout = 2.0 * resid / n
    gw3 = a2.T @ dout
    gb3 = dout.sum(axis=0)
    dz2 = (dout @ p.w3.T) * _silu_grad(z2)
    gw2 = a1.T @ dz2
    gb2 = dz2.sum(axis=0)
    dz1 = (dz2 @ p.w2.T) * _silu_grad(z1)
    gw1 = inp.T @ dz1
    gb1 = dz1.sum(axis=0)

    grad = np.concatenate(
        [gw1.ravel(), gb1, gw2.ravel(), gb2, gw3.ravel(), gb3]
    )
    return loss, grad


@dataclass(frozen=True)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps_hat: float = 1e-8

    def __post_init__(self):
        if self.step < 0:
            raise ValueError("step count must be nonnegative")
        if np.any(np.asarray(self.v) < 0):
            raise ValueError("second moments must be nonnegative")

    @classmethod
    def zeros(cls, dim: int, **kw) -> "AdamState":
        return cls(m=np.zeros(dim), v=np.zeros(dim), **kw)


def adam_step(
    params: np.ndarray, grad: np.ndarray, st: AdamState, lr: float
) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update on a flat parameter vector."""
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    g = as_param_vector(grad)
    step = st.step + 1
    m = st.beta1 * st.m + (1.0 - st.beta1) * g
    v = st.beta2 * st.v + (1.0 - st.beta2) * g * g
    mhat = m / (1.0 - st.beta1**step)
    vhat = v / (1.0 - st.beta2**step)
    new = params - lr * mhat / (np.sqrt(vhat) + st.eps_hat)
    return new, replace(st, m=m, v=v, step=step)


def adam_preconditioner(st: AdamState) -> np.ndarray:
    """Positive diagonal 1/(sqrt(v_hat) + eps) from bias-corrected moments."""
    if st.step < 1:
        raise ValueError("no second-moment estimate before the first step")
    vhat = st.v / (1.0 - st.beta2**st.step)
    return 1.0 / (np.sqrt(vhat) + st.eps_hat)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    epochs: int = 10_000
    batch_size: int = 256
    hidden: int = 128
    time_dim: int = 16
    T: int = 20

    @property
    def mlp(self) -> MlpConfig:
        return MlpConfig(hidden=self.hidden, time_dim=self.time_dim)


def train(
    data: np.ndarray,
    cfg: TrainConfig,
    rng: RngState,
    init: Checkpoint | None = None,
    adam: AdamState | None = None,
) -> tuple[Checkpoint, AdamState]:
    """Adam training of the denoiser; full shuffle each epoch.

    Passing `init` continues from an existing checkpoint (fine-tuning); the
    images-seen budget accumulates on top of the parent's.  A non-finite
    loss aborts the loop and returns the last finite checkpoint.
    """
    x = np.atleast_2d(np.asarray(data, dtype=np.float64))
    n = x.shape[0]
    sched = cosine_schedule(cfg.T)
    if init is not None:
        theta = init.params.copy()
        base_budget = init.budget_images
    else:
        theta = MlpParams.init(cfg.mlp, rng.fork("init")).flatten()
        base_budget = 0
    st = adam if adam is not None else AdamState.zeros(theta.shape[0])
    gen = rng.fork("train").generator()
    images_seen = 0
    for _epoch in range(cfg.epochs):
        order = gen.permutation(n)
        for lo in range(0, n, cfg.batch_size):
            batch = x[order[lo : lo + cfg.batch_size]]
            t_idx = gen.integers(0, sched.T, size=batch.shape[0])
            eps = gen.standard_normal((batch.shape[0], 2))
            params = MlpParams.unflatten(theta, cfg.mlp)
            loss, grad = loss_grad(params, batch, sched, (t_idx, eps))
            if not np.isfinite(loss):
                break
            theta, st = adam_step(theta, grad, st, cfg.lr)
            images_seen += batch.shape[0]
        else:
            continue
        break
    ckpt = Checkpoint(
        params=theta,
        model_kind="ddpm",
        seed=rng.seed,
        budget_images=base_budget + images_seen,
        lr=cfg.lr,
        meta=(
            ("T", str(cfg.T)),
            ("epochs", str(cfg.epochs)),
            ("hidden", str(cfg.hidden)),
            ("time_dim", str(cfg.time_dim)),
        ),
    )
    return ckpt, st


@dataclass(frozen=True)
class SamplerConfig:
    zeta: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.zeta) and self.zeta > 0):
            raise ValueError("zeta must be finite and positive")


def sample(
    p: MlpParams,
    sched: NoiseSchedule,
    sc: SamplerConfig,
    n: int,
    rng: RngState,
) -> np.ndarray:
    """Ancestral DDPM sampling with the predicted noise scaled by zeta.

    Posterior variance beta_t * (1 - alpha_bar_{t-1}) / (1 - alpha_bar_t);
    the final step adds no noise.
    """
    if n < 1:
        raise ValueError("need n >= 1 samples")
    gen = rng.generator()
    x = gen.standard_normal((n, 2))
    ab = sched.alpha_bar
    for t in range(sched.T - 1, -1, -1):
        eps_pred = sc.zeta * forward(p, x, t, sched)
        alpha_t = 1.0 - sched.beta[t]
        coef = sched.beta[t] / math.sqrt(1.0 - ab[t])
        x = (x - coef * eps_pred) / math.sqrt(alpha_t)
        if t > 0:
            var = sched.beta[t] * (1.0 - ab[t - 1]) / (1.0 - ab[t])
            x = x + math.sqrt(var) * gen.standard_normal((n, 2))
    return x


def checkpoint_mlp(ckpt: Checkpoint) -> MlpParams:
    """Rebuild MlpParams from a ddpm checkpoint's flat vector + metadata."""
    meta = dict(ckpt.meta)
    cfg = MlpConfig(hidden=int(meta["hidden"]), time_dim=int(meta["time_dim"]))
    return MlpParams.unflatten(ckpt.params, cfg)
