"""Total-variation regularized Poisson reconstruction.

Minimizes

    F(x) + tv_weight * TV(x),   F(x) = sum(g*x + b - y*log(g*x + b)),   x >= 0

with separable quadratic approximations of F: each outer step proposes a
curvature ``alpha`` by Barzilai-Borwein, takes the TV proximal step of
``x - grad/alpha`` with weight ``tv_weight/alpha``, projects onto x >= 0, and
raises ``alpha`` until the step gives sufficient decrease.
"""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field

import numpy as np


@dataclass
class TvConfig:
    tv_weight: float = 0.5
    background: float = 0.01
    gain: float = 1.0
    max_outer_iters: int = 100
    inner_iters: int = 20
    tol: float = 1e-8
    alpha_min: float = 1e-6
    alpha_max: float = 1e10
    alpha_init: float = 1.0
    backtrack_factor: float = 2.0
    sufficient_decrease: float = 1e-5
    max_backtracks: int = 40
    alpha_memory: float = 0.1

    def __post_init__(self):
        if self.tv_weight < 0:
            raise ValueError("tv_weight must be >= 0")
        if not self.background > 0:
            raise ValueError("background must be > 0 to keep log(g*x + b) finite")
        if not self.gain > 0:
            raise ValueError("gain must be > 0")
        if self.max_outer_iters < 1 or self.inner_iters < 1:
            raise ValueError("iteration counts must be >= 1")
        if not 0 < self.alpha_min <= self.alpha_max:
            raise ValueError("need 0 < alpha_min <= alpha_max")
        if not self.backtrack_factor > 1:
            raise ValueError("backtrack_factor must be > 1")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SolveTrace:
    objective: list = field(default_factory=list)
    step: list = field(default_factory=list)
    backtracks: list = field(default_factory=list)
    stop_reason: str = ""

    def __len__(self):
        return len(self.objective)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iteration", "objective", "step", "backtracks"])
            for i, (o, s, b) in enumerate(zip(self.objective, self.step, self.backtracks)):
                w.writerow([i, repr(o), repr(s), b])


# -- pieces of the objective -------------------------------------------------

def poisson_nll(x: np.ndarray, y: np.ndarray, cfg: TvConfig) -> tuple[float, np.ndarray]:
    """Poisson negative log-likelihood (up to a constant in y) and its gradient."""
    x = np.asarray(x, dtype=np.float64)
    if np.any(x < 0):
        raise ValueError("poisson_nll needs x >= 0 elementwise; project before evaluating")
    g, b = cfg.gain, cfg.background
    mean = g * x + b
    value = float(np.sum(mean - y * np.log(mean)))
    grad = g * (1.0 - y / mean)
    return value, grad


def _grad(x):
    gh = np.zeros_like(x)
    gw = np.zeros_like(x)
    gh[:-1] = x[1:] - x[:-1]
    gw[:, :-1] = x[:, 1:] - x[:, :-1]
    return gh, gw


def _div(ph, pw):
    # negative adjoint of _grad
    d = np.zeros_like(ph)
    d[:-1] += ph[:-1]
    d[1:] -= ph[:-1]
    d[:, :-1] += pw[:, :-1]
    d[:, 1:] -= pw[:, :-1]
    return d


def tv_seminorm(x: np.ndarray) -> float:
    """Isotropic total variation with forward differences (zero past the last row/column)."""
    gh, gw = _grad(np.asarray(x, dtype=np.float64))
    return float(np.sum(np.sqrt(gh * gh + gw * gw)))


def _tv_prox_dual(v, weight, inner_iters, dual=None):
    """Accelerated projected gradient on the dual of the TV denoising problem.

    Solves argmin_x 0.5*||x - v||^2 + weight*TV(x) through x = v + weight*div(p),
    |p_ij| <= 1. Returns (x, p); ``p`` can warm-start the next call.
    """
    if weight == 0:
        return v.copy(), dual
    if dual is None:
        ph, pw = np.zeros_like(v), np.zeros_like(v)
    else:
        ph, pw = dual[0].copy(), dual[1].copy()
    rh, rw = ph.copy(), pw.copy()
    u = np.empty_like(v)
    gh = np.zeros_like(v)
    gw = np.zeros_like(v)
    norm = np.empty_like(v)
    t = 1.0
    step = 1.0 / (8.0 * weight)
    for _ in range(inner_iters):
        # u = v + weight * div(r)
        u[:] = 0.0
        u[:-1] += rh[:-1]
        u[1:] -= rh[:-1]
        u[:, :-1] += rw[:, :-1]
        u[:, 1:] -= rw[:, :-1]
        u *= weight
        u += v
        np.subtract(u[1:], u[:-1], out=gh[:-1])
        np.subtract(u[:, 1:], u[:, :-1], out=gw[:, :-1])
        # q = proj(r + step * grad(u)); reuse gh/gw as q
        gh *= step
        gh += rh
        gw *= step
        gw += rw
        np.hypot(gh, gw, out=norm)
        np.maximum(norm, 1.0, out=norm)
        gh /= norm
        gw /= norm
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        beta = (t - 1.0) / t_next
        # r = q + beta * (q - p); then p = q
        np.subtract(gh, ph, out=rh)
        rh *= beta
        rh += gh
        np.subtract(gw, pw, out=rw)
        rw *= beta
        rw += gw
        ph, gh = gh, ph
        pw, gw = gw, pw
        gh[-1] = 0.0
        gw[:, -1] = 0.0
        t = t_next
    return v + weight * _div(ph, pw), (ph, pw)


def tv_prox(v: np.ndarray, weight: float, inner_iters: int = 100) -> np.ndarray:
    """Approximate ``argmin_x 0.5*||x - v||^2 + weight * TV(x)``; no sign constraint."""
    if weight < 0:
        raise ValueError("prox weight must be >= 0")
    return _tv_prox_dual(np.asarray(v, dtype=np.float64), float(weight), inner_iters)[0]


def _check_counts(y) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 2:
        raise ValueError(f"expected a 2-d count map, got shape {y.shape}")
    yf = y.astype(np.float64)
    if not np.all(np.isfinite(yf)) or np.any(yf < 0) or np.any(yf != np.round(yf)):
        raise ValueError("counts must be nonnegative integers")
    return yf


def objective(x, y, cfg: TvConfig) -> float:
    return poisson_nll(x, _check_counts(y), cfg)[0] + cfg.tv_weight * tv_seminorm(x)


def reconstruct_tv(y, cfg: TvConfig | None = None, x0=None) -> tuple[np.ndarray, SolveTrace]:
    """Reconstruct an intensity map from a binary frame or count map.

    Starts from a flat image at the mean count (or ``x0``). The trace holds
    the accepted objective values, the step length ``1/alpha`` and the
    number of backtracks for each outer iteration.
    """
    cfg = cfg or TvConfig()
    y = _check_counts(y)
    g = cfg.gain
    lam = cfg.tv_weight

    if x0 is None:
        x = np.full(y.shape, y.mean() / g)
    else:
        x = np.maximum(np.asarray(x0, dtype=np.float64), 0.0)
    f, grad = poisson_nll(x, y, cfg)
    phi = f + lam * tv_seminorm(x)
    trace = SolveTrace()
    alpha = cfg.alpha_init
    dual = None

    for _ in range(cfg.max_outer_iters):
        accepted = False
        for bt in range(cfg.max_backtracks + 1):
            z, dual_new = _tv_prox_dual(x - grad / alpha, lam / alpha, cfg.inner_iters, dual)
            np.maximum(z, 0.0, out=z)
            f_new, grad_new = poisson_nll(z, y, cfg)
            phi_new = f_new + lam * tv_seminorm(z)
            dx = z - x
            if phi_new <= phi - 0.5 * cfg.sufficient_decrease * alpha * float(np.sum(dx * dx)):
                accepted = True
                break
            alpha *= cfg.backtrack_factor
        if not accepted:
            trace.stop_reason = "no sufficient decrease"
            break

        trace.objective.append(phi_new)
        trace.step.append(1.0 / alpha)
        trace.backtracks.append(bt)
        change = abs(phi - phi_new) / max(abs(phi), 1e-12)
        dg = grad_new - grad
        x, f, grad, phi, dual = z, f_new, grad_new, phi_new, dual_new

        ss = float(np.sum(dx * dx))
        if ss == 0.0:
            trace.stop_reason = "stationary"
            break
        if change < cfg.tol:
            trace.stop_reason = "tolerance"
            break
        # BB curvature, floored at a fraction of the last accepted one: the
        # likelihood is linear on zero-count pixels, where BB alone sees no curvature
        bb = float(np.sum(dx * dg)) / ss
        alpha = min(max(bb, alpha * cfg.alpha_memory, cfg.alpha_min), cfg.alpha_max)
    else:
        trace.stop_reason = "max_outer_iters"
    return x, trace


def select_tv_weight(frames, truths, cfg: TvConfig | None = None,
                     grid=(0.01, 0.05, 0.1, 0.5)) -> tuple[float, dict]:
    """Pick the TV weight with the lowest mean MSE against ground truth on a validation batch."""
    cfg = cfg or TvConfig()
    scores = {}
    for weight in grid:
        c = TvConfig(**{**cfg.to_dict(), "tv_weight": weight})
        errs = [float(np.mean((reconstruct_tv(y, c)[0] - t) ** 2)) for y, t in zip(frames, truths)]
        scores[weight] = float(np.mean(errs))
    best = min(scores, key=scores.get)
    return best, scores
