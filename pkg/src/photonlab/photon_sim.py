"""Gated single-photon camera simulation.

A ground-truth intensity map is scaled to a per-pixel detected photon rate,
photon and dark counts are drawn from Poisson distributions, passed through
an analog gain with Gaussian read noise, and thresholded to a binary
detection map (one gated exposure).
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace

import numpy as np


@dataclass(frozen=True)
class CameraModel:
    """Forward-model parameters.

    mu         mean detected photons per pixel per exposure (after quantum efficiency)
    eta        quantum efficiency; only used for explicit thinning studies
    dark       mean dark/background counts per pixel per exposure
    gain       analog counts per detected photon
    sigma_read Gaussian read-noise std, analog counts
    threshold  binarization level, analog counts
    """

    mu: float = 1.6
    eta: float = 0.1
    dark: float = 0.01
    gain: float = 1.0
    sigma_read: float = 0.1
    threshold: float = 0.5

    def __post_init__(self):
        if not self.mu >= 0:
            raise ValueError(f"mu must be >= 0, got {self.mu}")
        if not 0 <= self.eta <= 1:
            raise ValueError(f"eta must lie in [0, 1], got {self.eta}")
        if not self.dark >= 0:
            raise ValueError(f"dark must be >= 0, got {self.dark}")
        if not self.gain > 0:
            raise ValueError(f"gain must be > 0, got {self.gain}")
        if not self.sigma_read >= 0:
            raise ValueError(f"sigma_read must be >= 0, got {self.sigma_read}")

    def with_mu(self, mu: float) -> "CameraModel":
        return replace(self, mu=mu)

    def incident_rate(self) -> float:
        """Mean photons per pixel arriving before quantum-efficiency losses."""
        return self.mu / self.eta if self.eta > 0 else math.inf

    def to_dict(self) -> dict:
        return asdict(self)


PRESETS = {
    # single-exposure regime at 1.6 and 0.8 photons per pixel; background folds in
    # intensifier noise and scattered light
    "paper-like": CameraModel(mu=1.6, eta=0.1, dark=0.01, gain=1.0, sigma_read=0.1, threshold=0.5),
    "paper-like-low": CameraModel(mu=0.8, eta=0.1, dark=0.01, gain=1.0, sigma_read=0.1, threshold=0.5),
    # heavier background for exploring the noisy-frame regime
    "noisy": CameraModel(mu=1.6, eta=0.1, dark=0.3, gain=1.0, sigma_read=0.1, threshold=0.5),
    "ideal": CameraModel(mu=1.6, eta=1.0, dark=0.0, gain=1.0, sigma_read=0.0, threshold=0.5),
}


def get_preset(name: str) -> CameraModel:
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown camera preset {name!r}; known: {sorted(PRESETS)}") from None


def derive_seed(master_seed: int, index: int) -> int:
    """Hash (master_seed, index) into an independent 64-bit stream seed."""
    return int(np.random.SeedSequence([int(master_seed), int(index)]).generate_state(1, np.uint64)[0])


# -- Poisson sampling --------------------------------------------------------

_KNUTH_MAX = 30.0


def _poisson_ptrs(lam: float, rng: np.random.Generator) -> int:
    # Hoermann's transformed rejection with squeeze (PTRS), valid for lam >= 10
    slam = math.sqrt(lam)
    loglam = math.log(lam)
    b = 0.931 + 2.53 * slam
    a = -0.059 + 0.02483 * b
    inv_alpha = 1.1239 + 1.1328 / (b - 3.4)
    vr = 0.9277 - 3.6224 / (b - 2)
    while True:
        u = rng.random() - 0.5
        v = rng.random()
        us = 0.5 - abs(u)
        k = math.floor((2 * a / us + b) * u + lam + 0.43)
        if us >= 0.07 and v <= vr:
            return k
        if k < 0 or (us < 0.013 and v > us):
            continue
        if (math.log(v) + math.log(inv_alpha) - math.log(a / (us * us) + b)
                <= -lam + k * loglam - math.lgamma(k + 1)):
            return k


def poisson_sample(lam, rng: np.random.Generator):
    """Exact Poisson draws for a scalar or array of rates.

    Rates below 30 use Knuth's product-of-uniforms method (vectorised over
    the array); larger rates use transformed rejection. Returns an int64
    array shaped like ``lam`` (a Python int for scalar input).
    """
    lam_arr = np.asarray(lam, dtype=np.float64)
    if np.any(~(lam_arr >= 0)):
        raise ValueError("Poisson rate must be >= 0 and finite")
    if np.any(~np.isfinite(lam_arr)):
        raise ValueError("Poisson rate must be finite")
    flat = lam_arr.reshape(-1)
    out = np.zeros(flat.shape, dtype=np.int64)

    small = np.flatnonzero((flat > 0) & (flat < _KNUTH_MAX))
    if small.size:
        limit = np.exp(-flat[small])
        prod = rng.random(small.size)
        count = np.zeros(small.size, dtype=np.int64)
        active = np.flatnonzero(prod > limit)
        while active.size:
            count[active] += 1
            prod[active] *= rng.random(active.size)
            active = active[prod[active] > limit[active]]
        out[small] = count

    for i in np.flatnonzero(flat >= _KNUTH_MAX):
        out[i] = _poisson_ptrs(float(flat[i]), rng)

    if lam_arr.ndim == 0:
        return int(out[0])
    return out.reshape(lam_arr.shape)


def thin(counts, p: float, rng: np.random.Generator) -> np.ndarray:
    """Binomial thinning: keep each counted photon independently with probability ``p``."""
    return rng.binomial(np.asarray(counts, dtype=np.int64), p)


# -- forward model -----------------------------------------------------------

def flux_map(img: np.ndarray, mu: float) -> np.ndarray:
    """Per-pixel detected photon rate with image mean scaled to ``mu``."""
    if mu < 0:
        raise ValueError(f"mu must be >= 0, got {mu}")
    img = np.asarray(img, dtype=np.float64)
    if np.any(img < 0):
        raise ValueError("ground-truth intensities must be nonnegative")
    mean = img.mean()
    if mean == 0:
        return np.zeros_like(img)
    return mu * img / mean


def simulate_frame(img: np.ndarray, cam: CameraModel, stream_seed) -> np.ndarray:
    """One gated exposure of ``img``; returns a uint8 map of 0/1 detections.

    Draw order from the stream is fixed (signal photons, dark counts, read
    noise), so a frame is a pure function of (img, cam, stream_seed).
    """
    rng = np.random.default_rng(stream_seed)
    lam = flux_map(img, cam.mu)
    n = poisson_sample(lam, rng)
    n_dark = poisson_sample(np.full(lam.shape, cam.dark), rng)
    analog = cam.gain * (n + n_dark) + cam.sigma_read * rng.standard_normal(lam.shape)
    return (analog >= cam.threshold).astype(np.uint8)


def accumulate_frames(img: np.ndarray, cam: CameraModel, n_frames: int, master_seed: int) -> np.ndarray:
    """Sum of ``n_frames`` independent binary frames; frame k uses stream ``derive_seed(master_seed, k)``."""
    if n_frames < 1:
        raise ValueError("n_frames must be >= 1")
    total = np.zeros(np.shape(img), dtype=np.int64)
    for k in range(n_frames):
        total += simulate_frame(img, cam, derive_seed(master_seed, k))
    return total


def detection_probability(lam, cam: CameraModel) -> np.ndarray:
    """Probability that a pixel with signal rate ``lam`` registers a detection.

    Sums over total counts n ~ Poisson(lam + dark) the chance that the analog
    value ``gain * n + read noise`` clears the threshold.
    """
    lam = np.asarray(lam, dtype=np.float64) + cam.dark
    nmax = int(np.max(lam) + 12 * math.sqrt(np.max(lam) + 1) + 20)
    n = np.arange(nmax + 1)
    logpmf = n[:, None] * np.log(np.maximum(lam.reshape(-1), 1e-300))[None] - lam.reshape(-1)[None] \
        - np.array([math.lgamma(k + 1) for k in n])[:, None]
    pmf = np.where(lam.reshape(-1)[None] > 0, np.exp(logpmf), (n[:, None] == 0).astype(float))
    level = cam.gain * n - cam.threshold
    if cam.sigma_read > 0:
        above = np.array([0.5 * (1 + math.erf(v / (cam.sigma_read * math.sqrt(2)))) for v in level])
    else:
        above = (level >= 0).astype(float)
    return (pmf * above[:, None]).sum(axis=0).reshape(lam.shape)
