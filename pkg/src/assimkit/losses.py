"""Latitude-weighted L1 state loss, masked observation loss and the composite objectives built on them.

All reductions accumulate in float64. Inputs may be StateFields or plain
[C, n_lat, n_lon] arrays; observations are passed as (values, mask) pairs
or GriddedObsTensors with a single frame.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .grid import ChannelRegistry, RegistryMismatchError, StateField, as_array, weights_array

SURFACE_WEIGHT = 0.2
UPPER_AIR_MIN = 0.02
UPPER_AIR_MAX = {"T": 0.2, "R": 0.1, "U": 0.1, "V": 0.1, "Z": 0.1}


class LengthMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class ObsLossWeights:
    weights: np.ndarray
    labels: tuple[str, ...] = ()

    def __len__(self):
        return len(self.weights)


def _pair(x, y):
    if isinstance(x, StateField) and isinstance(y, StateField) and not x.same_layout(y):
        raise RegistryMismatchError("state fields differ in grid or registry")
    a, b = as_array(x), as_array(y)
    if a.shape != b.shape:
        raise RegistryMismatchError(f"shapes differ: {a.shape} vs {b.shape}")
    return a, b


def _obs_arrays(y):
    if y is None:
        return None, None
    if hasattr(y, "mask") and hasattr(y, "values"):
        v, m = np.asarray(y.values, dtype=np.float64), np.asarray(y.mask, dtype=np.float64)
        if v.ndim == 4:
            if v.shape[0] != 1:
                raise ValueError("observation loss needs a single-frame tensor")
            v, m = v[0], m[0]
        return v, m
    v, m = y
    return np.asarray(v, dtype=np.float64), np.asarray(m, dtype=np.float64)


def state_loss(x, xhat, w) -> float:
    """Mean over channels and cells of alpha_i * |x - xhat|."""
    a, b = _pair(x, xhat)
    alpha = weights_array(w, a.shape[-2])
    return float(np.mean(alpha[:, None] * np.abs(a - b)))


def default_obs_weights(registry: ChannelRegistry, min_weight: float = UPPER_AIR_MIN, surface_weight: float = SURFACE_WEIGHT, max_weights: dict | None = None) -> ObsLossWeights:
    """Per-channel observation-loss weights.

    Surface channels get ``surface_weight``. Upper-air weights fall linearly
    in pressure from the variable's maximum at 1000 hPa to ``min_weight`` at
    500 hPa and stay at ``min_weight`` above that.
    """
    max_weights = max_weights or UPPER_AIR_MAX
    lam = np.empty(len(registry))
    for k, ch in enumerate(registry):
        if ch.level is None:
            lam[k] = surface_weight
        else:
            top = max_weights[ch.name]
            frac = np.clip((ch.level - 500.0) / 500.0, 0.0, 1.0)
            lam[k] = min_weight + (top - min_weight) * frac
    return ObsLossWeights(lam, tuple(registry.labels))


def obs_loss(x, y, lam, w) -> float:
    """(1/C) sum_c lam_c * sum(m * alpha * |x - y|) / (sum(m) + 1)."""
    a = as_array(x)
    v, m = _obs_arrays(y)
    if v is None:
        return 0.0
    if v.shape != a.shape or m.shape != a.shape:
        raise RegistryMismatchError(f"observation shape {v.shape} vs state {a.shape}")
    lam = np.asarray(lam.weights if isinstance(lam, ObsLossWeights) else lam, dtype=np.float64)
    if lam.shape != (a.shape[0],):
        raise RegistryMismatchError(f"{lam.size} channel weights for {a.shape[0]} channels")
    alpha = weights_array(w, a.shape[-2])
    num = np.sum(m * alpha[:, None] * np.abs(a - np.where(m > 0, v, 0.0)), axis=(1, 2))
    den = np.sum(m, axis=(1, 2)) + 1.0
    return float(np.mean(lam * num / den))


def joint_loss(x, xhat, y, lam, w) -> float:
    return state_loss(x, xhat, w) + obs_loss(x, y, lam, w)


def cycle_loss(analyses: Sequence, backgrounds: Sequence, truths: Sequence, obs: Sequence, lam, w) -> float:
    """Sum over unrolled steps of joint(analysis_n) + joint(background_n+1).

    ``analyses`` and ``backgrounds`` have length N: analysis n is valid at
    t + n*dt (n = 0..N-1) and background n at t + (n+1)*dt. ``truths`` and
    ``obs`` cover t..t + N*dt (length N + 1); an obs entry may be None.
    """
    n = len(analyses)
    if len(backgrounds) != n:
        raise LengthMismatchError(f"{n} analyses but {len(backgrounds)} backgrounds")
    if len(truths) != n + 1 or len(obs) != n + 1:
        raise LengthMismatchError(f"truths/obs must have length {n + 1}")
    total = 0.0
    for k in range(n):
        total += joint_loss(analyses[k], truths[k], obs[k], lam, w)
        total += joint_loss(backgrounds[k], truths[k + 1], obs[k + 1], lam, w)
    return total


def multi_step_loss(forecasts: Sequence, truths: Sequence, w) -> float:
    if len(forecasts) != len(truths):
        raise LengthMismatchError(f"{len(forecasts)} forecasts but {len(truths)} truths")
    if not forecasts:
        raise LengthMismatchError("need at least one forecast step")
    return float(np.mean([state_loss(f, t, w) for f, t in zip(forecasts, truths)]))


def obs_loss_breakdown(x, y, lam, w) -> list[tuple[int, float, int]]:
    """Per-channel (index, weighted term, observation count) for reports."""
    a = as_array(x)
    v, m = _obs_arrays(y)
    lam = np.asarray(lam.weights if isinstance(lam, ObsLossWeights) else lam, dtype=np.float64)
    alpha = weights_array(w, a.shape[-2])
    num = np.sum(m * alpha[:, None] * np.abs(a - np.where(m > 0, v, 0.0)), axis=(1, 2))
    cnt = np.sum(m, axis=(1, 2))
    return [(c, float(lam[c] * num[c] / (cnt[c] + 1.0)), int(cnt[c])) for c in range(a.shape[0])]
