"""Operational KPIs: voltage imbalance, substation power factor and their combination."""

from __future__ import annotations

import numpy as np

SPF_MODES = ("arctan", "tanh")


def compute_vi(voltages) -> float | np.ndarray:
    """Worst relative deviation of a phase voltage from its bus phase-mean.

    ``voltages`` has shape ``(..., n_bus, 3)``; the maximum is taken over the
    last two axes, so a ``(T, n_bus, 3)`` array yields one value per step.
    """
    v = np.asarray(voltages, dtype=float)
    if v.shape[-1] != 3:
        raise ValueError("expected three phase values per bus")
    mean = v.mean(axis=-1, keepdims=True)
    if np.any(mean <= 0):
        raise ValueError("bus phase-mean voltage must be positive")
    vi = (np.abs(v - mean) / mean).max(axis=(-1, -2))
    return float(vi) if np.ndim(vi) == 0 else vi


def compute_spf(p_ss, q_ss, mode: str = "arctan"):
    """Substation power factor from net active and reactive power.

    ``mode="arctan"`` is the usual ``|cos(atan(q/p))|``; ``mode="tanh"``
    evaluates ``|cos(tanh(q/p))|``. Zero active power gives SPF 0.

    Returns ``(spf, zero_p_flag)``; both are scalars for scalar input.
    """
    if mode not in SPF_MODES:
        raise ValueError(f"mode must be one of {SPF_MODES}")
    p = np.asarray(p_ss, dtype=float)
    q = np.asarray(q_ss, dtype=float)
    zero = p == 0
    # tiny |p| may overflow to inf; arctan/tanh saturate correctly there
    with np.errstate(over="ignore"):
        ratio = np.divide(q, p, out=np.zeros(np.broadcast(p, q).shape), where=~zero)
    inner = np.arctan(ratio) if mode == "arctan" else np.tanh(ratio)
    spf = np.where(zero, 0.0, np.abs(np.cos(inner)))
    if spf.ndim == 0:
        return float(spf), bool(zero)
    return spf, zero


def compute_vispf(vi, spf):
    """``(1 - VI + SPF) / 2`` clamped to [0, 1]; returns ``(value, clamped)``."""
    raw = (1.0 - np.asarray(vi, dtype=float) + np.asarray(spf, dtype=float)) / 2.0
    val = np.clip(raw, 0.0, 1.0)
    clamped = raw != val
    if val.ndim == 0:
        return float(val), bool(clamped)
    return val, clamped
