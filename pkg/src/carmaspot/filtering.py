"""Robust L1 filter for the CARMA state vector.

Over one grid step the state innovation z_n = int e^{A(nh-u)} e_p dL(u) is
approximated by the average value of its integrand times the driver increment,
g * dL/h with g = -A^{-1}(I - e^{Ah}) e_p.  Conditioning on y_n = b'x_n fixes
b'z_n, hence the increment, hence the whole state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .carma import CarmaParams, CarmaState, _require_stationary, matrix_exp
from .errors import DomainError, SingularFilterError

__all__ = ["FilterRun", "filter_gain", "l1_filter_step", "l1_filter"]


@dataclass
class FilterRun:
    states: np.ndarray  # shape (n, p)
    h: float
    x0: np.ndarray

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=float)
        self.x0 = np.asarray(self.x0, dtype=float)

    def __len__(self):
        return self.states.shape[0]

    def state(self, n: int) -> CarmaState:
        return CarmaState(self.states[n])


def filter_gain(params: CarmaParams, h: float = 1.0):
    """Return (e^{Ah}, gain vector k) with x_n = e^{Ah}x + k (y_n - b'e^{Ah}x)."""
    _require_stationary(params)
    A = params.A
    E = matrix_exp(A, h)
    g = -np.linalg.solve(A, (np.eye(params.p) - E) @ params.e_p)
    denom = float(params.b_vec @ g)
    if abs(denom) <= 1e-14 * max(1.0, float(np.abs(g).max())):
        raise SingularFilterError("b' A^{-1}(I - e^{Ah}) e_p vanishes; the filter gain is undefined")
    return E, g / denom


def l1_filter_step(x_prev, y_n: float, params: CarmaParams, h: float = 1.0, _gain=None) -> CarmaState:
    E, k = filter_gain(params, h) if _gain is None else _gain
    x_prev = np.asarray(getattr(x_prev, "x", x_prev), dtype=float)
    pred = E @ x_prev
    return CarmaState(pred + k * (y_n - params.b_vec @ pred))


def l1_filter(y, params: CarmaParams, h: float = 1.0, x0=None) -> FilterRun:
    """Filter the whole series; the state at index n is conditioned on y_0..y_n.

    With ``x0`` (the state one step before y_0) defaulting to zero, the first
    ceil(10/|max Re lambda|) filtered states are still dominated by the
    initialization and should be discarded downstream.
    """
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.size == 0:
        raise DomainError("y must be a non-empty one-dimensional series")
    E, k = filter_gain(params, h)
    p = params.p
    x = np.zeros(p) if x0 is None else np.asarray(getattr(x0, "x", x0), dtype=float).reshape(p)
    start = x.copy()
    # x_n = P E x_{n-1} + k y_n with P = I - k b'
    F = (np.eye(p) - np.outer(k, params.b_vec)) @ E
    out = np.empty((y.size, p))
    for n in range(y.size):
        x = F @ x + k * y[n]
        out[n] = x
    if not np.all(np.isfinite(out)):
        raise SingularFilterError("filter produced non-finite states")
    return FilterRun(out, h, start)
