"""Smooth macro initial data with analytic first and second derivatives.

Each component of the raw field is ``c + exp(-s * sum_r cos(2 pi (x_r - b_r)))``;
the initial data is the raw field normalized to unit length.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .grid import Grid


def unit_derivatives(P, dP, ddP):
    """Derivatives of ``Q = P / |P|`` from those of ``P``.

    ``P`` has shape ``(..., 3)``, ``dP`` shape ``(..., d, 3)`` and ``ddP``
    shape ``(..., d, d, 3)``. Returns ``(Q, dQ, ddQ)`` in the same layout.
    """
    P, dP, ddP = (np.asarray(v, dtype=float) for v in (P, dP, ddP))
    n = np.linalg.norm(P, axis=-1)[..., None]
    n1 = n[..., None]  # broadcasts against (..., d, 3)
    n2 = n[..., None, None]  # broadcasts against (..., d, d, 3)
    Pd = np.einsum("...k,...rk->...r", P, dP)  # P . P_r
    dQ = dP / n1 - P[..., None, :] * Pd[..., None] / n1**3
    PdPd = np.einsum("...rk,...sk->...rs", dP, dP)  # P_r . P_s
    PddP = np.einsum("...k,...rsk->...rs", P, ddP)  # P . P_rs
    ddQ = (
        ddP / n2
        - dP[..., :, None, :] * Pd[..., None, :, None] / n2**3
        - dP[..., None, :, :] * Pd[..., :, None, None] / n2**3
        - P[..., None, None, :] * (PdPd + PddP)[..., None] / n2**3
        + 3.0 * P[..., None, None, :] * (Pd[..., :, None] * Pd[..., None, :])[..., None] / n2**5
    )
    return P / n, dQ, ddQ


@dataclass(frozen=True)
class InitialData:
    name: str
    offsets: tuple  # c per component
    rates: tuple  # s per component
    shifts: tuple  # b per component, one entry per axis

    @property
    def dim(self) -> int:
        return len(self.shifts[0])

    def _points(self, x):
        x = np.asarray(x, dtype=float)
        if self.dim == 1 and (x.ndim == 0 or x.shape[-1] != 1):
            x = x[..., None]
        if x.shape[-1] != self.dim:
            raise ConfigError(f"{self.name} needs points with {self.dim} coordinates")
        return x

    def raw_derivatives(self, x):
        """Raw field and its first and second derivatives at points ``x``."""
        x = self._points(x)
        d = self.dim
        tp = 2.0 * np.pi
        P = np.empty(x.shape[:-1] + (3,))
        dP = np.empty(x.shape[:-1] + (d, 3))
        ddP = np.zeros(x.shape[:-1] + (d, d, 3))
        for k in range(3):
            phase = tp * (x - np.asarray(self.shifts[k]))
            s = self.rates[k]
            e = np.exp(-s * np.sum(np.cos(phase), axis=-1))
            g1 = s * tp * np.sin(phase)  # d_r of the exponent
            P[..., k] = self.offsets[k] + e
            dP[..., :, k] = e[..., None] * g1
            for r in range(d):
                for q in range(d):
                    val = g1[..., r] * g1[..., q]
                    if r == q:
                        val = val + s * tp * tp * np.cos(phase[..., r])
                    ddP[..., r, q, k] = e * val
        return P, dP, ddP

    def value(self, x) -> np.ndarray:
        P, _, _ = self.raw_derivatives(x)
        return P / np.linalg.norm(P, axis=-1, keepdims=True)

    def derivatives(self, x):
        """``(M, dM, ddM)`` of the normalized data."""
        return unit_derivatives(*self.raw_derivatives(x))

    def field_term(self, x, AH) -> np.ndarray:
        """``sum_rs AH[r, s] d_r d_s M`` evaluated analytically."""
        _, _, ddM = self.derivatives(x)
        return np.einsum("rs,...rsk->...k", np.atleast_2d(AH), ddM)

    def on_grid(self, grid: Grid) -> np.ndarray:
        return self.value(grid.coords())


EX1_DATA = InitialData(
    "EX1", (0.5, 0.5, 0.5), (0.1, 0.2, 0.1), ((0.32,), (0.0,), (0.75,))
)
EX2_DATA = InitialData(
    "EX2", (0.6, 0.5, 0.4), (0.3, 0.4, 0.2), ((0.25, 0.12), (0.0, 0.4), (0.81, 0.73))
)

# which smooth data each coefficient preset is paired with
INITIAL_DATA = {
    "EX1": EX1_DATA,
    "LOC1D": EX1_DATA,
    "EX2": EX2_DATA,
    "EX3": EX2_DATA,
    "QUASI2D": EX2_DATA,
    "LOC2D": EX2_DATA,
}


def initial_data_for(name: str, dim: int | None = None) -> InitialData:
    key = name.upper()
    if key in INITIAL_DATA:
        return INITIAL_DATA[key]
    if dim == 1:
        return EX1_DATA
    if dim == 2:
        return EX2_DATA
    raise ConfigError(f"no initial data for {name!r}")
