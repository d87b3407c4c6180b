"""Concrete Clifford representations for spatial dimension 1 and 2.

Both representations act on rank-2 spinors.  ``gamma[0]`` is the timelike
generator (squares to +1), ``gamma[j]`` for j >= 1 square to -1.  The matrix
``beta`` realising the indefinite pairing is ``gamma[0]``, so the positive
pairing ``(phi, gamma[0] psi)`` collapses to the Euclidean product.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

SIGMA1 = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA2 = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA3 = np.array([[1, 0], [0, -1]], dtype=complex)
ID2 = np.eye(2, dtype=complex)


@dataclass(frozen=True)
class CliffordRep:
    spatial_dim: int
    gamma: tuple[np.ndarray, ...]
    beta: np.ndarray
    spinor_rank: int = 2

    def __post_init__(self):
        for g in self.gamma:
            g.setflags(write=False)
        self.beta.setflags(write=False)


def build_rep(n: int) -> CliffordRep:
    """Shipped gamma matrices.

    n = 2: (sigma3, i sigma1, i sigma2).
    n = 1: swap matrix for e_0 and the off-diagonal block [[0, -1], [1, 0]]
    coming from the doubled rank-1 surface spinor bundle with tangential
    Clifford action i.
    """
    if n == 2:
        gamma = (SIGMA3.copy(), 1j * SIGMA1, 1j * SIGMA2)
    elif n == 1:
        gamma = (SIGMA1.copy(), np.array([[0, -1], [1, 0]], dtype=complex))
    else:
        raise ValueError(f"unsupported spatial dimension {n}; only n=1 and n=2 are shipped")
    return CliffordRep(spatial_dim=n, gamma=gamma, beta=gamma[0].copy())


def tangential_gamma(rep: CliffordRep, j: int) -> np.ndarray:
    """Surface Clifford action i*gamma(e_0)*gamma(e_j); skew-Hermitian."""
    if not 1 <= j <= rep.spatial_dim:
        raise IndexError(f"axis index {j} outside 1..{rep.spatial_dim}")
    return 1j * rep.gamma[0] @ rep.gamma[j]


def normal_gamma(rep: CliffordRep, sign: int) -> np.ndarray:
    """gamma(e_n) for the outward normal e_n = sign * e_1."""
    return sign * rep.gamma[1]


def pairing(
    rep: CliffordRep,
    phi: np.ndarray,
    psi: np.ndarray,
    kind: Literal["indefinite", "positive"] = "positive",
) -> complex:
    phi = np.asarray(phi, dtype=complex)
    psi = np.asarray(psi, dtype=complex)
    if phi.shape != (rep.spinor_rank,) or psi.shape != (rep.spinor_rank,):
        raise ValueError(
            f"spinor rank mismatch: expected ({rep.spinor_rank},), got {phi.shape} and {psi.shape}"
        )
    if kind == "indefinite":
        return complex(phi.conj() @ rep.beta @ psi)
    if kind == "positive":
        return complex(phi.conj() @ rep.beta @ rep.gamma[0] @ psi)
    raise ValueError(f"unknown pairing kind {kind!r}")


def clifford_residual(rep: CliffordRep) -> float:
    """max |g_j g_k + g_k g_j + 2 eta_jk| over all generator pairs."""
    worst = 0.0
    for j, gj in enumerate(rep.gamma):
        for k, gk in enumerate(rep.gamma):
            eta = 0.0 if j != k else (-1.0 if j == 0 else 1.0)
            r = gj @ gk + gk @ gj + 2 * eta * ID2
            worst = max(worst, float(np.abs(r).max()))
    return worst
