"""Constraint matrices, the invariant subspace of the auxiliary variable, and
closed forms for its conditional mean and variance lower bound."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import Graph


@dataclass(frozen=True)
class ConstraintSystem:
    """Edge constraints ``x_i = x_j`` written as ``C`` and the swap ``P``.

    Row block ``slot(i|j)`` of ``C`` holds ``A_ij`` in column block ``i``,
    with ``A_ij = +I`` if ``i > j`` and ``-I`` otherwise.
    """

    graph: Graph
    d: int
    C: np.ndarray
    P: np.ndarray
    perm: np.ndarray  # (P z)[r] == z[perm[r]], at slot granularity
    signs: np.ndarray  # A_ij sign for slot(i|j)

    @property
    def dim(self) -> int:
        return 2 * self.graph.m * self.d


def build_constraint_system(g: Graph, d: int = 1) -> ConstraintSystem:
    if d < 1:
        raise ValueError("dimension d must be >= 1")
    m, n = g.m, g.n
    signs = np.empty(2 * m)
    C = np.zeros((2 * m * d, n * d))
    eye = np.eye(d)
    for slot, (holder, peer) in enumerate(g.slot_pairs()):
        a = 1.0 if holder > peer else -1.0
        signs[slot] = a
        C[slot * d:(slot + 1) * d, holder * d:(holder + 1) * d] = a * eye
    perm = np.concatenate([np.arange(m, 2 * m), np.arange(m)]).astype(int)
    P = np.zeros((2 * m * d, 2 * m * d))
    for r, src in enumerate(perm):
        P[r * d:(r + 1) * d, src * d:(src + 1) * d] = eye
    for arr in (C, P, signs, perm):
        arr.setflags(write=False)
    return ConstraintSystem(g, d, C, P, perm, signs)


@dataclass(frozen=True)
class SubspaceProjector:
    """Orthonormal basis ``Q`` of ``ran(C) + ran(PC)`` and its projectors."""

    Q: np.ndarray
    tol: float

    @property
    def dim_psi(self) -> int:
        return self.Q.shape[1]

    @property
    def dim_perp(self) -> int:
        return self.Q.shape[0] - self.Q.shape[1]

    @property
    def vacuous(self) -> bool:
        """True when there is no subspace left for persistent noise."""
        return self.dim_perp == 0

    @property
    def pi_psi(self) -> np.ndarray:
        return self.Q @ self.Q.T

    @property
    def pi_perp(self) -> np.ndarray:
        if self.vacuous:  # exact zero rather than round-off
            return np.zeros((self.Q.shape[0],) * 2)
        return np.eye(self.Q.shape[0]) - self.Q @ self.Q.T

    def project_perp(self, z: np.ndarray) -> np.ndarray:
        """Apply the complement projector to the last axis of ``z``."""
        if self.vacuous:
            return np.zeros_like(z, dtype=float)
        return z - (z @ self.Q) @ self.Q.T

    def project_psi(self, z: np.ndarray) -> np.ndarray:
        return (z @ self.Q) @ self.Q.T


def subspace_projector(cs: ConstraintSystem, tol: float = 1e-10) -> SubspaceProjector:
    """Span of ``[C | PC]`` via SVD; singular values below ``tol * s_max`` count as zero."""
    M = np.hstack([cs.C, cs.P @ cs.C])
    if M.size == 0:
        return SubspaceProjector(np.zeros((M.shape[0], 0)), tol)
    U, s, _ = np.linalg.svd(M, full_matrices=False)
    rank = int(np.sum(s > tol * s[0])) if s.size and s[0] > 0 else 0
    Q = U[:, :rank].copy()
    Q.setflags(write=False)
    return SubspaceProjector(Q, tol)


@dataclass(frozen=True)
class BoundCurve:
    """Per-entry variance lower bound of the complement component, one row per k."""

    ks: np.ndarray
    values: np.ndarray  # (len(ks), 2*m*d)
    sigma2: float
    theta: float
    mu: float


def _perp_diagonals(sp: SubspaceProjector, P: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pp = sp.pi_perp
    pp_P = pp @ P
    return np.diag(pp) + np.diag(pp_P), np.diag(pp) - np.diag(pp_P)


def bound_curve(sp: SubspaceProjector, P: np.ndarray, sigma2: float, theta: float, mu: float, ks) -> BoundCurve:
    """Evaluate ``diag(Pi_perp (sigma2/2)((I+P) + |1-2 theta mu|^(2k) (I-P)))`` at each k.

    With ``mu = 1`` this is the exact synchronous variance.
    """
    if sigma2 < 0:
        raise ValueError("sigma2 must be nonnegative")
    if not 0 < theta <= 1:
        raise ValueError("theta must lie in (0, 1]")
    if not 0 < mu <= 1:
        raise ValueError("mu must lie in (0, 1]")
    ks = np.asarray(ks, dtype=int)
    plus, minus = _perp_diagonals(sp, P)
    decay = np.abs(1.0 - 2.0 * theta * mu) ** (2 * ks.astype(float))
    values = 0.5 * sigma2 * (plus[None, :] + decay[:, None] * minus[None, :])
    # clip roundoff below zero; the exact diagonals are nonnegative
    values = np.maximum(values, 0.0)
    return BoundCurve(ks, values, float(sigma2), float(theta), float(mu))


def expected_zperp(sp: SubspaceProjector, P: np.ndarray, z0: np.ndarray, theta: float, mu: float, k: int) -> np.ndarray:
    """Mean of the complement component after ``k`` steps, given ``z0``.

    Uses ``((1-a)I + aP)^k = ((I+P) + (1-2a)^k (I-P)) / 2`` with ``a = theta*mu``.
    """
    z0 = np.asarray(z0, dtype=float)
    if z0.shape[-1] != P.shape[0]:
        raise ValueError(f"z0 has length {z0.shape[-1]}, expected {P.shape[0]}")
    w = sp.project_perp(z0)
    Pw = w @ P.T
    r = (1.0 - 2.0 * theta * mu) ** k
    return 0.5 * ((w + Pw) + r * (w - Pw))
