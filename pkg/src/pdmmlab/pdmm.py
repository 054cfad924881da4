"""Synchronous, averaged and stochastically masked PDMM iterations.

Arrays use a structured layout internally: primal ``x`` has shape
``(..., n, d)`` and auxiliary ``z`` has shape ``(..., 2m, d)``, rows in
directed-slot order. Flattening ``z`` in C order gives the vector that
:mod:`pdmmlab.algebra` operates on. Leading axes are Monte-Carlo runs.

Each z update is written as ``z + delta`` with ``delta`` the plaintext
message, so replaying the initial values plus the messages reproduces the
trajectory bit for bit. The step never calls BLAS, so a batch of runs gives
the same bits regardless of how it is chunked.
"""

from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .algebra import ConstraintSystem, build_constraint_system
from .graph import Graph


class Scheme(str, enum.Enum):
    SYNC = "sync"
    ASYNC = "async"
    EXPLICIT = "explicit"


# -- cost models --------------------------------------------------------------

class ConsensusCost:
    """``f_i(x) = ||x - s_i||^2``; the optimum is the mean of ``s``.

    ``s`` has shape ``(..., n, d)``; extra leading axes give one private data
    set per Monte-Carlo run.
    """

    def __init__(self, s):
        s = np.asarray(s, dtype=float)
        if s.ndim == 1:
            s = s[:, None]
        self.s = s

    @property
    def n(self) -> int:
        return self.s.shape[-2]

    @property
    def d(self) -> int:
        return self.s.shape[-1]

    def solve(self, w, c, degrees):
        """Minimize ``f_i(x) + w_i^T x + (c d_i / 2)||x||^2`` at every node."""
        return (2.0 * self.s - w) / (2.0 + c * degrees)[:, None]

    def subgradient(self, x):
        return 2.0 * (x - self.s)

    def optimum(self):
        return np.broadcast_to(self.s.mean(axis=-2, keepdims=True), self.s.shape).copy()


class LinearRegressionCost:
    """``f_i(x) = ||A_i x - b_i||^2`` with a local design per node."""

    def __init__(self, A, b):
        self.A = [np.atleast_2d(np.asarray(a, dtype=float)) for a in A]
        self.b = [np.asarray(v, dtype=float).reshape(-1) for v in b]
        if len(self.A) != len(self.b):
            raise ValueError("A and b must list the same number of nodes")
        d = self.A[0].shape[1]
        for a, v in zip(self.A, self.b):
            if a.shape[1] != d or a.shape[0] != v.shape[0]:
                raise ValueError("inconsistent local regression shapes")
        self._AtA2 = np.stack([2.0 * a.T @ a for a in self.A])
        self._Atb2 = np.stack([2.0 * a.T @ v for a, v in zip(self.A, self.b)])
        self._cache = {}

    @property
    def n(self) -> int:
        return len(self.A)

    @property
    def d(self) -> int:
        return self.A[0].shape[1]

    def _inverses(self, c, degrees):
        key = (float(c), tuple(int(v) for v in degrees))
        if key not in self._cache:
            eye = np.eye(self.d)
            mats = self._AtA2 + c * np.asarray(degrees, float)[:, None, None] * eye
            self._cache[key] = np.linalg.inv(mats)
        return self._cache[key]

    def solve(self, w, c, degrees):
        inv = self._inverses(c, degrees)
        rhs = self._Atb2 - w
        return np.einsum("nij,...nj->...ni", inv, rhs)

    def subgradient(self, x):
        return np.einsum("nij,...nj->...ni", self._AtA2, x) - self._Atb2

    def optimum(self):
        x = np.linalg.solve(self._AtA2.sum(axis=0), self._Atb2.sum(axis=0))
        return np.tile(x, (self.n, 1))


# -- configuration, state, schedule -------------------------------------------

@dataclass(frozen=True)
class PdmmConfig:
    c: float = 0.5
    theta: float = 1.0
    scheme: Scheme = Scheme.ASYNC
    iterations: int = 0
    seed: int | None = None

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError(f"c must be positive, got {self.c}")
        if not 0 < self.theta <= 1:
            raise ValueError(f"theta must lie in (0, 1], got {self.theta}")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        object.__setattr__(self, "scheme", Scheme(self.scheme))


@dataclass
class PdmmState:
    x: np.ndarray  # (n, d)
    z: np.ndarray  # (2m, d)
    k: int = 0

    def copy(self) -> "PdmmState":
        return PdmmState(self.x.copy(), self.z.copy(), self.k)


@dataclass(frozen=True)
class Schedule:
    """Which directed slots fire at each iteration.

    For the async scheme, iteration ``k`` (1-based) activates node
    ``nodes[k-1]``, which writes ``z_{j|i}`` for all neighbours ``j``.
    """

    scheme: Scheme
    mu: float
    length: int
    nodes: np.ndarray | None = None
    masks: np.ndarray | None = None  # (K, 2m) bool, explicit scheme only

    def slot_mask(self, g: Graph, k: int) -> np.ndarray:
        """Slot mask used to go from iteration ``k-1`` to ``k``."""
        if not 1 <= k <= self.length:
            raise IndexError(f"schedule has no iteration {k}")
        if self.scheme is Scheme.SYNC:
            return np.ones(2 * g.m, dtype=bool)
        if self.scheme is Scheme.ASYNC:
            return writer_slots(g) == self.nodes[k - 1]
        return self.masks[k - 1]


def writer_slots(g: Graph) -> np.ndarray:
    """Node that computes each slot: ``z_{j|i}`` is written by ``i``."""
    return np.array([peer for _, peer in g.slot_pairs()], dtype=int)


def make_schedule(g: Graph, scheme, iterations: int, seed=None, masks=None) -> Schedule:
    """Draw or wrap an update schedule of ``iterations`` steps.

    ``masks`` (explicit scheme only) is a ``(K, 2m)`` boolean array; ``mu``
    is then the mean activation frequency over all entries.
    """
    scheme = Scheme(scheme)
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    if scheme is Scheme.SYNC:
        return Schedule(scheme, 1.0, iterations)
    if scheme is Scheme.ASYNC:
        rng = np.random.default_rng(seed)
        nodes = rng.integers(0, g.n, size=iterations)
        nodes.setflags(write=False)
        return Schedule(scheme, 1.0 / g.n, iterations, nodes=nodes)
    if masks is None:
        raise ValueError("explicit scheme needs masks")
    masks = np.asarray(masks, dtype=bool)
    if masks.shape != (iterations, 2 * g.m):
        raise ValueError(f"masks must have shape ({iterations}, {2 * g.m}), got {masks.shape}")
    mu = float(masks.mean()) if masks.size else 1.0
    return Schedule(scheme, mu, iterations, masks=masks)


# -- stepping -----------------------------------------------------------------

class _Layout:
    """Index tables for gather-only stepping on one constraint system."""

    def __init__(self, cs: ConstraintSystem):
        g = cs.graph
        self.cs = cs
        self.n, self.m, self.d = g.n, g.m, cs.d
        pairs = g.slot_pairs()
        self.holder = np.array([h for h, _ in pairs], dtype=int)
        self.writer = np.array([p for _, p in pairs], dtype=int)
        self.sign = np.asarray(cs.signs, dtype=float)
        self.perm = np.asarray(cs.perm, dtype=int)
        self.degrees = g.degrees.astype(float)
        maxdeg = max(int(g.degrees.max()), 1)
        pad = 2 * g.m  # index of an all-zero padding row
        table = np.full((g.n, maxdeg), pad, dtype=int)
        for i in range(g.n):
            for col, j in enumerate(g.neighbors[i]):
                table[i, col] = g.slot(i, j)
        self.held = table
        self.writes = np.zeros((2 * g.m, g.n), dtype=np.int64)
        self.writes[np.arange(2 * g.m), self.writer] = 1

    def dual_sum(self, z):
        """``sum_j A_ij z_{i|j}`` per node, summed in a fixed order."""
        signed = z * self.sign[:, None]
        pad = np.zeros(signed.shape[:-2] + (1, self.d))
        padded = np.concatenate([signed, pad], axis=-2)
        out = padded[..., self.held[:, 0], :]
        for col in range(1, self.held.shape[1]):
            out = out + padded[..., self.held[:, col], :]
        return out

    def proposal(self, z, x_new, c):
        """``P z + 2c P C x_new``."""
        cx = x_new[..., self.holder, :] * self.sign[:, None]
        return z[..., self.perm, :] + 2.0 * c * cx[..., self.perm, :]


_LAYOUTS: dict[int, _Layout] = {}


def _layout(cs: ConstraintSystem) -> _Layout:
    lay = _LAYOUTS.get(id(cs))
    if lay is None or lay.cs is not cs:
        if len(_LAYOUTS) > 64:
            _LAYOUTS.clear()
        lay = _LAYOUTS[id(cs)] = _Layout(cs)
    return lay


def _step(lay: _Layout, model, x, z, c, theta, slot_mask, node_mask):
    """One masked step; returns ``(x', z', delta)``. Masks may carry run axes."""
    x_prop = model.solve(lay.dual_sum(z), c, lay.degrees)
    delta = theta * (lay.proposal(z, x_prop, c) - z)
    if slot_mask is None:
        return x_prop, z + delta, delta
    z_new = np.where(slot_mask[..., None], z + delta, z)
    x_new = np.where(node_mask[..., None], x_prop, x)
    return x_new, z_new, delta


def local_x_solve(model, i: int, z, cfg: PdmmConfig, cs: ConstraintSystem) -> np.ndarray:
    """Primal update of node ``i`` from the current auxiliary vector."""
    lay = _layout(cs)
    z = np.asarray(z, dtype=float).reshape(-1, lay.d)
    return model.solve(lay.dual_sum(z), cfg.c, lay.degrees)[i]


def sync_step(state: PdmmState, model, cfg: PdmmConfig, cs: ConstraintSystem) -> PdmmState:
    lay = _layout(cs)
    x, z, _ = _step(lay, model, state.x, state.z, cfg.c, cfg.theta, None, None)
    return PdmmState(x, z, state.k + 1)


def _node_mask(lay: _Layout, slot_mask):
    return (slot_mask.astype(np.int64) @ lay.writes) > 0


def stochastic_step(state: PdmmState, model, cfg: PdmmConfig, cs: ConstraintSystem, mask) -> PdmmState:
    """Update only the slots set in ``mask`` (length ``2m`` or ``2m*d``).

    Nodes that write no active slot keep their previous ``x``.
    """
    lay = _layout(cs)
    mask = _slot_level(lay, mask)
    x, z, _ = _step(lay, model, state.x, state.z, cfg.c, cfg.theta, mask, _node_mask(lay, mask))
    return PdmmState(x, z, state.k + 1)


def _slot_level(lay: _Layout, mask):
    mask = np.asarray(mask, dtype=bool)
    if mask.shape[-1] == 2 * lay.m * lay.d and lay.d > 1:
        blocks = mask.reshape(mask.shape[:-1] + (2 * lay.m, lay.d))
        if not np.all(blocks == blocks[..., :1]):
            raise ValueError("mask must be constant over each directed edge's block")
        return blocks[..., 0]
    if mask.shape[-1] != 2 * lay.m:
        raise ValueError(f"mask has length {mask.shape[-1]}, expected {2 * lay.m}")
    return mask


# -- transcripts and runs -----------------------------------------------------

@dataclass
class Transcript:
    """What travels over the network during one run.

    ``secure_init`` is ``z^(0)`` (sent over a secure channel); each message
    is ``(k, slot, delta)`` with ``delta = z^(k) - z^(k-1)`` at that slot.
    """

    secure_init: np.ndarray
    msg_k: list = field(default_factory=list)
    msg_slot: list = field(default_factory=list)
    msg_delta: list = field(default_factory=list)
    x: list = field(default_factory=list)

    def __len__(self):
        return len(self.msg_k)

    def replay(self, upto: int | None = None) -> np.ndarray:
        z = self.secure_init.copy()
        for k, slot, delta in zip(self.msg_k, self.msg_slot, self.msg_delta):
            if upto is not None and k > upto:
                break
            z[slot] = z[slot] + delta
        return z


def initial_state(model, cs: ConstraintSystem, z0, c: float = 0.5) -> PdmmState:
    """State at k=0 with every node's x solved from ``z0``."""
    lay = _layout(cs)
    z0 = np.array(z0, dtype=float).reshape(-1, lay.d)
    if z0.shape[0] != 2 * lay.m:
        raise ValueError(f"z0 has {z0.shape[0] * lay.d} entries, expected {2 * lay.m * lay.d}")
    return PdmmState(model.solve(lay.dual_sum(z0), c, lay.degrees), z0, 0)


def run(model, g: Graph, cfg: PdmmConfig, schedule: Schedule, state0: PdmmState | None = None,
        cs: ConstraintSystem | None = None):
    """Apply ``cfg.iterations`` masked steps and record everything.

    Returns ``(trajectory, transcript)`` where ``trajectory[0]`` is the
    initial state.
    """
    if cs is None:
        cs = build_constraint_system(g, model.d)
    if cs.graph != g or cs.d != model.d or model.n != g.n:
        raise ValueError("model, graph and constraint system dimensions disagree")
    K = cfg.iterations
    if schedule.length < K:
        raise ValueError(f"schedule covers {schedule.length} iterations, need {K}")
    lay = _layout(cs)
    if state0 is None:
        state0 = initial_state(model, cs, np.zeros((2 * g.m, cs.d)), cfg.c)
    if state0.x.shape != (g.n, cs.d) or state0.z.shape != (2 * g.m, cs.d):
        raise ValueError("initial state has the wrong shape")
    state = state0.copy()
    traj = [state.copy()]
    tr = Transcript(state.z.copy())
    tr.x.append(state.x.copy())
    for k in range(1, K + 1):
        mask = schedule.slot_mask(g, k)
        x, z, delta = _step(lay, model, state.x, state.z, cfg.c, cfg.theta, mask, _node_mask(lay, mask))
        for slot in np.flatnonzero(mask):
            tr.msg_k.append(k)
            tr.msg_slot.append(int(slot))
            tr.msg_delta.append(delta[slot].copy())
        state = PdmmState(x, z, k)
        traj.append(state.copy())
        tr.x.append(x.copy())
    return traj, tr


def run_batch(model, cs: ConstraintSystem, c: float, theta: float, z0, masks_for, iterations: int,
              record_ks, observe=None, jobs: int = 1):
    """Advance ``R`` runs at once and snapshot them at ``record_ks``.

    Parameters
    ----------
    model : cost model
        Its data may carry a leading run axis of size ``R``.
    z0 : ndarray, shape (R, 2m, d)
    masks_for : callable
        ``masks_for(k, runs)`` returns the slot mask for step ``k`` as an
        array broadcastable to ``(len(runs), 2m)``, or ``None`` for a full
        synchronous step. ``runs`` is the slice of run indices being
        advanced.
    observe : callable, optional
        ``observe(x, z, runs)`` maps the ``(r, n, d)`` and ``(r, 2m, d)``
        states to whatever should be stored; defaults to ``z``.
    jobs : int
        Number of threads; runs are split into contiguous chunks and the
        result does not depend on the split.

    Returns
    -------
    ndarray or tuple of ndarray
        ``(R, len(record_ks), ...)`` snapshots in run order; a tuple when
        ``observe`` returns one.
    """
    lay = _layout(cs)
    z0 = np.asarray(z0, dtype=float)
    R = z0.shape[0]
    record_ks = sorted({int(k) for k in record_ks})
    if record_ks and (record_ks[0] < 0 or record_ks[-1] > iterations):
        raise ValueError("record_ks must lie in [0, iterations]")
    observe = observe or (lambda x, z, runs: z)

    def advance(runs: slice):
        sub_model = _run_slice(model, runs, R)
        z = z0[runs].copy()
        x = sub_model.solve(lay.dual_sum(z), c, lay.degrees)
        snaps = []
        want = iter(record_ks)
        nxt = next(want, None)
        for k in range(0, iterations + 1):
            if k > 0:
                mask = masks_for(k, runs)
                node_mask = None if mask is None else _node_mask(lay, np.asarray(mask))
                x, z, _ = _step(lay, sub_model, x, z, c, theta, mask, node_mask)
            if k == nxt:
                snaps.append(observe(x, z, runs))
                nxt = next(want, None)
            if nxt is None:
                break
        if isinstance(snaps[0], tuple):
            return tuple(np.stack(part, axis=1) for part in zip(*snaps))
        return np.stack(snaps, axis=1)

    jobs = max(1, min(int(jobs), R))
    bounds = np.linspace(0, R, jobs + 1).astype(int)
    chunks = [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    if len(chunks) == 1:
        return advance(chunks[0])
    with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
        parts = list(pool.map(advance, chunks))
    if isinstance(parts[0], tuple):
        return tuple(np.concatenate(p, axis=0) for p in zip(*parts))
    return np.concatenate(parts, axis=0)


def _run_slice(model, runs: slice, R: int):
    """Restrict a per-run model to ``runs``; shared models pass through."""
    if isinstance(model, ConsensusCost) and model.s.ndim == 3 and model.s.shape[0] == R:
        return ConsensusCost(model.s[runs])
    return model
