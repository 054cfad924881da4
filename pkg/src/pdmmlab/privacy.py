"""Monte-Carlo ensembles over random initialisations and the privacy
quantities computed from them: subspace variances, the variance lower
bound check, the conditional-mean check, the adversary's observation and a
Gaussian mutual-information estimate."""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .algebra import (
    BoundCurve,
    ConstraintSystem,
    SubspaceProjector,
    build_constraint_system,
    expected_zperp,
    subspace_projector,
)
from .graph import Graph
from .pdmm import PdmmConfig, Scheme, run_batch, writer_slots
from .seeding import derive_rng


class VacuousSubspaceWarning(UserWarning):
    """The graph leaves no complement subspace, so the bound is identically zero."""


VACUOUS_MESSAGE = "no privacy subspace - bound is vacuous"


class PrivacyError(ValueError):
    pass


class ScheduleMode(str, enum.Enum):
    FIXED = "fixed"
    INDEPENDENT = "independent"


@dataclass(frozen=True)
class EnsembleSpec:
    runs: int
    sigma_z2: float
    record_ks: tuple
    schedule_mode: ScheduleMode = ScheduleMode.FIXED
    seed: int = 0
    jobs: int = 1

    def __post_init__(self):
        if self.runs < 2:
            raise PrivacyError("an ensemble needs at least 2 runs")
        if self.sigma_z2 < 0:
            raise PrivacyError("sigma_z2 must be nonnegative")
        ks = tuple(sorted({int(k) for k in self.record_ks}))
        if not ks or ks[0] < 0:
            raise PrivacyError("record_ks must be nonempty and nonnegative")
        object.__setattr__(self, "record_ks", ks)
        object.__setattr__(self, "schedule_mode", ScheduleMode(self.schedule_mode))


@dataclass
class EnsembleStats:
    """Per recorded k and per entry: sample mean and unbiased variance."""

    ks: np.ndarray
    mean_perp: np.ndarray
    var_perp: np.ndarray
    mean_psi: np.ndarray
    var_psi: np.ndarray
    runs: int
    vacuous: bool = False


@dataclass
class EnsembleResult:
    stats: EnsembleStats
    snapshots: np.ndarray  # (R, len(ks), 2m*d), raw z
    x: np.ndarray  # (R, len(ks), n*d)
    z0: np.ndarray  # (R, 2m, d)
    mu: float
    nodes: np.ndarray | None = field(default=None, repr=False)


def draw_z0(seed: int, runs: int, shape, sigma_z2: float, first: int = 0) -> np.ndarray:
    """One independent ``N(0, sigma_z2 I)`` draw per run index."""
    scale = math.sqrt(sigma_z2)
    return np.stack([derive_rng(seed, "init", r).standard_normal(shape) * scale
                     for r in range(first, first + runs)])


def _mask_source(g: Graph, scheme: Scheme, mode: ScheduleMode, runs: int, K: int, seed: int):
    if scheme is Scheme.SYNC:
        return (lambda k, sl: None), 1.0, None
    if scheme is not Scheme.ASYNC:
        raise PrivacyError(f"ensembles support sync and async schemes, not {scheme.value}")
    writer = writer_slots(g)
    if mode is ScheduleMode.FIXED:
        nodes = derive_rng(seed, "schedule", 0).integers(0, g.n, size=K)
        return (lambda k, sl: writer == nodes[k - 1]), 1.0 / g.n, nodes
    nodes = np.stack([derive_rng(seed, "schedule", r).integers(0, g.n, size=K) for r in range(runs)])
    return (lambda k, sl: nodes[sl, k - 1][:, None] == writer[None, :]), 1.0 / g.n, nodes


def run_ensemble(model, g: Graph, cfg: PdmmConfig, spec: EnsembleSpec, cs: ConstraintSystem | None = None,
                 sp: SubspaceProjector | None = None, z0=None) -> EnsembleResult:
    """Run ``spec.runs`` PDMM instances from independent random ``z^(0)``.

    The private data in ``model`` is shared by all runs unless it carries a
    leading run axis. ``z0`` may be passed to reuse draws across ensembles.
    """
    if cs is None:
        cs = build_constraint_system(g, model.d)
    if sp is None:
        sp = subspace_projector(cs)
    if sp.vacuous:
        warnings.warn(VACUOUS_MESSAGE, VacuousSubspaceWarning, stacklevel=2)
    K = max(spec.record_ks)
    masks_for, mu, nodes = _mask_source(g, cfg.scheme, spec.schedule_mode, spec.runs, K, spec.seed)
    if z0 is None:
        z0 = draw_z0(spec.seed, spec.runs, (2 * g.m, cs.d), spec.sigma_z2)
    z0 = np.asarray(z0, dtype=float)
    if z0.shape != (spec.runs, 2 * g.m, cs.d):
        raise PrivacyError(f"z0 must have shape {(spec.runs, 2 * g.m, cs.d)}, got {z0.shape}")
    snaps, xs = run_batch(model, cs, cfg.c, cfg.theta, z0, masks_for, K, spec.record_ks,
                          observe=_flat_xz, jobs=spec.jobs)
    stats = _stats(snaps, sp, np.array(spec.record_ks))
    return EnsembleResult(stats, snaps, xs, z0, mu, nodes)


def _flat_xz(x, z, runs):
    return z.reshape(z.shape[0], -1), x.reshape(x.shape[0], -1)


def _stats(snaps: np.ndarray, sp: SubspaceProjector, ks: np.ndarray) -> EnsembleStats:
    perp = sp.project_perp(snaps)
    psi = snaps - perp
    return EnsembleStats(
        ks=ks,
        mean_perp=perp.mean(axis=0),
        var_perp=perp.var(axis=0, ddof=1),
        mean_psi=psi.mean(axis=0),
        var_psi=psi.var(axis=0, ddof=1),
        runs=snaps.shape[0],
        vacuous=sp.vacuous,
    )


def subspace_variance(snapshots, sp: SubspaceProjector) -> tuple[np.ndarray, np.ndarray]:
    """Unbiased per-entry variances ``(complement, subspace)`` over runs.

    ``snapshots`` has shape ``(R, 2m*d)``: every run's z at one iteration.
    """
    snapshots = np.asarray(snapshots, dtype=float)
    if snapshots.ndim != 2 or snapshots.shape[0] < 2:
        raise PrivacyError("need at least 2 snapshots to estimate a variance")
    perp = sp.project_perp(snapshots)
    return perp.var(axis=0, ddof=1), (snapshots - perp).var(axis=0, ddof=1)


def default_slack(runs: int) -> float:
    """Three standard deviations of a Gaussian variance estimate, capped at 0.25."""
    return min(3.0 * math.sqrt(2.0 / (runs - 1)), 0.25)


@dataclass
class BoundReport:
    passed: bool
    slack: float
    checked: int
    violations: list  # (k, entry, variance, bound)
    vacuous: bool = False
    mask: np.ndarray | None = field(default=None, repr=False)  # (len(ks), entries), True = ok

    def summary(self) -> str:
        state = "vacuous" if self.vacuous else ("pass" if self.passed else "FAIL")
        return f"{state}: {len(self.violations)} of {self.checked} entries below (1-{self.slack:.3g})*bound"


def verify_bound(stats: EnsembleStats, bound: BoundCurve, slack: float | None = None) -> BoundReport:
    """Check ``var >= (1 - slack) * bound`` for every recorded k and entry."""
    if slack is None:
        slack = default_slack(stats.runs)
    if not 0 <= slack < 1:
        raise PrivacyError("slack must lie in [0, 1)")
    if not np.array_equal(np.asarray(bound.ks), np.asarray(stats.ks)):
        raise PrivacyError("bound and stats are recorded at different iterations")
    ok = stats.var_perp >= (1.0 - slack) * bound.values
    violations = [(int(stats.ks[a]), int(b), float(stats.var_perp[a, b]), float(bound.values[a, b]))
                  for a, b in zip(*np.nonzero(~ok))]
    return BoundReport(not violations, slack, int(ok.size), violations, stats.vacuous, ok)


def mean_trajectory_check(g: Graph, model, cfg: PdmmConfig, z0, runs: int, iterations: int,
                          seed: int = 0, cs=None, sp=None, jobs: int = 1) -> float:
    """Largest relative gap between the schedule-averaged complement component
    and its closed form, over ``k = 0..iterations``.

    Every run starts from the same ``z0`` and draws its own schedule.
    """
    if cs is None:
        cs = build_constraint_system(g, model.d)
    if sp is None:
        sp = subspace_projector(cs)
    z0 = np.asarray(z0, dtype=float).reshape(2 * g.m, cs.d)
    w0 = sp.project_perp(z0.reshape(-1))
    scale = np.linalg.norm(w0)
    if scale <= 1e-12 * max(np.linalg.norm(z0), 1.0):
        raise PrivacyError("initialization has no complement-subspace component")
    masks_for, mu, _ = _mask_source(g, cfg.scheme, ScheduleMode.INDEPENDENT, runs, iterations, seed)
    ks = list(range(iterations + 1))
    zs = np.broadcast_to(z0, (runs,) + z0.shape)
    snaps = run_batch(model, cs, cfg.c, cfg.theta, zs, masks_for, iterations, ks,
                      observe=lambda x, z, sl: z.reshape(z.shape[0], -1), jobs=jobs)
    emp = sp.project_perp(snaps).mean(axis=0)
    dev = 0.0
    for k in ks:
        ref = expected_zperp(sp, cs.P, z0.reshape(-1), cfg.theta, mu, k)
        dev = max(dev, float(np.linalg.norm(emp[k] - ref) / scale))
    return dev


def adversary_observation(z, model, cs: ConstraintSystem, node: int, honest, c: float) -> np.ndarray:
    """``df_i(x_i^(k+1)) + sum_{j honest} A_ij z_{i|j}^(k)`` for auxiliary state ``z``.

    ``z`` has shape ``(..., 2m, d)`` with the run axis, if any, first and
    matching the model's per-run data. Returns shape ``(..., d)``.
    """
    g = cs.graph
    honest = sorted(set(int(j) for j in honest))
    if not honest:
        raise PrivacyError("node needs at least one honest neighbour")
    for j in honest:
        if j not in g.neighbors[node]:
            raise PrivacyError(f"{j} is not a neighbour of {node}")
    z = np.asarray(z, dtype=float)
    signs = cs.signs
    w = np.zeros(z.shape[:-2] + (g.n, cs.d))
    for i in range(g.n):
        acc = 0.0
        for j in g.neighbors[i]:
            slot = g.slot(i, j)
            acc = acc + signs[slot] * z[..., slot, :]
        w[..., i, :] = acc
    x_next = model.solve(w, c, g.degrees.astype(float))
    y = model.subgradient(x_next)[..., node, :]
    for j in honest:
        slot = g.slot(node, j)
        y = y + signs[slot] * z[..., slot, :]
    return y


@dataclass(frozen=True)
class MiEstimate:
    rho: float
    mi_nats: float

    @property
    def normalized(self) -> float:
        return self.rho ** 2


RHO2_CAP = 1.0 - 1e-12


def estimate_mi(s, y) -> MiEstimate:
    """Gaussian mutual information from the sample correlation of paired draws.

    ``I = -0.5 ln(1 - rho^2)`` nats, with ``rho^2`` capped just below one.
    """
    s = np.asarray(s, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if s.shape != y.shape:
        raise PrivacyError("s and y must have the same number of samples")
    if s.size < 10:
        raise PrivacyError("need at least 10 paired samples")
    sc, yc = s - s.mean(), y - y.mean()
    ss, yy = float(sc @ sc), float(yc @ yc)
    if ss == 0 or yy == 0:
        raise PrivacyError("correlation undefined: zero variance in s or y")
    rho = float(np.clip((sc @ yc) / math.sqrt(ss * yy), -1.0, 1.0))
    return MiEstimate(rho, -0.5 * math.log1p(-min(rho * rho, RHO2_CAP)))
