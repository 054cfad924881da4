"""Experiment drivers behind the CLI commands.

Each driver takes an :class:`ExperimentConfig` and returns an
:class:`Outcome`: the tables to write, whether every bound check passed,
and human-readable notes. Sub-seeds come from the master seed through
fixed role labels (see :mod:`pdmmlab.seeding`).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .algebra import bound_curve, build_constraint_system, subspace_projector
from .config import ConfigError, ExperimentConfig
from .graph import GraphError, generate_rgg, load_graph
from .pdmm import ConsensusCost, LinearRegressionCost, PdmmConfig, initial_state, make_schedule, run
from .privacy import (
    VACUOUS_MESSAGE,
    EnsembleSpec,
    VacuousSubspaceWarning,
    adversary_observation,
    draw_z0,
    estimate_mi,
    run_ensemble,
    verify_bound,
)
from .report import Table
from .seeding import derive_rng, derive_seed


@dataclass
class Outcome:
    tables: list
    ok: bool = True
    notes: list = field(default_factory=list)
    data: dict = field(default_factory=dict)


@dataclass
class Setup:
    graph: object
    cs: object
    sp: object
    model: object


def build_setup(cfg: ExperimentConfig) -> Setup:
    try:
        if cfg.graph.file is not None:
            g = load_graph(cfg.graph_path())
        else:
            g = generate_rgg(cfg.graph.n, cfg.graph.radius, derive_rng(cfg.seed, "graph"), cfg.graph.max_attempts)
    except (GraphError, OSError) as exc:
        raise ConfigError(f"graph: {exc}") from None
    d = cfg.model.dim
    rng = derive_rng(cfg.seed, "data")
    if cfg.model.kind == "consensus":
        model = ConsensusCost(rng.standard_normal((g.n, d)))
    else:
        w = rng.standard_normal(d)
        A = [rng.standard_normal((cfg.model.rows, d)) for _ in range(g.n)]
        b = [a @ w + 0.1 * rng.standard_normal(cfg.model.rows) for a in A]
        model = LinearRegressionCost(A, b)
    cs = build_constraint_system(g, d)
    return Setup(g, cs, subspace_projector(cs), model)


def _slot_labels(setup: Setup):
    """``(holder, peer, component)`` for every flat auxiliary entry."""
    d = setup.cs.d
    return [(h, p, c) for h, p in setup.graph.slot_pairs() for c in range(d)]


def _stats_rows(scheme, theta, res, bound, rep, labels):
    rows = []
    st = res.stats
    for a, k in enumerate(st.ks):
        for e, (h, p, comp) in enumerate(labels):
            rows.append([scheme, theta, int(k), e, h, p, comp, st.var_perp[a, e], st.var_psi[a, e],
                         bound.values[a, e], bool(rep.mask[a, e])])
    return rows


STATS_HEADER = ["scheme", "theta", "k", "entry_slot", "holder", "peer", "component",
                "var_psi_perp", "var_psi", "bound", "pass"]


def _ensemble(cfg, setup, theta, scheme, ks, sigma_z2, model=None, z0=None, label="ensemble"):
    spec = EnsembleSpec(
        runs=cfg.ensemble.runs if z0 is None else z0.shape[0],
        sigma_z2=sigma_z2,
        record_ks=tuple(ks),
        schedule_mode=cfg.ensemble.schedule_mode,
        seed=derive_seed(cfg.seed, label),
        jobs=cfg.output.jobs,
    )
    pcfg = PdmmConfig(c=cfg.pdmm.c, theta=theta, scheme=scheme)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", VacuousSubspaceWarning)
        return run_ensemble(model or setup.model, setup.graph, pcfg, spec, setup.cs, setup.sp, z0=z0)


def _vacuity_notes(setup) -> list:
    if setup.sp.vacuous:
        return [f"warning: {VACUOUS_MESSAGE}"]
    return []


def _projector_meta(setup):
    return [("dim_psi", setup.sp.dim_psi), ("dim_psi_perp", setup.sp.dim_perp),
            ("vacuous", int(setup.sp.vacuous))]


def cmd_fig1(cfg: ExperimentConfig) -> Outcome:
    """Primal error and subspace variances against k for each theta."""
    setup = build_setup(cfg)
    g = setup.graph
    ks = sorted(set(cfg.ensemble.record_ks))
    xstar = setup.model.optimum().reshape(-1)
    xnorm = float(np.linalg.norm(xstar))
    sigma2 = cfg.ensemble.sigma_z2
    scheme = cfg.pdmm.scheme
    summary = Table("summary", ["scheme", "theta", "k", "rounds", "x_err_mean", "x_err_max", "x_err_rel",
                                "var_psi_mean", "var_psi_perp_mean", "bound_mean"])
    stats = Table("stats", STATS_HEADER)
    labels = _slot_labels(setup)
    ok = True
    notes = _vacuity_notes(setup)
    data = {}
    for theta in cfg.pdmm.thetas:
        res = _ensemble(cfg, setup, theta, scheme, ks, sigma2)
        bound = bound_curve(setup.sp, setup.cs.P, sigma2, theta, res.mu, ks)
        rep = verify_bound(res.stats, bound, cfg.ensemble.slack)
        ok &= rep.passed or rep.vacuous
        notes.append(f"fig1 theta={theta}: {rep.summary()}")
        xerr = np.linalg.norm(res.x - xstar, axis=-1)
        for a, k in enumerate(ks):
            summary.rows.append([scheme, theta, k, k / g.n if scheme == "async" else float(k),
                                 xerr[:, a].mean(), xerr[:, a].max(),
                                 xerr[:, a].mean() / xnorm if xnorm > 0 else math.inf,
                                 res.stats.var_psi[a].mean(), res.stats.var_perp[a].mean(),
                                 bound.values[a].mean()])
        stats.rows += _stats_rows(scheme, theta, res, bound, rep, labels)
        data[theta] = dict(x_err=xerr, var_psi=res.stats.var_psi.mean(axis=1),
                           var_perp=res.stats.var_perp.mean(axis=1), bound=bound.values.mean(axis=1),
                           report=rep, x_norm=xnorm)
    meta = [("sigma_z2", sigma2), ("runs", cfg.ensemble.runs), ("n", g.n), ("m", g.m)] + _projector_meta(setup)
    summary.meta = stats.meta = meta
    return Outcome([summary, stats], ok, notes, data)


def cmd_fig2(cfg: ExperimentConfig) -> Outcome:
    """Complement-subspace variance of synchronous and asynchronous runs at matched rounds."""
    setup = build_setup(cfg)
    g = setup.graph
    rounds = sorted(set(cfg.ensemble.rounds))
    sigma2 = cfg.ensemble.sigma_z2
    curves = Table("variance", ["scheme", "theta", "iteration", "activations", "rounds",
                                "var_psi_perp_mean", "var_psi_mean", "bound_mean"])
    stats = Table("stats", STATS_HEADER)
    labels = _slot_labels(setup)
    ok = True
    notes = _vacuity_notes(setup)
    data = {}
    for theta in cfg.pdmm.thetas:
        for scheme in ("sync", "async"):
            per_round = g.n if scheme == "async" else 1
            ks = [r * per_round for r in rounds]
            res = _ensemble(cfg, setup, theta, scheme, ks, sigma2)
            bound = bound_curve(setup.sp, setup.cs.P, sigma2, theta, res.mu, ks)
            rep = verify_bound(res.stats, bound, cfg.ensemble.slack)
            ok &= rep.passed or rep.vacuous
            notes.append(f"fig2 {scheme} theta={theta}: {rep.summary()}")
            for a, (k, r) in enumerate(zip(ks, rounds)):
                acts = k if scheme == "async" else k * g.n
                curves.rows.append([scheme, theta, k, acts, r, res.stats.var_perp[a].mean(),
                                    res.stats.var_psi[a].mean(), bound.values[a].mean()])
            stats.rows += _stats_rows(scheme, theta, res, bound, rep, labels)
            data[scheme, theta] = dict(rounds=np.array(rounds), var_perp=res.stats.var_perp.mean(axis=1),
                                       bound=bound.values.mean(axis=1), report=rep)
    meta = [("sigma_z2", sigma2), ("runs", cfg.ensemble.runs), ("n", g.n), ("m", g.m)] + _projector_meta(setup)
    curves.meta = stats.meta = meta
    return Outcome([curves, stats], ok, notes, data)


def _fraction(a, b):
    return float(np.mean(np.asarray(a) <= np.asarray(b)))


def cmd_fig3(cfg: ExperimentConfig) -> Outcome:
    """Leakage about one node's private value through a single honest neighbour."""
    setup = build_setup(cfg)
    g, cs = setup.graph, setup.cs
    mi = cfg.mi
    if cfg.model.kind != "consensus":
        raise ConfigError("fig3 needs model.kind = 'consensus'")
    if not 0 <= mi.target < g.n:
        raise ConfigError(f"mi.target {mi.target} is not a node of the graph")
    if not g.neighbors[mi.target]:
        raise ConfigError(f"mi.target {mi.target} has no neighbours")
    honest = g.neighbors[mi.target][0] if mi.honest is None else mi.honest
    if honest not in g.neighbors[mi.target]:
        raise ConfigError(f"mi.honest {honest} is not a neighbour of node {mi.target}")
    R, d = mi.runs, cs.d
    s = np.stack([derive_rng(cfg.seed, "mi-data", r).standard_normal((g.n, d)) for r in range(R)])
    model = ConsensusCost(s)
    unit_z0 = draw_z0(derive_seed(cfg.seed, "mi-init"), R, (2 * g.m, d), 1.0)
    rounds = sorted(set(mi.rounds))
    table = Table("mi", ["k", "round", "sigma_z2", "scheme", "theta", "rho2", "mi_nats"])
    curves = {}
    for sigma2 in mi.sigma_z2:
        for scheme in ("sync", "async"):
            per_round = g.n if scheme == "async" else 1
            ks = [r * per_round for r in rounds]
            res = _ensemble(cfg, setup, mi.theta, scheme, ks, sigma2, model=model,
                            z0=unit_z0 * math.sqrt(sigma2), label="mi-ensemble")
            zs = res.snapshots.reshape(R, len(ks), 2 * g.m, d)
            rho2 = []
            for a, (k, r) in enumerate(zip(ks, rounds)):
                y = adversary_observation(zs[:, a], model, cs, mi.target, [honest], cfg.pdmm.c)
                est = estimate_mi(s[:, mi.target, 0], y[:, 0])
                rho2.append(est.normalized)
                table.rows.append([k, r, sigma2, scheme, mi.theta, est.normalized, est.mi_nats])
            curves[scheme, sigma2] = np.array(rho2)
    notes = []
    sig = sorted(mi.sigma_z2)
    for scheme in ("sync", "async"):
        for lo, hi in zip(sig[:-1], sig[1:]):
            frac = _fraction(curves[scheme, hi], curves[scheme, lo])
            table.meta.append((f"fraction_mi_{scheme}_sigma{hi}_le_sigma{lo}", frac))
    for sigma2 in sig:
        frac = _fraction(curves["async", sigma2], curves["sync", sigma2])
        table.meta.append((f"fraction_mi_async_le_sync_sigma{sigma2}", frac))
    table.meta = [("target", mi.target), ("honest_neighbour", honest), ("runs", R), ("n", g.n),
                  ("mi_component", 0)] + table.meta
    notes += [f"fig3 {k}: {v}" for k, v in table.meta if str(k).startswith("fraction")]
    return Outcome([table], True, notes, dict(curves=curves, rounds=np.array(rounds)))


def cmd_bound(cfg: ExperimentConfig) -> Outcome:
    """Closed-form variance lower bound per entry and k."""
    setup = build_setup(cfg)
    b = cfg.bound
    mu = 1.0 / setup.graph.n if b.mu is None else b.mu
    ks = sorted(set(b.ks))
    curve = bound_curve(setup.sp, setup.cs.P, b.sigma2, b.theta, mu, ks)
    table = Table("bound", ["k", "entry_slot", "holder", "peer", "component", "bound"])
    for a, k in enumerate(ks):
        for e, (h, p, comp) in enumerate(_slot_labels(setup)):
            table.rows.append([k, e, h, p, comp, curve.values[a, e]])
    table.meta = [("sigma2", b.sigma2), ("theta", b.theta), ("mu", mu), ("n", setup.graph.n),
                  ("m", setup.graph.m)] + _projector_meta(setup)
    notes = _vacuity_notes(setup)
    if notes:
        table.meta.append(("warning", VACUOUS_MESSAGE))
    return Outcome([table], True, notes, dict(curve=curve, projector=setup.sp))


def cmd_run(cfg: ExperimentConfig) -> Outcome:
    """One PDMM run with its trajectory and the message transcript."""
    setup = build_setup(cfg)
    g, cs, model = setup.graph, setup.cs, setup.model
    K = cfg.run.iterations
    pcfg = PdmmConfig(c=cfg.pdmm.c, theta=cfg.pdmm.theta, scheme=cfg.pdmm.scheme, iterations=K)
    schedule = make_schedule(g, pcfg.scheme, K, seed=derive_rng(cfg.seed, "run-schedule"))
    z0 = draw_z0(derive_seed(cfg.seed, "run-init"), 1, (2 * g.m, cs.d), cfg.run.sigma_z2)[0]
    traj, tr = run(model, g, pcfg, schedule, initial_state(model, cs, z0, pcfg.c), cs)
    xstar = model.optimum()
    trajectory = Table("trajectory", ["k", "node", "component", "x", "x_err"])
    for st in traj:
        for i in range(g.n):
            for comp in range(cs.d):
                trajectory.rows.append([st.k, i, comp, st.x[i, comp], abs(st.x[i, comp] - xstar[i, comp])])
    init = Table("init", ["holder", "peer", "component", "value", "secure"])
    for slot, (h, p) in enumerate(g.slot_pairs()):
        for comp in range(cs.d):
            init.rows.append([h, p, comp, tr.secure_init[slot, comp], 1])
    header = ["k", "holder", "peer", "delta_value"] + (["component"] if cs.d > 1 else [])
    messages = Table("messages", header)
    pairs = g.slot_pairs()
    for k, slot, delta in zip(tr.msg_k, tr.msg_slot, tr.msg_delta):
        h, p = pairs[slot]
        for comp in range(cs.d):
            messages.rows.append([k, h, p, delta[comp]] + ([comp] if cs.d > 1 else []))
    replay_ok = bool(np.array_equal(tr.replay(), traj[-1].z))
    final_err = float(np.max(np.abs(traj[-1].x - xstar)))
    meta = [("scheme", pcfg.scheme.value), ("theta", pcfg.theta), ("c", pcfg.c), ("iterations", K),
            ("mu", schedule.mu), ("final_max_abs_x_err", final_err), ("replay_exact", int(replay_ok))]
    for t in (trajectory, init, messages):
        t.meta = list(meta)
    notes = [f"run: final max |x - x*| = {final_err:.3e}, transcript replay exact: {replay_ok}"]
    return Outcome([trajectory, init, messages], replay_ok, notes, dict(trajectory=traj, transcript=tr))


COMMANDS = {
    "fig1": cmd_fig1,
    "fig2": cmd_fig2,
    "fig3": cmd_fig3,
    "bound": cmd_bound,
    "run": cmd_run,
}
