"""Nonlinear steady-state solver for a thermal node network.

The energy balance of each diffusion node i is

    R_i = Q_i + sum_j GL_ij(T) (T_j - T_i) + sigma sum_j GR_ij (T_j^4 - T_i^4)

and the solver drives max |R_i| below tolerance with a damped Newton
iteration on the analytic Jacobian, falling back to under-relaxed nonlinear
Gauss-Seidel if Newton diverges.  Results are bit-reproducible for fixed
inputs and options.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .network import ThermalNetwork, gl_from_geometry

SIGMA = 5.670374419e-8     # W m^-2 K^-4, Stefan-Boltzmann

T_FLOOR = 1e-3             # K, guards T^4 against wild Newton steps


class SolverError(RuntimeError):
    """Solver failure carrying the last iterate for diagnosis."""

    def __init__(self, message, temperatures=None, residual_history=None):
        super().__init__(message)
        self.temperatures = temperatures
        self.residual_history = residual_history


@dataclass
class SolveOptions:
    tolerance: float = 1e-9            # W, max |R_i|
    max_iterations: int = 200
    damping: float = 0.5               # initial Newton damping factor
    initial_guess: str = "boundary-mean"   # | "fixed:<K>" | "warm-start"
    warm_start: dict | None = None     # node id -> K, for "warm-start"

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not (0.0 < self.damping <= 1.0):
            raise ValueError("damping must be in (0, 1]")


@dataclass
class SolveResult:
    temperatures: dict                  # node id -> K (boundaries included)
    iterations: int
    residual_norm: float                # W, max |R_i| at the solution
    flux_balance: dict                  # diffusion node id -> residual W
    converged: bool
    residual_history: list = field(default_factory=list)


class _Assembled:
    """Index maps and coupling arrays for one network."""

    def __init__(self, net: ThermalNetwork):
        self.net = net
        self.ids = list(net.nodes)
        self.index = {nid: k for k, nid in enumerate(self.ids)}
        self.n = len(self.ids)
        self.diff_mask = np.array(
            [net.nodes[nid].kind == "diffusion" for nid in self.ids])
        self.diff_idx = np.nonzero(self.diff_mask)[0]
        self.Q = np.array([net.nodes[nid].dissipation if m else 0.0
                           for nid, m in zip(self.ids, self.diff_mask)])
        self.Tb = np.array([net.nodes[nid].boundary_temperature or 0.0
                            for nid in self.ids])
        self.GR = np.zeros((self.n, self.n))
        for ex in net.exchanges:
            i, j = self.index[ex.node_i], self.index[ex.node_j]
            self.GR[i, j] += ex.gr
            self.GR[j, i] += ex.gr
        self.cond = [(self.index[c.node_i], self.index[c.node_j], c)
                     for c in net.conductors]

    def gl_matrix(self, T):
        GL = np.zeros((self.n, self.n))
        for i, j, c in self.cond:
            g = gl_from_geometry(c, T[i], T[j])
            GL[i, j] += g
            GL[j, i] += g
        return GL

    def initial(self, opts: SolveOptions):
        T = self.Tb.copy()
        if opts.initial_guess == "boundary-mean":
            bmask = ~self.diff_mask
            guess = self.Tb[bmask].mean() if bmask.any() else 300.0
            T[self.diff_mask] = guess
        elif opts.initial_guess.startswith("fixed:"):
            T[self.diff_mask] = float(opts.initial_guess.split(":", 1)[1])
        elif opts.initial_guess == "warm-start":
            if not opts.warm_start:
                raise ValueError("warm-start guess requires warm_start temps")
            for k, nid in enumerate(self.ids):
                if self.diff_mask[k]:
                    T[k] = opts.warm_start[nid]
        else:
            raise ValueError(f"unknown initial guess {opts.initial_guess!r}")
        return np.maximum(T, T_FLOOR)


def _residual_vec(asm: _Assembled, T, GL=None):
    GL = asm.gl_matrix(T) if GL is None else GL
    T4 = T ** 4
    R = (asm.Q + GL @ T - T * GL.sum(axis=1)
         + SIGMA * (asm.GR @ T4 - T4 * asm.GR.sum(axis=1)))
    return R[asm.diff_idx]


def residual(net: ThermalNetwork, temperatures: dict) -> dict:
    """Per-node energy imbalance (W) at the given temperatures.

    Boundary nodes contribute to their neighbours but report no residual of
    their own.
    """
    asm = _Assembled(net)
    T = np.array([temperatures[nid] for nid in asm.ids], dtype=float)
    R = _residual_vec(asm, T)
    return {asm.ids[k]: float(r) for k, r in zip(asm.diff_idx, R)}


def _jacobian(asm: _Assembled, T, GL):
    """Analytic Jacobian over diffusion nodes.

    dR_i/dT_j = GL_ij + 4 sigma GR_ij T_j^3 off-diagonal; the diagonal is
    the negative sum over all neighbours at T_i.  Conductivity-derivative
    terms of temperature-dependent GL are deliberately neglected
    (quasi-Newton); the residual stays exact so converged answers are
    unaffected.
    """
    T3 = T ** 3
    J = GL + 4.0 * SIGMA * asm.GR * T3[None, :]
    diag = -(GL.sum(axis=1) + 4.0 * SIGMA * asm.GR.sum(axis=1) * T3)
    np.fill_diagonal(J, diag)
    return J[np.ix_(asm.diff_idx, asm.diff_idx)]


def jacobian_for_check(net: ThermalNetwork, temperatures: dict):
    """(analytic Jacobian, frozen-GL residual function) for verification.

    The returned residual function evaluates GL at the supplied base state
    regardless of its temperature argument, matching the quasi-Newton
    Jacobian, so a finite-difference comparison excludes the neglected
    conductivity-derivative terms from both sides.
    """
    asm = _Assembled(net)
    T0 = np.array([temperatures[nid] for nid in asm.ids], dtype=float)
    GL0 = asm.gl_matrix(T0)
    J = _jacobian(asm, T0, GL0)

    def frozen_residual(T_diff):
        T = T0.copy()
        T[asm.diff_idx] = T_diff
        return _residual_vec(asm, T, GL=GL0)

    return J, frozen_residual, T0[asm.diff_idx], asm


def _gauss_seidel(asm, T, opts, history):
    """Under-relaxed nonlinear Gauss-Seidel fallback.

    Each sweep solves the scalar balance of every diffusion node by a local
    Newton step with the neighbours frozen.
    """
    relax = 0.5
    for sweep in range(200 * max(opts.max_iterations, 1)):
        GL = asm.gl_matrix(T)
        for k in asm.diff_idx:
            gl_row = GL[k]
            gr_row = asm.GR[k]
            for _ in range(20):
                r = (asm.Q[k] + gl_row @ T - T[k] * gl_row.sum()
                     + SIGMA * (gr_row @ T ** 4 - T[k] ** 4 * gr_row.sum()))
                dr = -(gl_row.sum() + 4.0 * SIGMA * gr_row.sum() * T[k] ** 3)
                if dr == 0.0:
                    break
                step = -r / dr
                T[k] = max(T[k] + relax * step, T_FLOOR)
                if abs(step) < 1e-12 * max(T[k], 1.0):
                    break
        Rmax = float(np.abs(_residual_vec(asm, T)).max())
        history.append(Rmax)
        if Rmax < opts.tolerance:
            return T, sweep + 1
    return None, None


def solve_steady_state(net: ThermalNetwork,
                       opts: SolveOptions | None = None) -> SolveResult:
    """Solve the steady-state energy balance of the network."""
    opts = opts or SolveOptions()
    asm = _Assembled(net)
    if len(asm.diff_idx) == 0:
        raise SolverError("network has no diffusion nodes to solve")
    if not (~asm.diff_mask).any():
        raise SolverError("network has no boundary node; steady state "
                          "is undefined")

    T = asm.initial(opts)
    history = []
    damping = opts.damping
    R = _residual_vec(asm, T)
    Rmax = float(np.abs(R).max())
    history.append(Rmax)
    iterations = 0
    newton_failed = False

    while Rmax >= opts.tolerance and iterations < opts.max_iterations:
        GL = asm.gl_matrix(T)
        R = _residual_vec(asm, T, GL=GL)
        J = _jacobian(asm, T, GL)
        try:
            step = np.linalg.solve(J, -R)
        except np.linalg.LinAlgError:
            # identify the offending node for the error message
            bad = [asm.ids[asm.diff_idx[k]] for k in
                   np.nonzero(np.abs(J).sum(axis=1) == 0)[0]]
            if bad:
                raise SolverError(
                    f"singular Jacobian: isolated node(s) {bad}",
                    temperatures=_temps_dict(asm, T),
                    residual_history=history)
            newton_failed = True
            break
        if not np.all(np.isfinite(step)):
            newton_failed = True
            break
        T_new = T.copy()
        T_new[asm.diff_idx] = np.maximum(
            T[asm.diff_idx] + damping * step, T_FLOOR)
        R_new = _residual_vec(asm, T_new)
        Rmax_new = float(np.abs(R_new).max())
        if Rmax_new < Rmax:
            damping = min(2.0 * damping, 1.0)
            T = T_new
            Rmax = Rmax_new
        else:
            # reject the step and retry shorter
            damping *= 0.5
            if damping < 1e-8:
                newton_failed = True
                break
        history.append(Rmax)
        iterations += 1

    if Rmax >= opts.tolerance:
        if not newton_failed and iterations >= opts.max_iterations:
            newton_failed = True
        if newton_failed:
            T_gs, sweeps = _gauss_seidel(asm, T.copy(), opts, history)
            if T_gs is None:
                raise SolverError(
                    f"no convergence within budget (last max|R| = "
                    f"{history[-1]:.3e} W)",
                    temperatures=_temps_dict(asm, T),
                    residual_history=history)
            T = T_gs
            iterations += sweeps
            Rmax = float(np.abs(_residual_vec(asm, T)).max())

    R = _residual_vec(asm, T)
    return SolveResult(
        temperatures=_temps_dict(asm, T),
        iterations=iterations,
        residual_norm=float(np.abs(R).max()),
        flux_balance={asm.ids[k]: float(r)
                      for k, r in zip(asm.diff_idx, R)},
        converged=True,
        residual_history=history)


def _temps_dict(asm, T):
    return {nid: float(t) for nid, t in zip(asm.ids, T)}


def flux_report(net: ThermalNetwork, result: SolveResult) -> dict:
    """Net heat flow (W) from each boundary node into the network.

    The flows plus the total dissipation close to zero within the solver
    residual (energy bookkeeping identity).
    """
    asm = _Assembled(net)
    T = np.array([result.temperatures[nid] for nid in asm.ids])
    GL = asm.gl_matrix(T)
    T4 = T ** 4
    flows = {}
    for k, nid in enumerate(asm.ids):
        if asm.diff_mask[k]:
            continue
        flow = float((GL[k] * (T[k] - T)).sum()
                     + SIGMA * (asm.GR[k] * (T4[k] - T4)).sum())
        flows[nid] = flow
    return flows
