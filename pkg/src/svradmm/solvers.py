"""ADMM-type stochastic solvers for linearly constrained finite sums.

Three drivers share one set of building blocks:

``run_asvrg_admm``
    Variance-reduced double loop (epochs of ``m`` inner steps).  Each epoch
    refreshes a snapshot and its full gradient; inner steps update the
    regularized block ``y`` by prox, take a linearized step in the auxiliary
    primal ``z``, then form ``x`` as a convex combination of ``z`` and the
    snapshot (momentum weight ``theta``), and finally update the multiplier
    from the ``z`` residual.

``run_svrg_admm``
    The same loop without the momentum combination: ``x`` follows ``z``.

``run_sadmm``
    Single-loop stochastic ADMM.  The ``x`` block solves its proximal
    subproblem exactly; the proximal weight either stays fixed or follows a
    square-root schedule in the step counter.  The multiplier update uses
    ``x`` itself (there is no auxiliary ``z``).

All drivers draw component indices from the counter-based stream in
:mod:`svradmm.gradients`, so two drivers given the same seed sample the same
component sequence.  A run ends early with status ``"diverged"`` when an
iterate norm passes ``DIVERGENCE_LIMIT``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .gradients import index_stream, svrg_gradient, take_snapshot
from .linalg import solve_spd
from .problems import ConstrainedProblem, full_objective

__all__ = [
    "DIVERGENCE_LIMIT",
    "GAMMA_SLACK",
    "SolverConfig",
    "IterateState",
    "TraceRecord",
    "SolveResult",
    "auto_gamma",
    "q_matrix",
    "y_update",
    "z_update_linearized",
    "z_update_exact",
    "momentum_update",
    "dual_update",
    "theta_schedule",
    "rho_schedule",
    "RhoSchedule",
    "run_asvrg_admm",
    "run_svrg_admm",
    "run_sadmm",
    "solve",
]

#: A run stops with status "diverged" once ||x|| or ||lambda|| passes this.
DIVERGENCE_LIMIT = 1e12
#: Additive slack on the automatic gamma so Q stays strictly above I.
GAMMA_SLACK = 1e-9

ALGORITHMS = ("asvrg", "svrg", "sadmm", "sadmm_f")


@dataclass
class SolverConfig:
    """Knobs shared by every driver.

    eta_mode "decaying" applies only to the single-loop driver; its divisor
    argument is ``eta * sqrt(t + 2)`` when ``eta_direction == "grow"`` (the
    default) and ``eta / sqrt(t + 2)`` when "shrink" -- the two published
    readings of the square-root schedule, both exposed.  "optimal" modes must
    be resolved to concrete numbers (see ``bench.resolve_solver_config``)
    before a driver sees the config.
    """

    algorithm: str = "asvrg"
    eta: float = 1.0
    eta_mode: str = "fixed"          # fixed | decaying | optimal
    eta_direction: str = "grow"      # grow | shrink (decaying mode only)
    theta: float = 0.9
    theta_mode: str = "fixed"        # fixed | nesterov | optimal
    rho: float = 1.0
    rho_mode: str = "fixed"          # fixed | adaptive
    rho_kappa: float = 2.0
    gamma: float | None = None       # None => automatic from the Q > I bound
    m: int = 50
    epochs: int = 10
    q_mode: str = "identity"         # identity | uzawa
    seed: int = 0
    lambda_hist: bool = False        # record per-step potential via psi hook
    keep_iterates: bool = False      # store full iterate histories

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.eta_mode not in ("fixed", "decaying", "optimal"):
            raise ValueError(f"unknown eta_mode {self.eta_mode!r}")
        if self.eta_direction not in ("grow", "shrink"):
            raise ValueError(f"unknown eta_direction {self.eta_direction!r}")
        if self.theta_mode not in ("fixed", "nesterov", "optimal"):
            raise ValueError(f"unknown theta_mode {self.theta_mode!r}")
        if self.rho_mode not in ("fixed", "adaptive"):
            raise ValueError(f"unknown rho_mode {self.rho_mode!r}")
        if self.q_mode not in ("identity", "uzawa"):
            raise ValueError(f"unknown q_mode {self.q_mode!r}")
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.theta_mode == "fixed" and not (0.0 < self.theta <= 1.0):
            raise ValueError("theta must lie in (0, 1]")
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        if self.rho_mode == "adaptive" and self.rho_kappa <= 1.0:
            raise ValueError("adaptive rho needs kappa > 1")
        if self.gamma is not None and self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.m < 1 or self.epochs < 1:
            raise ValueError("m and epochs must be at least 1")
        if self.eta_mode == "decaying" and self.algorithm not in ("sadmm", "sadmm_f"):
            raise ValueError("decaying eta applies to the single-loop driver only")


@dataclass
class IterateState:
    """Live variables of a run. ``x_tilde`` is the snapshot active in epoch s."""

    x: np.ndarray
    z: np.ndarray
    y: np.ndarray
    lam: np.ndarray
    x_tilde: np.ndarray
    s: int
    t: int


@dataclass(slots=True)
class TraceRecord:
    run_id: int
    epoch: int
    inner: int
    objective: float
    al_value: float
    constraint_residual: float
    variance_estimate: float
    psi: float | None
    theta_used: float
    rho_used: float
    elapsed_ns: int


@dataclass
class SolveResult:
    final: IterateState
    trace: list
    status: str                      # "completed" | "diverged"
    x_tilde_hist: np.ndarray         # (epochs_completed + 1, d1)
    x_hist: np.ndarray | None = None
    z_hist: np.ndarray | None = None
    y_hist: np.ndarray | None = None
    lam_hist: np.ndarray | None = None

    @property
    def diverged(self) -> bool:
        return self.status == "diverged"


# ---------------------------------------------------------------------- #
# building blocks
# ---------------------------------------------------------------------- #


def auto_gamma(eta: float, rho: float, theta: float, op_norm_gram: float) -> float:
    """gamma = 1 + eta * rho * ||A^T A|| / theta + slack, so Q > I holds."""
    return 1.0 + eta * rho * op_norm_gram / theta + GAMMA_SLACK


def q_matrix(p: ConstrainedProblem, eta: float, rho: float, theta: float,
             gamma: float, q_mode: str) -> np.ndarray:
    """Dense proximal metric: identity, or gamma*I - (eta*rho/theta) A^T A."""
    if q_mode == "identity":
        return np.eye(p.d1)
    if q_mode == "uzawa":
        return gamma * np.eye(p.d1) - (eta * rho / theta) * p.A.gram()
    raise ValueError(f"unknown q_mode {q_mode!r}")


def y_update(p: ConstrainedProblem, x: np.ndarray, lam: np.ndarray,
             rho: float) -> np.ndarray:
    """argmin_y g(y) + (rho/2) ||A x + B y - c - lam / rho||^2.

    Closed form whenever B^T B is a positive multiple of the identity (the
    benchmark constraints use B = -I).  A zero regularizer with general B
    goes through a ridge-stabilized normal-equation solve; an L1 regularizer
    with general B has no closed form here and raises.
    """
    r = p.c + lam / rho - p.A.mat_vec(x)
    nu = p.bt_b_scale()
    if nu is not None:
        target = p.B.rmat_vec(r) / nu
        return p.reg.prox(target, 1.0 / (rho * nu))
    from .problems import ZeroRegularizer

    if isinstance(p.reg, ZeroRegularizer):
        G = p.B.gram()
        ridge = 1e-12 * max(1.0, float(np.abs(G).max()))
        return solve_spd(G + ridge * np.eye(p.d2), p.B.rmat_vec(r))
    raise NotImplementedError(
        "no closed-form y-update for an L1 regularizer with general B; "
        "restate the constraint with B = -I"
    )


def z_update_linearized(p: ConstrainedProblem, ghat: np.ndarray, z: np.ndarray,
                        y_next: np.ndarray, lam: np.ndarray, rho: float,
                        eta: float, gamma: float, theta: float) -> np.ndarray:
    """z - (eta / (gamma * theta)) * (ghat + rho A^T (A z + B y - c - lam/rho))."""
    r = p.residual(z, y_next)
    step = ghat + p.A.rmat_vec(rho * r - lam)
    return z - (eta / (gamma * theta)) * step


def z_update_exact(p: ConstrainedProblem, ghat: np.ndarray, z: np.ndarray,
                   y_next: np.ndarray, lam: np.ndarray, rho: float,
                   eta: float, theta: float, Q: np.ndarray) -> np.ndarray:
    """Exact proximal step in z (reference path for the linearized update).

    Solves ((theta/eta) Q + rho A^T A) z+ = (theta/eta) Q z - ghat
                                            + A^T (rho (c - B y) + lam).
    """
    coeff = theta / eta
    M = coeff * Q + rho * p.A.gram()
    rhs = coeff * (Q @ z) - ghat + p.A.rmat_vec(rho * (p.c - p.B.mat_vec(y_next)) + lam)
    return solve_spd(M, rhs)


def momentum_update(z_next: np.ndarray, x_tilde: np.ndarray, theta: float) -> np.ndarray:
    """x = theta * z + (1 - theta) * snapshot."""
    return theta * z_next + (1.0 - theta) * x_tilde


def dual_update(p: ConstrainedProblem, primal_next: np.ndarray, y_next: np.ndarray,
                lam: np.ndarray, rho: float) -> np.ndarray:
    """lam - rho * (A primal + B y - c)."""
    return lam - rho * p.residual(primal_next, y_next)


def theta_schedule(mode: str, s: int, theta0: float) -> float:
    """Momentum weight for epoch ``s`` (0-based).

    "fixed" returns ``theta0`` as is; "nesterov" returns 2/(s+2); "optimal"
    also returns ``theta0``, which the caller must already have resolved to
    the closed-form value (the theory layer computes it, the benchmark layer
    passes it down).
    """
    if mode in ("fixed", "optimal"):
        return theta0
    if mode == "nesterov":
        return min(1.0, 2.0 / (s + 2.0))
    raise ValueError(f"unknown theta_mode {mode!r}")


def rho_schedule(mode: str, t: int, theory=None, rho0: float = 1.0,
                 kappa: float = 2.0) -> float:
    """Penalty at global step ``t``: fixed, or geometric growth with freeze.

    Adaptive mode follows rho_{j+1} = kappa * rho_j until the penalty lower
    bound evaluated at the current value is strictly exceeded, then stays
    frozen there.  ``theory`` supplies the bound's inputs; its ``l1`` tracks
    the candidate penalty the same way the default construction ties l1 to
    rho.  Drivers use the incremental :class:`RhoSchedule` below; this
    closed form exists for inspection and tests.
    """
    if mode == "fixed":
        return float(rho0)
    if mode != "adaptive":
        raise ValueError(f"unknown rho mode {mode!r}")
    if kappa <= 1.0:
        raise ValueError("adaptive rho needs kappa > 1")
    if theory is None:
        raise ValueError("adaptive rho needs theory parameters for the bound")
    from .theory import rho_lower_bound

    rho = float(rho0)
    for _ in range(t):
        probe = _retie_rho(theory, rho)
        if rho > rho_lower_bound(probe).value:
            break
        rho *= kappa
    return rho


def _retie_rho(tp, rho: float):
    """Copy TheoryParams at a new penalty, re-tying l1 = rho when defaulted."""
    from dataclasses import replace

    l1 = None if tp.l1 == tp.rho else tp.l1
    return replace(tp, rho=rho, l1=l1)


class RhoSchedule:
    """Fixed penalty, or geometric growth frozen once a lower bound is met.

    Adaptive mode multiplies by ``kappa`` after each step until the supplied
    ``bound_fn(rho)`` (lower-bound value evaluated at the current rho) is
    strictly exceeded, then stays frozen.
    """

    def __init__(self, mode: str, rho0: float, kappa: float = 2.0, bound_fn=None):
        if mode not in ("fixed", "adaptive"):
            raise ValueError(f"unknown rho mode {mode!r}")
        if mode == "adaptive" and bound_fn is None:
            raise ValueError("adaptive rho needs a lower-bound callback")
        self.mode = mode
        self.current = float(rho0)
        self.kappa = float(kappa)
        self.bound_fn = bound_fn
        self.frozen = mode == "fixed"

    def advance(self):
        """Move to the next step's penalty; call after each inner step."""
        if self.frozen:
            return self.current
        if self.current > self.bound_fn(self.current):
            self.frozen = True
        else:
            self.current *= self.kappa
        return self.current


# ---------------------------------------------------------------------- #
# shared trace helper
# ---------------------------------------------------------------------- #


class _Recorder:
    def __init__(self, p, cfg, run_id):
        self.p = p
        self.cfg = cfg
        self.run_id = run_id
        self.trace = []
        self.t0 = time.perf_counter_ns()

    def emit(self, epoch, inner, x, y, lam, rho, theta, var_est, psi):
        p = self.p
        r = p.residual(x, y)
        obj = full_objective(p, x, y)
        al = obj - float(lam @ r) + 0.5 * rho * float(r @ r)
        self.trace.append(TraceRecord(
            run_id=self.run_id,
            epoch=epoch,
            inner=inner,
            objective=obj,
            al_value=al,
            constraint_residual=float(np.linalg.norm(r)),
            variance_estimate=var_est,
            psi=psi,
            theta_used=theta,
            rho_used=rho,
            elapsed_ns=time.perf_counter_ns() - self.t0,
        ))


def _blown_up(*vecs) -> bool:
    for v in vecs:
        if not np.all(np.isfinite(v)) or np.linalg.norm(v) > DIVERGENCE_LIMIT:
            return True
    return False


def _init_vectors(p: ConstrainedProblem, init):
    """Starting (x, y, lam): zeros, a bare x vector, or a full IterateState."""
    if init is None:
        return np.zeros(p.d1), np.zeros(p.d2), np.zeros(p.d)
    if isinstance(init, IterateState):
        x = np.array(init.x, dtype=np.float64, copy=True)
        y = np.array(init.y, dtype=np.float64, copy=True)
        lam = np.array(init.lam, dtype=np.float64, copy=True)
    else:
        x = np.array(init, dtype=np.float64, copy=True)
        y, lam = np.zeros(p.d2), np.zeros(p.d)
    if x.shape != (p.d1,) or y.shape != (p.d2,) or lam.shape != (p.d,):
        raise ValueError("initial iterate dimensions do not match the problem")
    return x, y, lam


# ---------------------------------------------------------------------- #
# variance-reduced drivers
# ---------------------------------------------------------------------- #


def _run_vr(p: ConstrainedProblem, cfg: SolverConfig, use_momentum: bool,
            init=None, psi_hook=None, rho_bound=None, run_id: int = 0) -> SolveResult:
    if cfg.eta_mode != "fixed":
        raise ValueError("variance-reduced drivers need a fixed eta; resolve first")
    if cfg.theta_mode == "optimal":
        raise ValueError("theta_mode='optimal' must be resolved before running")
    m, S = cfg.m, cfg.epochs
    eta = cfg.eta
    op_norm = p.coupling_spectrum().op_norm_gram
    rho_sched = RhoSchedule(cfg.rho_mode, cfg.rho, cfg.rho_kappa, rho_bound)

    x, y, lam = _init_vectors(p, init)
    z = x.copy()
    x_tilde = x.copy()
    rec = _Recorder(p, cfg, run_id)
    keep = cfg.keep_iterates
    x_hist = [x.copy()] if keep else None
    z_hist = [z.copy()] if keep else None
    y_hist = [y.copy()] if keep else None
    lam_hist = [lam.copy()] if keep else None
    tilde_hist = [x_tilde.copy()]

    theta_first = theta_schedule(cfg.theta_mode, 0, cfg.theta) if use_momentum else 1.0
    rec.emit(0, 0, x, y, lam, rho_sched.current, theta_first, 0.0, None)

    status = "completed"
    want_psi = cfg.lambda_hist and psi_hook is not None
    for s in range(S):
        theta_s = theta_schedule(cfg.theta_mode, s, cfg.theta) if use_momentum else 1.0
        snap = take_snapshot(p, x_tilde)
        idx = index_stream(cfg.seed, s, p.n, m) if p.n else None
        # Epoch start: x equals the fresh snapshot, and the momentum identity
        # x = theta z + (1-theta) x_tilde at t=0 then forces z = x.
        z = x.copy()
        for t in range(m):
            rho = rho_sched.current
            gamma = cfg.gamma if cfg.gamma is not None else auto_gamma(eta, rho, theta_s, op_norm)
            if p.n:
                ghat = svrg_gradient(p, x, idx[t], snap)
            else:
                ghat = np.zeros(p.d1)
            y_next = y_update(p, x, lam, rho)
            z_next = z_update_linearized(p, ghat, z, y_next, lam, rho, eta, gamma, theta_s)
            if use_momentum:
                x_next = momentum_update(z_next, x_tilde, theta_s)
            else:
                x_next = z_next.copy()
            lam_next = dual_update(p, z_next, y_next, lam, rho)
            if _blown_up(x_next, lam_next):
                status = "diverged"
                break
            gfull_here = p.full_grad(x)
            dvar = ghat - gfull_here
            var_est = float(dvar @ dvar)
            psi = None
            if want_psi:
                prev_state = IterateState(x, z, y, lam, snap.x_tilde, s + 1, t)
                cur_state = IterateState(x_next, z_next, y_next, lam_next,
                                         snap.x_tilde, s + 1, t + 1)
                psi = float(psi_hook(prev_state, cur_state))
            x, z, y, lam = x_next, z_next, y_next, lam_next
            rec.emit(s + 1, t + 1, x, y, lam, rho, theta_s, var_est, psi)
            if keep:
                x_hist.append(x.copy())
                z_hist.append(z.copy())
                y_hist.append(y.copy())
                lam_hist.append(lam.copy())
            rho_sched.advance()
        if status == "diverged":
            break
        x_tilde = x.copy()
        tilde_hist.append(x_tilde.copy())

    final = IterateState(x, z, y, lam, x_tilde, len(tilde_hist) - 1,
                         m if status == "completed" else -1)
    return SolveResult(
        final=final,
        trace=rec.trace,
        status=status,
        x_tilde_hist=np.array(tilde_hist),
        x_hist=np.array(x_hist) if keep else None,
        z_hist=np.array(z_hist) if keep else None,
        y_hist=np.array(y_hist) if keep else None,
        lam_hist=np.array(lam_hist) if keep else None,
    )


def run_asvrg_admm(p: ConstrainedProblem, cfg: SolverConfig, init=None,
                   psi_hook=None, rho_bound=None, run_id: int = 0) -> SolveResult:
    """Momentum-accelerated variance-reduced driver (see module docstring)."""
    return _run_vr(p, cfg, use_momentum=True, init=init, psi_hook=psi_hook,
                   rho_bound=rho_bound, run_id=run_id)


def run_svrg_admm(p: ConstrainedProblem, cfg: SolverConfig, init=None,
                  psi_hook=None, rho_bound=None, run_id: int = 0) -> SolveResult:
    """Variance-reduced driver without momentum: x follows z directly."""
    return _run_vr(p, cfg, use_momentum=False, init=init, psi_hook=psi_hook,
                   rho_bound=rho_bound, run_id=run_id)


# ---------------------------------------------------------------------- #
# single-loop stochastic ADMM
# ---------------------------------------------------------------------- #


def _sadmm_eta(cfg: SolverConfig, fixed_step: bool, t_global: int) -> float:
    if fixed_step:
        return cfg.eta
    root = np.sqrt(t_global + 2.0)
    return cfg.eta * root if cfg.eta_direction == "grow" else cfg.eta / root


class _ProxSolver:
    """Per-step solve of ((1/eta) I + rho A^T A) x = rhs.

    Small systems go through the guarded Cholesky solve each step; larger
    ones reuse a one-time eigendecomposition of A^T A (same result up to
    roundoff, checked in tests).
    """

    def __init__(self, p: ConstrainedProblem, direct_limit: int = 64):
        self.gram = p.A.gram()
        self.direct = p.d1 <= direct_limit
        if not self.direct:
            self.w, self.V = scipy.linalg.eigh(self.gram)

    def solve(self, inv_eta: float, rho: float, rhs: np.ndarray) -> np.ndarray:
        if self.direct:
            M = inv_eta * np.eye(len(rhs)) + rho * self.gram
            return solve_spd(M, rhs)
        return self.V @ ((self.V.T @ rhs) / (inv_eta + rho * self.w))


def run_sadmm(p: ConstrainedProblem, cfg: SolverConfig, init=None,
              fixed_step: bool = False, rho_bound=None, run_id: int = 0) -> SolveResult:
    """Single-loop stochastic ADMM; x-subproblem solved exactly each step.

    ``fixed_step`` freezes the proximal weight at ``cfg.eta``; otherwise the
    square-root schedule in the global step counter applies.  The epoch/inner
    trace layout mirrors the variance-reduced drivers so curves share an axis
    (an "epoch" is m consecutive steps); the index stream is keyed the same
    way too.
    """
    if cfg.q_mode != "identity":
        raise ValueError("the single-loop driver supports q_mode='identity' only")
    if cfg.theta_mode == "optimal":
        raise ValueError("theta_mode='optimal' must be resolved before running")
    m, S = cfg.m, cfg.epochs
    rho_sched = RhoSchedule(cfg.rho_mode, cfg.rho, cfg.rho_kappa, rho_bound)
    prox = _ProxSolver(p)

    x, y, lam = _init_vectors(p, init)
    rec = _Recorder(p, cfg, run_id)
    keep = cfg.keep_iterates
    x_hist = [x.copy()] if keep else None
    y_hist = [y.copy()] if keep else None
    lam_hist = [lam.copy()] if keep else None
    tilde_hist = [x.copy()]  # epoch-boundary iterates; no snapshots here

    rec.emit(0, 0, x, y, lam, rho_sched.current, 1.0, 0.0, None)

    status = "completed"
    t_global = 0
    for s in range(S):
        idx = index_stream(cfg.seed, s, p.n, m) if p.n else None
        for t in range(m):
            rho = rho_sched.current
            g = p.component_grad(int(idx[t]), x) if p.n else np.zeros(p.d1)
            y_next = y_update(p, x, lam, rho)
            eta_t = _sadmm_eta(cfg, fixed_step, t_global)
            inv_eta = 1.0 / eta_t
            rhs = inv_eta * x - g + p.A.rmat_vec(rho * (p.c - p.B.mat_vec(y_next)) + lam)
            x_next = prox.solve(inv_eta, rho, rhs)
            lam_next = dual_update(p, x_next, y_next, lam, rho)
            t_global += 1
            if _blown_up(x_next, lam_next):
                status = "diverged"
                break
            gfull_here = p.full_grad(x)
            dvar = g - gfull_here
            var_est = float(dvar @ dvar)
            x, y, lam = x_next, y_next, lam_next
            rec.emit(s + 1, t + 1, x, y, lam, rho, 1.0, var_est, None)
            if keep:
                x_hist.append(x.copy())
                y_hist.append(y.copy())
                lam_hist.append(lam.copy())
            rho_sched.advance()
        if status == "diverged":
            break
        tilde_hist.append(x.copy())

    final = IterateState(x, x.copy(), y, lam, x.copy(), len(tilde_hist) - 1,
                         m if status == "completed" else -1)
    return SolveResult(
        final=final,
        trace=rec.trace,
        status=status,
        x_tilde_hist=np.array(tilde_hist),
        x_hist=np.array(x_hist) if keep else None,
        z_hist=None,
        y_hist=np.array(y_hist) if keep else None,
        lam_hist=np.array(lam_hist) if keep else None,
    )


def solve(p: ConstrainedProblem, cfg: SolverConfig, **kwargs) -> SolveResult:
    """Dispatch on ``cfg.algorithm``."""
    if cfg.algorithm == "asvrg":
        return run_asvrg_admm(p, cfg, **kwargs)
    if cfg.algorithm == "svrg":
        return run_svrg_admm(p, cfg, **kwargs)
    kwargs.pop("psi_hook", None)
    return run_sadmm(p, cfg, fixed_step=cfg.algorithm == "sadmm_f", **kwargs)
