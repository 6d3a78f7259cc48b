"""Constants, potential energy, and guarantee checks for the momentum driver.

The convergence analysis behind :func:`svradmm.solvers.run_asvrg_admm` hangs
off a handful of scalar constants.  This module computes them from problem
quantities (smoothness ``L``, coupling spectrum ``sigma``, proximal-metric
spectrum ``phi``) and algorithm knobs (``eta``, ``theta``, ``rho``, epoch
length ``m``, plus free analysis parameters ``alpha1``, ``l1``, ``l2``):

* the six ``beta`` coefficients and the backward recursion ``h_t``,
* the per-step decrease margins ``Gamma_t`` (in two algebraically equal
  forms, kept separate so tests can cross-check them),
* the potential energy ``Psi`` whose expected decrease drives everything,
* the stated closed forms for step sizes that maximize the decrease margin,
  and a penalty lower bound,
* an end-to-end check of the O(1/T) bound on the squared-displacement
  residual, fed by recorded runs.

Solvers never import this module at load time; the benchmark layer wires the
two together (potential recording via :func:`make_psi_hook`, adaptive penalty
via :func:`rho_lower_bound`).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .problems import (
    ConstrainedProblem,
    L1Regularizer,
    ZeroRegularizer,
    augmented_lagrangian,
)
from .solvers import IterateState, SolveResult, SolverConfig, auto_gamma, q_matrix

__all__ = [
    "TheoryParams",
    "Betas",
    "ConstantLedger",
    "compute_betas",
    "h_sequence",
    "gamma_sequence",
    "build_ledger",
    "theta_margin",
    "eta_margin",
    "gamma_three_part",
    "optimal_theta",
    "optimal_eta",
    "RhoBound",
    "rho_lower_bound",
    "theory_params_for",
    "PotentialValue",
    "potential_energy",
    "make_psi_hook",
    "residual_R",
    "residual_chain",
    "Theorem1Report",
    "theorem1_check",
    "RateFit",
    "linear_rate_fit",
    "KKTResidual",
    "kkt_residual",
    "theory_report",
]


@dataclass(frozen=True)
class TheoryParams:
    """Inputs to the constant ledger.

    ``l1``, ``l2``, ``alpha1`` are free positive parameters of the analysis.
    Defaults: ``l1 = rho``, ``l2 = max(1, 1 - theta + 0.01)`` (keeping the
    required ``l2 >= 1 - theta`` with slack), ``alpha1 = 1``.
    """

    L: float
    sigma_max: float
    sigma_min: float
    phi_max: float
    phi_min: float
    rho: float
    eta: float
    theta: float
    m: int
    alpha1: float = 1.0
    l1: float | None = None
    l2: float | None = None

    def __post_init__(self):
        if not (0.0 < self.theta <= 1.0):
            raise ValueError("theta must lie in (0, 1]")
        if self.l1 is None:
            object.__setattr__(self, "l1", self.rho)
        if self.l2 is None:
            object.__setattr__(self, "l2", max(1.0, 1.0 - self.theta + 0.01))
        if self.sigma_min <= 0:
            raise ValueError("sigma_min must be positive (full row rank coupling)")
        if self.sigma_max < self.sigma_min:
            raise ValueError("sigma_max < sigma_min")
        if self.phi_min <= 0 or self.phi_max < self.phi_min:
            raise ValueError("proximal-metric spectrum must satisfy 0 < phi_min <= phi_max")
        if min(self.rho, self.eta, self.alpha1, self.l1) <= 0:
            raise ValueError("rho, eta, alpha1, l1 must be positive")
        if self.l2 < 1.0 - self.theta or self.l2 <= 0:
            raise ValueError("l2 must be positive and at least 1 - theta")
        if self.L < 0:
            raise ValueError("L must be nonnegative")
        if self.m < 1:
            raise ValueError("m must be at least 1")

    @property
    def rho_inverse_pair(self) -> float:
        """The recurring factor 1/rho + 1/(2 l1)."""
        return 1.0 / self.rho + 1.0 / (2.0 * self.l1)


class Betas(NamedTuple):
    b1: float
    b2: float
    b3: float
    b4: float
    b5: float
    b6: float


def compute_betas(tp: TheoryParams) -> Betas:
    """The six scalar coefficients of the decrease analysis."""
    ratio = (1.0 - tp.theta) / tp.theta
    pair = tp.rho_inverse_pair
    b1 = 0.5 * (tp.rho + tp.l1) * ratio**2 * tp.sigma_max
    b2 = (tp.phi_min / tp.eta - 0.5 * tp.L
          - 5.0 * tp.phi_max**2 / (tp.sigma_min * tp.eta**2) * pair
          + tp.rho * tp.sigma_min * (tp.l2 - (1.0 - tp.theta)) / (2.0 * tp.theta**2 * tp.l2))
    b3 = (-0.5 * tp.rho * tp.sigma_min * (ratio**2 - (1.0 - tp.theta) * tp.l2 / tp.theta**2)
          + pair * 5.0 * tp.L**2 / tp.sigma_min)
    b4 = pair * 5.0 * tp.L**2 / tp.sigma_min
    b5 = pair * (5.0 * tp.L**2 * tp.eta**2 + 5.0 * tp.phi_max**2) / (tp.sigma_min * tp.eta**2)
    b6 = (tp.phi_min / tp.eta - 0.5 * tp.L
          - pair * 5.0 * tp.phi_max**2 / (tp.sigma_min * tp.eta**2)
          + tp.sigma_min * tp.rho / (2.0 * tp.theta**2)
          - tp.sigma_max * 0.5 * (tp.rho + tp.l1) * ratio**2)
    return Betas(b1, b2, b3, b4, b5, b6)


def h_sequence(tp: TheoryParams, betas: Betas | None = None) -> np.ndarray:
    """Backward recursion ``h_t``, 1-based: entry 0 is NaN and unused.

    h_m = (5 L^2 / sigma_min)(2/rho + 1/(2 l1)); going backward,
    h_t = (2 + alpha1) h_{t+1} + [beta3 + (1 + alpha1) beta1].
    """
    if betas is None:
        betas = compute_betas(tp)
    h = np.full(tp.m + 1, np.nan)
    h[tp.m] = (5.0 * tp.L**2 / tp.sigma_min) * (2.0 / tp.rho + 1.0 / (2.0 * tp.l1))
    bump = betas.b3 + (1.0 + tp.alpha1) * betas.b1
    for t in range(tp.m - 1, 0, -1):
        h[t] = (2.0 + tp.alpha1) * h[t + 1] + bump
    return h


def gamma_sequence(tp: TheoryParams, betas: Betas | None = None,
                   h: np.ndarray | None = None) -> np.ndarray:
    """Per-step decrease margins ``Gamma_t``, 1-based: entry 0 is NaN.

    Gamma_t = beta2 - beta5 - (h_{t+1} + beta1)(1 + 1/alpha1) for t < m and
    Gamma_m = beta6 - beta5 - h_1.
    """
    if betas is None:
        betas = compute_betas(tp)
    if h is None:
        h = h_sequence(tp, betas)
    gam = np.full(tp.m + 1, np.nan)
    lever = 1.0 + 1.0 / tp.alpha1
    for t in range(1, tp.m):
        gam[t] = betas.b2 - betas.b5 - (h[t + 1] + betas.b1) * lever
    gam[tp.m] = betas.b6 - betas.b5 - h[1]
    return gam


@dataclass(frozen=True)
class ConstantLedger:
    """Everything the decrease analysis needs, computed once."""

    params: TheoryParams
    betas: Betas
    h: np.ndarray
    gammas: np.ndarray
    omega: float
    tau: float

    @property
    def gamma_min(self) -> float:
        return float(np.nanmin(self.gammas))

    @property
    def gammas_positive(self) -> bool:
        return bool(np.all(self.gammas[1:] > 0.0))

    @property
    def decrease_holds(self) -> bool:
        """True when every margin is positive, so the potential must fall."""
        return self.gammas_positive and self.tau > 0.0


def build_ledger(tp: TheoryParams) -> ConstantLedger:
    betas = compute_betas(tp)
    h = h_sequence(tp, betas)
    gammas = gamma_sequence(tp, betas, h)
    omega = 5.0 * tp.L**2 / (tp.sigma_min * tp.rho)
    tau = min(float(np.nanmin(gammas)), omega)
    return ConstantLedger(tp, betas, h, gammas, omega, tau)


# ---------------------------------------------------------------------- #
# margins as functions of one knob, and the stated maximizers
# ---------------------------------------------------------------------- #


def theta_margin(tp: TheoryParams, theta: float | None = None) -> float:
    """F(theta): the momentum-dependent part of the decrease margin."""
    th = tp.theta if theta is None else theta
    ratio = (1.0 - th) / th
    return (tp.rho * tp.sigma_min * (tp.l2 - (1.0 - th)) / (2.0 * th**2 * tp.l2)
            - 0.5 * (tp.rho + tp.l1) * ratio**2 * tp.sigma_max * (1.0 + 1.0 / tp.alpha1))


def eta_margin(tp: TheoryParams, eta: float | None = None) -> float:
    """H(eta): the step-size-dependent part of the decrease margin."""
    e = tp.eta if eta is None else eta
    return (tp.phi_min / e
            - 10.0 * tp.phi_max**2 / (tp.sigma_min * e**2) * tp.rho_inverse_pair)


def gamma_three_part(tp: TheoryParams, h_next: float) -> float:
    """Gamma_t for t < m written as F(theta) + H(eta) + remainder.

    Algebraically identical to the beta form in :func:`gamma_sequence`;
    kept as an independent expression for cross-checking.
    """
    return (theta_margin(tp) + eta_margin(tp) - 0.5 * tp.L
            - tp.rho_inverse_pair * 5.0 * tp.L**2 / tp.sigma_min
            - h_next * (1.0 + 1.0 / tp.alpha1))


def optimal_theta(tp: TheoryParams) -> tuple[float, bool]:
    """Stated closed form for the momentum weight maximizing F.

    Returns ``(value, clamped)``; the raw ratio is clamped into (0, 1] and
    the flag records whether clamping fired.  Tests probe this formula
    against a grid maximization of F and the report surfaces both values
    side by side rather than assuming they agree.
    """
    num = (2.0 * tp.l2 * (tp.rho + tp.l1) * (1.0 + tp.alpha1) * tp.sigma_max
           - 2.0 * tp.alpha1 * tp.rho * tp.sigma_min * (tp.l2 + 1.0))
    den = (2.0 * tp.l2 * (tp.rho + tp.l1) * (1.0 + tp.alpha1) * tp.sigma_max
           + tp.alpha1 * tp.rho * tp.sigma_min * (tp.l2 + 1.0))
    raw = num / den
    clamped = not (0.0 < raw <= 1.0)
    return (float(min(max(raw, 1e-12), 1.0)), clamped)


def optimal_eta(tp: TheoryParams) -> float:
    """Closed form for the step size maximizing H (stationary point of H)."""
    return 20.0 * tp.phi_max**2 * tp.rho_inverse_pair / (tp.phi_min * tp.sigma_min)


class RhoBound(NamedTuple):
    value: float
    satisfied: bool


def rho_lower_bound(tp: TheoryParams, h_next: float | None = None,
                    betas: Betas | None = None) -> RhoBound:
    """Penalty level above which the decrease margin stays positive.

    Uses the stated bound with the optimal step size substituted in.  The
    right-hand side itself depends on ``rho`` through ``beta1`` and the
    ``h`` recursion, so schedule code re-evaluates it at each candidate.
    ``h_next`` defaults to the largest ``h_{t+1}`` over the non-terminal
    margin rows (that is ``h_2``; ``h_1`` when m = 1), the binding case.
    ``satisfied`` records whether ``tp.rho`` strictly exceeds the bound.
    """
    if betas is None:
        betas = compute_betas(tp)
    if h_next is None:
        h = h_sequence(tp, betas)
        h_next = float(h[2]) if tp.m >= 2 else float(h[1])
    lever = 1.0 + 1.0 / tp.alpha1
    num = 80.0 * tp.phi_max**2 * tp.theta**2 * tp.l2 * (
        10.0 * tp.L**2 + (h_next + betas.b1) * lever)
    den = (tp.phi_min**2 * tp.sigma_min * tp.theta**2 * tp.l2
           + 40.0 * tp.sigma_min * (tp.l2 - (1.0 - tp.theta)) * tp.phi_max**2)
    value = num / den
    return RhoBound(float(value), bool(tp.rho > value))


def theory_params_for(p: ConstrainedProblem, cfg: SolverConfig,
                      rho: float | None = None, theta: float | None = None,
                      alpha1: float = 1.0, l1: float | None = None,
                      l2: float | None = None) -> TheoryParams:
    """Assemble TheoryParams from a problem and a solver config.

    ``theta``/``rho`` overrides exist for schedule code probing candidate
    values; otherwise the config must pin both (fixed modes).  The proximal
    metric spectrum describes the Q the solver actually uses: both ones for
    the identity mode, a dense eigensolve of the Uzawa matrix otherwise.
    """
    if theta is None:
        if cfg.theta_mode != "fixed":
            raise ValueError("theory constants need a fixed theta; pass one explicitly")
        theta = cfg.theta
    if rho is None:
        if cfg.rho_mode != "fixed":
            raise ValueError("theory constants need a concrete rho; pass one explicitly")
        rho = cfg.rho
    if cfg.eta_mode == "decaying":
        raise ValueError("theory constants need a fixed eta")
    spec = p.coupling_spectrum()
    if spec.sigma_min <= 0:
        raise ValueError(
            "coupling matrix is not full row rank (sigma_min = 0); "
            "the decrease analysis does not apply")
    if cfg.q_mode == "identity":
        phi_max = phi_min = 1.0
    else:
        gamma = cfg.gamma if cfg.gamma is not None else auto_gamma(
            cfg.eta, rho, theta, spec.op_norm_gram)
        Q = q_matrix(p, cfg.eta, rho, theta, gamma, cfg.q_mode)
        eigs = np.linalg.eigvalsh(Q)
        phi_min, phi_max = float(eigs[0]), float(eigs[-1])
    return TheoryParams(
        L=p.lipschitz().value,
        sigma_max=spec.sigma_max,
        sigma_min=spec.sigma_min,
        phi_max=phi_max,
        phi_min=phi_min,
        rho=float(rho),
        eta=cfg.eta,
        theta=float(theta),
        m=cfg.m,
        alpha1=alpha1,
        l1=l1,
        l2=l2,
    )


# ---------------------------------------------------------------------- #
# potential energy
# ---------------------------------------------------------------------- #


@dataclass(frozen=True)
class PotentialValue:
    """Psi and its three summands, for inspection."""

    psi: float
    al_part: float
    step_part: float
    snapshot_part: float


def potential_energy(p: ConstrainedProblem, prev: IterateState, cur: IterateState,
                     x_tilde_prev: np.ndarray, tp: TheoryParams,
                     ledger: ConstantLedger, t: int) -> PotentialValue:
    """Psi at ``cur`` given the preceding iterate and the active snapshot.

    Psi_t = L_rho(x_t, y_t, lam_t) + beta5 ||x_t - x_{t-1}||^2
            + h_t (||x_t - x_tilde_prev||^2 + ||x_{t-1} - x_tilde_prev||^2)

    with ``x_tilde_prev`` the snapshot taken at the start of the current
    epoch and ``t`` the inner index selecting ``h_t``.
    """
    if not (1 <= t <= tp.m):
        raise ValueError(f"inner index {t} outside 1..{tp.m}")
    al = augmented_lagrangian(p, cur.x, cur.y, cur.lam, tp.rho)
    dstep = cur.x - prev.x
    step = ledger.betas.b5 * float(dstep @ dstep)
    da = cur.x - x_tilde_prev
    db = prev.x - x_tilde_prev
    snap = float(ledger.h[t]) * (float(da @ da) + float(db @ db))
    return PotentialValue(al + step + snap, al, step, snap)


def make_psi_hook(p: ConstrainedProblem, tp: TheoryParams):
    """Closure recording Psi along a run; hand to a solver as ``psi_hook``.

    The solver calls it with the previous and current iterate states and
    stores the returned float in the trace.  Requires a fixed penalty (the
    ledger is built once).
    """
    ledger = build_ledger(tp)

    def hook(prev: IterateState, cur: IterateState) -> float:
        return potential_energy(p, prev, cur, cur.x_tilde, tp, ledger, cur.t).psi

    return hook


# ---------------------------------------------------------------------- #
# the O(1/T) bound
# ---------------------------------------------------------------------- #


def residual_R(x_prev: np.ndarray, x_cur: np.ndarray, x_next: np.ndarray,
               snapshot: np.ndarray) -> float:
    """Squared-displacement residual at one chain position.

    ||x_cur - snapshot||^2 + ||x_prev - snapshot||^2
    + ||x_next - x_cur||^2 + ||x_cur - x_prev||^2.
    """
    da = x_cur - snapshot
    db = x_prev - snapshot
    dc = x_next - x_cur
    dd = x_cur - x_prev
    return float(da @ da) + float(db @ db) + float(dc @ dc) + float(dd @ dd)


def residual_chain(x_hist: np.ndarray, x_tilde_hist: np.ndarray, m: int) -> np.ndarray:
    """Residuals along one run's global chain, one value per interior step.

    Global step g (1-based) sits in epoch (g-1)//m whose active snapshot is
    ``x_tilde_hist[(g-1)//m]``.  The last step needs a successor and is left
    out, so the result has T - 1 entries for a run of T = S*m steps.
    """
    x_hist = np.asarray(x_hist, dtype=np.float64)
    total = x_hist.shape[0] - 1
    if total < 2:
        raise ValueError("need at least two steps to form one residual")
    if total % m:
        raise ValueError(f"history of {total} steps is not a multiple of m={m}")
    out = np.empty(total - 1)
    for g in range(1, total):
        snap = x_tilde_hist[(g - 1) // m]
        out[g - 1] = residual_R(x_hist[g - 1], x_hist[g], x_hist[g + 1], snap)
    return out


@dataclass(frozen=True)
class Theorem1Report:
    lhs: float                # min over positions of the cross-run mean residual
    rhs: float                # (mean Psi_first - Psi_floor) / (tau * T)
    tau: float
    omega: float
    gamma_min: float
    t_steps: int
    n_runs: int
    psi_first_mean: float
    psi_floor: float

    @property
    def satisfied(self) -> bool:
        return self.lhs <= self.rhs

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs


def theorem1_check(results: list[SolveResult], ledger: ConstantLedger,
                   psi_star: float | None = None,
                   min_runs: int = 30) -> Theorem1Report:
    """Check the O(1/T) bound against a batch of recorded runs.

    Each result must come from a variance-reduced driver with
    ``keep_iterates`` and potential recording on, all with the same shape
    (S, m).  The left side is the minimum over chain positions of the
    across-run mean residual; the right side divides the mean first-step
    potential minus the potential floor by ``tau * T``.  ``psi_star``
    overrides the floor; by default it is the minimum recorded potential
    across all runs and positions.
    """
    if len(results) < min_runs:
        raise ValueError(f"need at least {min_runs} runs, got {len(results)}")
    if not ledger.gammas_positive:
        raise ValueError(
            f"min Gamma = {ledger.gamma_min:.6g} is not positive; "
            "the bound is not applicable to this configuration")
    tp = ledger.params
    chains = []
    first_psis = []
    floor = np.inf
    t_steps = None
    for res in results:
        if res.status != "completed":
            raise ValueError("all runs must have completed")
        if res.x_hist is None:
            raise ValueError("runs must be recorded with keep_iterates=True")
        chain = residual_chain(res.x_hist, res.x_tilde_hist, tp.m)
        if t_steps is None:
            t_steps = len(chain) + 1
        elif len(chain) + 1 != t_steps:
            raise ValueError("runs disagree on total step count")
        chains.append(chain)
        psis = [r.psi for r in res.trace if r.psi is not None]
        if not psis:
            raise ValueError("runs must be recorded with potential tracking on")
        first = next(r.psi for r in res.trace if r.epoch == 1 and r.inner == 1)
        first_psis.append(first)
        floor = min(floor, min(psis))
    if psi_star is not None:
        floor = psi_star
    mean_chain = np.mean(np.stack(chains), axis=0)
    lhs = float(mean_chain.min())
    psi_first_mean = float(np.mean(first_psis))
    gap = psi_first_mean - floor
    if ledger.tau > 0:
        rhs = gap / (ledger.tau * t_steps)
    elif gap <= 0.0:
        rhs = 0.0  # degenerate flat run (zero data): bound reads 0 <= 0
    else:
        raise ValueError("tau is zero while the potential gap is positive; "
                         "the bound is undefined here")
    return Theorem1Report(
        lhs=lhs,
        rhs=rhs,
        tau=ledger.tau,
        omega=ledger.omega,
        gamma_min=ledger.gamma_min,
        t_steps=t_steps,
        n_runs=len(results),
        psi_first_mean=psi_first_mean,
        psi_floor=float(floor),
    )


# ---------------------------------------------------------------------- #
# rate fitting and stationarity residuals
# ---------------------------------------------------------------------- #


@dataclass(frozen=True)
class RateFit:
    """Geometric fit v_t ~ c * xi^t over the trailing positive window."""

    c: float
    xi: float
    r_squared: float
    n_points: int
    window_start: int

    @property
    def no_linear_decay(self) -> bool:
        return self.xi >= 1.0


def linear_rate_fit(values, window: int = 60, floor: float | None = None) -> RateFit:
    """Fit a geometric decay to the trailing positive part of ``values``.

    Entries at or below ``floor`` (default: 1e-13 times the max, guarding
    against the fit chasing rounding noise) cannot enter the fit.  The
    window ends at the last surviving entry and extends backward up to
    ``window`` points, shrinking if a dead entry interrupts it; the fit is
    least squares on log values against the original indices, so ``xi`` is
    the per-index decay factor.  ``n_points`` reports any shrink.
    """
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ValueError("no values to fit")
    finite_max = float(np.nanmax(np.where(np.isfinite(v), v, -np.inf)))
    if floor is None:
        floor = 1e-13 * max(finite_max, 0.0)
    alive = np.isfinite(v) & (v > max(floor, 0.0))
    if not alive.any():
        raise ValueError("no values above the floor; nothing to fit")
    end = int(np.flatnonzero(alive).max())
    start = max(0, end + 1 - window)
    dead_inside = np.flatnonzero(~alive[start:end + 1])
    if dead_inside.size:
        start = start + int(dead_inside.max()) + 1
    idx = np.arange(start, end + 1, dtype=np.float64)
    if idx.size < 3:
        raise ValueError("fewer than three usable trailing points; nothing to fit")
    logs = np.log(v[start:end + 1])
    slope, intercept = np.polyfit(idx, logs, 1)
    pred = slope * idx + intercept
    ss_res = float(np.sum((logs - pred) ** 2))
    ss_tot = float(np.sum((logs - logs.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return RateFit(float(np.exp(intercept)), float(np.exp(slope)), r2,
                   int(idx.size), int(start))


@dataclass(frozen=True)
class KKTResidual:
    stationarity_x: float
    stationarity_y: float
    feasibility: float

    @property
    def max_violation(self) -> float:
        return max(self.stationarity_x, self.stationarity_y, self.feasibility)


def kkt_residual(p: ConstrainedProblem, x: np.ndarray, y: np.ndarray,
                 lam: np.ndarray) -> KKTResidual:
    """First-order stationarity residuals at ``(x, y, lam)``.

    * x-block:  ||grad f(x) - A^T lam||
    * y-block:  distance from ``B^T lam`` to the regularizer subdifferential
      at ``y`` (for the L1 weight w: |v_j - w sign(y_j)| on the support,
      max(0, |v_j| - w) off it)
    * feasibility: ||A x + B y - c||
    """
    r1 = float(np.linalg.norm(p.full_grad(x) - p.A.rmat_vec(lam)))
    v = p.B.rmat_vec(lam)
    if isinstance(p.reg, L1Regularizer):
        w = p.reg.weight
        on = y != 0.0
        dev = np.where(on, np.abs(v - w * np.sign(y)), np.maximum(np.abs(v) - w, 0.0))
        r2 = float(np.linalg.norm(dev))
    elif isinstance(p.reg, ZeroRegularizer):
        r2 = float(np.linalg.norm(v))
    else:
        raise NotImplementedError(f"no subdifferential rule for {type(p.reg).__name__}")
    r3 = float(np.linalg.norm(p.residual(x, y)))
    return KKTResidual(r1, r2, r3)


# ---------------------------------------------------------------------- #
# report assembly
# ---------------------------------------------------------------------- #


def _grid_max(fn, grid) -> tuple[float, float]:
    vals = np.array([fn(g) for g in grid])
    k = int(np.argmax(vals))
    return float(grid[k]), float(vals[k])


def theory_report(p: ConstrainedProblem, cfg: SolverConfig,
                  alpha1: float = 1.0, l1: float | None = None,
                  l2: float | None = None) -> dict:
    """All derived constants for a problem/config pair, JSON-ready.

    The stated closed forms for the maximizing momentum weight and step
    size are reported next to grid maximizations of F and H so the two can
    be compared; ``*_matches_grid`` records agreement within grid spacing.
    """
    tp = theory_params_for(p, cfg, alpha1=alpha1, l1=l1, l2=l2)
    ledger = build_ledger(tp)
    lip = p.lipschitz()

    theta_grid = np.linspace(1e-4, 1.0, 4001)
    theta_star, theta_clamped = optimal_theta(tp)
    theta_best, f_best = _grid_max(lambda th: theta_margin(tp, th), theta_grid)
    theta_step = float(theta_grid[1] - theta_grid[0])

    eta_star = optimal_eta(tp)
    eta_grid = eta_star * np.logspace(-3, 3, 4001)
    eta_best, h_best = _grid_max(lambda e: eta_margin(tp, e), eta_grid)
    eta_log_step = 6.0 * np.log(10.0) / 4000.0

    bound = rho_lower_bound(tp)
    return {
        "smoothness": {"L": lip.value, "method": lip.method},
        "coupling": {"sigma_max": tp.sigma_max, "sigma_min": tp.sigma_min},
        "proximal_metric": {"phi_max": tp.phi_max, "phi_min": tp.phi_min,
                            "q_mode": cfg.q_mode},
        "params": {"rho": tp.rho, "eta": tp.eta, "theta": tp.theta, "m": tp.m,
                   "alpha1": tp.alpha1, "l1": tp.l1, "l2": tp.l2},
        "betas": dict(zip(("b1", "b2", "b3", "b4", "b5", "b6"),
                          map(float, ledger.betas))),
        "h_first": float(ledger.h[1]),
        "h_last": float(ledger.h[tp.m]),
        "gamma_min": ledger.gamma_min,
        "gammas_positive": ledger.gammas_positive,
        "omega": ledger.omega,
        "tau": ledger.tau,
        "theorem1_applicable": ledger.decrease_holds,
        "theta_opt": {
            "formula": theta_star,
            "clamped": theta_clamped,
            "grid_argmax": theta_best,
            "margin_at_formula": theta_margin(tp, theta_star),
            "margin_at_grid": f_best,
            "matches_grid": bool(abs(theta_star - theta_best) <= 2.0 * theta_step),
        },
        "eta_opt": {
            "formula": eta_star,
            "grid_argmax": eta_best,
            "margin_at_formula": eta_margin(tp, eta_star),
            "margin_at_grid": h_best,
            "matches_grid": bool(abs(np.log(eta_best / eta_star)) <= 2.0 * eta_log_step),
        },
        "rho_lower_bound": {"value": bound.value, "rho": tp.rho,
                            "satisfied": bound.satisfied},
    }
