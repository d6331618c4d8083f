"""Entropic unbalanced optimal transport with mixed marginal penalties.

Solves, over nonnegative n x m plans P,

    min  <C, P> + eps * sum_ij P_ij (log P_ij - 1)
           + tau * ||P 1 - a||_2^2  +  tau * ||P^T 1 - b||_1

by alternating row/column scaling. The row update is the proximal step of
the squared-L2 penalty under the generalized KL geometry, solved per
coordinate with a safeguarded Newton iteration; the column update (L1
penalty) has a closed form that clamps the column marginal between
z*exp(-tau/eps) and z*exp(+tau/eps).

Scalings are tracked as additive dual potentials and absorbed into the
kernel whenever they grow past exp(200), which keeps every intermediate
finite even for cost entries up to ~1e26 (log-domain stabilization).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import NumericalError

# Absorb scalings into the kernel once |log u| exceeds this (stabilize=True).
_ABSORB_THRESHOLD = 200.0
# exp(x) underflows to exactly 0.0 below roughly -745; used to shortcut rows
# whose marginal provably underflows.
_LOG_TINY = -745.0

_ORACLE_STREAM = 0x0FAC1E


@dataclass(frozen=True)
class UotParams:
    """Solver parameters: entropic weight, marginal weight, and stopping."""

    epsilon: float = 0.05
    tau: float = 1.0
    max_iters: int = 10000
    tolerance: float = 1e-9
    stabilize: bool = True

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if not self.tau >= 0:
            raise ValueError(f"tau must be >= 0, got {self.tau}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if not self.tolerance > 0:
            raise ValueError(f"tolerance must be > 0, got {self.tolerance}")


@dataclass(frozen=True)
class TransportPlan:
    """Nonnegative n x m transport plan."""

    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ValueError("transport plan entries must be >= 0 and finite")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class UotResult:
    """Solve output: loss, plan, marginals, density gradient, convergence."""

    loss: float
    plan: TransportPlan
    row_marginal: np.ndarray = field(repr=False)
    col_marginal: np.ndarray = field(repr=False)
    grad_density: np.ndarray = field(repr=False)
    iterations: int
    converged: bool
    duals: tuple[np.ndarray, np.ndarray] | None = field(repr=False, default=None)
    objective_trace: tuple[float, ...] | None = None


def _cost_values(C) -> np.ndarray:
    values = getattr(C, "values", C)
    return np.asarray(values, dtype=float)


def _objective(P: np.ndarray, a: np.ndarray, b: np.ndarray, C: np.ndarray,
               epsilon: float, tau: float) -> float:
    transport = float(np.sum(C * P))
    pos = P > 0
    entropy = float(np.sum(P[pos] * (np.log(P[pos]) - 1.0)))
    r = P.sum(axis=1) - a
    t = P.sum(axis=0) - b
    return transport + epsilon * entropy + tau * float(r @ r) + tau * float(np.abs(t).sum())


def uot_objective(P, a, b, C, params: UotParams) -> float:
    """Primal objective at an arbitrary plan, with 0*log(0) taken as 0."""
    Pv = np.asarray(getattr(P, "values", P), dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    Cv = _cost_values(C)
    if Pv.shape != Cv.shape or Pv.shape[0] != a.size or Pv.shape[1] != b.size:
        raise ValueError(
            f"shape mismatch: P {Pv.shape}, C {Cv.shape}, a ({a.size},), b ({b.size},)"
        )
    return _objective(Pv, a, b, Cv, params.epsilon, params.tau)


def _row_prox(ls: np.ndarray, a: np.ndarray, epsilon: float, tau: float, y_init=None):
    """Per-row minimizer of eps*KL(x || exp(ls)) + tau*(x - a)^2, in logs.

    ``ls`` is the log of the row kernel mass (may be -inf). Returns the new
    row marginals x, the corresponding total row potentials
    f = -2*tau*(x - a), and the root array for warm-starting the next sweep.
    The root of

        eps*(y - ls) + 2*tau*(exp(y) - a) = 0,   y = log x,

    is found by bisection-safeguarded Newton from y0 = log(max(x0, 1e-300)),
    x0 = max(exp(ls), a) (or the previous sweep's root when supplied), at
    most 50 steps, stopping when |residual| < 1e-12.
    """
    if tau == 0.0:
        x = np.exp(ls)
        return x, np.zeros_like(x), None

    x = np.zeros_like(a)
    # The root satisfies y <= ls + 2*tau*a/eps; below the underflow line the
    # marginal is exactly zero in double precision (covers ls = -inf).
    with np.errstate(invalid="ignore"):
        under = ls + 2.0 * tau * a / epsilon < _LOG_TINY
    act = ~under
    y_full = np.full(a.shape, -np.inf)
    if np.any(act):
        la = ls[act]
        aa = a[act]
        log_a = np.log(np.maximum(aa, 1e-300))
        y = np.minimum(np.maximum(la, log_a), 700.0)
        if y_init is not None:
            hint = y_init[act]
            good = np.isfinite(hint)
            y[good] = np.minimum(hint[good], 700.0)

        def resid(yv, lav, aav):
            return epsilon * (yv - lav) + 2.0 * tau * (np.exp(yv) - aav)

        e0 = resid(y, la, aa)
        lo = y.copy()
        hi = y.copy()
        # Expand to a sign-changing bracket (residual is increasing in y).
        step = np.ones_like(y)
        mask = e0 > 0
        while np.any(mask):
            lo[mask] -= step[mask]
            step[mask] = np.minimum(step[mask] * 2.0, 1e300)
            mask[mask] = resid(lo[mask], la[mask], aa[mask]) > 0
        step = np.ones_like(y)
        mask = e0 < 0
        while np.any(mask):
            hi[mask] = np.minimum(hi[mask] + step[mask], 700.0)
            step[mask] = np.minimum(step[mask] * 2.0, 1e300)
            mask[mask] = resid(hi[mask], la[mask], aa[mask]) < 0

        live = np.abs(e0) >= 1e-12
        for _ in range(50):
            if not np.any(live):
                break
            yl, lol, hil = y[live], lo[live], hi[live]
            lal, aal = la[live], aa[live]
            e = resid(yl, lal, aal)
            deriv = epsilon + 2.0 * tau * np.exp(yl)
            ynew = yl - e / deriv
            bad = ~np.isfinite(ynew) | (ynew <= lol) | (ynew >= hil)
            ynew[bad] = 0.5 * (lol[bad] + hil[bad])
            en = resid(ynew, lal, aal)
            hi[live] = np.where(en >= 0, ynew, hil)
            lo[live] = np.where(en <= 0, ynew, lol)
            y[live] = ynew
            still = (np.abs(en) >= 1e-12) & ((hi[live] - lo[live]) > 1e-14 * np.maximum(1.0, np.abs(ynew)))
            live[live] = still
        x[act] = np.exp(y)
        y_full[act] = y

    f_tot = -2.0 * tau * (x - a)
    return x, f_tot, y_full


def _col_prox(lz: np.ndarray, log_b: np.ndarray, epsilon: float, tau: float) -> np.ndarray:
    """Total column potentials for the L1 penalty: clip(eps*(log b - log z)).

    Equivalent to the closed-form marginal x = clamp(b, z e^{-tau/eps},
    z e^{+tau/eps}) expressed as g = eps*log(x/z).
    """
    with np.errstate(invalid="ignore"):
        raw = epsilon * (log_b - lz)
    raw = np.where(np.isnan(raw), 0.0, raw)
    return np.clip(raw, -tau, tau)


def solve_uot(a, b, C, params: UotParams, *, init_duals=None, objective_every: int = 0) -> UotResult:
    """Solve the unbalanced transport problem by alternating scaling.

    ``a`` is the predicted density over the n grid cells, ``b`` the (unit)
    annotation weights, ``C`` the n x m cost matrix (a CostMatrix or array).
    Convergence is declared when the log-scalings move by less than
    ``params.tolerance`` between sweeps; hitting ``max_iters`` first yields
    ``converged=False`` rather than an error.

    ``init_duals`` warm-starts the potentials (e.g. from a previous solve on
    a nearby density); ``objective_every=k`` records the primal objective
    every k sweeps in ``objective_trace``.
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    Cv = _cost_values(C)
    if Cv.ndim != 2 or Cv.shape != (a.size, b.size):
        raise ValueError(f"cost shape {Cv.shape} incompatible with a ({a.size},), b ({b.size},)")
    if np.any(a < 0) or not np.all(np.isfinite(a)):
        raise ValueError("density must be finite and >= 0")
    if np.any(b < 0) or not np.all(np.isfinite(b)):
        raise ValueError("annotation weights must be finite and >= 0")
    if not np.all(np.isfinite(Cv)):
        raise ValueError("cost matrix must be finite")

    eps, tau = params.epsilon, params.tau
    n, m = Cv.shape

    if init_duals is not None:
        f_abs = np.array(init_duals[0], dtype=float).ravel()
        g_abs = np.array(init_duals[1], dtype=float).ravel()
        if f_abs.size != n or g_abs.size != m:
            raise ValueError("init_duals sizes do not match the problem")
    else:
        f_abs = np.zeros(n)
        g_abs = np.zeros(m)

    with np.errstate(divide="ignore"):
        log_b = np.log(b)

    K = np.exp((f_abs[:, None] + g_abs[None, :] - Cv) / eps)
    u = np.ones(n)
    v = np.ones(m)
    f_prev = f_abs.copy()
    g_prev = g_abs.copy()
    f_tot = f_abs
    g_tot = g_abs

    trace: list[float] = []
    converged = False
    iterations = 0
    row_y = None
    for it in range(1, params.max_iters + 1):
        iterations = it

        s = K @ v
        if not np.all(np.isfinite(s)):
            raise NumericalError("scaling overflow; enable stabilize", iteration=it)
        with np.errstate(divide="ignore"):
            ls = np.log(s) - f_abs / eps
        _, f_tot, row_y = _row_prox(ls, a, eps, tau, y_init=row_y)
        if params.stabilize and np.max(np.abs(f_tot - f_abs)) > _ABSORB_THRESHOLD * eps:
            f_abs = f_tot
            with np.errstate(over="ignore"):  # overflow is caught by the isfinite guards
                K = np.exp((f_abs[:, None] + g_abs[None, :] - Cv) / eps)
            u = np.ones(n)
        else:
            u = np.exp((f_tot - f_abs) / eps)

        t = K.T @ u
        if not np.all(np.isfinite(t)):
            raise NumericalError("scaling overflow; enable stabilize", iteration=it)
        with np.errstate(divide="ignore"):
            lz = np.log(t) - g_abs / eps
        g_tot = _col_prox(lz, log_b, eps, tau)
        if params.stabilize and np.max(np.abs(g_tot - g_abs)) > _ABSORB_THRESHOLD * eps:
            f_abs = f_tot
            g_abs = g_tot
            with np.errstate(over="ignore"):
                K = np.exp((f_abs[:, None] + g_abs[None, :] - Cv) / eps)
            u = np.ones(n)
            v = np.ones(m)
        else:
            v = np.exp((g_tot - g_abs) / eps)

        if objective_every > 0 and it % objective_every == 0:
            with np.errstate(over="ignore"):
                P_cur = np.exp((f_tot[:, None] + g_tot[None, :] - Cv) / eps)
            trace.append(_objective(P_cur, a, b, Cv, eps, tau))

        delta = max(np.max(np.abs(f_tot - f_prev)), np.max(np.abs(g_tot - g_prev))) / eps
        f_prev = f_tot
        g_prev = g_tot
        if delta < params.tolerance:
            converged = True
            break

    with np.errstate(over="ignore"):
        P = np.exp((f_tot[:, None] + g_tot[None, :] - Cv) / eps)
    if not np.all(np.isfinite(P)):
        raise NumericalError("transport plan overflow; enable stabilize", iteration=iterations)
    row_marginal = P.sum(axis=1)
    col_marginal = P.sum(axis=0)
    loss = _objective(P, a, b, Cv, eps, tau)
    grad = 2.0 * tau * (a - row_marginal)
    return UotResult(
        loss=loss,
        plan=TransportPlan(values=P),
        row_marginal=row_marginal,
        col_marginal=col_marginal,
        grad_density=grad,
        iterations=iterations,
        converged=converged,
        duals=(f_tot.copy(), g_tot.copy()),
        objective_trace=tuple(trace) if objective_every > 0 else None,
    )


def loss_gradient_wrt_density(result: UotResult, a, params: UotParams) -> np.ndarray:
    """Envelope gradient of the loss in the density: 2*tau*(a - P* 1).

    Only the squared-L2 marginal term depends on the density directly, so at
    the optimal plan the loss gradient reduces to the penalty's own gradient.
    """
    a = np.asarray(a, dtype=float).ravel()
    if a.size != result.row_marginal.size:
        raise ValueError(
            f"density size {a.size} does not match solve dimension {result.row_marginal.size}"
        )
    return 2.0 * params.tau * (a - result.row_marginal)


def _smoothed_value_grad(zflat: np.ndarray, a, b, C, epsilon, tau, mu, n, m):
    Z = zflat.reshape(n, m)
    P = np.exp(Z)
    r = P.sum(axis=1) - a
    t = P.sum(axis=0) - b
    smooth_abs = np.sqrt(t * t + mu * mu) - mu
    val = (
        float(np.sum(C * P))
        + epsilon * float(np.sum(P * (Z - 1.0)))
        + tau * float(r @ r)
        + tau * float(smooth_abs.sum())
    )
    dabs = t / np.sqrt(t * t + mu * mu)
    G = P * (C + epsilon * Z + 2.0 * tau * r[:, None] + tau * dabs[None, :])
    return val, G.ravel()


def _smoothed_p_state(P, a, b, C, epsilon, tau, mu):
    """Value, P-gradient, and column terms of the smoothed objective."""
    r = P.sum(axis=1) - a
    t = P.sum(axis=0) - b
    root = np.sqrt(t * t + mu * mu)
    val = (
        float(np.sum(C * P))
        + epsilon * float(np.sum(P * (np.log(P) - 1.0)))
        + tau * float(r @ r)
        + tau * float(np.sum(root - mu))
    )
    grad = C + epsilon * np.log(P) + 2.0 * tau * r[:, None] + tau * (t / root)[None, :]
    curv_col = mu * mu / root**3
    return val, grad, curv_col


def _polish_newton(z, a, b, C, epsilon, tau, mu, n, m, max_steps=50):
    """Damped Newton on the smoothed objective, working directly on P.

    The objective is strictly convex in P with an entropy barrier keeping
    the minimum interior, so Newton steps with a stay-positive line search
    converge fast; n*m <= 64 makes each exact solve trivial. Convergence is
    measured by the log-parameterization gradient P * dF/dP, whose entries
    vanish with P, and the polish stops below 1e-10. Returns (z, gnorm,
    steps) with z = log(P).
    """
    floor = 1e-250
    P = np.maximum(np.exp(z.reshape(n, m)), floor)
    val, grad, curv_col = _smoothed_p_state(P, a, b, C, epsilon, tau, mu)
    steps = 0
    for _ in range(max_steps):
        gz = P * grad
        if float(np.max(np.abs(gz))) < 1e-10:
            break
        act = (P.ravel() > 10 * floor) | (grad.ravel() < 0)
        idx = np.nonzero(act)[0]
        if idx.size == 0:
            break
        rows = idx // m
        cols = idx % m
        p = P.ravel()[idx]
        ga = grad.ravel()[idx]
        H = (
            np.diag(epsilon / p)
            + 2.0 * tau * (rows[:, None] == rows[None, :])
            + tau * curv_col[cols][None, :] * (cols[:, None] == cols[None, :])
        )
        try:
            d = np.linalg.solve(H, -ga)
        except np.linalg.LinAlgError:
            d = -p * ga
        slope = float(ga @ d)
        if slope >= 0:
            d = -p * ga
            slope = float(ga @ d)
        # keep P strictly positive: step at most 99.9% of the way to zero
        shrink = d < 0
        cap = 1.0
        if np.any(shrink):
            cap = min(1.0, float(np.min(-0.999 * p[shrink] / d[shrink])))
        step = cap
        accepted = False
        # Near the optimum the Newton decrement drops below float noise in
        # the objective; the slack term keeps true descent steps acceptable.
        noise = 4e-14 * (1.0 + abs(val))
        for _ in range(60):
            P_try = P.copy().ravel()
            P_try[idx] = np.maximum(p + step * d, floor)
            P_try = P_try.reshape(n, m)
            val_try, grad_try, curv_try = _smoothed_p_state(P_try, a, b, C, epsilon, tau, mu)
            if val_try <= val + 1e-4 * step * slope + noise:
                P, val, grad, curv_col = P_try, val_try, grad_try, curv_try
                accepted = True
                break
            step *= 0.5
        steps += 1
        if not accepted:
            break
    gz = P * grad
    return np.log(P).ravel(), float(np.max(np.abs(gz))), steps


def brute_force_solve(a, b, C, params: UotParams, *, n_starts: int = 5, seed: int = 0) -> UotResult:
    """Independent small-instance solver used to cross-check solve_uot.

    Minimizes the same objective over P = exp(Z) elementwise (so positivity
    is built in and the gradient of a vanishing entry vanishes with it) from
    multiple starts: one at the tau=0 closed form, the rest random. Each
    start is descended with box-projected L-BFGS and finished with a damped
    Newton polish that drives the gradient norm below 1e-8. The L1 column
    penalty is smoothed as sqrt(t^2 + mu^2) - mu with mu walked down to
    1e-7, which biases the objective by at most tau*m*mu, far below the
    comparison tolerances.
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    Cv = _cost_values(C)
    n, m = Cv.shape
    if n * m > 64:
        raise ValueError(f"brute-force solver limited to n*m <= 64, got {n}x{m}")
    if n_starts < 5:
        raise ValueError("need at least 5 starts")
    eps, tau = params.epsilon, params.tau

    rng = np.random.Generator(np.random.Philox(key=np.array([seed, _ORACLE_STREAM], dtype=np.uint64)))
    starts = [np.clip(-Cv.ravel() / eps, -50.0, 50.0)]
    for _ in range(n_starts - 1):
        starts.append(rng.uniform(-5.0, 0.0, size=n * m))

    best_val = np.inf
    best_P = None
    best_gnorm = np.inf
    total_iters = 0
    bounds = [(None, 60.0)] * (n * m)
    with np.errstate(over="ignore", invalid="ignore"):
        for z0 in starts:
            res = minimize(
                _smoothed_value_grad,
                z0,
                args=(a, b, Cv, eps, tau, 1e-2, n, m),
                jac=True,
                method="L-BFGS-B",
                bounds=bounds,
                options={"maxiter": 400, "ftol": 1e-16, "gtol": 1e-9, "maxls": 60},
            )
            z = res.x
            total_iters += int(res.nit)
            gnorm = np.inf
            for mu in (1e-2, 1e-4, 1e-7):
                z, gnorm, steps = _polish_newton(z, a, b, Cv, eps, tau, mu, n, m)
                total_iters += steps
            P = np.exp(z.reshape(n, m))
            val = _objective(P, a, b, Cv, eps, tau)
            if val < best_val:
                best_val = val
                best_P = P
                best_gnorm = gnorm

    row_marginal = best_P.sum(axis=1)
    col_marginal = best_P.sum(axis=0)
    return UotResult(
        loss=best_val,
        plan=TransportPlan(values=best_P),
        row_marginal=row_marginal,
        col_marginal=col_marginal,
        grad_density=2.0 * tau * (a - row_marginal),
        iterations=total_iters,
        converged=bool(best_gnorm < 1e-8),
        duals=None,
    )
