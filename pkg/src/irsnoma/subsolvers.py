"""Small dense convex solvers for the power, feasibility, reflection and SDP
subproblems.

The smooth problems are solved with a log-barrier Newton method (with a
phase-I search when the starting point is not strictly feasible). The SDP is
solved through its dual, which has one variable per diagonal constraint:

    min  sum(y)  s.t.  diag(y) - C >= 0,  y[:M] >= 0

and the primal matrix is recovered on the central path as ``S^{-1} / t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

LN2 = math.log(2.0)


class SolverError(RuntimeError):
    """Base class for subsolver failures."""


class InfeasibleError(SolverError):
    def __init__(self, message: str, violation: float = float("nan")):
        super().__init__(message)
        self.violation = violation


class ConvergenceError(SolverError):
    def __init__(self, message: str, best=None, gap: float = float("nan")):
        super().__init__(message)
        self.best = best
        self.gap = gap


@dataclass(frozen=True)
class SolverSettings:
    tol_gap: float = 1e-9
    barrier_factor: float = 10.0
    max_newton_iters: int = 200
    newton_tol: float = 1e-10
    t0: float = 1.0

    @classmethod
    def from_config(cls, config, tol_gap: float | None = None) -> "SolverSettings":
        return cls(
            tol_gap=config.tol_gap * 1e-3 if tol_gap is None else tol_gap,
            barrier_factor=config.barrier_factor,
            max_newton_iters=config.max_newton_iters,
        )


class SmoothProblem(Protocol):
    n: int

    def objective(self, x: np.ndarray) -> tuple[float, np.ndarray, np.ndarray | None]: ...

    def constraints(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]: ...

    def constraint_hessian(self, x: np.ndarray, w: np.ndarray) -> np.ndarray: ...


@dataclass
class BarrierResult:
    x: np.ndarray
    objective: float
    duals: np.ndarray
    gap: float
    newton_iters: int
    kkt_residual: float


def _newton_center(problem, x, t, settings, budget, stop: Callable[[np.ndarray], bool] | None = None):
    """Minimise ``t f0 - sum log(-c)`` from a strictly feasible ``x``."""
    used = 0
    while used < budget:
        f0, g0, h0 = problem.objective(x)
        c, jac = problem.constraints(x)
        inv = -1.0 / c
        grad = t * g0 + jac.T @ inv
        hess = (jac.T * inv**2) @ jac + problem.constraint_hessian(x, inv)
        if h0 is not None:
            hess = hess + t * h0
        try:
            step = -np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            reg = 1e-12 * max(1.0, np.trace(hess) / problem.n)
            step = -np.linalg.lstsq(hess + reg * np.eye(problem.n), grad, rcond=None)[0]
        used += 1
        decrement = float(-grad @ step)
        if not math.isfinite(decrement):
            break
        # relative test: at large t the decrement cannot drop below roundoff
        if decrement / 2.0 <= settings.newton_tol * max(1.0, t * (1.0 + abs(f0))):
            break
        phi = t * f0 - np.sum(np.log(-c))
        s = 1.0
        values = getattr(problem, "constraint_values", None)
        while s > 1e-14:
            xn = x + s * step
            cn = values(xn) if values is not None else problem.constraints(xn)[0]
            if np.all(cn < 0):
                fn = problem.objective(xn)[0]
                if math.isfinite(fn):
                    phin = t * fn - np.sum(np.log(-cn))
                    if phin <= phi - 0.25 * s * decrement:
                        break
            s *= 0.5
        else:
            break
        x = xn
        if stop is not None and stop(x):
            break
    return x, used


def barrier_minimize(problem, x0: np.ndarray, settings: SolverSettings, t0: float | None = None,
                     stop: Callable[[np.ndarray], bool] | None = None) -> BarrierResult:
    """Log-barrier path following from a strictly feasible ``x0``."""
    x = np.asarray(x0, dtype=float).copy()
    c, _ = problem.constraints(x)
    if not np.all(c < 0):
        raise ValueError("barrier start is not strictly feasible")
    m = len(c)
    t = settings.t0 if t0 is None else t0
    total = 0
    while True:
        x, used = _newton_center(problem, x, t, settings, settings.max_newton_iters - total, stop)
        total += used
        if stop is not None and stop(x):
            break
        f0 = problem.objective(x)[0]
        if m / t < settings.tol_gap * (1.0 + abs(f0)):
            break
        if total >= settings.max_newton_iters:
            raise ConvergenceError(
                f"barrier method hit {settings.max_newton_iters} Newton steps",
                best=x, gap=m / t,
            )
        t *= settings.barrier_factor
    f0, g0, _ = problem.objective(x)
    c, jac = problem.constraints(x)
    duals = -1.0 / (t * c)
    kkt = float(np.linalg.norm(g0 + jac.T @ duals))
    return BarrierResult(x, f0, duals, m / t, total, kkt)


class _PhaseOne:
    """min s  s.t.  c_i(x) <= s, with the original problem's constraints."""

    def __init__(self, problem):
        self.p = problem
        self.n = problem.n + 1

    def objective(self, xs):
        g = np.zeros(self.n)
        g[-1] = 1.0
        return xs[-1], g, None

    def constraints(self, xs):
        c, jac = self.p.constraints(xs[:-1])
        jac_s = np.hstack([jac, -np.ones((len(c), 1))])
        # keep s bounded below so the phase-I problem stays bounded
        c = np.append(c - xs[-1], -xs[-1] - 1.0)
        last = np.zeros((1, self.n))
        last[0, -1] = -1.0
        return c, np.vstack([jac_s, last])

    def constraint_hessian(self, xs, w):
        out = np.zeros((self.n, self.n))
        out[:-1, :-1] = self.p.constraint_hessian(xs[:-1], w[:-1])
        return out


def find_interior(problem, x0: np.ndarray, settings: SolverSettings, margin: float = 0.0) -> np.ndarray:
    """Return a strictly feasible point, starting from an arbitrary ``x0``.

    Points closer than ``margin`` to the boundary are pulled inwards first;
    warm starts sitting on the boundary make the barrier Hessian singular.
    Raises :class:`InfeasibleError` if no strictly feasible point is found.
    """
    x0 = np.asarray(x0, dtype=float)
    c, _ = problem.constraints(x0)
    if np.all(c < -margin):
        return x0
    phase = _PhaseOne(problem)
    xs0 = np.append(x0, max(float(np.max(c)), 0.0) + 1.0)
    res = barrier_minimize(phase, xs0, settings, t0=1.0, stop=lambda xs: xs[-1] < -margin)
    if res.x[-1] >= 0:
        raise InfeasibleError("no strictly feasible point", violation=float(res.x[-1]))
    return res.x[:-1]


# --------------------------------------------------------------------------
# power allocation: rate maximisation and feasibility search


@dataclass
class PowerSubproblem:
    """Convex power/SINR subproblem around a reference point.

    Users are flattened in channel-major, decoding-order order. ``later`` is a
    boolean matrix with ``later[i, j]`` true when user ``j`` shares a channel
    with ``i`` and is decoded after it. Powers are held relative to
    ``scale`` (watts) internally.
    """

    nu: np.ndarray
    alpha: np.ndarray
    later: np.ndarray
    chi_min: float
    p_max: float
    r_min: float
    p_ref: np.ndarray
    chi_ref: np.ndarray
    scale: float = field(default=0.0)

    def __post_init__(self):
        self.nu = np.asarray(self.nu, float)
        self.alpha = np.asarray(self.alpha, float)
        self.later = np.asarray(self.later, bool)
        if np.any(self.nu <= 0):
            raise ValueError("nu must be strictly positive")
        if np.any(self.alpha < 0):
            raise ValueError("alpha must be non-negative")
        if self.scale <= 0:
            self.scale = self.p_max if self.p_max > 0 else 1.0
        self.has_later = self.later.any(axis=1)
        if np.any(self.has_later & (self.alpha <= 0)):
            raise ValueError("alpha must be positive for users with successors")
        # cached normalised quantities; alpha is unused where there is no successor
        self._a = np.where(self.has_later, self.alpha / self.scale, 0.0)
        self._inv_a = np.where(self.has_later, 1.0 / np.where(self.has_later, self._a, 1.0), 0.0)
        self._nu = self.nu / self.scale
        self._later_f = self.later.astype(float)

    @property
    def size(self) -> int:
        return len(self.nu)

    def quad(self, q, chi):
        """Normalised right-hand side of the convexified SINR constraint."""
        s = self._later_f @ q
        return chi * self._nu + 0.5 * s**2 * self._inv_a + 0.5 * self._a * chi**2

    def quad_jac(self, q, chi):
        s = self._later_f @ q
        jq = (s * self._inv_a)[:, None] * self._later_f
        jc = np.diag(self._nu + self._a * chi)
        return jq, jc

    def quad_hess(self, w):
        """Sum over users of ``w_i`` times the Hessian of ``quad_i`` in (q, chi)."""
        k = self.size
        lf = self._later_f
        out = np.zeros((2 * k, 2 * k))
        out[:k, :k] = (lf.T * (w * self._inv_a)) @ lf
        out[k:, k:] = np.diag(w * self._a)
        return out


class _P3:
    def __init__(self, sub: PowerSubproblem):
        self.sub = sub
        self.k = sub.size
        self.n = 2 * self.k
        self.budget = sub.p_max / sub.scale

    def objective(self, x):
        chi = x[self.k:]
        if np.any(chi <= -1):
            return math.inf, np.zeros(self.n), None
        f = -np.sum(np.log1p(chi)) / LN2
        g = np.zeros(self.n)
        g[self.k:] = -1.0 / ((1 + chi) * LN2)
        h = np.zeros((self.n, self.n))
        h[self.k:, self.k:] = np.diag(1.0 / ((1 + chi) ** 2 * LN2))
        return f, g, h

    def constraint_values(self, x):
        k, sub = self.k, self.sub
        q, chi = x[:k], x[k:]
        return np.concatenate([sub.chi_min - chi, sub.quad(q, chi) - q, [q.sum() - self.budget]])

    def constraints(self, x):
        k, sub = self.k, self.sub
        q, chi = x[:k], x[k:]
        jq, jc = sub.quad_jac(q, chi)
        c = np.concatenate([sub.chi_min - chi, sub.quad(q, chi) - q, [q.sum() - self.budget]])
        jac = np.zeros((2 * k + 1, self.n))
        jac[:k, k:] = -np.eye(k)
        jac[k:2 * k, :k] = jq - np.eye(k)
        jac[k:2 * k, k:] = jc
        jac[2 * k, :k] = 1.0
        return c, jac

    def constraint_hessian(self, x, w):
        k = self.k
        return self.sub.quad_hess(w[k:2 * k])


class _P4:
    """Feasibility search with shared infeasibility slack ``z`` (last variable)."""

    def __init__(self, sub: PowerSubproblem):
        self.sub = sub
        self.k = sub.size
        self.n = 2 * self.k + 1
        self.budget = sub.p_max / sub.scale

    def objective(self, x):
        g = np.zeros(self.n)
        g[-1] = 1.0
        return x[-1], g, None

    def constraints(self, x):
        k, sub = self.k, self.sub
        q, chi, z = x[:k], x[k:2 * k], x[-1]
        if np.any(chi <= -1):
            return np.full(4 * k + 2, math.inf), np.zeros((4 * k + 2, self.n))
        jq, jc = sub.quad_jac(q, chi)
        c = np.concatenate([
            sub.r_min - np.log1p(chi) / LN2 - z,
            sub.quad(q, chi) - q - z,
            [q.sum() - self.budget - z, -z],
            -q,
            -chi,
        ])
        jac = np.zeros((len(c), self.n))
        jac[:k, k:2 * k] = -np.diag(1.0 / ((1 + chi) * LN2))
        jac[:k, -1] = -1.0
        jac[k:2 * k, :k] = jq - np.eye(k)
        jac[k:2 * k, k:2 * k] = jc
        jac[k:2 * k, -1] = -1.0
        jac[2 * k, :k] = 1.0
        jac[2 * k, -1] = -1.0
        jac[2 * k + 1, -1] = -1.0
        jac[2 * k + 2:3 * k + 2, :k] = -np.eye(k)
        jac[3 * k + 2:, k:2 * k] = -np.eye(k)
        return c, jac

    def constraint_hessian(self, x, w):
        k = self.k
        chi = x[k:2 * k]
        out = np.zeros((self.n, self.n))
        out[:2 * k, :2 * k] = self.sub.quad_hess(w[k:2 * k])
        out[k:2 * k, k:2 * k] += np.diag(w[:k] / ((1 + chi) ** 2 * LN2))
        return out


def p3_violation(sub: PowerSubproblem, p: np.ndarray, chi: np.ndarray) -> float:
    """Largest constraint violation of the convexified power problem at ``(p, chi)`` in watts/unitless."""
    q = p / sub.scale
    v = [
        np.max(sub.chi_min - chi, initial=-math.inf),
        np.max((sub.quad(q, chi) - q) * sub.scale, initial=-math.inf),
        p.sum() - sub.p_max,
    ]
    return float(max(v))


def solve_p3(sub: PowerSubproblem, settings: SolverSettings = SolverSettings()):
    """Maximise ``sum log2(1 + chi)`` over the convexified power subproblem.

    Starts from ``(sub.p_ref, sub.chi_ref)``; if that point is not strictly
    interior a phase-I search is run first. Returns ``(p, chi, objective)``.
    Raises :class:`InfeasibleError` when the subproblem has no strictly
    feasible point.
    """
    prob = _P3(sub)
    if sub.p_max <= 0:
        raise InfeasibleError("power budget is zero", violation=sub.chi_min)
    x0 = np.concatenate([sub.p_ref / sub.scale, sub.chi_ref])
    x0 = find_interior(prob, x0, settings, margin=1e-6)
    res = barrier_minimize(prob, x0, settings)
    p = res.x[:sub.size] * sub.scale
    chi = res.x[sub.size:]
    return p, chi, -res.objective


def solve_p4(sub: PowerSubproblem, settings: SolverSettings = SolverSettings()):
    """Minimise the shared infeasibility slack. Returns ``(p, chi, z)``.

    ``z`` is measured in bit/s/Hz for the rate rows and in units of
    ``sub.scale`` watts for the power rows.
    """
    prob = _P4(sub)
    q0 = np.maximum(sub.p_ref / sub.scale, 1e-9)
    chi0 = np.maximum(sub.chi_ref, 1e-9)
    x0 = np.concatenate([q0, chi0, [0.0]])
    c, _ = prob.constraints(x0)
    x0[-1] = max(float(np.max(c[:2 * sub.size + 1])), 0.0) + 1.0
    res = barrier_minimize(prob, x0, settings)
    k = sub.size
    return res.x[:k] * sub.scale, res.x[k:2 * k], float(res.x[-1])


# --------------------------------------------------------------------------
# reflection design: max-min slack problem


@dataclass
class ReflectionSubproblem:
    """Linearised reflection feasibility problem around ``(kt, xt)``.

    ``z`` and ``h`` are normalised by the noise amplitude so that
    ``|z e + h|^2`` is an SNR-scale gain. ``rhs`` is ``chi / p`` in the same
    units and ``pairs`` lists ``(k, kbar)`` row indices with ``kbar``
    decoded after ``k``.
    """

    z: np.ndarray
    h: np.ndarray
    kt: np.ndarray
    xt: np.ndarray
    beta: np.ndarray
    rhs: np.ndarray
    pairs: list[tuple[int, int]]
    margin: float = 0.0

    @property
    def n_elements(self) -> int:
        return self.z.shape[1]

    def affine(self):
        """Real/imag parts of ``z e + h`` as affine maps of ``[Re e, Im e]``."""
        zr, zi = self.z.real, self.z.imag
        a_re = np.hstack([zr, -zi])
        a_im = np.hstack([zi, zr])
        return a_re, self.h.real, a_im, self.h.imag


class _P6:
    """max s  s.t.  normalised linearised rows + s <= 0,  |e_m|^2 <= 1."""

    def __init__(self, sub: ReflectionSubproblem):
        self.sub = sub
        m = sub.n_elements
        self.m = m
        self.n = 2 * m + 1
        self.are, self.bre, self.aim, self.bim = sub.affine()
        lin_gain = sub.kt**2 + sub.xt**2
        rows = []
        for k, kb in sub.pairs:
            rows.append(("order", k, kb, 1.0 / max(lin_gain[k] + lin_gain[kb], 1e-300)))
        for k in range(len(sub.h)):
            rows.append(("sinr", k, k, 1.0 / max(lin_gain[k], 1e-300)))
        self.rows = rows
        # phi_k(x) = lin_gain_k + 2 kt (kappa - kt) + 2 xt (xi - xt), affine in x
        self.phi_grad = 2 * (sub.kt[:, None] * self.are + sub.xt[:, None] * self.aim)
        self.phi_const = (-lin_gain + 2 * sub.kt * self.bre + 2 * sub.xt * self.bim)

    def objective(self, x):
        g = np.zeros(self.n)
        g[-1] = -1.0
        return -x[-1], g, None

    def _gain(self, u):
        kap = self.are @ u + self.bre
        xi = self.aim @ u + self.bim
        grad = 2 * (kap[:, None] * self.are + xi[:, None] * self.aim)
        return kap**2 + xi**2, grad

    def rows_eval(self, u):
        """Unscaled row values and gradients (in u) of the linearised rows."""
        sub = self.sub
        gain, ggrad = self._gain(u)
        phi = self.phi_grad @ u + self.phi_const
        vals, grads = [], []
        for kind, k, kb, _ in self.rows:
            if kind == "order":
                vals.append(gain[k] - phi[kb] + sub.margin)
                grads.append(ggrad[k] - self.phi_grad[kb])
            else:
                vals.append(sub.beta[k] * gain[k] + sub.rhs[k] - phi[k])
                grads.append(sub.beta[k] * ggrad[k] - self.phi_grad[k])
        return np.array(vals), np.array(grads).reshape(len(vals), 2 * self.m)

    def constraints(self, x):
        m = self.m
        u, s = x[:-1], x[-1]
        vals, grads = self.rows_eval(u)
        w = np.array([r[3] for r in self.rows])
        a, b = u[:m], u[m:]
        c = np.concatenate([vals * w + s, a**2 + b**2 - 1.0])
        jac = np.zeros((len(c), self.n))
        jac[:len(vals), :-1] = grads * w[:, None]
        jac[:len(vals), -1] = 1.0
        idx = np.arange(m)
        jac[len(vals) + idx, idx] = 2 * a
        jac[len(vals) + idx, m + idx] = 2 * b
        return c, jac

    def constraint_hessian(self, x, w):
        m = self.m
        nr = len(self.rows)
        scale = np.array([r[3] for r in self.rows])
        coef = np.zeros(len(self.sub.h))
        for (kind, k, _, sc), wi in zip(self.rows, w[:nr]):
            coef[k] += wi * sc * (1.0 if kind == "order" else self.sub.beta[k])
        # Hessian of |A u + b|^2 is 2 (A_re^T A_re + A_im^T A_im) per user
        hu = 2 * ((self.are.T * coef) @ self.are + (self.aim.T * coef) @ self.aim)
        out = np.zeros((self.n, self.n))
        out[:-1, :-1] = hu
        out[np.arange(m), np.arange(m)] += 2 * w[nr:]
        out[m + np.arange(m), m + np.arange(m)] += 2 * w[nr:]
        return out


def p6_slacks(sub: ReflectionSubproblem, e: np.ndarray) -> np.ndarray:
    """Unscaled slacks (>= 0 when satisfied) of the linearised rows at ``e``."""
    prob = _P6(sub)
    vals, _ = prob.rows_eval(np.concatenate([e.real, e.imag]))
    return -vals


def solve_p6(sub: ReflectionSubproblem, e0: np.ndarray, settings: SolverSettings = SolverSettings(),
             tol: float = 1e-6) -> tuple[np.ndarray, float]:
    """Max-min-slack reflection design. Returns ``(e, min_scaled_slack)``.

    Raises :class:`InfeasibleError` when the best attainable scaled slack is
    below ``-tol``.
    """
    prob = _P6(sub)
    m = sub.n_elements
    if not prob.rows:
        return np.asarray(e0, complex).copy(), math.inf
    e0 = np.asarray(e0, complex)
    mod = np.abs(e0)
    shrink = np.where(mod > 0.999, 0.999 / np.maximum(mod, 1e-300), 1.0)
    e_start = e0 * shrink
    u0 = np.concatenate([e_start.real, e_start.imag])
    vals, _ = prob.rows_eval(u0)
    w = np.array([r[3] for r in prob.rows])
    s0 = -float(np.max(vals * w)) - 1.0
    res = barrier_minimize(prob, np.append(u0, s0), settings)
    u, s = res.x[:-1], float(res.x[-1])
    e = u[:m] + 1j * u[m:]
    if s < -tol:
        raise InfeasibleError("linearised reflection problem is infeasible", violation=-s)
    return e, s


# --------------------------------------------------------------------------
# semidefinite relaxation of the gain-sum problem


@dataclass
class SdpSolution:
    E: np.ndarray
    objective: float
    dual_objective: float
    gap: float
    iterations: int


def solve_p9(v_sum: np.ndarray, tol_gap: float = 1e-6, barrier_factor: float = 10.0,
             max_newton_iters: int = 500) -> SdpSolution:
    """Maximise ``Tr(V E)`` over ``E >= 0``, ``E[m, m] <= 1``, ``E[-1, -1] = 1``.

    Dual barrier path following; the returned gap is ``dual - primal``.
    """
    v = np.asarray(v_sum, dtype=complex)
    v = 0.5 * (v + v.conj().T)
    n = v.shape[0]
    m = n - 1
    scale = float(np.max(np.abs(np.linalg.eigvalsh(v)))) if n else 0.0
    if scale == 0.0:
        E = np.zeros((n, n), complex)
        E[-1, -1] = 1.0
        return SdpSolution(E, 0.0, 0.0, 0.0, 0)
    c = v / scale
    ineq = np.arange(m)

    def barrier(y, t):
        s = np.diag(y).astype(complex) - c
        try:
            lo = np.linalg.cholesky(s)
        except np.linalg.LinAlgError:
            return math.inf, None
        if np.any(y[ineq] <= 0):
            return math.inf, None
        logdet = 2 * np.sum(np.log(np.real(np.diag(lo))))
        return t * y.sum() - logdet - np.sum(np.log(y[ineq])), lo

    y = np.full(n, 2.0)
    t = 1.0
    iters = 0
    while True:
        while True:
            val, lo = barrier(y, t)
            linv = np.linalg.inv(lo)
            sinv = linv.conj().T @ linv
            grad = t - np.real(np.diag(sinv))
            grad[ineq] -= 1.0 / y[ineq]
            hess = np.abs(sinv) ** 2
            hess[ineq, ineq] += 1.0 / y[ineq] ** 2
            step = -np.linalg.solve(hess, grad)
            dec = float(-grad @ step)
            iters += 1
            if dec / 2 <= 1e-12 or iters >= max_newton_iters:
                break
            s = 1.0
            while s > 1e-14:
                vn, _ = barrier(y + s * step, t)
                if vn <= val - 0.25 * s * dec:
                    break
                s *= 0.5
            else:
                break
            y = y + s * step
        _, lo = barrier(y, t)
        linv = np.linalg.inv(lo)
        E = (linv.conj().T @ linv) / t
        primal = float(np.real(np.trace(c @ E)))
        dual = float(y.sum())
        gap = dual - primal
        if gap <= tol_gap * (1.0 + abs(primal)):
            break
        if iters >= max_newton_iters:
            raise ConvergenceError("SDP did not converge", best=E * 1.0, gap=gap * scale)
        t *= barrier_factor
    E = 0.5 * (E + E.conj().T)
    return SdpSolution(E, primal * scale, dual * scale, gap * scale, iters)
