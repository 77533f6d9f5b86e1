"""Exact stochastic Green's function of the linear collapse equation.

The kernel reads

    G_t(x, y) = K exp[-alpha/2 (x^2 + y^2) + beta x y + abar x + bbar y + cbar]

with deterministic ``K, alpha, beta`` and path functionals ``abar, bbar,
cbar``.  Hyperbolic functions of ``upsilon t`` are always evaluated in forms
scaled by ``exp(-upsilon t)`` so that long times neither overflow nor lose
precision.

Noise convention
----------------
A sampled path is interpreted as the piecewise-linear interpolation of its
grid values (rule ``"linear"``).  For such a path the linear equation is an
ordinary differential equation and the kernel is its exact propagator, so
every pathway driven by the same increments (kernel, boost frame, Gaussian
parameters, split-step grid) converges to one and the same solution.  The
left-endpoint Ito sum is available as rule ``"left"``.
"""

from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, KernelOverflowError, NumericError
from .params import DerivedConstants, PhysParams, derive_constants
from .paths import WienerPath
from .state import GridSpec, GridState

RULES = ("linear", "left")
# Re(upsilon) * (t - tau) stays below this inside one rescaling chunk.
_CHUNK_EXPONENT = 200.0
# Below this value of omega t the moduli use power series.
_SERIES_SWITCH = 0.5


@dataclass(frozen=True)
class KernelCoefficients:
    K: complex
    alpha: complex
    beta: complex
    abar: complex
    bbar: complex
    cbar: complex
    t: float
    log_K: complex

    @property
    def is_deterministic(self) -> bool:
        return self.abar == 0 and self.bbar == 0 and self.cbar == 0


@dataclass(frozen=True)
class KernelModuli:
    p: float
    q: float
    pbar: float
    qbar: float
    t: float


@dataclass(frozen=True)
class FactorizedKernel:
    alpha_tilde: complex
    a_tilde: complex
    c_tilde: complex
    alpha: complex
    beta: complex
    bbar: complex

    def y_map(self, x):
        """Centre Y^x_t = (beta x + bbar)/alpha of the y-Gaussian."""
        return (self.beta * np.asarray(x) + self.bbar) / self.alpha


@dataclass(frozen=True)
class BoostCoefficients:
    b: complex
    c: complex
    theta: complex
    t: float


# ----------------------------------------------------------- hyperbolics

def _check_t(t):
    t = np.asarray(t, dtype=float)
    if np.any(~(t > 0)):
        raise DomainError("kernel is singular at t <= 0")
    return t


def log_sinh(w):
    """log sinh(w) for Re w > 0, continuous along rays from the origin."""
    w = np.asarray(w, dtype=complex)
    return w + np.log(-np.expm1(-2.0 * w)) - math.log(2.0)


def coth_stable(w):
    w = np.asarray(w, dtype=complex)
    return (1.0 + np.exp(-2.0 * w)) / (-np.expm1(-2.0 * w))


def inv_sinh_stable(w):
    w = np.asarray(w, dtype=complex)
    return 2.0 * np.exp(-w) / (-np.expm1(-2.0 * w))


def deterministic_coeffs(t, d: DerivedConstants):
    """(K, alpha, beta) at time ``t``; ``t`` may be an array."""
    t = _check_t(t)
    lk = log_k(t, d)
    w = d.upsilon * t
    alpha = d.alpha_inf * coth_stable(w)
    beta = d.alpha_inf * inv_sinh_stable(w)
    # Re(alpha) ~ t is a tiny part of |alpha| ~ 1/t at small times; the
    # power series of the moduli keep every component to full precision.
    x = d.omega * t
    small = x < _SERIES_SWITCH
    if np.any(small):
        s_minus, s_plus, c_minus, q_num, qb_num = _series_moduli(np.where(small, x, 0.1))
        f = 2.0 * d.lambda_ / d.omega
        alpha = np.where(small, f * (s_minus - 1j * s_plus) / c_minus, alpha)
        beta = np.where(small, 2.0 * f * (q_num - 1j * qb_num) / c_minus, beta)
    if t.ndim == 0:
        return complex(np.exp(lk)), complex(alpha), complex(beta)
    return np.exp(lk), alpha, beta


def log_k(t, d: DerivedConstants):
    """log K_t on the branch with K_t ~ sqrt(lambda/(pi upsilon^2 t)) as t -> 0.

    ``log_sinh`` has no branch cut for Re(upsilon t) > 0, which makes the
    square root continuous in ``t`` without phase unwrapping.
    """
    t = _check_t(t)
    return 0.5 * (math.log(d.lambda_ / math.pi) - cmath.log(d.upsilon) - log_sinh(d.upsilon * t))


def _series_moduli(x: float):
    """Numerators and common denominator of p, q, pbar, qbar by power series."""
    s_minus = 0.0  # sinh x - sin x = 2 sum x^(4j+3)/(4j+3)!
    s_plus = 0.0  # sinh x + sin x = 2 sum x^(4j+1)/(4j+1)!
    c_minus = 0.0  # cosh x - cos x = 2 sum x^(4j+2)/(4j+2)!
    q_num = 0.0  # sinh u cos u - cosh u sin u = sum (-4)^j u^(4j-1)/(4j-1)!, u = x/2
    qb_num = 0.0  # sinh u cos u + cosh u sin u = sum (-4)^j u^(4j+1)/(4j+1)! * 2 (j >= 0)
    u = 0.5 * x
    for j in range(12):
        s_minus += 2.0 * x ** (4 * j + 3) / math.factorial(4 * j + 3)
        s_plus += 2.0 * x ** (4 * j + 1) / math.factorial(4 * j + 1)
        c_minus += 2.0 * x ** (4 * j + 2) / math.factorial(4 * j + 2)
        q_num += (-4.0) ** (j + 1) * u ** (4 * j + 3) / math.factorial(4 * j + 3)
        qb_num += 2.0 * (-4.0) ** j * u ** (4 * j + 1) / math.factorial(4 * j + 1)
    return s_minus, s_plus, c_minus, q_num, qb_num


def kernel_moduli(t: float, d: DerivedConstants) -> KernelModuli:
    t = float(_check_t(t))
    x = d.omega * t
    if x < _SERIES_SWITCH:
        s_minus, s_plus, c_minus, q_num, qb_num = _series_moduli(x)
        return KernelModuli(s_minus / c_minus, q_num / c_minus, s_plus / c_minus, qb_num / c_minus, t)
    # multiply numerators and denominator by 2 exp(-x)
    e1 = math.exp(-x)
    e2 = e1 * e1
    den = 1.0 + e2 - 2.0 * e1 * math.cos(x)
    p = (1.0 - e2 - 2.0 * e1 * math.sin(x)) / den
    pbar = (1.0 - e2 + 2.0 * e1 * math.sin(x)) / den
    # sinh u cos u -+ cosh u sin u scaled by 2 exp(-x), u = x/2
    eh = math.exp(-0.5 * x)
    u = 0.5 * x
    sh = eh * (1.0 - e1)  # 2 sinh(u) exp(-x)
    ch = eh * (1.0 + e1)
    q = (sh * math.cos(u) - ch * math.sin(u)) / den
    qbar = (sh * math.cos(u) + ch * math.sin(u)) / den
    return KernelModuli(p, q, pbar, qbar, t)


def abs_k_squared(t: float, d: DerivedConstants) -> float:
    """|K_t|^2 = 2 lambda / (pi omega sqrt(cosh wt - cos wt))."""
    x = d.omega * float(_check_t(t))
    if x < _SERIES_SWITCH:
        c_minus = _series_moduli(x)[2]
        return 2.0 * d.lambda_ / (math.pi * d.omega * math.sqrt(c_minus))
    e1 = math.exp(-x)
    c_scaled = 0.5 * (1.0 + e1 * e1 - 2.0 * e1 * math.cos(x))  # (cosh x - cos x) e^-x
    return 2.0 * d.lambda_ / (math.pi * d.omega) * math.exp(-0.5 * x) / math.sqrt(c_scaled)


def nsa_row_norm_sq(x, t: float, d: DerivedConstants):
    """Closed form of the integral over y of |G^NSA_t(x, y)|^2."""
    x = np.asarray(x, dtype=float)
    m = kernel_moduli(t, d)
    wt = d.omega * t
    if wt < _SERIES_SWITCH:
        pref = math.sqrt(2.0 * d.lambda_ / (math.pi * d.omega * _series_moduli(wt)[0]))
    else:
        e1 = math.exp(-wt)
        s_scaled = 0.5 * (1.0 - e1 * e1 - 2.0 * e1 * math.sin(wt))
        pref = math.sqrt(2.0 * d.lambda_ / (math.pi * d.omega)) * math.exp(-0.5 * wt) / math.sqrt(s_scaled)
    return pref * np.exp(-2.0 * d.lambda_ / d.omega * (m.p**2 - 4.0 * m.q**2) / m.p * x**2)


# ------------------------------------------------------ path functionals

def stochastic_series(t_grid, dxi, d: DerivedConstants, rule: str = "linear"):
    """abar, bbar, cbar on every grid point of one or many paths.

    Parameters
    ----------
    t_grid : (n+1,) array
    dxi : (..., n) array of Q-measure increments
    rule : "linear" (piecewise-linear path) or "left" (left-endpoint Ito sum)

    Returns
    -------
    abar, bbar, cbar : (..., n+1) complex arrays, zero at t = 0
    """
    if rule not in RULES:
        raise ValueError(f"rule must be one of {RULES}")
    t = np.asarray(t_grid, dtype=float)
    dxi = np.asarray(dxi, dtype=float)
    n = len(t) - 1
    if dxi.shape[-1] != n:
        raise DomainError("increments do not match the time grid")
    ups = d.upsilon
    sl = math.sqrt(d.lambda_)
    h = np.diff(t)
    linear = rule == "linear"
    abar = np.zeros(dxi.shape[:-1] + (n + 1,), dtype=complex)
    amid = np.zeros(dxi.shape[:-1] + (n,), dtype=complex)
    carry = np.zeros(dxi.shape[:-1], dtype=complex)  # running integral times exp(-upsilon tau)
    tau = 0.0
    start = 0
    span = _CHUNK_EXPONENT / ups.real
    while start < n:
        stop = int(np.searchsorted(t, tau + span, side="right")) - 1
        stop = min(max(stop, start + 1), n)
        tj, tj1, hj = t[start:stop], t[start + 1:stop + 1], h[start:stop]
        inc = dxi[..., start:stop]
        if linear:
            # exact integral of sinh(upsilon s) ds over the step, divided by dt
            w = (np.exp(ups * (tj - tau)) * np.expm1(ups * hj)
                 + np.exp(-ups * (tj + tau)) * np.expm1(-ups * hj)) / (2.0 * ups * hj)
            w_half = (np.exp(ups * (tj - tau)) * np.expm1(0.5 * ups * hj)
                      + np.exp(-ups * (tj + tau)) * np.expm1(-0.5 * ups * hj)) / (2.0 * ups * hj)
        else:
            w = 0.5 * (np.exp(ups * (tj - tau)) - np.exp(-ups * (tj + tau)))
        s = carry[..., None] + np.cumsum(w * inc, axis=-1)
        sinh_scaled = 0.5 * (np.exp(ups * (tj1 - tau)) - np.exp(-ups * (tj1 + tau)))
        abar[..., start + 1:stop + 1] = sl * s / sinh_scaled
        if linear:
            tm = tj + 0.5 * hj
            s_mid = s - w * inc + w_half * inc
            amid[..., start:stop] = sl * s_mid / (0.5 * (np.exp(ups * (tm - tau)) - np.exp(-ups * (tm + tau))))
        new_tau = t[stop]
        carry = s[..., -1] * np.exp(ups * (tau - new_tau))
        tau = new_tau
        start = stop

    pref_b = 2j * d.hbar * d.lambda_ / (d.mass * ups)
    pref_c = 0.5j * d.hbar / d.mass
    if linear:
        # int abar_s / sinh(upsilon s) ds over each step, exact for a linear path:
        #   abar_k sinh(u h)/(u sinh b) + 2 sqrt(lambda) dxi sinh^2(u h/2)/(u^2 h sinh b)
        # with b = upsilon t_{k+1}; finite at t_k = 0 where the integrand ~ s^(-1/2)
        dl = ups * h
        isb = inv_sinh_stable(ups * t[1:])
        step = (abar[..., :-1] * np.sinh(dl) / ups
                + 2.0 * sl * dxi * np.sinh(0.5 * dl) ** 2 / (ups * ups * h)) * isb
        bbar = np.zeros_like(abar)
        bbar[..., 1:] = pref_b * np.cumsum(step, axis=-1)
        # Simpson with the exact midpoint value
        a2 = abar * abar
        cstep = h / 6.0 * (a2[..., :-1] + 4.0 * amid * amid + a2[..., 1:])
        cbar = np.zeros_like(abar)
        cbar[..., 1:] = pref_c * np.cumsum(cstep, axis=-1)
    else:
        ratio = np.zeros_like(abar)
        ratio[..., 1:] = abar[..., 1:] * inv_sinh_stable(ups * t[1:])
        bbar = pref_b * _cumtrapz(ratio, h)
        cbar = pref_c * _cumtrapz(abar * abar, h)
    if not (np.all(np.isfinite(abar)) and np.all(np.isfinite(cbar))):
        raise NumericError("non-finite stochastic kernel coefficient")
    return abar, bbar, cbar


def _cumtrapz(f, h):
    out = np.zeros_like(f)
    out[..., 1:] = np.cumsum(0.5 * (f[..., 1:] + f[..., :-1]) * h, axis=-1)
    return out


def _path_index(path: WienerPath, t: float) -> int:
    if path.measure != "Q":
        raise DomainError("kernel coefficients need a Q-measure path")
    if not t > 0:
        raise DomainError("kernel is singular at t <= 0")
    k = int(np.searchsorted(path.t_grid, t * (1 - 1e-12), side="left"))
    if k > path.n_steps or abs(path.t_grid[min(k, path.n_steps)] - t) > 1e-9 * max(1.0, t):
        raise DomainError(f"t = {t} is not a grid point of the path (end {path.t_end})")
    return k


def stochastic_coeffs(path: WienerPath, t: float, d: DerivedConstants, rule: str = "linear"):
    """(abar, bbar, cbar) at grid time ``t`` of ``path``."""
    k = _path_index(path, t)
    a, b, c = stochastic_series(path.t_grid[: k + 1], path.increments[:k], d, rule)
    return complex(a[-1]), complex(b[-1]), complex(c[-1])


def kernel_coefficients(path: WienerPath, t: float, d: DerivedConstants, rule: str = "linear"):
    a, b, c = stochastic_coeffs(path, t, d, rule)
    K, alpha, beta = deterministic_coeffs(t, d)
    return KernelCoefficients(K, alpha, beta, a, b, c, float(t), complex(log_k(t, d)))


def nsa_coefficients(t: float, d: DerivedConstants) -> KernelCoefficients:
    K, alpha, beta = deterministic_coeffs(t, d)
    return KernelCoefficients(K, alpha, beta, 0j, 0j, 0j, float(t), complex(log_k(t, d)))


def coefficient_series(path: WienerPath, d: DerivedConstants, rule: str = "linear"):
    """KernelCoefficients at every positive grid time of ``path``."""
    if path.measure != "Q":
        raise DomainError("kernel coefficients need a Q-measure path")
    a, b, c = stochastic_series(path.t_grid, path.increments, d, rule)
    t = path.t_grid[1:]
    K, alpha, beta = deterministic_coeffs(t, d)
    lk = log_k(t, d)
    return [
        KernelCoefficients(complex(K[i]), complex(alpha[i]), complex(beta[i]),
                           complex(a[i + 1]), complex(b[i + 1]), complex(c[i + 1]), float(t[i]), complex(lk[i]))
        for i in range(len(t))
    ]


def factorize(coeffs: KernelCoefficients) -> FactorizedKernel:
    a = coeffs.alpha
    if a == 0:
        raise NumericError("alpha vanishes; kernel cannot be factorised")
    return FactorizedKernel(
        alpha_tilde=a - coeffs.beta**2 / a,
        a_tilde=coeffs.abar + coeffs.beta * coeffs.bbar / a,
        c_tilde=coeffs.cbar + coeffs.bbar**2 / (2.0 * a),
        alpha=a, beta=coeffs.beta, bbar=coeffs.bbar,
    )


def alpha_tilde_closed_form(t, d: DerivedConstants):
    """(2 lambda/upsilon) tanh(upsilon t)."""
    e = np.exp(-2.0 * d.upsilon * np.asarray(t, dtype=float))
    return d.alpha_inf * (1.0 - e) / (1.0 + e)


# ------------------------------------------------------ boost coefficients

def _boost_rhs(b, c, xi, p: PhysParams):
    sl = math.sqrt(p.lambda_)
    db = (c - 1j * p.hbar * sl * xi) / p.mass
    dc = 2j * p.hbar * p.lambda_ * b
    dth = (-1j * p.hbar * p.lambda_ * b * b - c * c / (2.0 * p.mass)
           + 1j * p.hbar / p.mass * sl * xi * c + p.lambda_ * p.hbar**2 * xi * xi / (2.0 * p.mass))
    return db, dc, dth


def boost_series(t_grid, xi_values, p: PhysParams):
    """Integrate (b, c, theta) with classical RK4 along piecewise-linear xi.

    ``xi_values`` has shape (..., n+1).  Returns three complex arrays of the
    same shape.
    """
    t = np.asarray(t_grid, dtype=float)
    xi = np.asarray(xi_values, dtype=float)
    if xi.shape[-1] != len(t):
        raise DomainError("xi values do not match the time grid")
    shape = xi.shape
    b = np.zeros(shape, dtype=complex)
    c = np.zeros(shape, dtype=complex)
    th = np.zeros(shape, dtype=complex)
    bk = np.zeros(shape[:-1], dtype=complex)
    ck = np.zeros_like(bk)
    tk = np.zeros_like(bk)
    for k in range(len(t) - 1):
        h = t[k + 1] - t[k]
        x0, x2 = xi[..., k], xi[..., k + 1]
        x1 = 0.5 * (x0 + x2)
        k1 = _boost_rhs(bk, ck, x0, p)
        k2 = _boost_rhs(bk + 0.5 * h * k1[0], ck + 0.5 * h * k1[1], x1, p)
        k3 = _boost_rhs(bk + 0.5 * h * k2[0], ck + 0.5 * h * k2[1], x1, p)
        k4 = _boost_rhs(bk + h * k3[0], ck + h * k3[1], x2, p)
        bk = bk + h / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        ck = ck + h / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        tk = tk + h / 6.0 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
        b[..., k + 1], c[..., k + 1], th[..., k + 1] = bk, ck, tk
    return b, c, th


def boost_coefficients(path: WienerPath, t: float, p: PhysParams) -> BoostCoefficients:
    if path.measure != "Q":
        raise DomainError("boost coefficients need a Q-measure path")
    if t == 0:
        return BoostCoefficients(0j, 0j, 0j, 0.0)
    k = _path_index(path, t)
    b, c, th = boost_series(path.t_grid[: k + 1], path.values[: k + 1], p)
    return BoostCoefficients(complex(b[-1]), complex(c[-1]), complex(th[-1]), float(t))


def boost_frame(b, c, theta, xi, p: PhysParams):
    """Asymptotic-frame parameters (xbar, kbar, gamma) from the boost coefficients."""
    d = derive_constants(p)
    b, c, theta = np.asarray(b), np.asarray(c), np.asarray(theta)
    xi = np.asarray(xi, dtype=float)
    sl = math.sqrt(p.lambda_)
    xbar = b.real + b.imag - 2.0 / (p.mass * d.omega) * c.imag + d.omega / (2.0 * sl) * xi
    kbar = p.mass * d.omega / p.hbar * b.imag + (c.real - c.imag) / p.hbar + sl * xi
    gamma = -(1 - 1j) * p.mass * d.omega / (4.0 * p.hbar) * (b * b - xbar**2) + 1j * theta / p.hbar
    return xbar, kbar, gamma


def zeta_bar(t, xbar, b, d: DerivedConstants):
    """exp(-(1+i) omega t/2) (xbar - b), finite as t -> infinity."""
    return np.exp(-d.upsilon * np.asarray(t)) * (np.asarray(xbar) - np.asarray(b))


# ------------------------------------------------------ kernel application

def _trapezoid_weights(n: int, dx: float) -> np.ndarray:
    w = np.full(n, dx)
    w[0] = w[-1] = 0.5 * dx
    return w


def log_kernel(coeffs: KernelCoefficients, x, y):
    """Full complex exponent log G_t(x, y) on the outer product of x and y."""
    x = np.asarray(x, dtype=float)[:, None]
    y = np.asarray(y, dtype=float)[None, :]
    return (coeffs.log_K - 0.5 * coeffs.alpha * (x * x + y * y) + coeffs.beta * x * y
            + coeffs.abar * x + coeffs.bbar * y + coeffs.cbar)


def apply_kernel(coeffs: KernelCoefficients, phi0: GridState, out_grid: GridSpec | None = None,
                 block: int = 1 << 22) -> GridState:
    """phi_t(x) = int dy G_t(x, y) phi0(y) by trapezoid quadrature over phi0's grid.

    The exponent is formed in log space; per output point its largest real
    part over the y grid is subtracted before exponentiation and restored in
    the state's global log-prefactor.
    """
    if not coeffs.t > 0:
        raise DomainError("kernel is singular at t <= 0")
    out_grid = out_grid or phi0.grid
    y = phi0.x
    amp = np.abs(phi0.values)
    peak = amp.max()
    if peak == 0:
        raise NumericError("initial state vanishes on its grid")
    if max(amp[0], amp[-1]) > 1e-8 * peak:
        warnings.warn("initial state does not decay at its grid edges", stacklevel=2)
    re_alpha = coeffs.alpha.real
    if re_alpha > 0 and 1.0 / math.sqrt(re_alpha) < 4.0 * phi0.dx:
        warnings.warn("y-Gaussian of the kernel is narrower than 4 grid cells", stacklevel=2)
    xo = out_grid.x
    support = y[amp > 1e-8 * peak]
    reach = max(abs(support[0]), abs(support[-1]))
    if (abs(coeffs.alpha.imag) + abs(coeffs.beta.imag)) * reach * phi0.dx > math.pi:
        warnings.warn("kernel phase is under-resolved on the y grid", stacklevel=2)

    w = _trapezoid_weights(phi0.n, phi0.dx)
    live = amp > 0
    yl = y[live]
    fy = phi0.values[live] * w[live]
    # y-only part of the exponent
    ey = -0.5 * coeffs.alpha * yl * yl + coeffs.bbar * yl
    logs = np.empty(out_grid.n, dtype=complex)
    rows = max(1, block // max(1, len(yl)))
    for s in range(0, out_grid.n, rows):
        xb = xo[s:s + rows, None]
        e = ey[None, :] + coeffs.beta * xb * yl[None, :]
        if not np.all(np.isfinite(e)):
            raise KernelOverflowError(f"non-finite kernel exponent at t = {coeffs.t}")
        m = e.real.max(axis=1)
        val = np.exp(e - m[:, None]) @ fy
        with np.errstate(divide="ignore"):
            logs[s:s + rows] = np.log(val) + m
    logs += -0.5 * coeffs.alpha * xo * xo + coeffs.abar * xo + coeffs.cbar + coeffs.log_K + phi0.log_scale
    finite = np.isfinite(logs.real)
    if not finite.any():
        raise KernelOverflowError(f"kernel image vanishes or overflows at t = {coeffs.t}")
    top = logs.real[finite].max()
    values = np.zeros(out_grid.n, dtype=complex)
    values[finite] = np.exp(logs[finite] - top)
    meta = dict(phi0.meta)
    return GridState(out_grid, values, complex(top, 0.0), coeffs.t, meta)


def kernel_row_norm_sq(coeffs: KernelCoefficients, x, y_grid: GridSpec):
    """Trapezoid value of int dy |G_t(x, y)|^2 for each x."""
    lg = log_kernel(coeffs, x, y_grid.x)
    return np.exp(2.0 * lg.real) @ _trapezoid_weights(y_grid.n, y_grid.dx)
