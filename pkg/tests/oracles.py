"""Reference computations written from first principles, independent of the package.

Nothing here imports ``degradation_doe``; every quantity is computed by the
most direct route (explicit loops over units, dense matrices, generic
optimizers, numerical differentiation).
"""
import math

import numpy as np
from scipy import optimize, stats


def f_straight(t):
    t = np.atleast_1d(np.asarray(t, dtype=float))
    return np.column_stack([np.ones_like(t), t])


def sigma_gamma_sd(s1, s2, rho):
    return np.array([[s1 * s1, rho * s1 * s2], [rho * s1 * s2, s2 * s2]])


def unit_covariance(times, Sg, s_eps):
    Z = f_straight(times)
    return Z @ Sg @ Z.T + s_eps**2 * np.eye(len(times))


def dense_beta_information(f1_rows, times, Sg, s_eps, weights=None):
    """Weighted sum over units of ``X_i' V^-1 X_i`` with ``X_i = f1(x_i)' kron F2`` built row by row."""
    F2 = f_straight(times)
    V = unit_covariance(times, Sg, s_eps)
    Vinv = np.linalg.inv(V)
    p = len(f1_rows[0]) * F2.shape[1]
    M = np.zeros((p, p))
    if weights is None:
        weights = np.full(len(f1_rows), 1.0 / len(f1_rows))
    for f1, w in zip(f1_rows, weights):
        X = np.array([[f1[r] * F2[j, s] for r in range(len(f1)) for s in range(F2.shape[1])]
                      for j in range(len(times))])
        M += w * (X.T @ Vinv @ X)
    return M


def fisher_sd_corr_fd(times, theta, h=1e-6):
    """Per-unit Fisher information for ``(s1, s2, rho, s_eps)`` with numerically differentiated ``V``."""
    def V(th):
        return unit_covariance(times, sigma_gamma_sd(*th[:3]), th[3])

    th = np.asarray(theta, dtype=float)
    Vi = np.linalg.inv(V(th))
    dV = []
    for a in range(4):
        e = np.zeros(4)
        e[a] = h
        dV.append((V(th + e) - V(th - e)) / (2 * h))
    return np.array([[0.5 * np.trace(Vi @ A @ Vi @ B) for B in dV] for A in dV])


def h_straight(t, d1, d2, Sg, y0):
    return (d1 + d2 * t - y0) / math.sqrt(Sg[0, 0] + 2 * Sg[0, 1] * t + Sg[1, 1] * t * t)


def quantile_brentq(d1, d2, Sg, y0, alpha, t_hi=1e6):
    z = stats.norm.ppf(alpha)
    return optimize.brentq(lambda t: h_straight(t, d1, d2, Sg, y0) - z, 0.0, t_hi, xtol=1e-14, rtol=1e-14)


def delta_method_avar(f1u, f1_rows, times, beta, theta, y0, alpha, weights=None, h=1e-6):
    """``grad' M_theta^-1 grad`` with the quantile gradient by central differences."""
    f1u = np.asarray(f1u, dtype=float)
    beta = np.asarray(beta, dtype=float)
    p1 = f1u.size

    def tq(b, th):
        B = b.reshape(p1, 2)
        d = f1u @ B
        return quantile_brentq(d[0], d[1], sigma_gamma_sd(*th[:3]), y0, alpha)

    th = np.asarray(theta, dtype=float)
    g = []
    for a in range(beta.size):
        e = np.zeros(beta.size)
        e[a] = h
        g.append((tq(beta + e, th) - tq(beta - e, th)) / (2 * h))
    for a in range(4):
        e = np.zeros(4)
        e[a] = h
        g.append((tq(beta, th + e) - tq(beta, th - e)) / (2 * h))
    g = np.array(g)
    Mb = dense_beta_information(f1_rows, times, sigma_gamma_sd(*th[:3]), th[3], weights)
    Ms = fisher_sd_corr_fd(times, th)
    M = np.zeros((beta.size + 4, beta.size + 4))
    M[:beta.size, :beta.size] = Mb
    M[beta.size:, beta.size:] = Ms
    return float(g @ np.linalg.solve(M, g))


def c_optimal_weights(F, c, cap=None, w0=None):
    """Minimize ``c' M(w)^-1 c`` over the (capped) simplex with SLSQP."""
    F = np.asarray(F, dtype=float)
    c = np.asarray(c, dtype=float)
    N = F.shape[0]
    ub = 1.0 if cap is None else cap

    def crit(w):
        M = (F * w[:, None]).T @ F + 1e-14 * np.eye(F.shape[1])
        return float(c @ np.linalg.solve(M, c))

    x0 = np.full(N, 1.0 / N) if w0 is None else np.asarray(w0, dtype=float)
    res = optimize.minimize(crit, x0, method="SLSQP", bounds=[(0.0, ub)] * N,
                            constraints=[{"type": "eq", "fun": lambda w: w.sum() - 1.0}],
                            options={"ftol": 1e-14, "maxiter": 2000})
    return res.x, res.fun


def two_point_extrapolation(x_u):
    """Weight at the upper end and criterion of the optimal design on [0, 1] for ``x_u < 0``."""
    a = abs(x_u)
    return a / (1 + 2 * a), (1 + 2 * a) ** 2


def uniform_m_criterion(m, x_u):
    x = np.linspace(0.0, 1.0, m)
    F = f_straight(x)
    M = F.T @ F / m
    c = np.array([1.0, x_u])
    return float(c @ np.linalg.solve(M, c))


def continuous_uniform_criterion(x_u):
    # moments of U[0, 1]: E x = 1/2, E x^2 = 1/3
    M = np.array([[1.0, 0.5], [0.5, 1.0 / 3.0]])
    c = np.array([1.0, x_u])
    return float(c @ np.linalg.solve(M, c))


def weighted_two_point_pi(t, s0, s1):
    """Weight at ``t = 1`` minimizing the criterion for ``f2(t)/sigma(t)`` on ``{0, 1}``."""
    c = np.array([1.0, t])

    def crit(pi):
        M = (1 - pi) * np.outer([1, 0], [1, 0]) / s0**2 + pi * np.outer([1, 1], [1, 1]) / s1**2
        return float(c @ np.linalg.solve(M, c))

    return optimize.minimize_scalar(crit, bounds=(1e-9, 1 - 1e-9), method="bounded",
                                    options={"xatol": 1e-12}).x
