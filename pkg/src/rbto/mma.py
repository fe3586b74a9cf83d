"""Method of Moving Asymptotes (Svanberg 1987) with a primal-dual subsolver.

One `mma_step` builds the separable rational approximation of the problem

    min  f(x)   s.t.  g_j(x) <= 0,  xmin <= x <= xmax

about the current iterate and solves the convex subproblem with an
interior-point Newton method. Asymptote adaptation, move limits, and the
elastic constraint formulation follow the standard published defaults.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import SubproblemError

ASY_INIT = 0.5  # initial asymptote offset, fraction of bound range
ASY_DECR = 0.7  # shrink factor on oscillation
ASY_INCR = 1.2  # expand factor on monotone progress
MOVE = 0.5  # move limit, fraction of bound range
ALBEFA = 0.1  # subproblem bound offset from asymptotes
RAA0 = 1e-5
EPSIMIN = 1e-9  # subproblem KKT tolerance
CONSTRAINT_PENALTY = 1000.0  # Svanberg's c_j for the elastic variables


@dataclass
class MmaState:
    """Mutable per-run optimizer state (iteration count, history, asymptotes)."""

    n: int
    iteration: int = 0
    xold1: np.ndarray | None = None
    xold2: np.ndarray | None = None
    low: np.ndarray = field(default_factory=lambda: np.empty(0))
    upp: np.ndarray = field(default_factory=lambda: np.empty(0))


def mma_step(
    state: MmaState,
    x: np.ndarray,
    f0: float,
    df0: np.ndarray,
    g: np.ndarray,
    dg: np.ndarray,
    xmin: np.ndarray,
    xmax: np.ndarray,
) -> np.ndarray:
    """One MMA iteration; returns the subproblem optimum within bounds.

    ``g``/``dg`` are the constraint values (shape m) and Jacobian (m, n)
    at ``x``. ``state`` is updated in place (asymptotes, history).
    """
    x = np.asarray(x, float)
    df0 = np.asarray(df0, float)
    g = np.atleast_1d(np.asarray(g, float))
    dg = np.atleast_2d(np.asarray(dg, float))
    xmin = np.broadcast_to(np.asarray(xmin, float), x.shape)
    xmax = np.broadcast_to(np.asarray(xmax, float), x.shape)
    if not (np.all(np.isfinite(df0)) and np.all(np.isfinite(dg)) and np.all(np.isfinite(g))):
        raise SubproblemError("non-finite objective or constraint data passed to MMA")

    state.iteration += 1
    n = x.size
    xrange = xmax - xmin

    if state.iteration <= 2 or state.xold1 is None or state.xold2 is None:
        low = x - ASY_INIT * xrange
        upp = x + ASY_INIT * xrange
    else:
        osc = (x - state.xold1) * (state.xold1 - state.xold2)
        factor = np.ones(n)
        factor[osc > 0] = ASY_INCR
        factor[osc < 0] = ASY_DECR
        low = x - factor * (state.xold1 - state.low)
        upp = x + factor * (state.upp - state.xold1)
        low = np.clip(low, x - 10.0 * xrange, x - 0.01 * xrange)
        upp = np.clip(upp, x + 0.01 * xrange, x + 10.0 * xrange)
    state.low, state.upp = low, upp
    state.xold2, state.xold1 = state.xold1, x.copy()

    alfa = np.maximum.reduce([low + ALBEFA * (x - low), x - MOVE * xrange, xmin])
    beta = np.minimum.reduce([upp - ALBEFA * (upp - x), x + MOVE * xrange, xmax])

    ux1 = upp - x
    xl1 = x - low
    xmami_inv = 1.0 / np.maximum(xrange, 1e-5)

    p0 = np.maximum(df0, 0.0)
    q0 = np.maximum(-df0, 0.0)
    pq0 = 0.001 * (p0 + q0) + RAA0 * xmami_inv
    p0 = (p0 + pq0) * ux1**2
    q0 = (q0 + pq0) * xl1**2

    pj = np.maximum(dg, 0.0)
    qj = np.maximum(-dg, 0.0)
    pqj = 0.001 * (pj + qj) + RAA0 * xmami_inv[None, :]
    pj = (pj + pqj) * ux1[None, :] ** 2
    qj = (qj + pqj) * xl1[None, :] ** 2
    b = pj @ (1.0 / ux1) + qj @ (1.0 / xl1) - g

    return _subsolve(low, upp, alfa, beta, p0, q0, pj, qj, b)


def _subsolve(low, upp, alfa, beta, p0, q0, pj, qj, b) -> np.ndarray:
    """Interior-point Newton solve of the MMA subproblem.

    Minimizes sum(p0/(upp-x) + q0/(x-low)) + a0*z + sum(c*y + 0.5*y^2)
    subject to the rational constraints, following Svanberg's reference
    subsolver. Runs the barrier parameter down to EPSIMIN.
    """
    m = b.size
    n = alfa.size
    a0 = 1.0
    a = np.zeros(m)
    c = np.full(m, CONSTRAINT_PENALTY)
    d = np.ones(m)

    epsi = 1.0
    x = 0.5 * (alfa + beta)
    y = np.ones(m)
    z = 1.0
    lam = np.ones(m)
    xsi = np.maximum(1.0 / (x - alfa), 1.0)
    eta = np.maximum(1.0 / (beta - x), 1.0)
    mu = np.maximum(1.0, 0.5 * c)
    zet = 1.0
    s = np.ones(m)

    def residuals(x, y, z, lam, xsi, eta, mu, zet, s, epsi):
        ux1 = upp - x
        xl1 = x - low
        plam = p0 + pj.T @ lam
        qlam = q0 + qj.T @ lam
        gvec = pj @ (1.0 / ux1) + qj @ (1.0 / xl1)
        rex = plam / ux1**2 - qlam / xl1**2 - xsi + eta
        rey = c + d * y - mu - lam
        rez = a0 - zet - a @ lam
        relam = gvec - a * z - y + s - b
        rexsi = xsi * (x - alfa) - epsi
        reeta = eta * (beta - x) - epsi
        remu = mu * y - epsi
        rezet = zet * z - epsi
        res = lam * s - epsi
        full = np.concatenate(
            [rex, rey, [rez], relam, rexsi, reeta, remu, [rezet], res]
        )
        return full, float(np.linalg.norm(full)), float(np.max(np.abs(full)))

    while epsi > EPSIMIN:
        _, resnorm, resmax = residuals(x, y, z, lam, xsi, eta, mu, zet, s, epsi)
        for _ in range(200):
            if resmax <= 0.9 * epsi:
                break
            ux1 = upp - x
            xl1 = x - low
            plam = p0 + pj.T @ lam
            qlam = q0 + qj.T @ lam
            gvec = pj @ (1.0 / ux1) + qj @ (1.0 / xl1)
            gg = pj / ux1[None, :] ** 2 - qj / xl1[None, :] ** 2

            delx = plam / ux1**2 - qlam / xl1**2 - epsi / (x - alfa) + epsi / (beta - x)
            dely = c + d * y - lam - epsi / y
            delz = a0 - a @ lam - epsi / z
            dellam = gvec - a * z - y - b + epsi / lam

            diagx = 2 * (plam / ux1**3 + qlam / xl1**3) + xsi / (x - alfa) + eta / (beta - x)
            diagy = d + mu / y
            diaglamyi = s / lam + 1.0 / diagy

            if m < n:
                blam = dellam + dely / diagy - gg @ (delx / diagx)
                aa = np.diag(diaglamyi) + (gg / diagx[None, :]) @ gg.T
                aa = np.block([[aa, a[:, None]], [a[None, :], -zet / z]])
                sol = scipy.linalg.solve(aa, np.concatenate([blam, [delz]]))
                dlam = sol[:m]
                dz = sol[m]
                dx = -(delx + gg.T @ dlam) / diagx
            else:
                dellamyi = dellam + dely / diagy
                axx = np.diag(diagx) + (gg / diaglamyi[:, None]).T @ gg
                azz = zet / z + a @ (a / diaglamyi)
                axz = -gg.T @ (a / diaglamyi)
                bx = delx + gg.T @ (dellamyi / diaglamyi)
                bz = delz - a @ (dellamyi / diaglamyi)
                aa = np.block([[axx, axz[:, None]], [axz[None, :], azz]])
                sol = scipy.linalg.solve(aa, np.concatenate([-bx, [-bz]]))
                dx = sol[:n]
                dz = sol[n]
                dlam = (gg @ dx) / diaglamyi - dz * (a / diaglamyi) + dellamyi / diaglamyi

            dy = -dely / diagy + dlam / diagy
            dxsi = -xsi + epsi / (x - alfa) - (xsi * dx) / (x - alfa)
            deta = -eta + epsi / (beta - x) + (eta * dx) / (beta - x)
            dmu = -mu + epsi / y - (mu * dy) / y
            dzet = -zet + epsi / z - zet * dz / z
            ds = -s + epsi / lam - (s * dlam) / lam

            xx = np.concatenate([y, [z], lam, xsi, eta, mu, [zet], s])
            dxx = np.concatenate([dy, [dz], dlam, dxsi, deta, dmu, [dzet], ds])
            step = max(
                np.max(-1.01 * dxx / xx),
                np.max(-1.01 * dx / (x - alfa)),
                np.max(1.01 * dx / (beta - x)),
                1.0,
            )
            steg = 1.0 / step

            old = (x.copy(), y.copy(), z, lam.copy(), xsi.copy(), eta.copy(), mu.copy(), zet, s.copy())
            resnew = 2 * resnorm
            for _ in range(50):
                if resnew <= resnorm:
                    break
                x = old[0] + steg * dx
                y = old[1] + steg * dy
                z = old[2] + steg * dz
                lam = old[3] + steg * dlam
                xsi = old[4] + steg * dxsi
                eta = old[5] + steg * deta
                mu = old[6] + steg * dmu
                zet = old[7] + steg * dzet
                s = old[8] + steg * ds
                _, resnew, resmax = residuals(x, y, z, lam, xsi, eta, mu, zet, s, epsi)
                steg *= 0.5
            resnorm = resnew
        epsi *= 0.1

    if not np.all(np.isfinite(x)):
        worst = int(np.argmax(lam)) if m else -1
        raise SubproblemError("MMA subproblem solve diverged", constraint_index=worst)
    return x
