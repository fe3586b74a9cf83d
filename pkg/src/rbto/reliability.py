"""Inverse reliability analysis: minimize the limit state on the beta-sphere.

The search is the Hybrid Mean Value iteration, alternating advanced-mean-value
steps with a conjugate (three-direction) step whenever the convexity
indicator flags oscillation. Standard-normal and physical KL coordinates
coincide here (independent standard normal variables), so the transform is
an explicit identity seam.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import chaos
from .chaos import ChaosSurrogate
from .errors import InvalidParameterError

logger = logging.getLogger(__name__)

HMV_TOL = 1e-6
HMV_MAX_ITER = 200


@dataclass
class LimitState:
    """Performance margin g(psi) = u0 - u_hat(psi) for one displacement limit."""

    surrogate: ChaosSurrogate
    u_max: float

    def __post_init__(self):
        if self.u_max <= 0:
            raise InvalidParameterError(f"allowable displacement must be > 0, got {self.u_max}")

    @property
    def dim(self) -> int:
        return self.surrogate.basis.n

    def value(self, psi: np.ndarray) -> float:
        return self.u_max - chaos.evaluate(self.surrogate, psi)

    def grad(self, psi: np.ndarray) -> np.ndarray:
        return -chaos.gradient(self.surrogate, psi)


@dataclass
class MppResult:
    """Most probable point on the beta-sphere and the search trace."""

    psi: np.ndarray
    xi: np.ndarray
    g_value: float
    iterations: int
    modes: list[str] = field(default_factory=list)
    converged: bool = True


def mpp_to_physical(psi: np.ndarray) -> np.ndarray:
    """Standard-normal to physical KL coordinates (identity for Gaussian KL)."""
    return np.array(psi, float, copy=True)


def physical_to_standard(xi: np.ndarray) -> np.ndarray:
    """Inverse seam of mpp_to_physical; also the identity."""
    return np.array(xi, float, copy=True)


def _hmv_iterate(limit_state: LimitState, beta: float, psi0: np.ndarray) -> MppResult:
    """Plain HMV fixed-point iteration from one start; iterates stay on the sphere."""
    modes: list[str] = []
    dirs: list[np.ndarray] = []
    psi = psi0
    best_psi = None
    best_g = np.inf
    converged = False
    iterations = 0

    for iterations in range(1, HMV_MAX_ITER + 1):
        grad = limit_state.grad(psi)
        norm = np.linalg.norm(grad)
        if norm == 0.0:
            logger.warning("zero limit-state gradient at iterate; perturbing first axis")
            psi = psi.copy()
            psi[0] += 1e-6
            grad = limit_state.grad(psi)
            norm = np.linalg.norm(grad)
            if norm == 0.0:
                break
        ndir = grad / norm
        dirs.append(ndir)
        if len(dirs) >= 3:
            n3, n2, n1 = dirs[-1], dirs[-2], dirs[-3]
            zeta = float(np.dot(n3 - n2, n2 - n1))
            if zeta <= 0.0:
                step_dir = n3 + n2 + n1
                step_norm = np.linalg.norm(step_dir)
                if step_norm > 0:
                    ndir = step_dir / step_norm
                    modes.append("CMV")
                else:
                    modes.append("AMV")
            else:
                modes.append("AMV")
        else:
            modes.append("AMV")
        psi_new = -beta * ndir
        g_new = limit_state.value(psi_new)
        if g_new < best_g:
            best_g = g_new
            best_psi = psi_new
        if np.linalg.norm(psi_new - psi) < HMV_TOL:
            psi = psi_new
            converged = True
            break
        psi = psi_new

    if converged:
        final_psi, final_g = psi, limit_state.value(psi)
    else:
        final_psi, final_g = best_psi, best_g
    return MppResult(
        psi=final_psi,
        xi=mpp_to_physical(final_psi),
        g_value=float(final_g),
        iterations=iterations,
        modes=modes,
        converged=converged,
    )


def _circle_sweep(limit_state: LimitState, beta: float, n_coarse: int = 4096):
    """Brute-force global minimum of g on the circle (n = 2 only).

    Coarse vectorized sweep followed by a bounded scalar polish around the
    best angle.
    """
    from scipy.optimize import minimize_scalar

    theta = np.linspace(0.0, 2 * np.pi, n_coarse, endpoint=False)
    pts = beta * np.stack([np.cos(theta), np.sin(theta)], axis=1)
    vals = limit_state.u_max - chaos.evaluate_batch(limit_state.surrogate, pts)
    i = int(np.argmin(vals))
    width = 2 * np.pi / n_coarse

    def g_of(t):
        return limit_state.value(beta * np.array([np.cos(t), np.sin(t)]))

    res = minimize_scalar(
        g_of, bounds=(theta[i] - width, theta[i] + width), method="bounded",
        options={"xatol": 1e-12},
    )
    t = float(res.x) if res.fun < vals[i] else float(theta[i])
    psi = beta * np.array([np.cos(t), np.sin(t)])
    return psi, limit_state.value(psi)


def hmv_search(
    limit_state: LimitState,
    beta: float,
    psi0: np.ndarray | None = None,
) -> MppResult:
    """Find argmin of g on the sphere ||psi|| = beta.

    Runs the HMV iteration from the given start. For two variables, a
    brute-force circle sweep guards the result: if the sweep finds a lower
    basin (or HMV stalled at the cap), HMV restarts from the sweep point and
    the best outcome wins. Every returned point lies on the sphere.
    """
    if beta < 0:
        raise InvalidParameterError(f"beta must be >= 0, got {beta}")
    n = limit_state.dim
    psi = np.zeros(n) if psi0 is None else np.asarray(psi0, float).copy()
    if psi.shape != (n,):
        raise InvalidParameterError(f"psi0 must have length {n}")
    if beta == 0.0:
        origin = np.zeros(n)
        return MppResult(
            psi=origin,
            xi=mpp_to_physical(origin),
            g_value=limit_state.value(origin),
            iterations=0,
        )

    result = _hmv_iterate(limit_state, beta, psi)

    if n == 2:
        sweep_psi, sweep_g = _circle_sweep(limit_state, beta)
        if not result.converged or sweep_g < result.g_value - 1e-9:
            if not result.converged:
                logger.warning("HMV hit the iteration cap; engaging sweep fallback")
            else:
                logger.warning("HMV converged to a non-global basin; sweep fallback")
            retry = _hmv_iterate(limit_state, beta, sweep_psi.copy())
            candidates = [result, retry]
            if not retry.converged or sweep_g < retry.g_value - 1e-9:
                candidates.append(
                    MppResult(
                        psi=sweep_psi,
                        xi=mpp_to_physical(sweep_psi),
                        g_value=float(sweep_g),
                        iterations=result.iterations + retry.iterations,
                        modes=["SWEEP"],
                        converged=True,
                    )
                )
            result = min(candidates, key=lambda r: (not r.converged, r.g_value))
    elif not result.converged:
        # deterministic multi-start fallback for n > 2
        logger.warning("HMV hit the iteration cap; multi-start fallback")
        candidates = [result]
        for axis in range(n):
            for sign in (1.0, -1.0):
                start = np.zeros(n)
                start[axis] = sign * beta
                candidates.append(_hmv_iterate(limit_state, beta, start))
        result = min(candidates, key=lambda r: (not r.converged, r.g_value))
    return result
