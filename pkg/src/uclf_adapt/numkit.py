"""Deterministic numerical kernels: ODE integration and finite differences.

Two integrators are provided.  The fixed-step classic Runge-Kutta scheme
is the default for closed-loop runs because a uniform grid gives the
Lyapunov monitors a predictable per-step error model.  The embedded
Dormand-Prince 5(4) scheme with proportional step control is offered for
long horizons; output samples on a caller grid are reconstructed by
cubic Hermite interpolation of the accepted steps, which matches the
interpolation error to the step-control error cheaply.

Everything here is a pure function over caller-owned buffers and safe
for concurrent use.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, IntegrationDivergedError, StiffnessError

__all__ = [
    "IntegratorSpec",
    "Trajectory",
    "rk4_step",
    "integrate_fixed",
    "integrate_adaptive",
    "finite_diff_gradient",
]


@dataclass(frozen=True)
class IntegratorSpec:
    """How to integrate: method, resolution, horizon.

    ``method`` is ``"rk4"`` (fixed step; ``step`` required) or ``"rk45"``
    (adaptive; tolerances required, ``output_step`` sets the sample grid).
    """

    method: str = "rk4"
    step: float = 1e-3
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    min_step: float = 1e-12
    max_step: float = 1.0
    output_step: float = 1e-2
    horizon: float = 50.0

    def validate(self):
        if self.method not in ("rk4", "rk45"):
            raise ContractError(f"unknown integrator method {self.method!r}")
        if self.horizon <= 0:
            raise ContractError("horizon must be > 0")
        if self.method == "rk4":
            if not self.step > 0:
                raise ContractError("fixed-step integrator needs step > 0")
        else:
            if not (self.rel_tol > 0 and self.abs_tol > 0):
                raise ContractError("adaptive integrator needs positive tolerances")
            if not (0 < self.min_step <= self.max_step):
                raise ContractError("need 0 < min_step <= max_step")
            if not self.output_step > 0:
                raise ContractError("output_step must be > 0")
        return self


@dataclass
class Trajectory:
    """Sampled solution: ``t`` of shape (K,), ``y`` of shape (K, n)."""

    t: np.ndarray
    y: np.ndarray

    def __len__(self):
        return len(self.t)


def rk4_step(rhs, t, y, h):
    """One classic 4th-order Runge-Kutta step from (t, y) with step h."""
    k1 = rhs(t, y)
    k2 = rhs(t + 0.5 * h, y + (0.5 * h) * k1)
    k3 = rhs(t + 0.5 * h, y + (0.5 * h) * k2)
    k4 = rhs(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate_fixed(rhs, t0, x0, spec, post_step=None):
    """Integrate ``y' = rhs(t, y)`` on a uniform grid of size ``spec.step``.

    Returns samples at ``t0 + k*step`` for k = 0..K with K = round(T/step).
    ``post_step``, when given, maps the state after each accepted step
    (used by the simulation loop for box projection of estimates).

    Raises :class:`IntegrationDivergedError` with the partial trajectory
    if the state or the rhs output stops being finite.
    """
    spec.validate()
    if spec.method != "rk4":
        raise ContractError("integrate_fixed requires a fixed-step spec")
    h = float(spec.step)
    n_steps = int(round(spec.horizon / h))
    if n_steps < 1:
        raise ContractError("horizon shorter than one step")

    y = np.asarray(x0, dtype=float).copy()
    ts = t0 + h * np.arange(n_steps + 1)
    out = np.empty((n_steps + 1, y.size))
    out[0] = y
    for k in range(n_steps):
        y = rk4_step(rhs, ts[k], y, h)
        if not np.all(np.isfinite(y)):
            partial = Trajectory(ts[: k + 1], out[: k + 1].copy())
            raise IntegrationDivergedError(ts[k], partial)
        if post_step is not None:
            y = post_step(y)
        out[k + 1] = y
    return Trajectory(ts, out)


# Dormand-Prince 5(4) tableau (FSAL).
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640,
                   -92097 / 339200, 187 / 2100, 1 / 40])


def _hermite(t, t0, y0, f0, t1, y1, f1):
    """Cubic Hermite value at t on [t0, t1] from endpoint values/slopes.

    Incremental form: exact at both endpoints and for constant data.
    """
    h = t1 - t0
    s = (t - t0) / h
    d = y1 - y0
    a = h * f0 - d
    b = d - h * f1
    return y0 + s * d + (s * (1 - s)) * (a * (1 - s) + b * s)


def integrate_adaptive(rhs, t0, x0, spec, t_eval=None):
    """Embedded RK5(4) with proportional step control.

    Samples are produced at ``t_eval`` (default: uniform grid with
    ``spec.output_step``) by cubic Hermite interpolation of the accepted
    steps.  Raises :class:`StiffnessError` on step underflow and
    :class:`IntegrationDivergedError` on non-finite state; both carry
    the samples produced so far.
    """
    spec.validate()
    if spec.method != "rk45":
        raise ContractError("integrate_adaptive requires an adaptive spec")
    t_end = t0 + spec.horizon
    if t_eval is None:
        n_out = int(round(spec.horizon / spec.output_step))
        t_eval = t0 + spec.output_step * np.arange(n_out + 1)
    t_eval = np.asarray(t_eval, dtype=float)
    if t_eval.ndim != 1 or np.any(np.diff(t_eval) <= 0):
        raise ContractError("t_eval must be strictly increasing")
    if t_eval[0] < t0 - 1e-12 or t_eval[-1] > t_end + 1e-12:
        raise ContractError("t_eval outside integration window")

    y = np.asarray(x0, dtype=float).copy()
    t = float(t0)
    f = rhs(t, y)
    if not np.all(np.isfinite(f)):
        raise IntegrationDivergedError(t, Trajectory(np.array([t]), y[None, :]))

    out = np.empty((t_eval.size, y.size))
    n_emitted = 0
    if abs(t_eval[0] - t0) <= 1e-12:
        out[0] = y
        n_emitted = 1

    def partial():
        return Trajectory(t_eval[:n_emitted].copy(), out[:n_emitted].copy())

    # initial step heuristic
    scale = spec.abs_tol + spec.rel_tol * np.abs(y)
    d0 = np.sqrt(np.mean((y / scale) ** 2))
    d1 = np.sqrt(np.mean((f / scale) ** 2))
    h = min(spec.max_step, spec.horizon / 10.0)
    if d1 > 1e-14:
        h = min(h, 0.01 * max(d0, 1e-8) / d1)
    h = max(h, spec.min_step)

    k = np.empty((7, y.size))
    while t < t_end - 1e-14:
        h = min(h, t_end - t)
        if h < spec.min_step * (1 - 1e-12):
            raise StiffnessError(t, partial())
        k[0] = f
        diverged = False
        for i in range(1, 7):
            yi = y + h * (_DP_A[i] @ k[:i])
            k[i] = rhs(t + _DP_C[i] * h, yi)
            if not np.all(np.isfinite(k[i])):
                diverged = True
                break
        if diverged:
            h *= 0.5
            if h < spec.min_step:
                raise IntegrationDivergedError(t, partial())
            continue
        y5 = y + h * (_DP_B5 @ k)
        if not np.all(np.isfinite(y5)):
            h *= 0.5
            if h < spec.min_step:
                raise IntegrationDivergedError(t, partial())
            continue
        err_vec = h * ((_DP_B5 - _DP_B4) @ k)
        scale = spec.abs_tol + spec.rel_tol * np.maximum(np.abs(y), np.abs(y5))
        err = np.sqrt(np.mean((err_vec / scale) ** 2))
        if err <= 1.0:
            t_new = t + h
            f_new = k[6] if np.all(np.isfinite(k[6])) else rhs(t_new, y5)
            # emit all requested samples inside the accepted step
            while n_emitted < t_eval.size and t_eval[n_emitted] <= t_new + 1e-12:
                te = min(t_eval[n_emitted], t_new)
                out[n_emitted] = _hermite(te, t, y, k[0], t_new, y5, f_new)
                n_emitted += 1
            t, y, f = t_new, y5, f_new
        factor = 0.9 * (1.0 / max(err, 1e-10)) ** 0.2
        h = min(spec.max_step, h * min(5.0, max(0.2, factor)))

    while n_emitted < t_eval.size:  # tail samples at t_end within round-off
        out[n_emitted] = y
        n_emitted += 1
    return Trajectory(t_eval, out)


def finite_diff_gradient(field, point, h=1e-6):
    """Central-difference gradient of a scalar field at ``point``.

    Error is O(h^2) for smooth fields; non-finite field values propagate
    as :class:`ContractError`.
    """
    if not h > 0:
        raise ContractError("perturbation h must be > 0")
    x = np.asarray(point, dtype=float)
    grad = np.empty(x.size)
    for i in range(x.size):
        e = np.zeros(x.size)
        e[i] = h
        hi = field(x + e)
        lo = field(x - e)
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise ContractError(f"field non-finite near component {i}")
        grad[i] = (hi - lo) / (2.0 * h)
    return grad
