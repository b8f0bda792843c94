"""Uncertain system models and parameter boxes.

A model is the tuple (f, Delta, B, Psi) of evaluators for dynamics of
the form

    xdot = f(x,t) - Delta(x,t)^T theta + B(x,t) [u - Psi(x,t)^T phi]

with unmatched parameters ``theta`` (p of them, entering through the
regressor ``Delta``) and optional matched parameters ``phi`` (q of
them, inside the span of ``B`` through ``Psi``).  ``Psi`` maps to
R^{q x m} so that ``Psi^T phi`` lives in the input space.

Array-capable evaluators accept a state of shape (n,) or (n, N) and
broadcast over the trailing axis; the ``scalar_*`` methods are the
same formulas on plain floats for the simulation hot path and are
tested against the array path.

Built-in models
---------------
``eq7``        3-state benchmark with four unmatched parameters
``eq7-split``  same plant, parameters 3-4 treated as matched (q = 2;
               the corresponding unmatched regressor rows are zero)
``chain3``     strict-feedback chain, two unmatched parameters
``min2``       minimal 2-state system, one unmatched parameter

Models are immutable after construction and their evaluators are pure,
so concurrent evaluation is safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ContractError

__all__ = [
    "SystemModel",
    "ParamBox",
    "TrueParams",
    "make_model",
    "MODEL_IDS",
    "default_boxes",
    "EQ7_THETA_STAR",
    "EQ7_THETA_BOX",
]


@dataclass(frozen=True)
class ParamBox:
    """Compact per-coordinate interval set for a parameter vector."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ContractError("box bounds must be 1-d arrays of equal length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ContractError("box bounds must be finite")
        if np.any(lo > hi):
            raise ContractError("box needs lo <= hi in every coordinate")

    @property
    def dim(self):
        return self.lo.size

    def width(self):
        """Per-coordinate worst-case estimation error bound (hi - lo)."""
        return self.hi - self.lo

    def contains(self, v, tol=0.0):
        v = np.asarray(v, dtype=float)
        return bool(np.all(v >= self.lo - tol) and np.all(v <= self.hi + tol))

    def clamp(self, v):
        return np.minimum(np.maximum(np.asarray(v, dtype=float), self.lo), self.hi)


@dataclass(frozen=True)
class TrueParams:
    """Simulation ground truth, hidden from the controller."""

    theta: np.ndarray
    phi: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "theta", np.atleast_1d(np.asarray(self.theta, float)))
        if self.phi is not None:
            object.__setattr__(self, "phi", np.atleast_1d(np.asarray(self.phi, float)))


def _check_vec(name, v, size):
    v = np.asarray(v, dtype=float)
    if v.shape != (size,):
        raise ContractError(f"{name} must have shape ({size},), got {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ContractError(f"{name} must be finite")
    return v


@dataclass(frozen=True)
class SystemModel:
    """Evaluatable uncertain dynamics split into (f, Delta, B, Psi)."""

    id: str
    n: int
    m: int
    p: int
    q: int
    f: Callable  # f(x, t) -> (n, ...)
    delta: Callable  # delta(x, t) -> (p, n, ...)
    b: Callable  # b(x, t) -> (n, m, ...)
    psi: Optional[Callable] = None  # psi(x, t) -> (q, m, ...)
    scalar_xdot: Callable = field(default=None, repr=False)
    scalar_delta_matvec: Callable = field(default=None, repr=False)
    scalar_psi_t_phi: Callable = field(default=None, repr=False)  # Psi^T phi, m=1
    scalar_psi_col: Callable = field(default=None, repr=False)  # Psi[:, 0], m=1
    scalar_delta_t_flat: Callable = field(default=None, repr=False)  # Delta^T flat

    def dynamics(self, x, u, theta, phi=None, t=0.0):
        """f - Delta^T theta + B (u - Psi^T phi); the Psi term needs q > 0."""
        x = _check_vec("x", x, self.n)
        u = _check_vec("u", u, self.m)
        theta = _check_vec("theta", theta, self.p)
        out = self.f(x, t) - self.delta(x, t).T @ theta
        u_eff = u
        if self.q > 0:
            phi = _check_vec("phi", phi if phi is not None else np.zeros(self.q), self.q)
            u_eff = u - self.psi(x, t).T @ phi
        elif phi is not None and np.size(phi):
            raise ContractError("model has no matched parameters but phi given")
        return out + self.b(x, t) @ u_eff

    def unmatched_regressor(self, x, t=0.0):
        """The (p, n) regressor Delta(x, t)."""
        x = _check_vec("x", x, self.n)
        return self.delta(x, t)

    def matched_regressor(self, x, t=0.0):
        """The (q, m) regressor Psi(x, t); requires a matched-split model."""
        if self.q == 0:
            raise ContractError(f"model {self.id!r} has no matched parameters")
        x = _check_vec("x", x, self.n)
        return self.psi(x, t)


def _z(c):
    """Zero array shaped like component c (works for scalars and arrays)."""
    return np.zeros_like(np.asarray(c, dtype=float))


def _eq7_f(x, t):
    x1, x2, x3 = x[0], x[1], x[2]
    return np.stack([x3 + _z(x1), -x2 + _z(x1), np.tanh(x2) + _z(x1)])


def _eq7_b(x, t):
    z = _z(x[0])
    return np.stack([np.stack([z]), np.stack([z]), np.stack([z + 1.0])])


def _eq7_delta(x, t):
    x1, x3 = x[0], x[2]
    z = _z(x1)
    return np.stack([
        np.stack([x1 + z, z, z]),
        np.stack([z, x1 * x1 + z, z]),
        np.stack([z, z, x3 + z]),
        np.stack([z, z, x1 * x1 + z]),
    ])


def _eq7_split_delta(x, t):
    x1 = x[0]
    z = _z(x1)
    return np.stack([
        np.stack([x1 + z, z, z]),
        np.stack([z, x1 * x1 + z, z]),
        np.stack([z, z, z]),
        np.stack([z, z, z]),
    ])


def _eq7_psi(x, t):
    x1, x3 = x[0], x[2]
    return np.stack([np.stack([x3 + _z(x1)]), np.stack([x1 * x1 + _z(x1)])])


def _eq7_scalar_xdot(x, u, theta, phi, t):
    x1, x2, x3 = x
    th1, th2, th3, th4 = theta
    u_eff = u
    if phi is not None:
        u_eff = u - (phi[0] * x3 + phi[1] * x1 * x1)
        return (x3 - th1 * x1,
                -x2 - th2 * x1 * x1,
                math.tanh(x2) + u_eff)
    return (x3 - th1 * x1,
            -x2 - th2 * x1 * x1,
            math.tanh(x2) - th3 * x3 - th4 * x1 * x1 + u_eff)


def _eq7_scalar_delta_matvec(x, g):
    x1, _, x3 = x
    return (x1 * g[0], x1 * x1 * g[1], x3 * g[2], x1 * x1 * g[2])


def _eq7_split_scalar_delta_matvec(x, g):
    x1 = x[0]
    return (x1 * g[0], x1 * x1 * g[1], 0.0, 0.0)


def _eq7_scalar_psi_t_phi(x, phi):
    return phi[0] * x[2] + phi[1] * x[0] * x[0]


def _eq7_scalar_psi_col(x):
    return (x[2], x[0] * x[0])


def _eq7_scalar_delta_t_flat(x):
    # Delta^T row-major, shape (n, p) flattened
    x1, _, x3 = x
    x1sq = x1 * x1
    return (x1, 0.0, 0.0, 0.0,
            0.0, x1sq, 0.0, 0.0,
            0.0, 0.0, x3, x1sq)


def _eq7_split_scalar_delta_t_flat(x):
    x1 = x[0]
    return (x1, 0.0, 0.0, 0.0,
            0.0, x1 * x1, 0.0, 0.0,
            0.0, 0.0, 0.0, 0.0)


def _chain3_scalar_delta_t_flat(x):
    return (x[0], 0.0,
            0.0, x[1],
            0.0, 0.0)


def _min2_scalar_delta_t_flat(x):
    return (x[0], 0.0)


def _chain3_f(x, t):
    x1, x2, x3 = x[0], x[1], x[2]
    return np.stack([x2 + _z(x1), x3 + _z(x1), _z(x1)])


def _chain3_delta(x, t):
    x1, x2 = x[0], x[1]
    z = _z(x1)
    return np.stack([
        np.stack([x1 + z, z, z]),
        np.stack([z, x2 + z, z]),
    ])


def _chain3_scalar_xdot(x, u, theta, phi, t):
    x1, x2, x3 = x
    return (x2 - theta[0] * x1, x3 - theta[1] * x2, u)


def _chain3_scalar_delta_matvec(x, g):
    return (x[0] * g[0], x[1] * g[1])


def _min2_f(x, t):
    x1, x2 = x[0], x[1]
    return np.stack([x2 + _z(x1), _z(x1)])


def _min2_delta(x, t):
    x1 = x[0]
    z = _z(x1)
    return np.stack([np.stack([x1 + z, z])])


def _min2_b(x, t):
    z = _z(x[0])
    return np.stack([np.stack([z]), np.stack([z + 1.0])])


def _min2_scalar_xdot(x, u, theta, phi, t):
    return (x[1] - theta[0] * x[0], u)


def _min2_scalar_delta_matvec(x, g):
    return (x[0] * g[0],)


_REGISTRY = {
    "eq7": lambda: SystemModel(
        "eq7", n=3, m=1, p=4, q=0,
        f=_eq7_f, delta=_eq7_delta, b=_eq7_b,
        scalar_xdot=_eq7_scalar_xdot,
        scalar_delta_matvec=_eq7_scalar_delta_matvec,
        scalar_delta_t_flat=_eq7_scalar_delta_t_flat,
    ),
    "eq7-split": lambda: SystemModel(
        "eq7-split", n=3, m=1, p=4, q=2,
        f=_eq7_f, delta=_eq7_split_delta, b=_eq7_b, psi=_eq7_psi,
        scalar_xdot=_eq7_scalar_xdot,
        scalar_delta_matvec=_eq7_split_scalar_delta_matvec,
        scalar_psi_t_phi=_eq7_scalar_psi_t_phi,
        scalar_psi_col=_eq7_scalar_psi_col,
        scalar_delta_t_flat=_eq7_split_scalar_delta_t_flat,
    ),
    "chain3": lambda: SystemModel(
        "chain3", n=3, m=1, p=2, q=0,
        f=_chain3_f, delta=_chain3_delta, b=_eq7_b,
        scalar_xdot=_chain3_scalar_xdot,
        scalar_delta_matvec=_chain3_scalar_delta_matvec,
        scalar_delta_t_flat=_chain3_scalar_delta_t_flat,
    ),
    "min2": lambda: SystemModel(
        "min2", n=2, m=1, p=1, q=0,
        f=_min2_f, delta=_min2_delta, b=_min2_b,
        scalar_xdot=_min2_scalar_xdot,
        scalar_delta_matvec=_min2_scalar_delta_matvec,
        scalar_delta_t_flat=_min2_scalar_delta_t_flat,
    ),
}

MODEL_IDS = tuple(sorted(_REGISTRY))

# Benchmark constants for the eq7 plant: true parameters and the box of
# allowable variations.
EQ7_THETA_STAR = np.array([-1.8, -2.4, -0.75, -2.25])
EQ7_THETA_BOX = ParamBox(lo=[-2.1, -3.0, -1.8, -5.25], hi=[1.5, 1.5, 2.25, 1.5])
# Matched-split mode: parameters 3-4 become phi.
EQ7_PHI_STAR = EQ7_THETA_STAR[2:].copy()
EQ7_PHI_BOX = ParamBox(lo=EQ7_THETA_BOX.lo[2:], hi=EQ7_THETA_BOX.hi[2:])

CHAIN3_THETA_BOX = ParamBox(lo=[-2.0, -2.0], hi=[2.0, 2.0])
MIN2_THETA_BOX = ParamBox(lo=[-2.0], hi=[2.0])


def make_model(model_id):
    """Instantiate a built-in model by id; see MODEL_IDS."""
    try:
        return _REGISTRY[model_id]()
    except KeyError:
        raise ContractError(
            f"unknown model {model_id!r}; available: {', '.join(MODEL_IDS)}"
        ) from None


def default_boxes(model_id):
    """(theta_box, phi_box) for a built-in model; phi_box is None if q=0."""
    if model_id in ("eq7",):
        return EQ7_THETA_BOX, None
    if model_id == "eq7-split":
        return EQ7_THETA_BOX, EQ7_PHI_BOX
    if model_id == "chain3":
        return CHAIN3_THETA_BOX, None
    if model_id == "min2":
        return MIN2_THETA_BOX, None
    raise ContractError(f"unknown model {model_id!r}")
