"""Control Lyapunov function families and their numerical certifier.

Each family V(x, theta_hat, t) is a parameterized energy function with
an analytic gradient in both the state and the parameter estimate, a
dissipation rate Q(x, theta_hat) and a certainty-equivalence controller
u(x, theta_hat, t) satisfying, for every admissible frozen estimate,

    dV/dt along (f - Delta^T theta_hat + B u)  <=  -Q(x, theta_hat).

The shipped families come from backstepping through the z-coordinates
of each built-in plant; the inequality above is an algebraic identity
up to a Young-inequality budget, and :func:`verify_uclf` samples it
over a compact region times the parameter box as a smoke test.

Evaluators accept states of shape (n,) or (n, N) (and estimates (p,) or
(p, N)) and broadcast; ``scalar_eval`` is the float fast path used
inside the integration loop and is tested against the array path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError

__all__ = ["UclfFamily", "make_uclf", "FAMILY_IDS", "CertificateReport", "verify_uclf"]


class UclfFamily:
    """Base class: shared bookkeeping for the shipped families."""

    id = ""
    constant_names = ()

    def __init__(self, model, theta_box, constants):
        self.model_id = model.id
        self.n = model.n
        self.p = model.p
        self.x_d = np.zeros(model.n)
        self.constants = dict(constants)
        unknown = set(self.constants) - set(self.constant_names)
        if unknown:
            raise ContractError(
                f"family {self.id!r} does not take constants {sorted(unknown)}"
            )
        for name, value in self.constants.items():
            if not value > 0:
                raise ContractError(f"family constant {name} must be > 0")

    # subclasses implement V, grad_x, grad_th, Q, control, scalar_eval

    def __repr__(self):
        cs = ", ".join(f"{k}={v:g}" for k, v in sorted(self.constants.items()))
        return f"<{type(self).__name__} {self.id} for {self.model_id} ({cs})>"


class Eq7Backstep(UclfFamily):
    """Backstepping family for the eq7 plant.

    V = x1^2/2 + (beta/2) x2^2 + z^2/2 with z = x3 - alpha(x1) and
    alpha = th1 x1 - k1 x1 - k3 x1^3.  Only th1 enters V.  The
    dissipation budget needs k3 > (beta/2) * max|theta_2|^2 over the
    box for Q to stay positive definite.

    In matched-split mode the plant's parameters 3-4 are cancelled by
    the matched adaptation, so the controller drops those terms.
    """

    id = "eq7-backstep"
    constant_names = ("k1", "k2", "k3", "beta")

    def __init__(self, model, theta_box, constants=None):
        base = {"k1": 1.0, "k2": 1.0, "k3": 5.0, "beta": 1.0}
        base.update(constants or {})
        super().__init__(model, theta_box, base)
        self.matched = model.q > 0
        self.th2_max = float(np.max(np.abs([theta_box.lo[1], theta_box.hi[1]])))

    def _z(self, x, th):
        k = self.constants
        x1 = x[0]
        alpha = th[0] * x1 - k["k1"] * x1 - k["k3"] * x1 ** 3
        return x[2] - alpha

    def V(self, x, th, t=0.0):
        k = self.constants
        z = self._z(x, th)
        return 0.5 * x[0] ** 2 + 0.5 * k["beta"] * x[1] ** 2 + 0.5 * z ** 2

    def grad_x(self, x, th, t=0.0):
        k = self.constants
        x1 = x[0]
        z = self._z(x, th)
        aprime = th[0] - k["k1"] - 3.0 * k["k3"] * x1 ** 2
        return np.stack([x1 - z * aprime, k["beta"] * x[1] + 0 * x1, z])

    def grad_th(self, x, th, t=0.0):
        z = self._z(x, th)
        g1 = -x[0] * z
        zero = 0.0 * g1
        return np.stack([g1, zero, zero, zero])

    def Q(self, x, th):
        k = self.constants
        z = self._z(x, th)
        quartic = k["k3"] - 0.5 * k["beta"] * self.th2_max ** 2
        return (k["k1"] * x[0] ** 2 + quartic * x[0] ** 4
                + 0.5 * k["beta"] * x[1] ** 2 + k["k2"] * z ** 2)

    def control(self, x, th, t=0.0):
        k = self.constants
        x1, x2, x3 = x[0], x[1], x[2]
        z = self._z(x, th)
        aprime = th[0] - k["k1"] - 3.0 * k["k3"] * x1 ** 2
        u = -np.tanh(x2) + aprime * (x3 - th[0] * x1) - x1 - k["k2"] * z
        if not self.matched:
            u = u + th[2] * x3 + th[3] * x1 ** 2
        return np.stack([u])

    def scalar_eval(self, x, th, t=0.0):
        k = self.constants
        k1, k2, k3, beta = k["k1"], k["k2"], k["k3"], k["beta"]
        x1, x2, x3 = x
        th1 = th[0]
        x1sq = x1 * x1
        z = x3 - (th1 * x1 - k1 * x1 - k3 * x1 * x1sq)
        aprime = th1 - k1 - 3.0 * k3 * x1sq
        u = -math.tanh(x2) + aprime * (x3 - th1 * x1) - x1 - k2 * z
        if not self.matched:
            u += th[2] * x3 + th[3] * x1sq
        dVdx = (x1 - z * aprime, beta * x2, z)
        dVdth = (-x1 * z, 0.0, 0.0, 0.0)
        return u, dVdx, dVdth


class Chain3Backstep(UclfFamily):
    """Backstepping family for the 3-state strict-feedback chain.

    z1 = x1, z2 = x2 - alpha1(x1, th1), z3 = x3 - alpha2(x1, x2, th),
    V = (z1^2 + z2^2 + z3^2)/2, Q = k1 z1^2 + k2 z2^2 + k3 z3^2 with
    dV/dt = -Q exactly in closed loop.  Both estimates enter V, which
    makes this the primary testbed for per-parameter gain dynamics.
    """

    id = "chain3-backstep"
    constant_names = ("k1", "k2", "k3")

    def __init__(self, model, theta_box, constants=None):
        base = {"k1": 1.0, "k2": 1.0, "k3": 1.0}
        base.update(constants or {})
        super().__init__(model, theta_box, base)

    def _coords(self, x, th):
        k = self.constants
        x1, x2, x3 = x[0], x[1], x[2]
        th1, th2 = th[0], th[1]
        z1 = x1
        z2 = x2 - (th1 - k["k1"]) * x1
        a2 = th2 * x2 + (th1 - k["k1"]) * (x2 - th1 * x1) - z1 - k["k2"] * z2
        z3 = x3 - a2
        return z1, z2, z3

    def V(self, x, th, t=0.0):
        z1, z2, z3 = self._coords(x, th)
        return 0.5 * (z1 ** 2 + z2 ** 2 + z3 ** 2)

    def Q(self, x, th):
        k = self.constants
        z1, z2, z3 = self._coords(x, th)
        return k["k1"] * z1 ** 2 + k["k2"] * z2 ** 2 + k["k3"] * z3 ** 2

    def _slopes(self, th):
        k = self.constants
        th1, th2 = th[0], th[1]
        a1 = (th1 - k["k1"]) * (k["k2"] - th1) - 1.0  # d alpha2 / d x1
        a2 = th2 + th1 - k["k1"] - k["k2"]            # d alpha2 / d x2
        return a1, a2

    def grad_x(self, x, th, t=0.0):
        k = self.constants
        z1, z2, z3 = self._coords(x, th)
        a1, a2 = self._slopes(th)
        return np.stack([z1 - z2 * (th[0] - k["k1"]) - z3 * a1,
                         z2 - z3 * a2,
                         z3])

    def grad_th(self, x, th, t=0.0):
        k = self.constants
        x1, x2 = x[0], x[1]
        _, z2, z3 = self._coords(x, th)
        d1 = x2 - 2.0 * th[0] * x1 + (k["k1"] + k["k2"]) * x1  # d alpha2 / d th1
        return np.stack([-z2 * x1 - z3 * d1, -z3 * x2])

    def control(self, x, th, t=0.0):
        k = self.constants
        x1, x2, x3 = x[0], x[1], x[2]
        _, z2, z3 = self._coords(x, th)
        a1, a2 = self._slopes(th)
        u = a1 * (x2 - th[0] * x1) + a2 * (x3 - th[1] * x2) - z2 - k["k3"] * z3
        return np.stack([u])

    def scalar_eval(self, x, th, t=0.0):
        k = self.constants
        k1, k2, k3 = k["k1"], k["k2"], k["k3"]
        x1, x2, x3 = x
        th1, th2 = th
        z1 = x1
        z2 = x2 - (th1 - k1) * x1
        a2 = th2 * x2 + (th1 - k1) * (x2 - th1 * x1) - z1 - k2 * z2
        z3 = x3 - a2
        a1s = (th1 - k1) * (k2 - th1) - 1.0
        a2s = th2 + th1 - k1 - k2
        u = a1s * (x2 - th1 * x1) + a2s * (x3 - th2 * x2) - z2 - k3 * z3
        dVdx = (z1 - z2 * (th1 - k1) - z3 * a1s, z2 - z3 * a2s, z3)
        d1 = x2 - 2.0 * th1 * x1 + (k1 + k2) * x1
        dVdth = (-z2 * x1 - z3 * d1, -z3 * x2)
        return u, dVdx, dVdth


class Min2Backstep(UclfFamily):
    """Backstepping family for the minimal 2-state plant."""

    id = "min2-backstep"
    constant_names = ("k1", "k2")

    def __init__(self, model, theta_box, constants=None):
        base = {"k1": 1.0, "k2": 1.0}
        base.update(constants or {})
        super().__init__(model, theta_box, base)

    def _z2(self, x, th):
        return x[1] - (th[0] - self.constants["k1"]) * x[0]

    def V(self, x, th, t=0.0):
        z2 = self._z2(x, th)
        return 0.5 * (x[0] ** 2 + z2 ** 2)

    def Q(self, x, th):
        k = self.constants
        z2 = self._z2(x, th)
        return k["k1"] * x[0] ** 2 + k["k2"] * z2 ** 2

    def grad_x(self, x, th, t=0.0):
        k = self.constants
        z2 = self._z2(x, th)
        return np.stack([x[0] - z2 * (th[0] - k["k1"]), z2])

    def grad_th(self, x, th, t=0.0):
        return np.stack([-self._z2(x, th) * x[0]])

    def control(self, x, th, t=0.0):
        k = self.constants
        z2 = self._z2(x, th)
        u = (th[0] - k["k1"]) * (x[1] - th[0] * x[0]) - x[0] - k["k2"] * z2
        return np.stack([u])

    def scalar_eval(self, x, th, t=0.0):
        k1, k2 = self.constants["k1"], self.constants["k2"]
        x1, x2 = x
        th1 = th[0]
        z2 = x2 - (th1 - k1) * x1
        u = (th1 - k1) * (x2 - th1 * x1) - x1 - k2 * z2
        dVdx = (x1 - z2 * (th1 - k1), z2)
        dVdth = (-z2 * x1,)
        return u, dVdx, dVdth


_FAMILIES = {
    "eq7-backstep": (Eq7Backstep, ("eq7", "eq7-split")),
    "chain3-backstep": (Chain3Backstep, ("chain3",)),
    "min2-backstep": (Min2Backstep, ("min2",)),
}

FAMILY_IDS = tuple(sorted(_FAMILIES))


def make_uclf(family_id, model, theta_box, constants=None):
    """Instantiate a family for a compatible model."""
    try:
        cls, compatible = _FAMILIES[family_id]
    except KeyError:
        raise ContractError(
            f"unknown uclf family {family_id!r}; available: {', '.join(FAMILY_IDS)}"
        ) from None
    if model.id not in compatible:
        raise ContractError(
            f"family {family_id!r} fits models {compatible}, not {model.id!r}"
        )
    return cls(model, theta_box, constants)


@dataclass
class CertificateReport:
    """Result of sampling the Lyapunov-family conditions over a grid.

    ``min_margin`` is the binding margin: the smaller of the sampled
    dissipation surplus (-Vdot - Q) and the sampled dissipation rate Q
    itself (which must be nonnegative for the certificate to mean
    anything).  ``passed`` requires both that and V >= 0 within ``tol``.
    """

    family_id: str
    model_id: str
    passed: bool
    min_margin: float
    tol: float
    n_samples: int
    min_dissipation: float
    min_q: float
    min_v: float
    worst_x: np.ndarray
    worst_theta: np.ndarray
    worst_kind: str

    def summary(self):
        status = "PASS" if self.passed else "FAIL"
        pt = ", ".join(f"{v:.3g}" for v in self.worst_x)
        th = ", ".join(f"{v:.3g}" for v in self.worst_theta)
        return (f"{status} {self.family_id} on {self.model_id}: "
                f"min margin {self.min_margin:.3e} ({self.worst_kind}) over "
                f"{self.n_samples} samples at x=({pt}), theta_hat=({th})")


def verify_uclf(family, model, theta_box, x_range=(-3.0, 3.0),
                x_points=9, th_points=5, tol=1e-9, t=0.0):
    """Sample the family's certificate over a state-region x box grid.

    At every grid point the certainty-equivalence closed loop
    (theta = theta_hat, u = u_theta_hat) is evaluated and the margins
    -Vdot - Q, Q and V are recorded.  The certificate passes iff the
    minimum of all three stays above ``-tol``.  Sampling is a smoke
    test of the symbolic derivation, not a global proof.
    """
    if family.model_id != model.id:
        raise ContractError("family was built for a different model")
    axes = [np.linspace(x_range[0], x_range[1], x_points)] * model.n
    axes += [np.linspace(theta_box.lo[i], theta_box.hi[i], th_points)
             for i in range(model.p)]
    mesh = np.meshgrid(*axes, indexing="ij")
    flat = [m.reshape(-1) for m in mesh]
    X = np.stack(flat[:model.n])
    TH = np.stack(flat[model.n:])
    n_samples = X.shape[1]

    u = family.control(X, TH, t)
    xdot = (model.f(X, t)
            - np.einsum("pnk,pk->nk", model.delta(X, t), TH)
            + np.einsum("nmk,mk->nk", model.b(X, t), u))
    vdot = np.sum(family.grad_x(X, TH, t) * xdot, axis=0)
    q = family.Q(X, TH)
    v = family.V(X, TH, t)
    diss = -vdot - q

    margin = np.minimum(diss, q)
    i_margin = int(np.argmin(margin))
    i_diss = int(np.argmin(diss))
    i_q = int(np.argmin(q))
    i_v = int(np.argmin(v))
    kind = "dissipation" if diss[i_margin] <= q[i_margin] else "q-positivity"
    min_margin = float(margin[i_margin])
    min_v = float(v[i_v])
    if min_v < min_margin:
        i_margin, kind, min_margin = i_v, "v-positivity", min_v

    return CertificateReport(
        family_id=family.id,
        model_id=model.id,
        passed=bool(min_margin >= -tol),
        min_margin=min_margin,
        tol=tol,
        n_samples=n_samples,
        min_dissipation=float(diss[i_diss]),
        min_q=float(q[i_q]),
        min_v=min_v,
        worst_x=X[:, i_margin].copy(),
        worst_theta=TH[:, i_margin].copy(),
        worst_kind=kind,
    )
