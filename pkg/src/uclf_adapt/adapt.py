"""Adaptation machinery: gain functions and parameter/gain update laws.

The estimate update for the unmatched parameters is

    theta_hat_dot = -diag(gamma_1(rho_1), ..., gamma_p(rho_p)) Delta dV/dx

where each gamma_i is an admissible dynamic gain: positive, strictly
increasing in its scalar argument rho_i, equal to the nominal gain at
rho_i = 0 and lower-bounded by a positive floor.  Stability requires
the realized gain rates to respect

    gamma_dot_i <= -2 gamma_i^2 / (eta_i - theta_err_i^2) * s_i,
    s_i = dV/dtheta_hat_i * theta_hat_dot_i,

so a destabilizing transient (s_i > 0) forces the gain down.  Several
implementable laws realizing that bound are provided here, together
with the leakage variant that restores gains to nominal, the matched
and composite laws, box projection, and the single-gain baseline that
scales every parameter by one shared factor.

All functions are pure; the simulation loop composes them into one
augmented ODE right-hand side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ContractError, GainDomainError
from .numkit import rk4_step

__all__ = [
    "GainFunction",
    "AdaptConfig",
    "LAW_VARIANTS",
    "gain_eval",
    "theta_dot_unmatched",
    "gain_rate_bound",
    "corollary1_update",
    "theorem1_update",
    "remark5_update",
    "adversarial_update",
    "rho_dot_from_gain_rate",
    "leakage_rho_dot",
    "matched_phi_dot",
    "composite_theta_dot",
    "monolithic_update",
    "project_rate",
    "PredictionErrorFilter",
]

# All shipped gain shapes split the range as floor + span around the
# nominal value: gamma(0) = gamma_bar, inf gamma = 0.1 gamma_bar.
GAIN_FLOOR_FRACTION = 0.1
GAIN_SPAN_FRACTION = 0.9

# |gamma - gamma_bar| <= REL_CAP_TOL * gamma_bar counts as "at nominal"
# for the capped laws (exact equality is unreachable in floating point).
REL_CAP_TOL = 1e-12

LAW_VARIANTS = ("corollary1", "theorem1", "leakage", "monolithic",
                "remark5", "adversarial", "none")


@dataclass(frozen=True)
class GainFunction:
    """Admissible dynamic adaptation gain gamma(rho).

    ``exponential``: gamma_bar * (0.9 exp(rho/tau) + 0.1), increasing
    everywhere.  ``rational``: gamma_bar * (0.9/(rho^2+1) + 0.1),
    admissible only on rho <= 0 (its slope changes sign at 0, so laws
    that divide by the slope cannot start it at rho = 0).
    """

    family: str = "exponential"
    gamma_bar: float = 1.0
    tau: float = 1.0

    def __post_init__(self):
        if self.family not in ("exponential", "rational"):
            raise ContractError(f"unknown gain family {self.family!r}")
        if not self.gamma_bar > 0:
            raise ContractError("nominal gain gamma_bar must be > 0")
        if not self.tau > 0:
            raise ContractError("gain time constant tau must be > 0")

    @property
    def floor(self):
        """The positive lower bound approached as rho -> -infinity."""
        return GAIN_FLOOR_FRACTION * self.gamma_bar

    def _check_domain(self, rho):
        if self.family == "rational" and np.any(np.asarray(rho) > 0):
            raise GainDomainError(
                "rational gain family is admissible only for rho <= 0"
            )

    def value(self, rho):
        self._check_domain(rho)
        if self.family == "exponential":
            shape = GAIN_SPAN_FRACTION * np.exp(np.asarray(rho) / self.tau)
        else:
            shape = GAIN_SPAN_FRACTION / (np.asarray(rho) ** 2 + 1.0)
        return self.gamma_bar * (shape + GAIN_FLOOR_FRACTION)

    def slope(self, rho):
        """d gamma / d rho; positive on the admissible range."""
        self._check_domain(rho)
        if self.family == "exponential":
            return (self.gamma_bar * GAIN_SPAN_FRACTION / self.tau
                    * np.exp(np.asarray(rho) / self.tau))
        r = np.asarray(rho, dtype=float)
        return self.gamma_bar * GAIN_SPAN_FRACTION * (-2.0 * r) / (r ** 2 + 1.0) ** 2

    def scalar_value(self, rho):
        if self.family == "rational" and rho > 0:
            raise GainDomainError(
                "rational gain family is admissible only for rho <= 0"
            )
        if self.family == "exponential":
            shape = GAIN_SPAN_FRACTION * math.exp(rho / self.tau)
        else:
            shape = GAIN_SPAN_FRACTION / (rho * rho + 1.0)
        return self.gamma_bar * (shape + GAIN_FLOOR_FRACTION)

    def scalar_slope(self, rho):
        if self.family == "rational" and rho > 0:
            raise GainDomainError(
                "rational gain family is admissible only for rho <= 0"
            )
        if self.family == "exponential":
            return (self.gamma_bar * GAIN_SPAN_FRACTION / self.tau
                    * math.exp(rho / self.tau))
        return (self.gamma_bar * GAIN_SPAN_FRACTION * (-2.0 * rho)
                / (rho * rho + 1.0) ** 2)


def gain_eval(g, rho):
    """(gamma, dgamma/drho) at rho; domain-checked."""
    return g.value(rho), g.slope(rho)


@dataclass(frozen=True)
class AdaptConfig:
    """Which adaptation law runs and with what constants.

    ``eta`` must exceed the squared worst-case estimation error of each
    parameter (enforced against the box in ``validate``); by default it
    is set to 10 + width_i^2.  ``gamma_bar`` gives the per-parameter
    nominal gains; all zeros selects the no-adaptation ablation.
    """

    variant: str = "corollary1"
    gain_family: str = "exponential"
    gamma_bar: object = 1.0  # scalar or per-parameter array
    tau: float = 1.0
    eta: Optional[np.ndarray] = None
    lam: Optional[np.ndarray] = None
    beta: float = 0.0
    gamma_matrix: Optional[np.ndarray] = None  # matched gain, q x q SPD
    projection: bool = True
    matched: bool = False
    composite: bool = False
    filter_pole: float = 10.0
    remark5_c: float = 1.0
    mono_c: float = 1.0

    @property
    def adaptation_off(self):
        """True for the ablation: variant "none" or all-zero nominal gains."""
        return (self.variant == "none"
                or bool(np.all(np.asarray(self.gamma_bar) == 0.0)))

    def gains(self, p):
        gb = np.atleast_1d(np.asarray(self.gamma_bar, dtype=float))
        if gb.size == 1:
            gb = np.full(p, gb[0])
        return [GainFunction(self.gain_family, g, self.tau) for g in gb]

    def validate(self, p, q, theta_box):
        if self.variant not in LAW_VARIANTS:
            raise ContractError(
                f"unknown law variant {self.variant!r}; one of {LAW_VARIANTS}"
            )
        gb = np.atleast_1d(np.asarray(self.gamma_bar, dtype=float))
        if gb.size not in (1, p):
            raise ContractError(f"gamma_bar needs 1 or {p} entries")
        if np.any(gb < 0):
            raise ContractError("gamma_bar must be >= 0")
        if np.any(gb == 0) and not np.all(gb == 0):
            raise ContractError("gamma_bar entries must be all zero (ablation) "
                                "or all positive")
        if self.variant == "monolithic" and not self.adaptation_off \
                and np.unique(gb).size != 1:
            raise ContractError("the single-gain law uses one shared nominal "
                                "gain; gamma_bar entries must be equal")
        widths = theta_box.width()
        eta = self.resolved_eta(theta_box)
        if np.any(eta <= widths ** 2):
            bad = int(np.argmax(eta <= widths ** 2))
            raise ContractError(
                f"eta[{bad}]={eta[bad]:g} must exceed the squared error bound "
                f"{widths[bad] ** 2:g} of parameter {bad + 1}"
            )
        lam = self.resolved_lam(p)
        if self.variant == "leakage" and np.any(lam <= 0):
            raise ContractError("leakage rates lambda must be > 0")
        if self.matched:
            if q == 0:
                raise ContractError("matched adaptation needs a split model (q > 0)")
            G = self.resolved_gamma_matrix(q)
            if G.shape != (q, q) or not np.allclose(G, G.T):
                raise ContractError("matched gain matrix must be symmetric q x q")
            if np.any(np.linalg.eigvalsh(G) <= 0):
                raise ContractError("matched gain matrix must be positive definite")
        if self.composite:
            if not self.beta > 0:
                raise ContractError("composite adaptation needs beta > 0")
            if not self.filter_pole > 0:
                raise ContractError("composite filter pole must be > 0")
        if self.variant == "remark5" and not self.remark5_c >= 1.0:
            raise ContractError(
                "remark5 log-form needs its energy shift c >= 1 to preserve "
                "the gain-rate bound"
            )
        if self.variant == "monolithic" and not self.mono_c > 0:
            raise ContractError("monolithic law needs c > 0")
        if (self.gain_family == "rational"
                and self.variant in ("corollary1", "theorem1", "leakage",
                                     "remark5", "adversarial", "monolithic")):
            raise ContractError(
                "rational gain family has zero slope at rho = 0, where every "
                "run starts; chain-rule laws require the exponential family"
            )
        return self

    def resolved_eta(self, theta_box):
        if self.eta is None:
            return 10.0 + theta_box.width() ** 2
        eta = np.atleast_1d(np.asarray(self.eta, dtype=float))
        if eta.size == 1:
            eta = np.full(theta_box.dim, eta[0])
        return eta

    def resolved_lam(self, p):
        if self.lam is None:
            return np.ones(p)
        lam = np.atleast_1d(np.asarray(self.lam, dtype=float))
        if lam.size == 1:
            lam = np.full(p, lam[0])
        return lam

    def resolved_gamma_matrix(self, q):
        if self.gamma_matrix is None:
            return np.eye(q)
        return np.asarray(self.gamma_matrix, dtype=float)


def theta_dot_unmatched(gamma, delta, dvdx):
    """-diag(gamma) Delta dV/dx : the core unmatched estimate update."""
    return -np.asarray(gamma) * (np.asarray(delta) @ np.asarray(dvdx))


def gain_rate_bound(gamma, eta, theta_err, s):
    """Oracle upper bound on gamma_dot: -2 gamma^2 s / (eta - theta_err^2).

    Needs the true estimation error, so it is a simulation-side audit
    of any implemented law, not an implementable law itself.
    """
    denom = eta - theta_err ** 2
    if np.any(np.asarray(denom) <= 0):
        raise ContractError("gain rate bound needs eta > theta_err^2")
    return -2.0 * gamma ** 2 * s / denom


def corollary1_update(gamma_bar, c, eta, err_bound, gamma, s):
    """Implementable three-case gain rate.

    Destabilizing transients shrink the gain at the worst-case rate;
    stabilizing ones let it recover until it is capped at nominal.
    """
    denom = eta - err_bound ** 2
    if denom <= 0:
        raise ContractError("corollary1 needs eta > err_bound^2")
    if s > 0.0:
        return -2.0 * gamma_bar ** 2 * s / denom
    if gamma < gamma_bar * (1.0 - REL_CAP_TOL):
        return -2.0 * c * c * s / eta
    return 0.0


def theorem1_update(gamma, eta, err_bound, s):
    """Uncapped rate using the current gain and worst-case error bound."""
    denom = eta - err_bound ** 2
    if denom <= 0:
        raise ContractError("theorem1 law needs eta > err_bound^2")
    if s > 0.0:
        return -2.0 * gamma ** 2 * s / denom
    return -2.0 * gamma ** 2 * s / eta


def remark5_update(gamma_bar, c, eta, err_bound, gamma, s, v, c_shift):
    """Log-form recovery: the stabilizing branch scales by 1/(V + c_shift).

    Scaling V + c_shift by any constant h > 0 leaves the update
    unchanged (the log derivative drops h); c_shift >= 1 keeps the
    recovery rate inside the stability budget.
    """
    denom = eta - err_bound ** 2
    if denom <= 0:
        raise ContractError("remark5 law needs eta > err_bound^2")
    if s > 0.0:
        return -2.0 * gamma_bar ** 2 * s / denom
    if gamma < gamma_bar * (1.0 - REL_CAP_TOL):
        return -2.0 * c * c * s / (eta * (v + c_shift))
    return 0.0


def adversarial_update(gamma_bar, c, eta, err_bound, gamma, s):
    """Deliberately wrong law: grows the gain during destabilizing
    transients.  Exists so the Lyapunov monitor's violation flagging
    can be demonstrated; never use it for control.
    """
    denom = eta - err_bound ** 2
    if denom <= 0:
        raise ContractError("adversarial law needs eta > err_bound^2")
    if s > 0.0:
        return +2.0 * gamma_bar ** 2 * s / denom
    if gamma < gamma_bar * (1.0 - REL_CAP_TOL):
        return -2.0 * c * c * s / eta
    return 0.0


def rho_dot_from_gain_rate(g, rho, gamma_dot):
    """Convert a gain rate into the argument rate via the chain rule."""
    return gamma_dot / g.scalar_slope(rho)


def leakage_rho_dot(g, rho, w, lam, eta, err_bound):
    """First-order argument dynamics that restore the gain to nominal.

    rho_dot = 2 gamma^2/slope * (-lam rho + K w) with K > 0 only while
    the transient is destabilizing (w < 0), so from rho(0) = 0 the
    argument stays nonpositive and decays back once w vanishes.
    """
    denom = eta - err_bound ** 2
    if denom <= 0:
        raise ContractError("leakage law needs eta > err_bound^2")
    if not lam > 0:
        raise ContractError("leakage rate lambda must be > 0")
    K = g.gamma_bar / denom if w < 0.0 else 0.0
    gamma = g.scalar_value(rho)
    return 2.0 * gamma * gamma / g.scalar_slope(rho) * (-lam * rho + K * w)


def matched_phi_dot(gamma_matrix, b, psi, dvdx):
    """-Gamma Psi (B^T dV/dx): matched estimate update (q-vector)."""
    b = np.asarray(b, dtype=float)
    psi = np.asarray(psi, dtype=float)
    dvdx = np.asarray(dvdx, dtype=float)
    if b.shape[0] != dvdx.shape[0] or psi.shape[1] != b.shape[1]:
        raise ContractError("matched update shapes inconsistent")
    return -np.asarray(gamma_matrix) @ (psi @ (b.T @ dvdx))


def composite_theta_dot(gamma, delta, dvdx, beta, w_mat, eps):
    """-diag(gamma) (Delta dV/dx + beta W eps): composite update.

    With beta = 0 this reduces exactly to the pure unmatched law.
    """
    drive = np.asarray(delta) @ np.asarray(dvdx)
    if beta != 0.0:
        drive = drive + beta * (np.asarray(w_mat) @ np.asarray(eps))
    return -np.asarray(gamma) * drive


def monolithic_update(g, gamma_matrix, delta, dvdx, dvdth, v, c, rho):
    """Single shared gain scaling for all parameters (baseline law).

    theta_hat_dot = -upsilon(rho) Gamma Delta dV/dx and
    rho_dot = -(upsilon/slope) * (dV/dth . theta_hat_dot) / (V + c).
    The per-parameter laws generalize this: here one argument reacts to
    the summed transient, so every gain scales together.
    """
    if not c > 0:
        raise ContractError("monolithic law needs c > 0")
    ups = g.scalar_value(rho)
    theta_dot = -ups * (np.asarray(gamma_matrix) @ (np.asarray(delta) @ np.asarray(dvdx)))
    transient = float(np.asarray(dvdth) @ theta_dot)
    rho_dot = -(ups / g.scalar_slope(rho)) * transient / (float(v) + c)
    return theta_dot, rho_dot


# Values farther outside the box than this (relative to width) are a
# caller bug rather than integration drift.
_PROJ_SLACK = 1e-9


def project_rate(box, value, rate):
    """Box-face projection of an estimate rate.

    A component's rate is zeroed iff the estimate sits on (or beyond)
    that face and the rate points outward; interior rates pass through.
    """
    value = np.asarray(value, dtype=float)
    rate = np.asarray(rate, dtype=float)
    slack = _PROJ_SLACK * (1.0 + box.width())
    if np.any(value < box.lo - slack) or np.any(value > box.hi + slack):
        raise ContractError("estimate outside its box; clamp at initialization")
    out = rate.copy()
    out[(value >= box.hi) & (rate > 0)] = 0.0
    out[(value <= box.lo) & (rate < 0)] = 0.0
    return out


class PredictionErrorFilter:
    """First-order filtering of the plant equation for composite adaptation.

    Both sides of  xdot = f - Delta^T theta + B u  are passed through
    a/(s+a).  With filter states L1 (filtered f + Bu), L2 (filtered
    Delta^T) and L3 (filtered x), the computable residual

        eps = (L1 - L2 theta_hat) - (x - a L3)

    equals W^T theta_err - exp(-a t) x(0) with W = -L2^T, i.e. the
    prediction error in the filtered regressor up to a transient that
    decays with the filter pole.
    """

    def __init__(self, model, pole):
        if not pole > 0:
            raise ContractError("filter pole must be > 0")
        self.model = model
        self.a = float(pole)
        self.n_state = model.n * (2 + model.p)

    def init_state(self):
        return np.zeros(self.n_state)

    def unpack(self, lam):
        n, p = self.model.n, self.model.p
        l1 = lam[:n]
        l2 = lam[n:n + n * p].reshape(n, p)
        l3 = lam[n + n * p:]
        return l1, l2, l3

    def derivative(self, t, x, u, lam):
        n, p = self.model.n, self.model.p
        l1, l2, l3 = self.unpack(lam)
        fbu = (self.model.f(x, t)
               + np.einsum("nm,m->n", self.model.b(x, t), np.atleast_1d(u)))
        dl1 = -self.a * l1 + fbu
        dl2 = -self.a * l2 + self.model.delta(x, t).T
        dl3 = -self.a * l3 + x
        return np.concatenate([dl1, dl2.reshape(-1), dl3])

    def outputs(self, lam, x, theta_hat):
        """(W, eps): filtered regressor (p, n) and residual (n,)."""
        l1, l2, l3 = self.unpack(lam)
        w_mat = -l2.T
        eps = (l1 - l2 @ theta_hat) - (x - self.a * l3)
        return w_mat, eps

    def offline(self, ts, xs, us, theta_hat):
        """Run the filter over a recorded (t, x, u) history.

        Inputs are zero-order held between samples; returns the (W, eps)
        series aligned with ``ts``.  Used for post-hoc analysis and
        tests; the simulation loop integrates the same derivative
        jointly with the plant instead.
        """
        ts = np.asarray(ts, dtype=float)
        lam = self.init_state()
        w_series = np.empty((len(ts), self.model.p, self.model.n))
        e_series = np.empty((len(ts), self.model.n))
        w_series[0], e_series[0] = self.outputs(lam, xs[0], theta_hat)
        for k in range(len(ts) - 1):
            h = ts[k + 1] - ts[k]
            rhs = lambda t, l: self.derivative(t, xs[k], us[k], l)
            lam = rk4_step(rhs, ts[k], lam, h)
            w_series[k + 1], e_series[k + 1] = self.outputs(lam, xs[k + 1], theta_hat)
        return w_series, e_series
