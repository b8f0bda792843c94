"""TOML run configuration: parsing, strict validation, scenario assembly.

Every invariant of the referenced objects is checked while the config is
being built, so a config that parses cleanly is guaranteed to integrate
(validation is total).  Unknown keys are rejected with their dotted
path; semantic violations name the offending key.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .adapt import AdaptConfig
from .errors import ConfigError, UclfAdaptError
from .numkit import IntegratorSpec
from .plant import TrueParams, default_boxes, make_model, MODEL_IDS
from .simloop import Scenario
from .uclf import make_uclf, FAMILY_IDS

__all__ = ["RunConfig", "CertifySpec", "parse_config", "load_scenario"]

_TABLES = {
    "model": {"id"},
    "uclf": {"id", "k1", "k2", "k3", "beta"},
    "adapt": {"variant", "gain_family", "gamma_bar", "tau", "eta", "lambda",
              "beta", "projection", "matched", "composite", "filter_pole",
              "remark5_c", "mono_c", "gamma_matrix"},
    "integrator": {"method", "step", "rel_tol", "abs_tol", "min_step",
                   "max_step", "output_step"},
    "scenario": {"x0", "theta_hat0", "phi_hat0", "theta_true", "phi_true",
                 "horizon"},
    "certify": {"x_range", "x_points", "th_points", "tol"},
    "output": {"format", "path"},
}

_REQUIRED = ("model", "uclf", "adapt", "integrator", "scenario")


@dataclass
class CertifySpec:
    x_range: tuple = (-3.0, 3.0)
    x_points: int = 9
    th_points: int = 5
    tol: float = 1e-9


@dataclass
class RunConfig:
    """Parsed and semantically validated run configuration."""

    path: str
    model_id: str
    uclf_id: str
    uclf_constants: dict
    adapt: AdaptConfig
    integrator: IntegratorSpec
    x0: np.ndarray
    theta_hat0: np.ndarray
    phi_hat0: Optional[np.ndarray]
    theta_true: np.ndarray
    phi_true: Optional[np.ndarray]
    certify: CertifySpec
    output_format: str = "csv"
    output_path: str = ""
    raw: dict = field(default_factory=dict, repr=False)


def _reject_unknown(doc, path):
    unknown_tables = set(doc) - set(_TABLES)
    if unknown_tables:
        raise ConfigError(f"unknown table(s) {sorted(unknown_tables)}", path=path)
    for table, allowed in _TABLES.items():
        if table not in doc:
            continue
        if not isinstance(doc[table], dict):
            raise ConfigError("must be a table", key=table, path=path)
        unknown = set(doc[table]) - allowed
        if unknown:
            raise ConfigError(
                f"unknown key(s) {sorted(unknown)}; allowed: {sorted(allowed)}",
                key=table, path=path)


def _vec(doc, table, key, path, required=False, default=None):
    if key not in doc.get(table, {}):
        if required:
            raise ConfigError("required key missing", key=f"{table}.{key}", path=path)
        return default
    val = doc[table][key]
    arr = np.atleast_1d(np.asarray(val, dtype=float))
    if arr.ndim != 1 or not np.all(np.isfinite(arr)):
        raise ConfigError("must be a finite number or list of numbers",
                          key=f"{table}.{key}", path=path)
    return arr


def _scalar(doc, table, key, path, default, kind=float):
    val = doc.get(table, {}).get(key, default)
    try:
        return kind(val)
    except (TypeError, ValueError):
        raise ConfigError(f"must be a {kind.__name__}",
                          key=f"{table}.{key}", path=path) from None


def parse_config(path):
    """Parse and validate a TOML run configuration file."""
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError("config file not found", path=str(path)) from None
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"TOML parse error: {err}", path=str(path)) from None
    path = str(path)
    _reject_unknown(doc, path)
    for table in _REQUIRED:
        if table not in doc:
            raise ConfigError("required table missing", key=table, path=path)

    model_id = doc["model"].get("id")
    if model_id not in MODEL_IDS:
        raise ConfigError(f"unknown model id {model_id!r}; one of {MODEL_IDS}",
                          key="model.id", path=path)
    uclf_id = doc["uclf"].get("id")
    if uclf_id not in FAMILY_IDS:
        raise ConfigError(f"unknown uclf id {uclf_id!r}; one of {FAMILY_IDS}",
                          key="uclf.id", path=path)
    constants = {k: float(v) for k, v in doc["uclf"].items() if k != "id"}

    adapt_tbl = doc["adapt"]
    gamma_bar = _vec(doc, "adapt", "gamma_bar", path, default=np.array([1.0]))
    eta = _vec(doc, "adapt", "eta", path)
    lam = _vec(doc, "adapt", "lambda", path)
    gm = adapt_tbl.get("gamma_matrix")
    if gm is not None:
        gm = np.asarray(gm, dtype=float)
    adapt = AdaptConfig(
        variant=str(adapt_tbl.get("variant", "corollary1")),
        gain_family=str(adapt_tbl.get("gain_family", "exponential")),
        gamma_bar=gamma_bar,
        tau=_scalar(doc, "adapt", "tau", path, 1.0),
        eta=eta,
        lam=lam,
        beta=_scalar(doc, "adapt", "beta", path, 0.0),
        gamma_matrix=gm,
        projection=bool(adapt_tbl.get("projection", True)),
        matched=bool(adapt_tbl.get("matched", False)),
        composite=bool(adapt_tbl.get("composite", False)),
        filter_pole=_scalar(doc, "adapt", "filter_pole", path, 10.0),
        remark5_c=_scalar(doc, "adapt", "remark5_c", path, 1.0),
        mono_c=_scalar(doc, "adapt", "mono_c", path, 1.0),
    )

    horizon = _scalar(doc, "scenario", "horizon", path, 50.0)
    integrator = IntegratorSpec(
        method=str(doc["integrator"].get("method", "rk4")),
        step=_scalar(doc, "integrator", "step", path, 1e-3),
        rel_tol=_scalar(doc, "integrator", "rel_tol", path, 1e-8),
        abs_tol=_scalar(doc, "integrator", "abs_tol", path, 1e-10),
        min_step=_scalar(doc, "integrator", "min_step", path, 1e-12),
        max_step=_scalar(doc, "integrator", "max_step", path, 1.0),
        output_step=_scalar(doc, "integrator", "output_step", path, 1e-2),
        horizon=horizon,
    )

    certify_tbl = doc.get("certify", {})
    xr = certify_tbl.get("x_range", (-3.0, 3.0))
    if len(xr) != 2 or not float(xr[0]) < float(xr[1]):
        raise ConfigError("x_range must be [lo, hi] with lo < hi",
                          key="certify.x_range", path=path)
    certify = CertifySpec(
        x_range=(float(xr[0]), float(xr[1])),
        x_points=_scalar(doc, "certify", "x_points", path, 9, int),
        th_points=_scalar(doc, "certify", "th_points", path, 5, int),
        tol=_scalar(doc, "certify", "tol", path, 1e-9),
    )

    out_tbl = doc.get("output", {})
    out_format = str(out_tbl.get("format", "csv"))
    if out_format not in ("csv", "json"):
        raise ConfigError("format must be csv or json", key="output.format",
                          path=path)

    cfg = RunConfig(
        path=path,
        model_id=model_id,
        uclf_id=uclf_id,
        uclf_constants=constants,
        adapt=adapt,
        integrator=integrator,
        x0=_vec(doc, "scenario", "x0", path, required=True),
        theta_hat0=_vec(doc, "scenario", "theta_hat0", path, required=True),
        phi_hat0=_vec(doc, "scenario", "phi_hat0", path),
        theta_true=_vec(doc, "scenario", "theta_true", path, required=True),
        phi_true=_vec(doc, "scenario", "phi_true", path),
        certify=certify,
        output_format=out_format,
        output_path=str(out_tbl.get("path", "")),
        raw=doc,
    )
    # assemble once so every referenced invariant is checked now
    load_scenario(cfg)
    return cfg


def load_scenario(cfg):
    """Build the validated Scenario a RunConfig describes."""
    try:
        model = make_model(cfg.model_id)
        theta_box, phi_box = default_boxes(cfg.model_id)
        family = make_uclf(cfg.uclf_id, model, theta_box, cfg.uclf_constants)
        scenario = Scenario(
            model=model, family=family, theta_box=theta_box, phi_box=phi_box,
            true=TrueParams(theta=cfg.theta_true, phi=cfg.phi_true),
            adapt=cfg.adapt, integrator=cfg.integrator,
            x0=cfg.x0, theta_hat0=cfg.theta_hat0, phi_hat0=cfg.phi_hat0,
            label=cfg.path,
        )
        scenario.validate()
        return scenario
    except ConfigError:
        raise
    except UclfAdaptError as err:
        raise ConfigError(str(err), path=cfg.path) from err
