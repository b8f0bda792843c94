"""Acceptance suite: one test per top-level claim, each printing a
PASS/FAIL line (run with ``pytest -s tests/test_acceptance.py`` to see
them live).

One check is expected to stay red: the strict per-sample gain-rate
bound cannot hold on leakage runs while the gains recover, because the
leakage law deliberately trades that bound for guaranteed restoration
of the gains (its stability argument charges the recovery term to a
separate budget).  The strict assertion is kept anyway; the companion
check with the recovery allowance is the inequality the leakage
argument actually uses, and it passes with zero slack.
"""

import math
import time

import numpy as np

from uclf_adapt.adapt import GainFunction
from uclf_adapt.cli import main
from uclf_adapt.numkit import finite_diff_gradient
from uclf_adapt.plant import default_boxes, make_model
from uclf_adapt.simloop import (audit_gain_rates, lemma1_harness,
                                lyapunov_monitor, run_scenario)
from uclf_adapt.uclf import make_uclf, verify_uclf
from uclf_adapt.config import load_scenario, parse_config

MONO_SLACK = 1e-8
AUDIT_SLACK = 1e-9


def criterion(tag, ok, detail):
    line = f"ACCEPTANCE {tag}: {'PASS' if ok else 'FAIL'} ({detail})"
    print(line)
    assert ok, line


# ----------------------------------------------------------------- 1. CERT
def test_criterion_01_certify():
    elapsed = -time.perf_counter()
    reports = []
    for fid, mid in [("eq7-backstep", "eq7"), ("chain3-backstep", "chain3"),
                     ("min2-backstep", "min2"), ("eq7-backstep", "eq7-split")]:
        model = make_model(mid)
        box, _ = default_boxes(mid)
        fam = make_uclf(fid, model, box)
        reports.append(verify_uclf(fam, model, box))
    model = make_model("eq7")
    box, _ = default_boxes("eq7")
    broken = verify_uclf(make_uclf("eq7-backstep", model, box, {"k3": 1.0}),
                         model, box)
    elapsed += time.perf_counter()
    ok = (all(r.passed and r.min_margin >= -1e-9 for r in reports)
          and not broken.passed and abs(broken.worst_x[0]) >= 2.0
          and elapsed < 30.0)
    criterion("CERT", ok,
              f"margins {[f'{r.min_margin:.1e}' for r in reports]}, broken "
              f"witness x1={broken.worst_x[0]:.3g}, {elapsed:.1f}s")


# ----------------------------------------------------------------- 2. GRAD
def test_criterion_02_gradients():
    worst = 0.0
    for fid, mid in [("eq7-backstep", "eq7"), ("chain3-backstep", "chain3"),
                     ("min2-backstep", "min2")]:
        model = make_model(mid)
        box, _ = default_boxes(mid)
        fam = make_uclf(fid, model, box)
        rng = np.random.default_rng(404)
        for _ in range(100):
            x = rng.uniform(-3, 3, model.n)
            th = rng.uniform(box.lo, box.hi)
            for grad, fd in (
                (fam.grad_x(x, th),
                 finite_diff_gradient(lambda v: fam.V(v, th), x, h=1e-6)),
                (fam.grad_th(x, th),
                 finite_diff_gradient(lambda v: fam.V(x, v), th, h=1e-6)),
            ):
                rel = np.linalg.norm(grad - fd) / max(1.0, np.linalg.norm(grad))
                worst = max(worst, rel)
    criterion("GRAD", worst <= 1e-5, f"worst rel err {worst:.2e}")


# ----------------------------------------------------------------- 3. CONV
def test_criterion_03_convergence(eq7_cor1_run, chain3_cor1_run, min2_cor1_run,
                                  eq7_matched_run, eq7_composite_run):
    runs = {
        "S1 capped": eq7_cor1_run,
        "S2 capped": chain3_cor1_run,
        "S3 capped": min2_cor1_run,
        "S1 matched-split": eq7_matched_run,
        "S1 composite": eq7_composite_run,
    }
    details = []
    ok = True
    for name, r in runs.items():
        good = r.metrics.final_norm <= 1e-2 and r.elapsed < 10.0
        ok = ok and good
        details.append(f"{name}: |x(T)|={r.metrics.final_norm:.1e} "
                       f"{r.elapsed:.1f}s")
    criterion("CONV", ok, "; ".join(details))


# ----------------------------------------------------------------- 4. MONO
def test_criterion_04_vc_monotone(eq7_cor1_run, chain3_cor1_run, min2_cor1_run,
                                  eq7_matched_run, eq7_composite_run,
                                  eq7_monolithic_run, chain3_targeted_run,
                                  chain3_targeted_mono_run):
    runs = [eq7_cor1_run, chain3_cor1_run, min2_cor1_run, eq7_matched_run,
            eq7_composite_run, eq7_monolithic_run, chain3_targeted_run,
            chain3_targeted_mono_run]
    ok = True
    worst = -math.inf
    for r in runs:
        rep = lyapunov_monitor(r.trace, r.scenario)
        ok = ok and rep.passed
        worst = max(worst, rep.max_step_increase)
    criterion("MONO(runs)", ok, f"worst per-step increase {worst:.2e}")


def test_criterion_04_negative_control(configs_dir):
    # a law that raises gains during destabilizing transients must be flagged
    from dataclasses import replace

    scenario = load_scenario(parse_config(configs_dir / "eq7_cor1.toml"))
    scenario.adapt = replace(scenario.adapt, variant="adversarial")
    scenario.integrator = replace(scenario.integrator, horizon=2.0)
    trace, _ = run_scenario(scenario)
    rep = lyapunov_monitor(trace, scenario)
    criterion("MONO(negative-control)", not rep.passed,
              f"{len(rep.violation_times)} flagged steps, "
              f"max increase {rep.max_step_increase:.2e}")


# ------------------------------------------------------------- 5. AUDIT-2b
def test_criterion_05_audit_gain_rate_capped(eq7_cor1_run, chain3_cor1_run,
                                             min2_cor1_run, eq7_matched_run,
                                             eq7_composite_run,
                                             chain3_targeted_run):
    runs = [eq7_cor1_run, chain3_cor1_run, min2_cor1_run, eq7_matched_run,
            eq7_composite_run, chain3_targeted_run]
    ok = True
    worst = -math.inf
    for r in runs:
        rep = audit_gain_rates(r.trace, r.scenario, slack=AUDIT_SLACK)
        ok = ok and rep.strict_ok and rep.chain_ok
        worst = max(worst, rep.max_violation)
    criterion("AUDIT-2B(capped-law runs)", ok, f"max violation {worst:.2e}")


def test_criterion_05_audit_gain_rate_leakage_strict(eq7_leakage_run,
                                                     chain3_leakage_run):
    # Strict per-sample bound asserted as stated.  Expected to FAIL:
    # during recovery the leakage law raises the gain at rate
    # 2 gamma^2 lambda |rho| while the strict bound is ~0; restoring the
    # gains (checked by RECOVER below) is impossible without that.  The
    # recovery-allowance audit in the next test is the inequality the
    # leakage stability argument actually relies on.
    worst = max(audit_gain_rates(r.trace, r.scenario).max_violation
                for r in (eq7_leakage_run, chain3_leakage_run))
    criterion("AUDIT-2B(leakage, strict)", worst <= AUDIT_SLACK,
              f"max violation {worst:.2e}; the excess is exactly the "
              f"recovery term the leakage law adds by design")


def test_criterion_05_audit_gain_rate_leakage_with_recovery(eq7_leakage_run,
                                                            chain3_leakage_run):
    ok = True
    worst = -math.inf
    for r in (eq7_leakage_run, chain3_leakage_run):
        rep = audit_gain_rates(r.trace, r.scenario, slack=AUDIT_SLACK)
        ok = ok and rep.recovery_ok and rep.chain_ok
        worst = max(worst, rep.max_violation_with_recovery)
    criterion("AUDIT-2B(leakage + recovery allowance)", ok,
              f"max violation {worst:.2e}")


# ----------------------------------------- 6. GAIN-RANGE and LEAK-SIGN
def test_criterion_06_gain_range_and_leak_sign(eq7_cor1_run, chain3_cor1_run,
                                               min2_cor1_run, eq7_matched_run,
                                               eq7_composite_run,
                                               chain3_targeted_run,
                                               eq7_leakage_run,
                                               chain3_leakage_run):
    capped = [eq7_cor1_run, chain3_cor1_run, min2_cor1_run, eq7_matched_run,
              eq7_composite_run, chain3_targeted_run, eq7_leakage_run,
              chain3_leakage_run]
    ok = True
    lo_worst, hi_worst = math.inf, -math.inf
    for r in capped:
        gains = r.scenario.adapt.gains(r.scenario.model.p)
        gbar = np.array([g.gamma_bar for g in gains])
        lo = (r.trace.gamma / gbar).min()
        hi = (r.trace.gamma / gbar).max()
        lo_worst, hi_worst = min(lo_worst, lo), max(hi_worst, hi)
        ok = ok and lo >= 0.1 - 1e-12 and hi <= 1.0 + 1e-12
    rho_worst = max(r.trace.rho.max()
                    for r in (eq7_leakage_run, chain3_leakage_run))
    ok = ok and rho_worst <= 1e-12
    criterion("GAIN-RANGE & LEAK-SIGN", ok,
              f"gamma/gbar in [{lo_worst:.3f}, {hi_worst:.3f}], "
              f"max leakage rho {rho_worst:.1e}")


# ------------------------------------------------------------ 7. RECOVER
def test_criterion_07_leakage_recovery(eq7_leakage_run, chain3_leakage_run):
    gaps = []
    dips = []
    for r in (eq7_leakage_run, chain3_leakage_run):
        gains = r.scenario.adapt.gains(r.scenario.model.p)
        gbar = np.array([g.gamma_bar for g in gains])
        gaps.append(np.abs(r.trace.gamma[-1] - gbar).max())
        dips.append(r.metrics.gain_reduction.max())
    ok = max(gaps) <= 1e-3 and min(dips) > 0.05  # gains really left nominal
    criterion("RECOVER", ok,
              f"final |gamma-gbar| max {max(gaps):.1e} after dips up to "
              f"{max(dips):.0%}")


# ----------------------------------------------------------- 8. TARGETED
def test_criterion_08_targeted(chain3_targeted_run, chain3_targeted_mono_run):
    red = chain3_targeted_run.metrics.gain_reduction
    mono = chain3_targeted_mono_run.trace.gamma
    equal = bool(np.array_equal(mono[:, 0], mono[:, 1]))
    ok = red[0] > 0.05 and red[1] < 0.01 and equal
    criterion("TARGETED", ok,
              f"per-parameter reductions ({red[0]:.1%}, {red[1]:.1%}); "
              f"single-gain baseline reductions equal across parameters: {equal}")


# ------------------------------------------------------------ 9. NOADAPT
def test_criterion_09_no_adaptation_bounded_error(eq7_noadapt_run, configs_dir):
    r = eq7_noadapt_run
    # like-for-like contrast: same plant and controller constants with
    # adaptation back on converges
    from dataclasses import replace

    sc = load_scenario(parse_config(configs_dir / "eq7_noadapt.toml"))
    sc.adapt = replace(sc.adapt, gamma_bar=1.0)
    _, adaptive_metrics = run_scenario(sc)
    ok = (r.metrics.sup_state_norm <= 10.0
          and r.metrics.final_norm >= 0.05
          and adaptive_metrics.final_norm <= 1e-2)
    criterion("NOADAPT", ok,
              f"frozen estimates: sup|x|={r.metrics.sup_state_norm:.2f}, "
              f"|x(T)|={r.metrics.final_norm:.2f}; adaptation on: "
              f"|x(T)|={adaptive_metrics.final_norm:.1e}")


# ------------------------------------------------------------ 10. LEMMA1
def test_criterion_10_lemma1():
    gain = GainFunction("exponential", 1.0, 1.0)
    lam, k, wbar = 1.0, 1.0 / 9.0, -0.9
    rep = lemma1_harness(gain, lam, k, lambda t: wbar if t < 5.0 else 0.0,
                         horizon=20.0, step=1e-3)
    plateau = rep.rho[np.searchsorted(rep.t, 5.0) - 1]
    target = k * wbar / lam
    ok = (np.isfinite(rep.sup_abs) and rep.final_abs <= 1e-6
          and abs(plateau - target) <= 0.01 * abs(target))
    criterion("LEMMA1", ok,
              f"sup|rho|={rep.sup_abs:.4f}, |rho(20)|={rep.final_abs:.1e}, "
              f"plateau {plateau:.5f} vs K*wbar/lambda {target:.5f}")


# ------------------------------------------------------- 11. DETERMINISM
def test_criterion_11_determinism(configs_dir, tmp_path):
    cfg = str(configs_dir / "min2_cor1.toml")
    for d in ("a", "b"):
        assert main(["run", "--config", cfg, "--out", str(tmp_path / d)]) == 0
    same_trace = ((tmp_path / "a" / "min2_cor1.trace.csv").read_bytes()
                  == (tmp_path / "b" / "min2_cor1.trace.csv").read_bytes())
    assert main(["compare", "--configs", cfg, cfg,
                 "--out", str(tmp_path / "cmp")]) == 0
    lines = (tmp_path / "cmp" / "compare.csv").read_text().splitlines()
    same_rows = lines[1] == lines[2]
    criterion("DETERMINISM", same_trace and same_rows,
              f"byte-identical traces: {same_trace}, identical compare rows: "
              f"{same_rows}")
