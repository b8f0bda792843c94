"""Adaptive control with per-parameter dynamic adaptation gains.

The package simulates certainty-equivalence adaptive controllers for
nonlinear systems whose parametric uncertainty is partly unmatched
(outside the span of the input matrix).  Each unmatched parameter
estimate carries its own state-dependent adaptation gain; the gain is
lowered while that parameter's adaptation transient is destabilizing
and restored afterwards.  Runtime Lyapunov monitors check every
stability claim along the simulated trajectories.

Modules
-------
numkit    fixed/adaptive Runge-Kutta integrators, finite differences
plant     uncertain system models and parameter boxes
uclf      control Lyapunov function families and their certifier
adapt     gain functions and all parameter/gain update laws
simloop   closed-loop runner, monitors, metrics
config    TOML run configuration
writers   CSV/JSON trace and metrics output
cli       command line entry points (run, certify, compare, lemma1)
"""

__version__ = "0.1.0"
