"""Python bindings for the marginlab C++ core."""

import json as _json

from . import _core
from ._core import (
    ConfigError,
    ConvergenceError,
    DegenerateDataError,
    DomainError,
    LossSpec,
    ShapeError,
    damp_peak,
    dual_objective,
    eval_loss,
    grad_output,
    gs_violation,
    integrate_flow,
    leftover_accuracy,
    leftover_fraction_stats,
    linear_backward,
    linear_forward,
    prop1_check,
    sample_dataset,
    shortcut_bound_formula,
    solve_uniform_margin,
    stable_bound_formula,
)

__version__ = _core.__version__


def _ds_args(ds):
    return ds["X"], ds["y"], ds["z"], ds["B"]


def solve_max_margin(ds, side="none", tol=1e-8, max_iter=1_000_000):
    """Minimum-norm weights with margin >= 1 on every row of ds; returns a dict."""
    return _json.loads(_core.solve_max_margin(*_ds_args(ds), side=side, tol=tol, max_iter=max_iter))


def theorem1_report(ds, M, eps=1.0, tol=1e-8, subset_seed=0):
    return _json.loads(_core.theorem1_report(*_ds_args(ds), M=M, eps=eps, tol=tol, subset_seed=subset_seed))


def train_linear(train, test, spec, lr=1e-3, momentum=0.9, weight_decay=0.0, epochs=1000, eval_every=100):
    """Full-batch GD from w = 0. Returns (w, snapshots)."""
    if train["B"] != test["B"]:
        raise ValueError("train and test must share B")
    w, snaps = _core.train_linear(
        train["X"], train["y"], train["z"], test["X"], test["y"], test["z"], train["B"], spec,
        lr=lr, momentum=momentum, weight_decay=weight_decay, epochs=epochs, eval_every=eval_every)
    return w, _json.loads(snaps)


def check_concentration(lemma, d, eps, T_V=1, T_U=1, trials=10_000, seed=0):
    return _json.loads(_core.check_concentration(lemma, d, eps, T_V=T_V, T_U=T_U, trials=trials, seed=seed))


def run(command, config, out_dir):
    """Run a CLI command from a config dict; returns the summary dict."""
    return _json.loads(_core.run(command, _json.dumps(config), str(out_dir)))
