"""Seeded multi-trial experiments and their table/JSON outputs."""

from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .. import diffnet
from ..errors import ConfigurationError, DivergenceError
from ..geometry import sample_collocation, sample_interior
from ..jumplift import ComposedSolution, fit_jump_network, lift_problem
from ..optim import DIVERGENCE, AdamConfig, LMConfig, train_adam, train_lm
from ..problem import AUGMENTATIONS, NetworkSolution
from .examples import make_example
from .metrics import ErrorReport, mean_report, relative_errors

WORKERS_ENV = "CUSPPINN_WORKERS"
OPTIMIZERS = ("lm", "adam")

TABLE_HEADER = [
    "example", "L", "N", "M_I", "M_gamma", "M_B", "M", "augmentation", "optimizer", "n_trials", "n_diverged",
    "rel_linf", "rel_l2", "rel_grad_linf", "abs_linf", "abs_l2", "loss", "seconds",
]


def layer_sizes(dim, arch, mode="phi_abs"):
    L, N = int(arch[0]), int(arch[1])
    if L < 1 or N < 1:
        raise ConfigurationError(f"need L >= 1 and N >= 1, got {(L, N)}", "arch")
    n_in = dim if mode == "none" else dim + 1
    return (n_in,) + (N,) * L + (1,)


def _check_counts(counts):
    counts = tuple(int(c) for c in counts)
    if len(counts) != 3 or min(counts) < 1:
        raise ConfigurationError(f"need three positive counts (M_I, M_Gamma, M_B), got {counts}", "counts")
    return counts


@dataclass
class TrialResult:
    """One seeded sampling + initialisation + training + evaluation."""

    seed: list
    errors: ErrorReport
    train: object
    diverged: bool
    seconds: float
    lift_fit_loss: float = math.nan
    params: object = None
    lift: object = None

    def to_dict(self):
        t = self.train
        return {
            "seed": list(self.seed),
            "errors": self.errors.to_dict(),
            "diverged": self.diverged,
            "seconds": self.seconds,
            "lift_fit_loss": self.lift_fit_loss,
            "termination": None if t is None else t.termination,
            "epochs": None if t is None else t.epochs,
            "final_loss": None if t is None else float(t.final_loss),
            "n_accepted": None if t is None else t.n_accepted,
            "n_rejected": None if t is None else t.n_rejected,
        }


@dataclass
class TrialsReport:
    """Per-trial results and their means.

    Diverged trials stay in ``trials``; they are left out of ``mean`` only
    when ``exclude_diverged`` is set.
    """

    example: str
    knobs: dict
    arch: tuple
    counts: tuple
    mode: str
    optimizer: str
    trials: list
    exclude_diverged: bool = False
    extra: dict = field(default_factory=dict)

    @property
    def included(self):
        return [t for t in self.trials if not (self.exclude_diverged and t.diverged)]

    @property
    def mean(self):
        return mean_report(t.errors for t in self.included)

    @property
    def n_diverged(self):
        return sum(t.diverged for t in self.trials)

    @property
    def mean_seconds(self):
        return float(np.mean([t.seconds for t in self.trials])) if self.trials else math.nan

    def table_row(self):
        m = self.mean
        return [
            self.example, self.arch[0], self.arch[1], *self.counts, sum(self.counts), self.mode, self.optimizer,
            len(self.trials), self.n_diverged, m.rel_linf, m.rel_l2, m.rel_grad_linf, m.abs_linf, m.abs_l2,
            m.loss, self.mean_seconds,
        ]

    def to_dict(self):
        return {
            "example": self.example,
            "knobs": self.knobs,
            "arch": list(self.arch),
            "counts": list(self.counts),
            "augmentation": self.mode,
            "optimizer": self.optimizer,
            "exclude_diverged": self.exclude_diverged,
            "n_diverged": self.n_diverged,
            "mean": self.mean.to_dict(),
            "trials": [t.to_dict() for t in self.trials],
        }


def _optimizer_config(optimizer, config, spec):
    if optimizer not in OPTIMIZERS:
        raise ConfigurationError(f"unknown optimizer {optimizer!r}; choose from {OPTIMIZERS}", "optimizer")
    if isinstance(config, (LMConfig, AdamConfig)):
        return config
    cfg = dict(config or {})
    if optimizer == "lm":
        cfg.setdefault("loss_threshold", spec.loss_threshold)
        return LMConfig(**cfg)
    return AdamConfig(**cfg)


def _nan_report(n):
    nan = math.nan
    return ErrorReport(nan, nan, nan, nan, nan, n, nan)


def run_trial(spec, arch=None, counts=None, optimizer="lm", config=None, seed=0, mode="phi_abs", m_test=None):
    """Sample, initialise, train and evaluate once.

    ``seed`` (an int or a sequence of ints) seeds independent child streams
    for collocation, initial weights, test points and the jump fit, so two
    calls that differ only in ``mode`` see identical collocation sets.
    """
    if mode not in AUGMENTATIONS:
        raise ConfigurationError(f"unknown augmentation {mode!r}", "augmentation")
    arch = tuple(arch) if arch is not None else spec.arch
    counts = _check_counts(counts if counts is not None else spec.counts_for(arch))
    cfg = _optimizer_config(optimizer, config, spec)
    seed_list = [int(s) for s in np.atleast_1d(seed)]
    s_col, s_init, s_test, s_lift = np.random.SeedSequence(seed_list).spawn(4)
    t0 = time.perf_counter()
    problem = spec.problem
    lift = None
    lift_loss = math.nan
    n_test = m_test if m_test is not None else spec.n_test(counts)
    try:
        if problem.lam is not None:
            opts = spec.lift or {"N": 100, "points": counts[1]}
            rng = np.random.default_rng(s_lift)
            pts = spec.level_set.sample(int(opts["points"]), rng)
            lift = fit_jump_network(problem.lam, pts, N=int(opts["N"]), seed=rng.integers(2**63))
            lift_loss = lift.fit_loss
            problem = lift_problem(problem, lift)
            # the jump map may be a closure; results must pickle across workers
            lift = replace(lift, lam=None)
        col = sample_collocation(spec.domain, spec.level_set, *counts, seed=s_col, M0=spec.M0)
        p0 = diffnet.init_params(layer_sizes(spec.dim, arch, mode), s_init)
        if optimizer == "lm":
            rep = train_lm(problem, col, p0, cfg, mode=mode)
        else:
            rep = train_adam(problem, col, p0, mode=mode, config=cfg)
    except DivergenceError:
        return TrialResult(seed_list, _nan_report(n_test), None, True, time.perf_counter() - t0, lift_loss,
                           lift=lift)
    seconds = time.perf_counter() - t0
    diverged = rep.termination == DIVERGENCE
    if lift is not None:
        sol = ComposedSolution(lift, rep.params, spec.level_set, mode)
    else:
        sol = NetworkSolution(rep.params, spec.level_set, mode)
    xt, _ = sample_interior(spec.domain, spec.level_set, n_test, np.random.default_rng(s_test))
    with np.errstate(all="ignore"):
        errs = relative_errors(sol.value, spec.exact, xt, sol.grad, spec.exact_grad, loss=rep.final_loss)
    diverged = diverged or not np.isfinite(errs.rel_linf)
    return TrialResult(seed_list, errs, rep, diverged, seconds, lift_loss, rep.params, lift)


def trial_seeds(base_seed, n_trials):
    return [[int(base_seed), k] for k in range(n_trials)]


def _worker(args):
    example, knobs, kwargs = args
    return run_trial(make_example(example, **knobs), **kwargs)


def worker_count(workers=None):
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1") or 1)
    if workers < 1:
        raise ConfigurationError("must be >= 1", WORKERS_ENV)
    return workers


def run_trials(spec, arch=None, counts=None, optimizer="lm", config=None, n_trials=5, base_seed=0,
               mode="phi_abs", m_test=None, exclude_diverged=False, workers=None):
    """``n_trials`` independent seeded runs and their means.

    Trials run on a process pool of ``workers`` (default from the
    ``CUSPPINN_WORKERS`` environment variable, else 1); results do not depend
    on the pool size.
    """
    if n_trials < 1:
        raise ConfigurationError("must be >= 1", "n_trials")
    arch = tuple(arch) if arch is not None else spec.arch
    counts = _check_counts(counts if counts is not None else spec.counts_for(arch))
    cfg = _optimizer_config(optimizer, config, spec)
    seeds = trial_seeds(base_seed, n_trials)
    kw = dict(arch=arch, counts=counts, optimizer=optimizer, config=cfg, mode=mode, m_test=m_test)
    n_workers = min(worker_count(workers), n_trials)
    if n_workers > 1:
        jobs = [(spec.id, dict(spec.knobs), dict(kw, seed=s)) for s in seeds]
        with ProcessPoolExecutor(n_workers) as pool:
            trials = list(pool.map(_worker, jobs))
    else:
        trials = [run_trial(spec, seed=s, **kw) for s in seeds]
    return TrialsReport(spec.id, dict(spec.knobs), arch, counts, mode, optimizer, trials, exclude_diverged)


def compare_augmentation(spec, arch=None, counts=None, modes=("phi_abs", "phi"), n_trials=5, base_seed=0,
                         config=None, m_test=None, workers=None):
    """Matched trials that differ only in the augmented input."""
    return {m: run_trials(spec, arch, counts, "lm", config, n_trials, base_seed, m, m_test, workers=workers)
            for m in modes}


def compare_optimizers(spec, arch=None, counts=None, n_trials=1, base_seed=0, lm_config=None, adam_config=None,
                       mode="phi_abs", m_test=None, workers=None):
    """LM versus Adam from identical collocation sets and initial weights."""
    return {
        "lm": run_trials(spec, arch, counts, "lm", lm_config, n_trials, base_seed, mode, m_test, workers=workers),
        "adam": run_trials(spec, arch, counts, "adam", adam_config, n_trials, base_seed, mode, m_test,
                           workers=workers),
    }


def write_table(reports, path):
    """Rows of 5-trial means, header :data:`TABLE_HEADER`."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TABLE_HEADER)
        for r in reports:
            w.writerow(r.table_row())
    return path


def json_safe(obj):
    """Replace non-finite floats by ``None`` so the document is strict JSON."""
    if isinstance(obj, dict):
        return {k: json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [json_safe(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        return float(obj) if np.isfinite(obj) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def write_trials_json(report, path):
    Path(path).write_text(json.dumps(json_safe(report.to_dict()), indent=2))
    return path


def with_knobs(spec, **knobs):
    """Rebuild ``spec`` with some knobs changed."""
    return make_example(spec.id, **(dict(spec.knobs) | knobs))
