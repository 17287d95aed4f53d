"""Command-line experiment runner.

Subcommands ``run``, ``sweep``, ``compare``, ``list-examples`` and
``export-points``.  Experiments are described by a JSON config whose keys are
the :class:`RunConfig` fields.  Exit status: 0 success, 2 configuration error,
3 numerical divergence.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from .bench import examples as bex
from .bench import trials as btr
from .errors import ConfigurationError
from .geometry import sample_collocation
from .problem import AUGMENTATIONS

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3
SCHEMA_VERSION = 1
FORMATS = ("csv", "json")
COMPARE_MODES = ("optimizers", "augmentation")

ERRORS_HEADER = [
    "trial", "seed", "rel_linf", "rel_l2", "rel_grad_linf", "abs_linf", "abs_l2", "M_test", "loss",
    "termination", "epochs", "seconds", "diverged",
]
LOSS_HEADER = ["epoch", "loss", "mu", "accepted"]


@dataclass
class RunConfig:
    """One experiment.

    ``counts`` is ``None`` (example default), an integer ``M0`` (grid-style
    examples only) or ``[M_I, M_Gamma, M_B]``.  ``grid`` is only read by
    ``sweep`` and maps ``"N"``, ``"L"`` or ``"M0"`` to lists of values.
    """

    example: str = "ex1"
    knobs: dict = field(default_factory=dict)
    arch: Optional[list] = None
    counts: object = None
    optimizer: str = "lm"
    optimizer_config: dict = field(default_factory=dict)
    augmentation: str = "phi_abs"
    n_trials: int = 5
    seed: int = 0
    out: str = "results"
    formats: list = field(default_factory=lambda: list(FORMATS))
    m_test: Optional[int] = None
    grid: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.example not in bex.EXAMPLE_IDS:
            raise ConfigurationError(f"unknown example {self.example!r}; choose from {bex.EXAMPLE_IDS}", "example")
        if not isinstance(self.knobs, dict):
            raise ConfigurationError("must be an object", "knobs")
        if self.arch is not None:
            if not (isinstance(self.arch, (list, tuple)) and len(self.arch) == 2
                    and all(_is_int(a) and a >= 1 for a in self.arch)):
                raise ConfigurationError(f"must be [L, N] with positive integers, got {self.arch!r}", "arch")
            self.arch = [int(a) for a in self.arch]
        c = self.counts
        if c is not None:
            if _is_int(c):
                if c < 1:
                    raise ConfigurationError(f"M0 must be positive, got {c}", "counts")
                if self.example != "ex2":
                    raise ConfigurationError("an M0 count is only defined for ex2", "counts")
            elif isinstance(c, (list, tuple)) and len(c) == 3 and all(_is_int(v) for v in c):
                if min(c) < 1:
                    raise ConfigurationError(f"all counts must be positive, got {list(c)}", "counts")
                self.counts = [int(v) for v in c]
            else:
                raise ConfigurationError(f"must be null, an integer M0 or [M_I, M_Gamma, M_B], got {c!r}", "counts")
        if self.optimizer not in btr.OPTIMIZERS:
            raise ConfigurationError(f"unknown optimizer {self.optimizer!r}; choose from {btr.OPTIMIZERS}",
                                     "optimizer")
        if not isinstance(self.optimizer_config, dict):
            raise ConfigurationError("must be an object", "optimizer_config")
        if self.augmentation not in AUGMENTATIONS:
            raise ConfigurationError(f"unknown mode {self.augmentation!r}; choose from {AUGMENTATIONS}",
                                     "augmentation")
        if not _is_int(self.n_trials) or self.n_trials < 1:
            raise ConfigurationError(f"must be a positive integer, got {self.n_trials!r}", "n_trials")
        if not _is_int(self.seed) or self.seed < 0:
            raise ConfigurationError(f"must be a non-negative integer, got {self.seed!r}", "seed")
        if not isinstance(self.out, str) or not self.out:
            raise ConfigurationError("must be a non-empty path", "out")
        if isinstance(self.formats, str):
            self.formats = [self.formats]
        bad = [f for f in self.formats if f not in FORMATS]
        if bad or not self.formats:
            raise ConfigurationError(f"choose a non-empty subset of {FORMATS}, got {self.formats!r}", "formats")
        if self.m_test is not None and (not _is_int(self.m_test) or self.m_test < 1):
            raise ConfigurationError(f"must be a positive integer, got {self.m_test!r}", "m_test")
        if not isinstance(self.grid, dict):
            raise ConfigurationError("must be an object", "grid")
        for k, vals in self.grid.items():
            if k not in ("N", "L", "M0"):
                raise ConfigurationError(f"unknown grid axis {k!r}; use N, L or M0", "grid")
            if not isinstance(vals, list) or not all(_is_int(v) and v >= 1 for v in vals):
                raise ConfigurationError(f"axis {k} must be a list of positive integers", f"grid.{k}")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, doc):
        if not isinstance(doc, dict):
            raise ConfigurationError("config must be a JSON object", "config")
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(doc) - names)
        if unknown:
            raise ConfigurationError(f"unknown key(s) {unknown}", unknown[0])
        return cls(**doc)

    def dumps(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def loads(cls, text):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"invalid JSON: {exc}", "config") from None
        return cls.from_dict(doc)

    @classmethod
    def load(cls, path):
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigurationError(f"cannot read {path}: {exc.strerror}", "config") from None
        return cls.loads(text)

    # resolved experiment pieces

    def spec(self):
        knobs = dict(self.knobs)
        if _is_int(self.counts):
            knobs["M0"] = int(self.counts)
        return bex.make_example(self.example, **knobs)

    def resolved(self, spec):
        arch = tuple(self.arch) if self.arch is not None else spec.arch
        counts = tuple(self.counts) if isinstance(self.counts, list) else spec.counts_for(arch)
        return arch, counts


def _is_int(v):
    return isinstance(v, (int, np.integer)) and not isinstance(v, bool)


# ---------------------------------------------------------------------------
# output writers


def _fmt(x):
    return "" if x is None else repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def write_errors_csv(report, path):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ERRORS_HEADER)
        for k, t in enumerate(report.trials):
            e = t.errors
            tr = t.train
            w.writerow([
                k, "-".join(str(s) for s in t.seed), _fmt(e.rel_linf), _fmt(e.rel_l2), _fmt(e.rel_grad_linf),
                _fmt(e.abs_linf), _fmt(e.abs_l2), e.M_test, _fmt(e.loss),
                "" if tr is None else tr.termination, "" if tr is None else tr.epochs, _fmt(t.seconds),
                int(t.diverged),
            ])
    return path


def summary_dict(config, report):
    return {
        "schema_version": SCHEMA_VERSION,
        "config": config.to_dict(),
        "example": report.example,
        "arch": list(report.arch),
        "counts": list(report.counts),
        "augmentation": report.mode,
        "optimizer": report.optimizer,
        "n_trials": len(report.trials),
        "n_diverged": report.n_diverged,
        "mean": report.mean.to_dict(),
        "trials": [t.to_dict() for t in report.trials],
        "seconds": report.mean_seconds,
    }


def write_report(config, report, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if "csv" in config.formats:
        written.append(write_errors_csv(report, out / "errors.csv"))
        for k, t in enumerate(report.trials):
            if t.train is not None:
                written.append(t.train.to_csv(out / f"loss_history_trial{k}.csv"))
    # summary.json is the run's record and is always written
    (out / "summary.json").write_text(json.dumps(btr.json_safe(summary_dict(config, report)), indent=2,
                                                 sort_keys=True))
    written.append(out / "summary.json")
    if "json" in config.formats:
        written.append(btr.write_trials_json(report, out / "trials.json"))
    return written


def write_aligned_losses(reports, path):
    """Loss histories side by side, one column per (label, trial), padded blank."""
    cols, names = [], []
    for label, rep in reports.items():
        for k, t in enumerate(rep.trials):
            names.append(f"{label}_trial{k}")
            cols.append([] if t.train is None else list(t.train.loss_history))
    n = max((len(c) for c in cols), default=0)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch"] + names)
        for i in range(n):
            w.writerow([i] + [repr(float(c[i])) if i < len(c) else "" for c in cols])
    return path


# ---------------------------------------------------------------------------
# commands


def _load_config(args):
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    over = {}
    if getattr(args, "out", None):
        over["out"] = args.out
    if getattr(args, "seed", None) is not None:
        over["seed"] = args.seed
    if getattr(args, "trials", None) is not None:
        over["n_trials"] = args.trials
    if getattr(args, "format", None):
        over["formats"] = [args.format]
    return replace(cfg, **over) if over else cfg


def _run(cfg, spec, arch, counts, mode=None, optimizer=None):
    return btr.run_trials(
        spec, arch, counts, optimizer or cfg.optimizer, cfg.optimizer_config or None, cfg.n_trials, cfg.seed,
        mode or cfg.augmentation, cfg.m_test,
    )


def cmd_run(args, stdout):
    cfg = _load_config(args)
    spec = cfg.spec()
    arch, counts = cfg.resolved(spec)
    report = _run(cfg, spec, arch, counts)
    write_report(cfg, report, cfg.out)
    m = report.mean
    print(f"{spec.id} arch={arch} counts={counts} rel_linf={m.rel_linf:.3e} rel_l2={m.rel_l2:.3e} "
          f"abs_linf={m.abs_linf:.3e} loss={m.loss:.3e} diverged={report.n_diverged}/{len(report.trials)}",
          file=stdout)
    return EXIT_DIVERGENCE if report.n_diverged else EXIT_OK


def _grid_cells(cfg, args):
    grid = dict(cfg.grid)
    for axis in ("N", "L", "M0"):
        v = getattr(args, f"grid_{axis}", None)
        if v is not None:
            grid[axis] = v
    if not grid or any(len(v) == 0 for v in grid.values()):
        raise ConfigurationError("sweep needs a non-empty grid over N, L or M0", "grid")
    if "M0" in grid and cfg.example != "ex2":
        raise ConfigurationError("an M0 axis is only defined for ex2", "grid.M0")
    axes = [a for a in ("M0", "L", "N") if a in grid]
    return axes, list(itertools.product(*(grid[a] for a in axes)))


def cmd_sweep(args, stdout):
    cfg = _load_config(args)
    axes, cells = _grid_cells(cfg, args)
    reports = []
    for cell in cells:
        c = dict(zip(axes, cell))
        sub = replace(cfg, counts=c.get("M0", cfg.counts))
        spec = sub.spec()
        arch0, _ = sub.resolved(spec)
        arch = (c.get("L", arch0[0]), c.get("N", arch0[1]))
        _, counts = replace(sub, arch=list(arch)).resolved(spec)
        rep = _run(sub, spec, arch, counts)
        reports.append(rep)
        m = rep.mean
        print(f"{c} rel_linf={m.rel_linf:.3e} rel_l2={m.rel_l2:.3e} loss={m.loss:.3e}", file=stdout)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    btr.write_table(reports, out / "table.csv")
    if "json" in cfg.formats:
        doc = {"schema_version": SCHEMA_VERSION, "config": cfg.to_dict(), "cells": [r.to_dict() for r in reports]}
        (out / "sweep.json").write_text(json.dumps(btr.json_safe(doc), indent=2, sort_keys=True))
    return EXIT_DIVERGENCE if any(r.n_diverged for r in reports) else EXIT_OK


def cmd_compare(args, stdout):
    if args.mode not in COMPARE_MODES:
        raise ConfigurationError(f"unknown mode {args.mode!r}; choose from {COMPARE_MODES}", "mode")
    cfg = _load_config(args)
    spec = cfg.spec()
    arch, counts = cfg.resolved(spec)
    if args.mode == "optimizers":
        lm_cfg = cfg.optimizer_config if cfg.optimizer == "lm" else {}
        adam_cfg = cfg.optimizer_config if cfg.optimizer == "adam" else {}
        reports = btr.compare_optimizers(spec, arch, counts, cfg.n_trials, cfg.seed, lm_cfg or None,
                                         adam_cfg or None, cfg.augmentation, cfg.m_test)
    else:
        modes = tuple(args.modes.split(",")) if args.modes else ("phi_abs", "phi")
        for m in modes:
            if m not in AUGMENTATIONS:
                raise ConfigurationError(f"unknown mode {m!r}; choose from {AUGMENTATIONS}", "modes")
        reports = btr.compare_augmentation(spec, arch, counts, modes, cfg.n_trials, cfg.seed,
                                           cfg.optimizer_config or None, cfg.m_test)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    btr.write_table(list(reports.values()), out / f"compare_{args.mode}.csv")
    write_aligned_losses(reports, out / f"compare_{args.mode}_loss.csv")
    for label, rep in reports.items():
        m = rep.mean
        print(f"{label}: rel_linf={m.rel_linf:.3e} rel_l2={m.rel_l2:.3e} loss={m.loss:.3e}", file=stdout)
    return EXIT_DIVERGENCE if any(r.n_diverged for r in reports.values()) else EXIT_OK


def cmd_list_examples(args, stdout):
    w = csv.writer(stdout) if args.format == "csv" else None
    rows = bex.describe_examples()
    if w is not None:
        w.writerow(["id", "title", "dim", "M_I", "M_gamma", "M_B", "L", "N"])
        for k, title, d, c, a in rows:
            w.writerow([k, title, d, *c, *a])
    elif args.format == "json":
        print(json.dumps([{"id": k, "title": t, "dim": d, "counts": list(c), "arch": list(a)}
                          for k, t, d, c, a in rows], indent=2), file=stdout)
    else:
        for k, title, d, c, a in rows:
            print(f"{k}  d={d}  counts={c}  arch={a}  {title}", file=stdout)
    return EXIT_OK


def cmd_export_points(args, stdout):
    cfg = _load_config(args)
    spec = cfg.spec()
    arch, counts = cfg.resolved(spec)
    seq = np.random.SeedSequence([cfg.seed, 0]).spawn(4)[0]  # trial 0 collocation stream
    col = sample_collocation(spec.domain, spec.level_set, *counts, seed=seq, M0=spec.M0)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    path = col.to_csv(out / "points.csv")
    print(f"wrote {col.M} points to {path}", file=stdout)
    return EXIT_OK


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser():
    p = argparse.ArgumentParser(prog="cusppinn", description="Cusp-capturing PINN experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, fmt=True):
        sp.add_argument("--config", help="JSON run config")
        sp.add_argument("--out", help="output directory (overrides config)")
        sp.add_argument("--seed", type=int, help="base seed (overrides config)")
        sp.add_argument("--trials", type=int, help="number of trials (overrides config)")
        if fmt:
            sp.add_argument("--format", choices=FORMATS, help="restrict outputs to one format")

    common(sub.add_parser("run", help="run seeded trials for one configuration"))
    sw = sub.add_parser("sweep", help="cartesian sweep over N, L and M0")
    common(sw)
    sw.add_argument("--N", dest="grid_N", type=_int_list)
    sw.add_argument("--L", dest="grid_L", type=_int_list)
    sw.add_argument("--M0", dest="grid_M0", type=_int_list)
    cp = sub.add_parser("compare", help="matched runs differing in optimizer or augmentation")
    cp.add_argument("mode", help="optimizers | augmentation")
    cp.add_argument("--modes", help="comma-separated augmentation modes (default phi_abs,phi)")
    common(cp)
    le = sub.add_parser("list-examples", help="list built-in examples")
    le.add_argument("--format", choices=FORMATS + ("text",), default="text")
    common(sub.add_parser("export-points", help="write the trial-0 collocation set as CSV"), fmt=False)
    return p


COMMANDS = {
    "run": cmd_run,
    "sweep": cmd_sweep,
    "compare": cmd_compare,
    "list-examples": cmd_list_examples,
    "export-points": cmd_export_points,
}


def main(argv=None, stdout=None):
    stdout = stdout or sys.stdout
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args, stdout)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def schema():
    """The shipped JSON schema for ``summary.json``."""
    return json.loads(resources.files("cusppinn.schemas").joinpath("summary.schema.json").read_text())


if __name__ == "__main__":
    sys.exit(main())
