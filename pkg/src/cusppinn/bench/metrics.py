"""Error metrics against closed-form solutions."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from ..errors import DegenerateSolutionError

METRICS = ("rel_linf", "rel_l2", "rel_grad_linf", "abs_linf", "abs_l2")


@dataclass(frozen=True)
class ErrorReport:
    """Errors of one prediction on ``M_test`` held-out points.

    ``rel_grad_linf`` is ``nan`` when no gradient was compared and ``loss`` is
    the final training loss when known.
    """

    rel_linf: float
    rel_l2: float
    rel_grad_linf: float
    abs_linf: float
    abs_l2: float
    M_test: int
    loss: float = math.nan

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**{f.name: d[f.name] for f in fields(cls)})


def _values(fn, x):
    v = fn.value(x) if hasattr(fn, "value") else fn(x)
    return np.asarray(v, dtype=np.float64).reshape(-1)


def relative_errors(solution, exact_u, test_points, solution_grad=None, exact_grad=None, loss=math.nan):
    """Compare ``solution`` with ``exact_u`` on ``test_points``.

    The gradient norm is the mean over components of the per-component max
    norm, for both error and normaliser.
    """
    x = np.asarray(test_points, dtype=np.float64)
    u = _values(exact_u, x)
    e = _values(solution, x) - u
    norm_inf = np.max(np.abs(u))
    norm_2 = np.sqrt(np.mean(u * u))
    if norm_inf == 0.0 or norm_2 == 0.0:
        raise DegenerateSolutionError("exact solution vanishes on the test set")
    abs_inf = float(np.max(np.abs(e)))
    abs_2 = float(np.sqrt(np.mean(e * e)))
    rel_grad = math.nan
    if solution_grad is not None and exact_grad is not None:
        gu = np.asarray(exact_grad(x), dtype=np.float64)
        ge = np.asarray(solution_grad(x), dtype=np.float64) - gu
        denom = np.mean(np.max(np.abs(gu), axis=0))
        if denom == 0.0:
            raise DegenerateSolutionError("exact gradient vanishes on the test set")
        rel_grad = float(np.mean(np.max(np.abs(ge), axis=0)) / denom)
    return ErrorReport(abs_inf / norm_inf, abs_2 / norm_2, rel_grad, abs_inf, abs_2, x.shape[0], float(loss))


def mean_report(reports):
    """Field-wise arithmetic mean; ``M_test`` is the mean count rounded."""
    reports = list(reports)
    if not reports:
        nan = math.nan
        return ErrorReport(nan, nan, nan, nan, nan, 0, nan)
    agg = {k: float(np.mean([getattr(r, k) for r in reports])) for k in METRICS + ("loss",)}
    return ErrorReport(M_test=int(round(np.mean([r.M_test for r in reports]))), **agg)
