"""Solve-refine loop and bisection over the class-K gain."""
from __future__ import annotations

import enum
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

from .barrier_lp import (
    NONZERO_TOL,
    AlphaGain,
    BarrierCandidate,
    Epsilons,
    LpProblem,
    SlackReport,
    assemble,
    flagged_cells,
    is_valid,
    solve,
)
from .exceptions import SolverTimeLimit
from .pwa import IndexSets, PwaDynamics, build_index_sets
from .refine import refine_partition

logger = logging.getLogger(__name__)

DEFAULT_BUDGET_S = 3600.0
MIN_ALPHA = 1e-3


class Status(str, enum.Enum):
    VALID = "valid"
    BUDGET_EXHAUSTED = "budget_exhausted"
    NO_VALID_ALPHA = "no_valid_alpha"


@dataclass
class IterationRecord:
    iteration: int
    n_cells: int
    sum_tau_b: float
    sum_tau_int: float
    lp_seconds: float
    elapsed: float


@dataclass
class SynthesisResult:
    status: Status
    barrier: Optional[BarrierCandidate]
    dynamics: PwaDynamics
    report: Optional[SlackReport]
    index_sets: Optional[IndexSets]
    alpha: float
    eps: Epsilons
    iterations: int
    initial_cells: int
    final_cells: int
    elapsed: float
    history: list = field(default_factory=list)
    best_iterate: bool = False
    lp: Optional[LpProblem] = None

    @property
    def valid(self) -> bool:
        return self.status is Status.VALID


@dataclass
class AlphaSearchResult:
    status: Status
    best_alpha: Optional[float]
    result: Optional[SynthesisResult]
    probes: list = field(default_factory=list)
    extend_interval: bool = False


def synthesize(d: PwaDynamics, alpha, eps=None, budget_s: float = DEFAULT_BUDGET_S,
               tol: float = NONZERO_TOL, objective: str = "lexicographic") -> SynthesisResult:
    """Alternate LP solves and vector-field refinement until the boundary
    slacks vanish or the wall-clock budget runs out.

    On budget exhaustion the iterate with the smallest boundary-slack sum is
    returned (``best_iterate=True``) together with the full slack history.
    ``objective`` is passed to :func:`~pwabarrier.barrier_lp.assemble`.
    """
    if budget_s <= 0:
        raise ValueError("budget_s must be positive")
    alpha = AlphaGain.coerce(alpha).alpha_tilde
    eps = Epsilons.coerce(eps)
    start = time.perf_counter()
    initial = d.n_cells
    history = []
    best = None
    iteration = 0
    current = d

    def finish(status, snap, best_flag=False):
        lp, cand, report, idx, dyn = snap if snap else (None, None, None, None, current)
        return SynthesisResult(
            status=status, barrier=cand, dynamics=dyn, report=report, index_sets=idx,
            alpha=alpha, eps=eps, iterations=iteration, initial_cells=initial,
            final_cells=dyn.n_cells, elapsed=time.perf_counter() - start,
            history=history, best_iterate=best_flag, lp=lp,
        )

    while True:
        remaining = budget_s - (time.perf_counter() - start)
        if remaining <= 0:
            return finish(Status.BUDGET_EXHAUSTED, best, True)
        t0 = time.perf_counter()
        idx = build_index_sets(current)
        lp = assemble(current, idx, alpha, eps, objective)
        try:
            cand, report = solve(lp, time_limit=remaining)
        except SolverTimeLimit:
            return finish(Status.BUDGET_EXHAUSTED, best, True)
        lp_s = time.perf_counter() - t0
        elapsed = time.perf_counter() - start
        history.append(IterationRecord(
            iteration, current.n_cells, report.sum_tau_b, report.sum_tau_int, lp_s, elapsed
        ))
        logger.info(
            "iter %d cells %d sum_tau_b %.3g sum_tau_int %.3g elapsed %.2fs",
            iteration, current.n_cells, report.sum_tau_b, report.sum_tau_int, elapsed,
        )
        snap = (lp, cand, report, idx, current)
        if is_valid(report, tol):
            return finish(Status.VALID, snap)
        if best is None or report.sum_tau_b < best[2].sum_tau_b:
            best = snap
        if elapsed >= budget_s:
            return finish(Status.BUDGET_EXHAUSTED, best, True)
        current = refine_partition(current, flagged_cells(report, tol))
        iteration += 1


def bisect_alpha(d: PwaDynamics, interval=(MIN_ALPHA, 10.0), eps=None, alpha_tol: float = 0.05,
                 per_probe_budget_s: float = DEFAULT_BUDGET_S,
                 probe: Optional[Callable[[float], SynthesisResult]] = None) -> AlphaSearchResult:
    """Largest probed gain for which synthesis succeeds.

    Endpoints are probed first; then the bracket ``(lo valid, hi invalid)`` is
    halved until narrower than ``alpha_tol``.  Every probe starts from the
    unrefined partition ``d``.  ``probe`` replaces the synthesis call (for
    testing against a known threshold).
    """
    lo, hi = (float(a) for a in interval)
    if not 0 < lo < hi:
        raise ValueError("interval must satisfy 0 < lo < hi")
    if probe is None:
        def probe(a):
            return synthesize(d, a, eps, budget_s=per_probe_budget_s)

    log = []

    def run(a):
        r = probe(a)
        log.append((a, r.status))
        logger.info("alpha %.6g -> %s", a, r.status.value)
        return r

    r_lo = run(lo)
    if not r_lo.valid:
        return AlphaSearchResult(Status.NO_VALID_ALPHA, None, None, log)
    r_hi = run(hi)
    if r_hi.valid:
        return AlphaSearchResult(Status.VALID, hi, r_hi, log, extend_interval=True)
    best_alpha, best = lo, r_lo
    while hi - lo > alpha_tol:
        mid = 0.5 * (lo + hi)
        r = run(mid)
        if r.valid:
            lo, best_alpha, best = mid, mid, r
        else:
            hi = mid
    return AlphaSearchResult(Status.VALID, best_alpha, best, log)


def max_probes(interval, alpha_tol: float) -> int:
    lo, hi = interval
    return 2 + max(0, math.ceil(math.log2((hi - lo) / alpha_tol)))
