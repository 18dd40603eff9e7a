"""scikit-learn style wrappers.

``fit`` takes a :class:`~pwabarrier.pwa.PwaDynamics` (or a ReLU network for
the extractor) in place of a data matrix; the fitted objects then score or
transform ordinary ``(n_samples, n_features)`` arrays of states.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils import check_array
from sklearn.utils.validation import check_is_fitted

from .exceptions import DimensionMismatch, NotTwoDimensional
from .pwa import PwaDynamics
from .relu import MAX_NEURONS, ReluNet, enumerate_regions
from .search import DEFAULT_BUDGET_S, MIN_ALPHA, Status, bisect_alpha, synthesize
from .verify import barrier_values, check_certificate, levelset_segments, normalize_barrier


def check_dynamics(d) -> PwaDynamics:
    if not isinstance(d, PwaDynamics):
        raise TypeError(f"expected PwaDynamics, got {type(d).__name__}")
    return d


def check_points(X, dim=None):
    """``check_array`` for states: finite floats, 2-D, optional width check."""
    X = check_array(X, dtype=np.float64, ensure_2d=False)
    if X.ndim == 1:
        X = X.reshape(1, -1) if dim is None or X.size == dim else X.reshape(-1, 1)
    if dim is not None and X.shape[1] != dim:
        raise DimensionMismatch(f"X has {X.shape[1]} features, expected {dim}")
    return X


class _BarrierScorer:
    """Shared scoring for fitted synthesizers; needs ``barrier_`` and ``dynamics_``."""

    def decision_function(self, X):
        """Barrier value ``h(x)`` at each row of ``X``."""
        check_is_fitted(self, "barrier_")
        X = check_points(X, self.dynamics_.dim)
        return barrier_values(self.barrier_, self.dynamics_, X)

    def predict(self, X):
        """``True`` where ``x`` lies in the certified invariant set ``h >= 0``."""
        return self.decision_function(X) >= 0.0

    def certificate(self, samples_per_cell: int = 100, rng=None):
        check_is_fitted(self, "barrier_")
        return check_certificate(self.barrier_, self.dynamics_, self.result_.index_sets,
                                 self.alpha_, self.result_.eps, samples_per_cell, rng)

    def levelset(self, level: float = 0.0):
        check_is_fitted(self, "barrier_")
        if self.dynamics_.dim != 2:
            raise NotTwoDimensional("level sets need a 2-D system")
        return levelset_segments(self.barrier_, self.dynamics_, level)


class PwaBarrierSynthesizer(_BarrierScorer, BaseEstimator):
    """Solve-refine synthesis at a fixed gain.

    Parameters
    ----------
    alpha : float
        Linear class-K gain.
    eps : float or tuple of 3 floats
        Margins of the boundary, interior and decrease constraints.
    budget_s : float
        Wall-clock budget for the refinement loop.
    objective : {"lexicographic", "sum"}
        How the slack sums are minimised.
    normalize : bool
        Scale a valid barrier up to peak value 1 (keeps validity).

    Attributes
    ----------
    result_ : SynthesisResult
    status_ : Status
    barrier_ : BarrierCandidate or None
        ``None`` when no valid barrier was found.
    dynamics_ : PwaDynamics
        The refined partition the barrier lives on.
    """

    def __init__(self, alpha=1.0, eps=1e-4, budget_s=DEFAULT_BUDGET_S,
                 objective="lexicographic", normalize=True):
        self.alpha = alpha
        self.eps = eps
        self.budget_s = budget_s
        self.objective = objective
        self.normalize = normalize

    def fit(self, X, y=None):
        d = check_dynamics(X)
        res = synthesize(d, self.alpha, self.eps, budget_s=self.budget_s,
                         objective=self.objective)
        self._store(res)
        return self

    def _store(self, res):
        self.result_ = res
        self.status_ = res.status
        self.alpha_ = res.alpha
        self.dynamics_ = res.dynamics
        self.n_cells_ = res.final_cells
        if res.valid:
            b = res.barrier
            self.barrier_ = normalize_barrier(b, res.dynamics) if self.normalize else b
        else:
            self.barrier_ = None

    def decision_function(self, X):
        if getattr(self, "barrier_", None) is None and hasattr(self, "result_"):
            raise ValueError(f"no valid barrier (status {self.status_.value})")
        return super().decision_function(X)


class AlphaBisectionSynthesizer(PwaBarrierSynthesizer):
    """Largest gain on ``interval`` (to within ``alpha_tol``) with a valid barrier."""

    def __init__(self, interval=(MIN_ALPHA, 10.0), alpha_tol=0.05, eps=1e-4,
                 per_probe_budget_s=DEFAULT_BUDGET_S, normalize=True):
        self.interval = interval
        self.alpha_tol = alpha_tol
        self.eps = eps
        self.per_probe_budget_s = per_probe_budget_s
        self.normalize = normalize

    def fit(self, X, y=None):
        d = check_dynamics(X)
        search = bisect_alpha(d, tuple(self.interval), self.eps, alpha_tol=self.alpha_tol,
                              per_probe_budget_s=self.per_probe_budget_s)
        self.search_ = search
        self.best_alpha_ = search.best_alpha
        self.probes_ = list(search.probes)
        if search.status is Status.NO_VALID_ALPHA:
            self.status_ = search.status
            self.result_ = None
            self.barrier_ = None
            self.dynamics_ = d
            self.alpha_ = None
            return self
        self._store(search.result)
        self.status_ = search.status
        return self


class ReluPwaExtractor(TransformerMixin, BaseEstimator):
    """Exact PWA extraction of a one-hidden-layer ReLU network.

    ``fit`` takes a :class:`ReluNet`; ``transform`` evaluates the extracted
    PWA field (identical to the network) at states ``X``.
    """

    def __init__(self, box_lo=None, box_hi=None, max_neurons=MAX_NEURONS):
        self.box_lo = box_lo
        self.box_hi = box_hi
        self.max_neurons = max_neurons

    def fit(self, X, y=None):
        if not isinstance(X, ReluNet):
            raise TypeError(f"expected ReluNet, got {type(X).__name__}")
        if self.box_lo is None or self.box_hi is None:
            raise ValueError("box_lo and box_hi must be set")
        self.dynamics_ = enumerate_regions(X, (self.box_lo, self.box_hi), self.max_neurons)
        self.n_cells_ = self.dynamics_.n_cells
        self.n_features_in_ = X.dim
        return self

    def transform(self, X):
        check_is_fitted(self, "dynamics_")
        X = check_points(X, self.dynamics_.dim)
        return self.dynamics_(X)
