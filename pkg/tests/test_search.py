import numpy as np
import pytest

from pwabarrier.search import (
    AlphaSearchResult,
    Status,
    bisect_alpha,
    max_probes,
    synthesize,
)


class _Stub:
    def __init__(self, valid):
        self.valid = valid
        self.status = Status.VALID if valid else Status.BUDGET_EXHAUSTED


def threshold_probe(alpha_star):
    return lambda a: _Stub(a <= alpha_star)


def test_square_valid_without_refinement(square_result):
    r = square_result
    assert r.status is Status.VALID
    assert r.iterations == 0
    assert r.final_cells == r.initial_cells == 4
    assert r.report.sum_tau_b <= 1e-8
    assert not r.best_iterate
    assert len(r.history) == 1


def test_unstable_exhausts_budget(unstable_square):
    r = synthesize(unstable_square, 1.0, budget_s=2.0)
    assert r.status is Status.BUDGET_EXHAUSTED
    assert r.best_iterate
    assert r.barrier is not None
    assert r.history and all(h.sum_tau_b > 1e-8 for h in r.history)
    assert r.report.sum_tau_b == min(h.sum_tau_b for h in r.history)
    assert r.elapsed < 2.0 + 30.0


def test_budget_must_be_positive(square):
    with pytest.raises(ValueError):
        synthesize(square, 1.0, budget_s=0)


def test_cells_grow_strictly(unstable_square):
    r = synthesize(unstable_square, 1.0, budget_s=2.0)
    cells = [h.n_cells for h in r.history]
    assert all(b > a for a, b in zip(cells, cells[1:]))


def test_synthesis_deterministic(pendulum):
    a = synthesize(pendulum, 0.2, budget_s=1.0)
    b = synthesize(pendulum, 0.2, budget_s=1.0)
    # budgets may cut the runs at different iterations; compare the common prefix
    for ha, hb in zip(a.history, b.history):
        assert ha.n_cells == hb.n_cells
        assert ha.sum_tau_b == pytest.approx(hb.sum_tau_b, rel=1e-9, abs=1e-12)


def test_bisect_stub_threshold():
    interval, tol = (1e-3, 10.0), 0.05
    calls = []

    def probe(a):
        calls.append(a)
        return _Stub(a <= 1.0)

    res = bisect_alpha(None, interval, alpha_tol=tol, probe=probe)
    assert res.status is Status.VALID
    assert 0.95 <= res.best_alpha <= 1.0
    assert len(calls) <= max_probes(interval, tol)
    assert [a for a, _ in res.probes] == calls


def test_bisect_no_valid_alpha():
    res = bisect_alpha(None, (1e-3, 10.0), probe=threshold_probe(1e-4))
    assert res.status is Status.NO_VALID_ALPHA
    assert res.best_alpha is None
    assert len(res.probes) == 1


def test_bisect_extend_interval_stub():
    res = bisect_alpha(None, (1e-3, 0.5), probe=threshold_probe(3.0))
    assert res.best_alpha == 0.5 and res.extend_interval


def test_bisect_square_upper_end(square):
    res = bisect_alpha(square, (1e-3, 0.5), per_probe_budget_s=30)
    assert isinstance(res, AlphaSearchResult)
    assert res.status is Status.VALID
    assert res.best_alpha == 0.5
    assert res.extend_interval
    assert res.result.valid


def test_bisect_unstable_real(unstable_square):
    res = bisect_alpha(unstable_square, (0.5, 1.0), per_probe_budget_s=0.5)
    assert res.status is Status.NO_VALID_ALPHA


def test_bisect_bad_interval():
    with pytest.raises(ValueError):
        bisect_alpha(None, (1.0, 0.5), probe=threshold_probe(1))
    with pytest.raises(ValueError):
        bisect_alpha(None, (0.0, 0.5), probe=threshold_probe(1))


@pytest.mark.parametrize("star", np.linspace(0.01, 9.9, 13))
def test_bisect_brackets_threshold(star):
    res = bisect_alpha(None, (1e-3, 10.0), alpha_tol=0.05, probe=threshold_probe(star))
    assert star - 0.05 <= res.best_alpha <= star
    assert len(res.probes) <= max_probes((1e-3, 10.0), 0.05)
