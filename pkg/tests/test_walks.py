import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fslab import walks
from fslab.errors import (
    DomainError,
    FeasibilityError,
    NoAdmissiblePathError,
    SizeError,
    UnsolvableScaleError,
)
from fslab.walks import EnsembleSpec, OrderedPaths, StepKernel, TiltPotential

import oracles

SIMPLE = StepKernel.simple()


def power(lam, alpha=1.0):
    return TiltPotential.power_law(lam, alpha)


# ---------------------------------------------------------------- kernel


def test_simple_kernel_fields():
    k = StepKernel.simple()
    assert k.variance == 1.0
    assert k.period == 2
    assert k.prob(1) == 0.5 and k.prob(0) == 0.0
    assert list(k.table()) == [0.5, 0.0, 0.5]


@pytest.mark.parametrize("steps", [
    {0: 1.0},  # frozen walk
    {-2: 0.5, 2: 0.5},  # lives on 2Z
    {-1: 0.3, 1: 0.3},  # does not sum to 1
    {-1: 0.25, 2: 0.75},  # drift
    {-1: 0.5, 1: 0.5, 3: 0.0},  # zero weight
])
def test_invalid_kernels_rejected(steps):
    with pytest.raises(DomainError):
        StepKernel.from_mapping(steps)


def test_asymmetric_irreducible_kernel_accepted():
    k = StepKernel.from_mapping({-2: 1 / 3, 1: 2 / 3})
    assert k.variance == pytest.approx(4 / 3 + 2 / 3)
    assert k.period == 3


# ---------------------------------------------------------------- tilt and scale


def test_h_lambda_closed_forms():
    assert power(0.001).h_lambda == pytest.approx(10.0, rel=1e-15)
    assert power(0.0001, 2.0).h_lambda == pytest.approx(10.0, rel=1e-15)


def test_h_lambda_tabulated_matches_independent_bisection():
    x = np.linspace(0.0, 1e6, 200_001)
    v = 0.01 * x / (1 + 0.01 * x)
    tilt = TiltPotential.tabulated(x, v, eps=1e-6)
    H = tilt.h_lambda
    assert abs(H * H * tilt(H) - 1.0) <= 1e-10

    def g(h):
        return h * h * np.interp(h, x, v) - 1.0

    lo, hi = 0.0, 1e6
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if g(mid) < 0 else (lo, mid)
    assert H == pytest.approx(lo, rel=1e-12)


def test_unsolvable_scale():
    with pytest.raises(UnsolvableScaleError):
        TiltPotential.tabulated([0.0, 1.0, 2.0], [0.0, 0.1, 1e9], eps=1.0).h_lambda
    with pytest.raises(UnsolvableScaleError):
        power(0.0).h_lambda


def test_tabulated_divergence_check():
    with pytest.raises(DomainError):
        TiltPotential.tabulated([0.0, 10.0], [0.0, 1.0], eps=1e-3)


def test_tabulated_range_enforced():
    tilt = TiltPotential.tabulated([0.0, 10.0], [0.0, 100.0], eps=1e-3)
    assert tilt(5.0) == 50.0
    with pytest.raises(DomainError):
        tilt(11.0)
    with pytest.raises(DomainError):
        tilt(-1.0)


@given(lam=st.floats(1e-6, 10.0), alpha=st.floats(0.25, 4.0), r=st.floats(0.0, 20.0))
def test_rescaled_power_law_is_exact(lam, alpha, r):
    assert walks.rescaled_potential(power(lam, alpha), r) == pytest.approx(r**alpha, rel=1e-12, abs=1e-300)


def test_rescaled_tabulated_converges_to_linear():
    errs = []
    for lam in (1e-2, 1e-3):
        x = np.linspace(0.0, 1e5, 1_000_001)
        tilt = TiltPotential.tabulated(x, lam * x / (1 + lam * x / 50), eps=1e-6)
        errs.append(abs(walks.rescaled_potential(tilt, 1.5) - 1.5))
    assert errs[1] < errs[0] < 0.1


# ---------------------------------------------------------------- ensembles


def test_ensemble_validation():
    with pytest.raises(DomainError):
        EnsembleSpec(2, 3, (1, 3), (3, 1), SIMPLE, power(0.1), 5)
    with pytest.raises(DomainError):
        EnsembleSpec(1, 3, (6,), (0,), SIMPLE, power(0.1), 5)
    with pytest.raises(DomainError):
        EnsembleSpec(1, 3, (-1,), (0,), SIMPLE, power(0.1), 5)
    spec = EnsembleSpec(1, 3, (0,), (0,), SIMPLE, power(0.001))
    assert spec.M == 80


def test_transfer_partition_hand_values():
    spec = EnsembleSpec(1, 1, (1,), (1,), SIMPLE, power(0.0), 3)
    assert walks.transfer_partition(spec) == pytest.approx(0.5, rel=1e-14)
    spec = spec.with_(tilt=power(0.1))
    expect = 0.25 * (math.exp(-0.2) + math.exp(-0.4))
    assert walks.transfer_partition(spec) == pytest.approx(expect, rel=1e-14)
    assert walks.marginal_height(spec, 0)[0] == pytest.approx(math.exp(-0.2) / (math.exp(-0.2) + math.exp(-0.4)), rel=1e-14)


def test_no_admissible_path():
    tilt = TiltPotential.tabulated([0.0, 1.0, 100.0], [0.0, 1e300, 1e300], eps=1e-6)
    spec = EnsembleSpec(1, 3, (0,), (0,), SIMPLE, tilt, 5)
    assert walks.transfer_partition(spec) == 0.0
    assert walks.log_transfer_partition(spec) == -math.inf
    with pytest.raises(NoAdmissiblePathError):
        walks.marginal_height(spec, 0)


def test_log_partition_survives_underflow():
    spec = EnsembleSpec(1, 4000, (0,), (0,), SIMPLE, power(0.5), 40)
    logz = walks.log_transfer_partition(spec)
    assert math.isfinite(logz) and logz < -1000
    assert walks.log_ordered_partition(spec) == pytest.approx(logz, rel=1e-12)


@pytest.mark.parametrize("t", [-3, -1, 0, 2, 3])
def test_marginal_matches_enumeration(t):
    steps = {-1: 0.25, 0: 0.5, 1: 0.25}
    V = lambda x: 0.3 * x**1.5  # noqa: E731
    spec = EnsembleSpec(1, 3, (2,), (1,), StepKernel.from_mapping(steps), power(0.3, 1.5), 6)
    p = walks.marginal_height(spec, t)
    q = oracles.brute_force_marginal(3, 2, 1, steps, V, 6, t)
    assert np.allclose(p, q, atol=1e-13)
    assert p.sum() == pytest.approx(1.0, abs=1e-10)


def test_marginal_pinned_at_ends():
    spec = EnsembleSpec(1, 5, (3,), (1,), SIMPLE, power(0.1), 10)
    assert walks.marginal_height(spec, -5)[3] == pytest.approx(1.0)
    assert walks.marginal_height(spec, 5)[1] == pytest.approx(1.0)


def test_two_path_hand_example():
    spec = EnsembleSpec(2, 1, (3, 1), (3, 1), SIMPLE, power(0.0), 4)
    ref = oracles.brute_force_partition(2, 1, (3, 1), (3, 1), {-1: 0.5, 1: 0.5}, lambda x: 0.0, 4)
    assert ref == pytest.approx(0.25)  # all four pairs are weakly ordered at t = 0
    assert walks.ordered_exact_partition(spec) == pytest.approx(ref, rel=1e-14)


def test_ordered_reduces_to_transfer():
    spec = EnsembleSpec(1, 6, (2,), (0,), SIMPLE, power(0.2), 12)
    assert walks.log_ordered_partition(spec) == pytest.approx(walks.log_transfer_partition(spec), rel=1e-12)


def test_ordered_marginal_matches_enumeration():
    spec = EnsembleSpec(2, 2, (2, 0), (2, 0), SIMPLE, power(0.2), 4)
    joint = walks.ordered_marginal(spec, 0)
    brute = np.zeros((5, 5))
    A = oracles.enumerate_paths(2, 2, 4, [-1, 1], 4)
    B = oracles.enumerate_paths(0, 0, 4, [-1, 1], 4)
    for ha, _ in A:
        for hb, _ in B:
            if all(a >= b for a, b in zip(ha, hb)):  # step weights are all 1/2 and cancel
                brute[ha[2], hb[2]] += math.exp(-0.2 * (sum(ha) + sum(hb)))
    assert np.allclose(joint, brute / brute.sum(), atol=1e-14)
    m = walks.path_marginals(joint)
    assert np.allclose(m.sum(axis=1), 1.0)


def test_budget_and_path_count_limits():
    spec = EnsembleSpec(2, 50, (0, 0), (0, 0), SIMPLE, power(0.01), 40)
    with pytest.raises(SizeError):
        walks.ordered_exact_partition(spec, budget=1000)
    big = EnsembleSpec(4, 2, (0,) * 4, (0,) * 4, SIMPLE, power(0.1), 4)
    with pytest.raises(SizeError):
        walks.ordered_exact_partition(big)


def test_tilt_monotonicity_of_total_height():
    def mean_area(lam):
        spec = EnsembleSpec(1, 6, (0,), (0,), SIMPLE, power(lam), 14)
        return sum(walks.marginal_height(spec, t) @ np.arange(15) for t in range(-6, 7))

    vals = [mean_area(lam) for lam in (0.0, 0.05, 0.2, 1.0)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))


# ---------------------------------------------------------------- sampler


def test_greedy_configuration_is_valid():
    spec = EnsembleSpec(3, 6, (4, 2, 0), (4, 2, 2), SIMPLE, power(0.1), 8)
    cfg = walks.greedy_configuration(spec)
    cfg.validate(spec)


def test_infeasible_spec():
    spec = EnsembleSpec(1, 1, (0,), (4,), SIMPLE, power(0.1), 8)
    with pytest.raises(FeasibilityError):
        list(walks.mcmc_sample(spec, 1, 10))


def test_mcmc_stream_is_valid_and_seeded():
    spec = EnsembleSpec(2, 5, (2, 0), (2, 0), SIMPLE, power(0.2), 6)
    a = [p.heights for p in walks.mcmc_sample(spec, 42, 50, thin=5)]
    b = [p.heights for p in walks.mcmc_sample(spec, 42, 50, thin=5)]
    c = [p.heights for p in walks.mcmc_sample(spec, 43, 50, thin=5)]
    assert len(a) == 10
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert not all(np.array_equal(x, y) for x, y in zip(a, c))
    for h in a:
        OrderedPaths(h).validate(spec)


def test_mcmc_mean_single_path():
    spec = EnsembleSpec(1, 10, (0,), (0,), SIMPLE, power(0.0), 30)
    exact = walks.marginal_height(spec, 0) @ np.arange(31)
    series = np.array([p.heights[0, 10] for p in walks.mcmc_sample(spec, 7, 100_000, burn_in=100)])
    batches = series.reshape(100, -1).mean(axis=1)
    se = batches.std(ddof=1) / math.sqrt(len(batches))
    assert abs(series.mean() - exact) < 3 * se


def test_mcmc_two_path_joint_law():
    spec = EnsembleSpec(2, 3, (1, 0), (1, 0), SIMPLE, power(0.3), 5)
    exact = walks.ordered_marginal(spec, 0)
    hist = walks.mcmc_histograms(spec, 11, 1_000_000, t=0, joint=True, burn_in=100)
    emp = hist.joint / hist.samples
    assert 0.5 * np.abs(emp - exact).sum() < 0.02


def test_heat_bath_backends_agree():
    spec = EnsembleSpec(2, 6, (3, 1), (2, 0), StepKernel.lazy(0.3), power(0.2), 7)
    a = walks.mcmc_histograms(spec, 5, 300, thin=3, joint=True, backend="python")
    b = walks.mcmc_histograms(spec, 5, 300, thin=3, joint=True, backend="compiled")
    assert np.array_equal(a.counts, b.counts) and np.array_equal(a.joint, b.joint)


# ---------------------------------------------------------------- rescaling


def test_rescaling_examples():
    X = np.full((1, 401), 10)
    X[0, 300] = 25
    R = walks.RescaledPaths(OrderedPaths(X), 10.0)
    assert R(1.0)[0] == pytest.approx(2.5)
    assert R(0.0)[0] == pytest.approx(1.0)
    Y = np.zeros((1, 5), dtype=int)
    Y[0, 3] = 10  # X(1) = 10, X(0) = 0
    R2 = walks.RescaledPaths(OrderedPaths(Y), 10.0)
    assert R2(0.005)[0] == pytest.approx(0.5)
    with pytest.raises(DomainError):
        R2(1.0)


def test_rescale_constant_path():
    tilt = power(0.001)
    path = OrderedPaths(np.full((1, 21), 10))
    R = walks.rescale_path(path, tilt)
    assert np.allclose(R(np.linspace(-0.1, 0.1, 7)), 1.0)


@settings(max_examples=30, deadline=None)
@given(N=st.integers(1, 4), u=st.integers(0, 3), v=st.integers(0, 3), lam=st.floats(0.0, 1.0),
       lazy=st.booleans())
def test_dp_equals_transfer_for_one_path(N, u, v, lam, lazy):
    kernel = StepKernel.lazy(0.4) if lazy else SIMPLE
    spec = EnsembleSpec(1, N, (u,), (v,), kernel, power(lam), 6)
    a, b = walks.log_transfer_partition(spec), walks.log_ordered_partition(spec)
    if a == -math.inf:
        assert b == -math.inf
    else:
        assert b == pytest.approx(a, rel=1e-12, abs=1e-12)
