import math

import numpy as np
import pytest

from fslab import spectral
from fslab.errors import DomainError, ResolutionError, SingularityError, SizeError
from fslab.spectral import Potential, solve_spectrum

import oracles

SQRT2 = math.sqrt(2.0)


@pytest.fixture(scope="module")
def airy_basis():
    return solve_spectrum(Potential.linear(1.0, SQRT2), 30.0, 1e-3, 4)


@pytest.fixture(scope="module")
def unit_basis():
    return solve_spectrum(Potential.linear(1.0, 1.0), 20.0, 2e-3, 4)


# ---------------------------------------------------------------- spectrum


def test_airy_zero_constant_matches_oracle():
    assert oracles.airy_first_zero() == pytest.approx(spectral.AIRY_ZERO, abs=1e-10)


def test_airy_ground_state(airy_basis):
    assert airy_basis.eigenvalues[0] == pytest.approx(2.33811, abs=1e-3)
    r = airy_basis.grid
    ai, _ = oracles.airy_ode(r - oracles.airy_first_zero())
    ref = ai / math.sqrt(airy_basis.h * np.sum(ai**2))
    assert np.max(np.abs(airy_basis.phi[0] - ref)) < 1e-4


def test_unit_diffusivity_ground_state(unit_basis):
    assert unit_basis.eigenvalues[0] == pytest.approx(spectral.AIRY_ZERO / 2 ** (1 / 3), abs=1e-3)
    assert unit_basis.eigenvalues[0] == pytest.approx(1.85576, abs=1e-3)


def test_harmonic_spectrum():
    b = solve_spectrum(Potential.power(1.0, 2.0, SQRT2), 12.0, 1e-3, 3)
    assert b.eigenvalues[0] == pytest.approx(3.0, abs=1e-3)
    assert b.eigenvalues[1] == pytest.approx(7.0, abs=5e-3)
    assert b.eigenvalues[2] == pytest.approx(11.0, abs=1e-2)


def test_airy_chi_and_e0():
    assert spectral.airy_chi(1.0, SQRT2) == pytest.approx(1.0)
    assert spectral.airy_chi(1.0, 1.0) == pytest.approx(1.259921, abs=1e-6)
    chi = spectral.airy_chi(4.0, SQRT2)
    assert chi == pytest.approx(4 ** (1 / 3))
    e0 = spectral.airy_e0(4.0, SQRT2)
    assert e0 == pytest.approx(5.89, abs=1e-2)
    b = solve_spectrum(Potential.linear(4.0, SQRT2), 10.0, 5e-4, 1)
    assert b.eigenvalues[0] == pytest.approx(e0, abs=1e-3)


def test_basis_invariants(airy_basis):
    b = airy_basis
    assert np.all(np.diff(b.eigenvalues) > 0) and b.eigenvalues[0] > 0
    gram = b.h * b.phi @ b.phi.T
    assert np.max(np.abs(gram - np.eye(b.k))) < 1e-8
    assert np.all(b.phi[:, 0] == 0) and np.all(b.phi[:, -1] == 0)
    assert not b.phi.flags.writeable


def test_mesh_convergence_is_second_order():
    pot = Potential.linear(1.0, SQRT2)
    e = [solve_spectrum(pot, 16.0, h, 1).eigenvalues[0] for h in (8e-3, 4e-3, 2e-3)]
    ratio = (e[0] - e[1]) / (e[1] - e[2])
    assert 3.8 < ratio < 4.2


def test_truncation_insensitivity():
    pot = Potential.linear(1.0, SQRT2)
    a = solve_spectrum(pot, 15.0, 5e-3, 1).eigenvalues[0]
    b = solve_spectrum(pot, 30.0, 5e-3, 1).eigenvalues[0]
    assert abs(a - b) < 1e-8


def test_resolution_and_grid_errors():
    with pytest.raises(ResolutionError):
        solve_spectrum(Potential.linear(), 1.0, 0.25, 3)
    with pytest.raises(DomainError):
        solve_spectrum(Potential.linear(), 1.0, 0.3, 1)


def test_tabulated_potential_matches_power():
    r = np.linspace(0.0, 20.0, 20001)
    a = solve_spectrum(Potential.tabulated(r, r, SQRT2), 20.0, 2e-3, 2)
    b = solve_spectrum(Potential.linear(1.0, SQRT2), 20.0, 2e-3, 2)
    assert np.allclose(a.eigenvalues, b.eigenvalues, atol=1e-8)


# ---------------------------------------------------------------- drifts and determinants


def test_fs_drift_matches_airy(airy_basis):
    s = 1.0 - oracles.airy_first_zero()
    ai, aip = oracles.airy_ode([s])
    assert spectral.fs_drift(airy_basis, 1.0) == pytest.approx(2 * aip[0] / ai[0], abs=1e-5)


def test_fs_drift_qualitative(airy_basis):
    b = airy_basis
    peak = b.grid[np.argmax(b.phi[0])]
    assert abs(spectral.fs_drift(b, peak)) < 10 * b.h
    assert spectral.fs_drift(b, 0.05) > 0
    with pytest.raises(DomainError):
        spectral.fs_drift(b, b.h / 2)
    with pytest.raises(DomainError):
        spectral.fs_drift(b, b.R)


def test_slater_properties(airy_basis):
    b = airy_basis
    assert abs(spectral.slater(b, [2.0, 2.0])) < 1e-10
    assert spectral.slater(b, [3.0, 1.0]) == -spectral.slater(b, [1.0, 3.0])
    i3, i1 = 3000, 1000
    expect = b.phi[0, i3] * b.phi[1, i1] - b.phi[1, i3] * b.phi[0, i1]
    assert spectral.slater(b, [3.0, 1.0]) == pytest.approx(expect, rel=1e-10)
    with pytest.raises(SizeError):
        spectral.slater(b, [5.0, 4.0, 3.0, 2.0, 1.0])


def test_dyson_drift_single_path_is_log_derivative(airy_basis):
    b = airy_basis
    d = spectral.dyson_drift(b, [1.3])[0]
    assert d * b.sigma2 == pytest.approx(spectral.fs_drift(b, 1.3), rel=1e-12)


def test_dyson_drift_matches_finite_differences(airy_basis):
    b = airy_basis
    r = np.array([3.1, 1.7, 0.6])
    g = spectral.dyson_drift(b, r)
    eps = 1e-5
    fd = np.array([(spectral.log_abs_slater(b, r + eps * e) - spectral.log_abs_slater(b, r - eps * e)) / (2 * eps)
                   for e in np.eye(3)])
    assert np.max(np.abs(g - fd)) < 1e-5


def test_dyson_repulsion_grows_near_collision(airy_basis):
    gaps = [0.5, 0.1, 0.02]
    rel = []
    for gap in gaps:
        d = spectral.dyson_drift(airy_basis, [1.5 + gap, 1.5])
        rel.append(d[0] - d[1])
    assert all(x > 0 for x in rel)
    assert rel[0] < rel[1] < rel[2]


def test_dyson_drift_singularity_and_domain(airy_basis):
    with pytest.raises(DomainError):
        spectral.dyson_drift(airy_basis, [1.0, 2.0])
    # eigenfunctions that vanish identically in the tail make the determinant exactly 0
    b = airy_basis
    phi = np.where(b.grid > 20.0, 0.0, b.phi)
    dead = spectral.SpectralBasis(b.potential, b.R, b.h, b.eigenvalues, phi, np.zeros_like(phi))
    with pytest.raises(SingularityError):
        spectral.dyson_drift(dead, [25.0, 24.0])


# ---------------------------------------------------------------- semigroup


def test_semigroup_preserves_constants(airy_basis):
    out = spectral.semigroup_apply(airy_basis, 0.7, np.ones_like(airy_basis.grid))
    mask = airy_basis.bulk_mask()
    assert np.max(np.abs(out[mask] - 1.0)) < 1e-6


def test_semigroup_relaxes_to_stationary_mean(airy_basis):
    b = airy_basis
    f = np.sin(b.grid)
    t = 20.0 / (b.eigenvalues[1] - b.eigenvalues[0])
    out = spectral.semigroup_apply(b, t, f)
    mean = spectral.stationary_mean(b, f)
    mask = b.grid < 8.0
    assert np.max(np.abs(out[mask] - mean)) < 1e-4


def test_semigroup_is_reversible(airy_basis):
    b = airy_basis
    mu = b.density()
    f, g = np.exp(-b.grid), np.cos(b.grid)
    lhs = b.inner(spectral.semigroup_apply(b, 0.4, f) * g, mu)
    rhs = b.inner(f * spectral.semigroup_apply(b, 0.4, g), mu)
    assert abs(lhs - rhs) < 1e-8


def test_semigroup_negative_time(airy_basis):
    with pytest.raises(DomainError):
        spectral.semigroup_apply(airy_basis, -1.0, np.ones_like(airy_basis.grid))


# ---------------------------------------------------------------- marginal CDFs


def test_top_path_cdf_equals_first_marginal(airy_basis):
    a = spectral.marginal_cdfs(airy_basis, 3)
    b = spectral.top_path_cdf(airy_basis, 3)
    assert np.max(np.abs(a[0] - b)) < 1e-10
    assert np.all(a[0] <= a[1] + 1e-12) and np.all(a[1] <= a[2] + 1e-12)


def test_single_path_cdf_is_integrated_density(airy_basis):
    c = spectral.marginal_cdfs(airy_basis, 1)[0]
    assert c[-1] == pytest.approx(1.0, abs=1e-9)
    mid = np.searchsorted(airy_basis.grid, 2.0)
    ref = np.trapezoid(airy_basis.density()[: mid + 1], dx=airy_basis.h)
    assert c[mid] == pytest.approx(ref, abs=1e-12)


def test_two_path_cdf_matches_pair_density(airy_basis):
    r, dens = spectral.pair_density_grid(airy_basis, stride=20)
    cell = (airy_basis.h * 20) ** 2
    top = np.cumsum(dens.sum(axis=1)) * cell
    ref = spectral.marginal_cdfs(airy_basis, 2, r)[0]
    assert np.max(np.abs(top - ref)) < 0.01


# ---------------------------------------------------------------- SDE


def test_sde_is_seeded_and_stays_in_cone(airy_basis):
    a = spectral.simulate_diffusion(airy_basis, 2, [2.0, 1.0], 1e-3, 5000, 9, 10)
    b = spectral.simulate_diffusion(airy_basis, 2, [2.0, 1.0], 1e-3, 5000, 9, 10)
    assert np.array_equal(a.states, b.states)
    assert np.all(a.states[:, 0] > a.states[:, 1]) and np.all(a.states[:, 1] > 0)
    assert a.states.shape == (500, 2)
    assert a.times[-1] == pytest.approx(5.0)


def test_sde_backends_agree(airy_basis):
    a = spectral.simulate_diffusion(airy_basis, 2, [2.0, 1.0], 1e-3, 300, 4, 1, backend="python")
    b = spectral.simulate_diffusion(airy_basis, 2, [2.0, 1.0], 1e-3, 300, 4, 1, backend="compiled")
    assert np.allclose(a.states, b.states, rtol=0, atol=1e-12)
    c = spectral.simulate_endpoints(airy_basis, 1, [1.0], 0.1, 1e-3, 20, 3, backend="python")
    d = spectral.simulate_endpoints(airy_basis, 1, [1.0], 0.1, 1e-3, 20, 3, backend="compiled")
    assert np.allclose(c, d, rtol=0, atol=1e-12)


def test_sde_bad_start(airy_basis):
    with pytest.raises(DomainError):
        spectral.simulate_diffusion(airy_basis, 2, [1.0, 2.0], 1e-3, 10, 0)


def test_free_diffusion_mean_square_displacement():
    # box with a distant wall: drift is negligible near the middle
    b = solve_spectrum(Potential.box(SQRT2), 400.0, 0.05, 1)
    ends = spectral.simulate_endpoints(b, 1, [200.0], 1.0, 1e-3, 20000, 17)[:, 0]
    msd = np.mean((ends - 200.0) ** 2)
    assert msd == pytest.approx(b.sigma2 * 1.0, rel=0.05)


def test_sde_semigroup_consistency(airy_basis):
    b = airy_basis
    ends = spectral.simulate_endpoints(b, 1, [1.0], 0.5, 1e-3, 20000, 23)[:, 0]
    for f in (lambda r: r, lambda r: np.exp(-r), lambda r: r * r):
        pred = np.interp(1.0, b.grid, spectral.semigroup_apply(b, 0.5, f(b.grid)))
        vals = f(ends)
        se = vals.std(ddof=1) / math.sqrt(len(vals))
        # Euler bias at dt = 1e-3 is far below the Monte Carlo error here
        assert abs(vals.mean() - pred) < 3 * se
