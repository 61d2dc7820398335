import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nlsc.errors import (
    CouplingOutOfRange,
    DimensionUnsupported,
    ExponentOutOfRange,
    GridTooCoarse,
)
from nlsc.grid import (
    Field,
    ModelParams,
    apply_pc,
    build_grid,
    energy,
    h1_seminorm_sq,
    h1c_seminorm_sq,
    hardy_residual,
    lp_norm,
    mass,
    resample,
)

# Closed-form integrals for e^{-r^2/2} in d = 3, frozen.
GAUSS_MASS = np.pi ** 1.5  # 5.568327996831708
GAUSS_H1 = 1.5 * np.pi ** 1.5  # 8.352491995247561
GAUSS_L4 = (np.pi ** 1.5 / (2 * np.sqrt(2))) ** 0.25  # 1.1862185573298024


def random_smooth(grid, rng, k=4):
    r = grid.nodes
    v = np.zeros(grid.n, dtype=complex)
    for _ in range(k):
        a = rng.normal() + 1j * rng.normal()
        r0 = rng.uniform(0.0, 4.0)
        s = rng.uniform(0.3, 2.0)
        v += a * np.exp(-((r - r0) / s) ** 2)
    return Field(grid, v)


@pytest.fixture(scope="module")
def g3():
    return build_grid(3, 20.0, 2000)


def gaussian(grid):
    return Field.from_function(grid, lambda r: np.exp(-r**2 / 2))


def test_build_grid_arithmetic(g3):
    assert g3.h == pytest.approx(0.01)
    assert g3.nodes[0] == pytest.approx(0.005)
    assert g3.nodes[-1] == pytest.approx(19.995)
    assert g3.r_max == 20.0
    assert np.all(np.diff(g3.nodes) > 0) and g3.nodes[0] > 0


def test_grid_rejects_bad_input():
    with pytest.raises(DimensionUnsupported):
        build_grid(2, 20.0, 2000)
    with pytest.raises(GridTooCoarse):
        build_grid(3, 20.0, 4)


def test_grid_arrays_are_read_only(g3):
    with pytest.raises(ValueError):
        g3.nodes[0] = 1.0


@pytest.mark.parametrize("d", [3, 4, 5])
def test_indicator_quadrature(d):
    g = build_grid(d, 4.0, 4000)
    R = 2.0
    f = Field(g, (g.nodes <= R).astype(float))
    exact = g.surface_factor * R**d / d
    assert abs(mass(f) - exact) / exact < 2 * d * g.h / R


def test_params_derived():
    p = ModelParams(3, 2.0, -0.1)
    assert p.lambda_d == 0.25
    assert p.gamma_c == pytest.approx(0.5)
    assert p.rho == pytest.approx(0.5 - np.sqrt(0.15))
    assert p.beta == pytest.approx(1 - 2 * p.rho)
    assert p.sigma == pytest.approx((4 - 2) / (6 - 4))
    assert p.regime == "intercritical"
    assert ModelParams(3, 4 / 3, 0.0).sigma is None
    assert ModelParams(3, 4 / 3, 0.0).regime == "mass-critical"
    assert ModelParams(3, 4.0, 0.0).regime == "energy-critical"
    assert ModelParams(4, 1.0, 0.0).beta == 1.0


@pytest.mark.parametrize("d,c", [(3, -0.25), (3, -0.3), (4, -1.0), (5, -2.25)])
def test_params_reject_coupling(d, c):
    with pytest.raises(CouplingOutOfRange):
        ModelParams(d, 1.0, c)


def test_params_reject_dimension_and_exponent():
    with pytest.raises(DimensionUnsupported):
        ModelParams(2, 1.0, 0.0)
    with pytest.raises(ExponentOutOfRange):
        ModelParams(3, 0.0, 0.0)


def test_zero_field(g3):
    z = Field.zeros(g3)
    p = ModelParams(3, 2.0, -0.1)
    assert mass(z) == 0
    assert h1c_seminorm_sq(z, 1.0) == 0
    assert lp_norm(z, 3.0) == 0
    assert energy(z, p) == 0
    assert hardy_residual(z) == 0
    assert np.all(apply_pc(z, -0.1).values == 0)


def test_mass_scaling(g3):
    f = random_smooth(g3, np.random.default_rng(0))
    assert mass(f.scaled(2.0)) == pytest.approx(4 * mass(f), rel=1e-14)


def test_gaussian_oracles(g3):
    f = gaussian(g3)
    assert mass(f) == pytest.approx(GAUSS_MASS, rel=1e-6)
    assert h1c_seminorm_sq(f, 0.0) == pytest.approx(GAUSS_H1, rel=1e-4)
    assert lp_norm(f, 4.0) == pytest.approx(GAUSS_L4, rel=1e-4)
    assert lp_norm(f, 2.0) == pytest.approx(np.sqrt(mass(f)), rel=1e-14)


def test_positive_coupling_adds(g3):
    f = gaussian(g3)
    assert h1c_seminorm_sq(f, 1.0) > h1c_seminorm_sq(f, 0.0)


@pytest.mark.parametrize("c", [-0.2, 0.5])
def test_gaussian_potential_term_first_order(c):
    # c int |x|^-2 e^{-r^2} dx = 2 pi^{3/2} c in d = 3; smooth data are
    # not indicial at the origin, so the error is O(h)
    exact = GAUSS_H1 + 2 * np.pi ** 1.5 * c
    errs = []
    for n in (1000, 2000):
        f = gaussian(build_grid(3, 20.0, n))
        errs.append(abs(h1c_seminorm_sq(f, c) - exact) / exact)
    assert errs[0] < 3e-3
    assert 1.8 < errs[0] / errs[1] < 2.2


def test_coupling_guard(g3):
    with pytest.raises(CouplingOutOfRange):
        h1c_seminorm_sq(gaussian(g3), -0.25)
    with pytest.raises(CouplingOutOfRange):
        apply_pc(gaussian(g3), -0.25)


def test_lp_rejects_small_p(g3):
    with pytest.raises(ExponentOutOfRange):
        lp_norm(gaussian(g3), 0.5)


def test_apply_pc_matches_form(g3):
    rng = np.random.default_rng(1)
    f = random_smooth(g3, rng)
    lhs = np.vdot(f.values, g3.weights * apply_pc(f, -0.1).values).real
    assert lhs == pytest.approx(h1c_seminorm_sq(f, -0.1), rel=1e-10)


def test_apply_pc_gaussian_pointwise(g3):
    # -Delta e^{-r^2/2} = (3 - r^2) e^{-r^2/2} in d = 3
    f = gaussian(g3)
    r = g3.nodes
    got = apply_pc(f, 0.0).values.real
    want = (3 - r**2) * np.exp(-r**2 / 2)
    assert np.max(np.abs(got - want)[r < 10]) < 1e-3


def test_indicial_profile_is_harmonic():
    # P_c r^-rho = 0 away from the outer boundary
    g = build_grid(3, 10.0, 1000)
    p = ModelParams(3, 2.0, -0.2)
    f = Field(g, g.nodes ** (-p.rho))
    res = apply_pc(f, p.c).values
    assert np.max(np.abs(res[:-1])) < 1e-9 * np.max(np.abs(f.values))


@pytest.mark.parametrize("d", [3, 4, 5])
def test_hardy_random_sweep(d):
    g = build_grid(d, 20.0, 1000)
    rng = np.random.default_rng(d)
    for _ in range(200):
        f = random_smooth(g, rng)
        scale = h1_seminorm_sq(f)
        assert hardy_residual(f) >= -1e-8 * scale


@pytest.mark.parametrize("d", [3, 4, 5])
def test_hardy_near_optimizer(d):
    # r^{-(d-2)/2} psi(log r) makes the residual a shrinking fraction of the norm
    ratios = []
    for r_max in (30.0, 3000.0):
        g = build_grid(d, r_max, int(r_max / 0.01))
        t = np.log(g.nodes)
        t0, t1 = np.log(g.nodes[0]), np.log(r_max)
        psi = np.sin(np.pi * (t - t0) / (t1 - t0)) ** 2
        f = Field(g, g.nodes ** (-(d - 2) / 2) * psi)
        ratios.append(hardy_residual(f) / h1_seminorm_sq(f))
    assert ratios[1] < ratios[0] < 0.8


@pytest.mark.parametrize("d", [3, 4, 5])
def test_norm_equivalence(d):
    g = build_grid(d, 20.0, 1000)
    rng = np.random.default_rng(10 + d)
    lam = ((d - 2) / 2) ** 2
    for c in (-0.9 * lam, 0.5):
        ratios = []
        for _ in range(50):
            f = random_smooth(g, rng)
            ratios.append(h1c_seminorm_sq(f, c) / h1_seminorm_sq(f))
        ratios = np.array(ratios)
        lo, hi = (1 + c / lam, 1.0) if c < 0 else (1.0, 1 + c / lam)
        assert np.all(ratios >= lo * (1 - 1e-3))
        assert np.all(ratios <= hi * (1 + 1e-3))


def test_scaling_exponent():
    g = build_grid(3, 20.0, 4000)
    p = ModelParams(3, 2.0, -0.1)
    f = gaussian(g)
    lam = 1.5
    fl = resample(f, lam ** (2 / p.alpha), lam)
    ratio = np.sqrt(h1_seminorm_sq(fl) / h1_seminorm_sq(f))
    assert ratio == pytest.approx(lam ** p.gamma_c, rel=1e-3)


@settings(max_examples=60, deadline=None)
@given(
    amp=st.floats(0.1, 10.0),
    width=st.floats(0.3, 3.0),
    k=st.integers(0, 2),
    frac=st.floats(0.0, 0.999),
)
def test_positivity_property(amp, width, k, frac):
    d = 3 + k
    lam = ((d - 2) / 2) ** 2
    c = -frac * lam
    g = build_grid(d, 15.0, 600)
    f = Field(g, amp * (1 + g.nodes) * np.exp(-(g.nodes / width) ** 2))
    scale = h1_seminorm_sq(f) + mass(f)
    assert h1c_seminorm_sq(f, c) >= -1e-8 * scale
