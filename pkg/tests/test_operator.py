import numpy as np
import pytest

from maxlow import (
    ConfigError,
    ConstraintError,
    Kind,
    MaterialLaw,
    NearSingularError,
    SeriesDivergenceError,
    ShapeError,
    StaggeredField,
    assemble,
    helmholtz_decompose,
    kernel_basis,
    neumann_series,
    resolvent_solve,
    static_inverse,
)
from maxlow.grid import GridDomain
from maxlow.sources import random_bump_field


def _random_pair(op, seed=0):
    rng = np.random.default_rng(seed)
    F = StaggeredField.zeros(op.grid, Kind.EDGE)
    G = StaggeredField.zeros(op.grid, Kind.FACE)
    me = op.grid.free_mask(Kind.EDGE, 1)
    mf = op.grid.active_mask(Kind.FACE)
    F.values[me] = rng.standard_normal(me.sum()) + 1j * rng.standard_normal(me.sum())
    G.values[mf] = rng.standard_normal(mf.sum()) + 1j * rng.standard_normal(mf.sum())
    return F, G


# ----------------------------------------------------------------- algebra


def test_operator_is_self_adjoint_in_material_inner_product(op_mixed):
    rng = np.random.default_rng(1)
    u = rng.standard_normal(op_mixed.n) + 1j * rng.standard_normal(op_mixed.n)
    v = rng.standard_normal(op_mixed.n) + 1j * rng.standard_normal(op_mixed.n)
    a = op_mixed.lambda_inner(op_mixed.apply_script_M(u), v)
    b = op_mixed.lambda_inner(u, op_mixed.apply_script_M(v))
    assert abs(a - b) <= 1e-12 * abs(a)


def test_eigenvalues_come_in_symmetric_pairs(op_cavity):
    lam = op_cavity.spectral().eigenvalues
    assert np.allclose(np.sort(lam), np.sort(-lam))
    assert op_cavity.spectral().sigma_min > 0


def test_reduced_inverse_solves_on_the_range(op_cavity):
    sd = op_cavity.spectral()
    rng = np.random.default_rng(3)
    z = rng.standard_normal(op_cavity.n) + 1j * rng.standard_normal(op_cavity.n)
    x = op_cavity.from_scaled(sd.pinv(op_cavity.to_scaled(z)))
    got = op_cavity.to_scaled(op_cavity.apply_script_M(x))
    want = sd.pi_R(op_cavity.to_scaled(z))
    assert np.linalg.norm(got - want) <= 1e-12 * np.linalg.norm(z)


def test_kernel_projection_annihilates(op_cavity):
    sd = op_cavity.spectral()
    rng = np.random.default_rng(4)
    z = rng.standard_normal(op_cavity.n) + 1j * rng.standard_normal(op_cavity.n)
    xn = op_cavity.from_scaled(sd.pi_N(op_cavity.to_scaled(z)))
    assert np.linalg.norm(op_cavity.apply_script_M(xn)) <= 1e-12 * np.linalg.norm(xn)


def test_unlabeled_domain_rejected():
    g = GridDomain.build((4, 4, 4), 0.5, label=2, strict=False)
    g.face_labels = [np.zeros_like(l) for l in g.face_labels]
    with pytest.raises(ConfigError):
        assemble(g, MaterialLaw())


# ---------------------------------------------------------------- resolvent


def test_resolvent_satisfies_first_order_system(op_cavity):
    F, G = _random_pair(op_cavity, 7)
    omega = 0.37
    E, H = resolvent_solve(op_cavity, omega, F, G)
    vec = op_cavity.pair_to_vec(E, H)
    rhs = op_cavity.pair_to_vec(F, G)
    res = op_cavity.M @ vec + 1j * omega * op_cavity.lam * vec - rhs
    assert np.linalg.norm(res) <= 1e-10 * np.linalg.norm(rhs)


def test_resolvent_rejects_spectral_frequencies(op_cavity):
    F, G = _random_pair(op_cavity, 8)
    omega = op_cavity.spectral().s[0]  # exactly an eigenvalue
    with pytest.raises(NearSingularError):
        resolvent_solve(op_cavity, omega, F, G)


def test_resolvent_at_zero_frequency_rejected(op_cavity):
    # zero frequency sits on the kernel eigenvalue
    F, G = _random_pair(op_cavity, 9)
    with pytest.raises(NearSingularError):
        resolvent_solve(op_cavity, 0.0, F, G)


# ----------------------------------------------------------- series, static


def test_neumann_series_matches_resolvent(op_cavity):
    F, G = _random_pair(op_cavity, 10)
    omega = 0.1 * op_cavity.spectral().sigma_min
    (En, Hn), diag = neumann_series(op_cavity, omega, F, G)
    Er, Hr = resolvent_solve(op_cavity, omega, F, G)
    num = np.linalg.norm(op_cavity.pair_to_vec(En - Er, Hn - Hr))
    den = np.linalg.norm(op_cavity.pair_to_vec(Er, Hr))
    assert num <= 1e-8 * den
    assert diag["terms_used"] >= 2


def test_neumann_series_rejects_large_frequency(op_cavity):
    F, G = _random_pair(op_cavity, 11)
    with pytest.raises(SeriesDivergenceError):
        neumann_series(op_cavity, 1.1 * op_cavity.spectral().sigma_min, F, G)


def test_pure_kernel_input_reproduces_kernel_term(op_cavity):
    sd = op_cavity.spectral()
    rng = np.random.default_rng(12)
    z = rng.standard_normal(op_cavity.n) + 1j * rng.standard_normal(op_cavity.n)
    zk = sd.pi_N(z)
    # choose (F, G) with i*Lambda^{-1}(F,G) purely in the kernel
    u = op_cavity.from_scaled(zk)
    vec = -1j * op_cavity.lam * u
    F, G = op_cavity.vec_to_pair(vec)
    omega = 0.05 * sd.sigma_min
    (E, H), _ = neumann_series(op_cavity, omega, F, G)
    got = op_cavity.to_scaled(op_cavity.pair_to_vec(E, H))
    want = -zk / omega
    assert np.linalg.norm(got - want) <= 1e-12 * np.linalg.norm(want)


def test_static_inverse_round_trip(op_cavity):
    sd = op_cavity.spectral()
    rng = np.random.default_rng(13)
    x0 = rng.standard_normal(op_cavity.n) + 1j * rng.standard_normal(op_cavity.n)
    w = op_cavity.from_scaled(sd.pi_R(op_cavity.to_scaled(x0)))
    rhs = -1j * op_cavity.lam * op_cavity.apply_script_M(w)
    F, G = op_cavity.vec_to_pair(rhs)
    E, H = static_inverse(op_cavity, F, G)
    sol = op_cavity.pair_to_vec(E, H)
    assert np.linalg.norm(sol - w) <= 1e-10 * np.linalg.norm(w)


def test_static_inverse_rejects_kernel_component(op_cavity):
    sd = op_cavity.spectral()
    rng = np.random.default_rng(14)
    z = rng.standard_normal(op_cavity.n) + 1j * rng.standard_normal(op_cavity.n)
    u = op_cavity.from_scaled(sd.pi_N(z))
    F, G = op_cavity.vec_to_pair(-1j * op_cavity.lam * u)
    with pytest.raises(ConstraintError):
        static_inverse(op_cavity, F, G)


# ------------------------------------------------------- harmonic dimensions


@pytest.mark.parametrize("side,expected", [("electric", 0), ("magnetic", 0)])
def test_solid_box_has_no_harmonic_fields(solid_domain, law_unit, side, expected):
    op = assemble(solid_domain, law_unit)
    hb = kernel_basis(op, side=side)
    assert hb.dimension == expected


def test_cavity_has_one_electric_harmonic_field(op_cavity):
    hb = kernel_basis(op_cavity, side="electric")
    assert hb.dimension == 1
    assert kernel_basis(op_cavity, side="magnetic").dimension == 0
    # the pair (E, 0) lies in the kernel of the block operator
    E = hb.fields[0]
    vec = op_cavity.pair_to_vec(E, StaggeredField.zeros(op_cavity.grid, Kind.FACE))
    assert np.linalg.norm(op_cavity.apply_script_M(vec)) <= 1e-12 * np.linalg.norm(vec)


def test_ring_has_one_magnetic_harmonic_field(ring_domain, law_unit):
    op = assemble(ring_domain, law_unit)
    assert kernel_basis(op, side="magnetic").dimension == 1
    assert kernel_basis(op, side="electric").dimension == 0


def test_dimensions_invariant_under_material_change(cavity_domain, law_aniso):
    op = assemble(cavity_domain, law_aniso)
    assert kernel_basis(op, side="electric").dimension == 1
    assert kernel_basis(op, side="magnetic").dimension == 0


# ------------------------------------------------------------ decomposition


def test_electric_decomposition_parts_and_residual(op_cavity):
    X = random_bump_field(op_cavity.grid, Kind.EDGE, 20, radius=2.0)
    X.values[~op_cavity.grid.free_mask(Kind.EDGE, 1)] = 0
    dec = helmholtz_decompose(X, op_cavity, side="electric")
    assert dec.reconstruction_residual <= 1e-10
    assert dec.orthogonality_defect <= 1e-10
    g = op_cavity.grid
    we = op_cavity.law.dof_weights(g, Kind.EDGE, "eps")
    nX = np.linalg.norm(X.values)
    C1 = g.operator("curl", 1)
    Dd = g.operator("div_dual", 1)
    assert np.linalg.norm(C1 @ dec.gradient_part.values) <= 1e-10 * nX
    assert np.linalg.norm(C1 @ dec.harmonic_part.values) <= 1e-10 * nX
    assert np.linalg.norm(Dd @ (we * dec.rot_part.values)) <= 1e-10 * nX
    assert np.linalg.norm(Dd @ (we * dec.harmonic_part.values)) <= 1e-10 * nX


def test_gradient_input_maps_to_pure_gradient(op_cavity):
    g = op_cavity.grid
    w = random_bump_field(g, Kind.NODE, 21, radius=2.0)
    X = StaggeredField.zeros(g, Kind.EDGE)
    X.values[:] = g.operator("grad", 1) @ w.values
    dec = helmholtz_decompose(X, op_cavity, side="electric")
    nX = np.linalg.norm(X.values)
    assert np.linalg.norm(dec.rot_part.values) <= 1e-10 * nX
    assert np.linalg.norm(dec.harmonic_part.values) <= 1e-10 * nX
    assert np.linalg.norm(dec.gradient_part.values - X.values) <= 1e-10 * nX


def test_kernel_input_maps_to_pure_harmonic(op_cavity):
    hb = kernel_basis(op_cavity, side="electric")
    X = hb.fields[0]
    dec = helmholtz_decompose(X, op_cavity, side="electric")
    nX = np.linalg.norm(X.values)
    assert np.linalg.norm(dec.gradient_part.values) <= 1e-10 * nX
    assert np.linalg.norm(dec.rot_part.values) <= 1e-10 * nX
    assert np.linalg.norm(dec.harmonic_part.values - X.values) <= 1e-10 * nX


def test_magnetic_decomposition_on_ring(ring_domain, law_unit):
    op = assemble(ring_domain, law_unit)
    X = random_bump_field(ring_domain, Kind.FACE, 22, center=(0.3, 0.1, 0.0),
                          radius=2.3)
    X.values[~ring_domain.free_mask(Kind.FACE, 1)] = 0
    dec = helmholtz_decompose(X, op, side="magnetic")
    assert dec.reconstruction_residual <= 1e-10
    assert dec.orthogonality_defect <= 1e-10
    wf = op.law.dof_weights(ring_domain, Kind.FACE, "mu")
    nX = np.linalg.norm(X.values)
    Cd = ring_domain.operator("curl_dual", 1)
    Dv = ring_domain.operator("div", 1)
    assert np.linalg.norm(Cd @ dec.harmonic_part.values) <= 1e-10 * nX
    assert np.linalg.norm(Dv @ (wf * dec.harmonic_part.values)) <= 1e-10 * nX
    # the ring supports a genuine harmonic component
    assert np.linalg.norm(dec.harmonic_part.values) > 1e-3 * nX


def test_decomposition_rejects_wrong_kind(op_cavity):
    X = StaggeredField.zeros(op_cavity.grid, Kind.FACE)
    with pytest.raises(ShapeError):
        helmholtz_decompose(X, op_cavity, side="electric")
