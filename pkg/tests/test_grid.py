import numpy as np
import pytest
import scipy.sparse as sp

from maxlow import (
    GeometryError,
    GridDomain,
    Kind,
    MaterialLaw,
    ShapeError,
    StaggeredField,
    WeightExponent,
    adjoint_defect,
    discrete_curl,
    discrete_div,
    discrete_grad,
    field_norm,
    rho,
    weighted_inner_product,
)


# ---------------------------------------------------------------- geometry


def test_dof_counts_follow_staggering():
    g = GridDomain.build((4, 5, 6), 0.5, label=2)
    assert g.n_dofs(Kind.NODE) == 5 * 6 * 7
    assert g.n_dofs(Kind.CELL) == 4 * 5 * 6
    assert g.n_dofs(Kind.EDGE) == 4 * 6 * 7 + 5 * 5 * 7 + 5 * 6 * 6
    assert g.n_dofs(Kind.FACE) == 5 * 5 * 6 + 4 * 6 * 6 + 4 * 5 * 7


def test_box_is_centered_on_origin():
    g = GridDomain.build((4, 4, 4), 0.5, label=2)
    pts = g.positions(Kind.NODE)
    assert np.allclose(pts.min(axis=0), [-1.0, -1.0, -1.0])
    assert np.allclose(pts.max(axis=0), [1.0, 1.0, 1.0])
    # cell centers sit at half offsets
    cc = g.positions(Kind.CELL)
    assert np.allclose(cc[0], [-0.75, -0.75, -0.75])


@pytest.mark.parametrize("kind,axis,expected", [
    (Kind.EDGE, 0, [0.25, 0.0, 0.0]),   # x edge: offset along its own axis
    (Kind.FACE, 0, [0.0, 0.25, 0.25]),  # x face: offsets along the others
])
def test_stagger_offsets(kind, axis, expected):
    g = GridDomain.build((4, 4, 4), 0.5, label=2)
    p = g.positions_of(kind, axis, np.array([[0, 0, 0]]))[0]
    assert np.allclose(p, np.array([-1.0, -1.0, -1.0]) + expected)


def test_unconnected_region_rejected():
    obst = np.zeros((6, 6, 6), dtype=bool)
    obst[2:4, :, :] = True  # splits the box in two slabs
    with pytest.raises(GeometryError):
        GridDomain.build((6, 6, 6), 0.5, obstacle=obst, label=1)


def test_obstacle_shape_mismatch_rejected():
    with pytest.raises(ShapeError):
        GridDomain.build((6, 6, 6), 0.5, obstacle=np.zeros((5, 6, 6), bool))


def test_every_exposed_face_is_labeled(mixed_domain):
    mixed_domain.validate()
    labs = np.concatenate([l.ravel() for l in mixed_domain.face_labels])
    assert set(np.unique(labs)) <= {0, 1, 2}
    assert (labs == 1).any() and (labs == 2).any()


def test_relabel_active_labels_new_surface(cavity_domain):
    pos = cavity_domain.positions(Kind.CELL).reshape(10, 10, 10, 3)
    rad = np.linalg.norm(pos, axis=-1)
    active = (rad <= 1.8) & cavity_domain.active_cells
    sub = cavity_domain.relabel_active(active, 1)
    sub.validate()
    assert sub.active_cells.sum() == active.sum()


# --------------------------------------------------------------- operators


@pytest.mark.parametrize("side", [None, 1, 2])
def test_curl_of_gradient_vanishes(mixed_domain, side):
    C = mixed_domain.operator("curl", side)
    G = mixed_domain.operator("grad", side)
    prod = C @ G
    assert (abs(prod).max() if prod.nnz else 0.0) <= 1e-14


@pytest.mark.parametrize("side", [None, 1, 2])
def test_div_of_curl_vanishes(mixed_domain, side):
    D = mixed_domain.operator("div", side)
    C = mixed_domain.operator("curl", side)
    prod = D @ C
    assert (abs(prod).max() if prod.nnz else 0.0) <= 1e-14


def test_dual_operators_are_exact_transposes(mixed_domain):
    C = mixed_domain.operator("curl", 1)
    Cd = mixed_domain.operator("curl_dual", 1)
    assert (C.T - Cd).nnz == 0
    G = mixed_domain.operator("grad", 2)
    Dd = mixed_domain.operator("div_dual", 2)
    assert (G.T + Dd).nnz == 0
    D = mixed_domain.operator("div", 1)
    Gd = mixed_domain.operator("grad_dual", 1)
    assert (D.T + Gd).nnz == 0


def test_gradient_adjoint_with_material_weight(mixed_domain, law_unit):
    law = MaterialLaw(eps0=1.7)
    we = law.dof_weights(mixed_domain, Kind.EDGE, "eps")
    G = mixed_domain.operator("grad", 1)
    opB = (G.T @ sp.diags(we)).tocsr()
    defect = adjoint_defect(mixed_domain, G, opB, gammaA=None, gammaB=we)
    assert defect <= 1e-12


def test_mismatched_masks_break_adjointness(mixed_domain):
    G1 = mixed_domain.operator("grad", 1)
    G2 = mixed_domain.operator("grad", 2)
    defect = adjoint_defect(mixed_domain, G1, sp.csr_matrix(G2.T))
    assert defect > 1e-6


def test_operators_never_touch_obstacle_dofs(mixed_domain):
    C = mixed_domain.operator("curl", 1)
    dead_e = ~mixed_domain.active_mask(Kind.EDGE)
    dead_f = ~mixed_domain.active_mask(Kind.FACE)
    assert C[:, dead_e].nnz == 0
    assert C[dead_f].nnz == 0


def test_gradient_stencil_value():
    g = GridDomain.build((4, 4, 4), 0.5, label=2)
    w = StaggeredField.from_function(g, Kind.NODE, lambda p, a: p[:, 0])
    gw = discrete_grad(w, None)
    x_part = gw.components()[0]
    assert np.allclose(x_part, 1.0)
    assert np.allclose(gw.components()[1], 0.0)


def test_divergence_of_linear_field():
    g = GridDomain.build((4, 4, 4), 0.5, label=2)
    F = StaggeredField.from_function(g, Kind.FACE, lambda p, a: p[:, a])
    d = discrete_div(F, None)
    interior = d.components()[0][1:-1, 1:-1, 1:-1]
    assert np.allclose(interior, 3.0)


# ------------------------------------------------------- fields and norms


def test_from_function_zeroes_masked_dofs(mixed_domain):
    F = StaggeredField.from_function(mixed_domain, Kind.EDGE,
                                     lambda p, a: np.ones(len(p)), side=1)
    assert np.all(F.values[~mixed_domain.free_mask(Kind.EDGE, 1)] == 0)
    assert np.all(F.values[mixed_domain.free_mask(Kind.EDGE, 1)] == 1)


def test_field_arithmetic_preserves_grid(cavity_domain):
    a = StaggeredField.zeros(cavity_domain, Kind.EDGE)
    b = StaggeredField.zeros(cavity_domain, Kind.EDGE)
    a.values[:] = 2.0
    c = a + 0.5 * b - a
    assert np.allclose(c.values, 0.0)
    with pytest.raises(ShapeError):
        _ = a + StaggeredField.zeros(cavity_domain, Kind.FACE)


def test_weighted_inner_product_oracle():
    # constant field of ones on a 2^3 grid of spacing 1: n_cells * h^3 = 8
    g = GridDomain.build((2, 2, 2), 1.0, label=2)
    u = StaggeredField.zeros(g, Kind.CELL)
    u.values[:] = 1.0
    assert weighted_inner_product(u, u) == pytest.approx(8.0)
    # with t = 1 the weight is 1 + |x|^2 at the cell centers (all at radius
    # sqrt(3)/2): each cell contributes 1 + 3/4
    assert weighted_inner_product(u, u, t=1.0) == pytest.approx(8 * 1.75)


def test_rho_weight_values():
    assert rho(np.array([0.0, 0.0, 0.0])) == 1.0
    assert rho(np.array([1.0, 2.0, 2.0])) == pytest.approx(np.sqrt(10.0))


def test_extreme_weight_exponent_warns():
    with pytest.warns(UserWarning):
        WeightExponent(4.5)


def test_field_norm_material_weight(cavity_domain):
    law = MaterialLaw(eps0=4.0)
    u = StaggeredField.zeros(cavity_domain, Kind.EDGE)
    u.values[cavity_domain.active_mask(Kind.EDGE)] = 1.0
    assert field_norm(u, gamma="eps", law=law) == pytest.approx(
        2.0 * field_norm(u))
