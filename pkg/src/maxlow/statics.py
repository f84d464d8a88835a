"""Moment-constrained static solvers on truncated exterior domains.

The electro-static problem prescribes the rotation (FACE data), the weighted
divergence (NODE data) and the moments against a compactly supported basis of
rotation-free fields built on a collar around the obstacle.  The solution is
assembled from a minimum-weighted-norm rotation preimage, a weighted Poisson
gradient correction, and a harmonic correction fixed by the moment Gram
system.  The magneto-static problem is the exact role swap on face fields.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigError, ConstraintError, GeometryError, ShapeError
from .grid import GridDomain, Kind, MaterialLaw, StaggeredField
from .operator import MaxwellOperatorMatrix, assemble, kernel_basis

__all__ = [
    "BasisSetB",
    "StaticProblemData",
    "collar_active_cells",
    "build_B",
    "project_along_gradients",
    "verify_steps",
    "solve_static",
    "solve_static_magnetic",
]


# ------------------------------------------------------------------- collar


def collar_active_cells(domain: GridDomain, r_hat: Optional[float] = None):
    """Cells of the collar: included cells with center radius below ``r_hat``.

    The default radius is the smallest value keeping one full cell layer
    between the obstacle and the collar surface while staying inside the box.
    """
    pos = domain.positions(Kind.CELL).reshape(*domain.cell_counts, 3)
    rad = np.linalg.norm(pos, axis=-1)
    h = domain.spacing
    if r_hat is None:
        if domain.obstacle.any():
            r_obs = float(rad[domain.obstacle].max())
        else:
            r_obs = 0.0
        r_hat = r_obs + 2.5 * h
    if domain.obstacle.any() and rad[domain.obstacle].max() + 1.5 * h > r_hat:
        raise GeometryError("obstacle touches the collar surface")
    active = (rad <= r_hat) & domain.active_cells
    if not active.any():
        raise GeometryError("collar contains no included cells")
    return active, float(r_hat)


# ------------------------------------------------------------------ basis B


@dataclass
class BasisSetB:
    """Compactly supported rotation-free basis carrying the boundary moments."""

    side: int
    elements: list
    gram_with_harmonics: np.ndarray
    collar_domain: GridDomain
    r_hat: float
    harmonic_fields: list = dc_field(default_factory=list)

    @property
    def d(self) -> int:
        return len(self.elements)


def _side_weights(op: MaxwellOperatorMatrix, side: int):
    if side == 1:
        kind = Kind.EDGE
        w = op.law.dof_weights(op.grid, kind, "eps")
    else:
        kind = Kind.FACE
        w = op.law.dof_weights(op.grid, kind, "mu")
    return kind, w


def _weighted_ip(grid: GridDomain, w: np.ndarray, a: np.ndarray, b: np.ndarray) -> complex:
    return complex(np.sum(w * a * np.conj(b)) * grid.spacing ** 3)


def build_B(domain: GridDomain, side: int, law: MaterialLaw,
            r_hat: Optional[float] = None) -> BasisSetB:
    """Compactly supported moment basis from the collar harmonic fields.

    Builds the sub-domain of cells inside the collar radius, labels the newly
    exposed faces with ``side`` (so the extension by zero preserves the
    rotation-free constraint exactly), computes the harmonic basis of the
    collar operator on the matching side, and returns it together with the
    Gram matrix against the harmonic fields of the full domain.
    """
    if side not in (1, 2):
        raise ValueError("side must be 1 or 2")
    active, r_val = collar_active_cells(domain, r_hat)
    sub = domain.relabel_active(active, side)
    sub.validate()
    op_sub = assemble(sub, law)
    which = "electric" if side == 1 else "magnetic"
    hb_sub = kernel_basis(op_sub, side=which)
    op_full = assemble(domain, law)
    hb_full = kernel_basis(op_full, side=which)
    if hb_sub.dimension != hb_full.dimension:
        raise GeometryError(
            f"collar harmonic dimension {hb_sub.dimension} does not match "
            f"the domain dimension {hb_full.dimension}"
        )
    kind, w = _side_weights(op_full, side)
    d = hb_sub.dimension
    gram = np.zeros((d, d), dtype=np.complex128)
    for j, Hj in enumerate(hb_full.fields):
        for l, Bl in enumerate(hb_sub.fields):
            gram[l, j] = _weighted_ip(domain, w, Hj.values, Bl.values)
    if d:
        sv = np.linalg.svd(gram, compute_uv=False)
        if sv[-1] <= 1e-8 * sv[0]:
            raise ConfigError("moment Gram matrix is numerically singular")
    return BasisSetB(side, hb_sub.fields, gram, sub, r_val, hb_full.fields)


# -------------------------------------------------------- projection helper


def project_along_gradients(X: StaggeredField, op: MaxwellOperatorMatrix,
                            side: int = 1, tol: float = 1e-10) -> StaggeredField:
    """Remove the best potential-gradient approximation in the weighted norm.

    The input must be rotation-free (with the side mask); the output is its
    harmonic component.
    """
    from .operator import _grad_basis

    if side == 1:
        if X.kind != Kind.EDGE:
            raise ShapeError("side 1 expects an EDGE field")
        idx, wgt = op.idx_e, op.lam_e
        rot = op.C1 @ X.values[idx]
    else:
        if X.kind != Kind.FACE:
            raise ShapeError("side 2 expects a FACE field")
        idx, wgt = op.idx_f, op.lam_f
        rot = op.C1.T @ X.values[idx]
    nrm = np.linalg.norm(X.values)
    if nrm > 0 and np.linalg.norm(rot) > tol * nrm:
        raise ConstraintError("input field is not rotation-free")
    Q = _grad_basis(op, "electric" if side == 1 else "magnetic")
    z = np.sqrt(wgt) * X.values[idx]
    z_h = z - Q @ (Q.T.conj() @ z)
    out = StaggeredField.zeros(op.grid, X.kind)
    out.values[idx] = z_h / np.sqrt(wgt)
    return out


# -------------------------------------------------------------- step checks


def verify_steps(domain: GridDomain, law: MaterialLaw, side: int = 1,
                 r_hat: Optional[float] = None, rank_tol: float = 1e-8) -> dict:
    """Rank tests of the collar-basis construction.

    Step 1: the gradient-orthogonal projections of the extended collar basis
    are linearly independent.  Step 2: the collar projections of the restricted
    domain harmonic basis are linearly independent.  Step 3: the moment Gram
    matrix is nonsingular.  Also reports the dimension chain.
    """
    B = build_B(domain, side, law, r_hat)
    op_full = assemble(domain, law)
    op_sub = assemble(B.collar_domain, law)
    kind, w = _side_weights(op_full, side)
    idx = op_full.idx_e if side == 1 else op_full.idx_f
    wgt = op_full.lam_e if side == 1 else op_full.lam_f

    def column_matrix(fields, op, which_idx, which_w):
        cols = []
        for f in fields:
            p = project_along_gradients(f, op, side)
            cols.append(np.sqrt(which_w) * p.values[which_idx])
        return np.array(cols).T if cols else np.zeros((len(which_idx), 0))

    # Step 1: pi (extend-by-zero of collar basis) on the full domain
    M1 = column_matrix(B.elements, op_full, idx, wgt)
    # Step 2: pi_collar (restriction of the domain harmonic basis)
    idx_s = op_sub.idx_e if side == 1 else op_sub.idx_f
    wgt_s = op_sub.lam_e if side == 1 else op_sub.lam_f
    cols2 = []
    free_s = op_sub.grid.free_mask(kind, 1) if side == 1 else op_sub.grid.active_mask(kind)
    for Hj in B.harmonic_fields:
        r = StaggeredField.zeros(op_sub.grid, kind)
        r.values[:] = np.where(free_s, Hj.values, 0.0)
        # restriction is generally not rotation-free near the collar surface;
        # project without the rotation precondition
        from .operator import _grad_basis
        Q = _grad_basis(op_sub, "electric" if side == 1 else "magnetic")
        sd = op_sub.spectral()
        z = np.sqrt(wgt_s) * r.values[idx_s]
        if side == 1:
            Vr = sd.Vt[: sd.rank]
            z = z - Vr.T @ (Vr @ z)
        else:
            Ur = sd.U[:, : sd.rank]
            z = z - Ur @ (Ur.T @ z)
        cols2.append(z - Q @ (Q.T.conj() @ z))
    M2 = np.array(cols2).T if cols2 else np.zeros((len(idx_s), 0))

    def min_rel_sv(M):
        if M.shape[1] == 0:
            return np.inf
        sv = np.linalg.svd(M, compute_uv=False)
        return float(sv[-1] / sv[0]) if sv[0] > 0 else 0.0

    s1, s2 = min_rel_sv(M1), min_rel_sv(M2)
    if B.d:
        gs = np.linalg.svd(B.gram_with_harmonics, compute_uv=False)
        s3 = float(gs[-1] / gs[0]) if gs[0] > 0 else 0.0
    else:
        s3 = np.inf
    dims = {
        "basis": B.d,
        "collar_harmonics": B.d,
        "domain_harmonics": len(B.harmonic_fields),
    }
    return {
        "step1_injective": s1 > rank_tol,
        "step2_injective": s2 > rank_tol,
        "step3_nondegenerate": s3 > rank_tol,
        "step1_min_sv": s1,
        "step2_min_sv": s2,
        "step3_min_sv": s3,
        "dims": dims,
        "dims_equal": dims["basis"] == dims["domain_harmonics"],
    }


# ------------------------------------------------------------------ solvers


@dataclass
class StaticProblemData:
    """Rotation data, weighted-divergence data and boundary moments.

    For the electric problem ``G`` lives on faces, ``f`` on nodes; the
    magnetic role swap puts the rotation data on edges and the divergence
    data on cells.
    """

    G: StaggeredField
    f: StaggeredField
    zeta: np.ndarray


def _poisson_solve(A: sp.spmatrix, rhs: np.ndarray, ground: bool):
    """SPD sparse solve; optionally grounds the first unknown (pure-Neumann)."""
    A = A.tocsc()
    rhs = np.asarray(rhs, dtype=np.complex128)

    def real_solve(lu, b):
        return lu.solve(b.real) + 1j * lu.solve(b.imag)

    if ground:
        n = A.shape[0]
        keep = np.arange(1, n)
        x = np.zeros(n, dtype=np.complex128)
        x[1:] = real_solve(spla.splu(A[1:][:, keep].tocsc()), rhs[1:])
        return x
    return real_solve(spla.splu(A), rhs)


def solve_static(data: StaticProblemData, op: MaxwellOperatorMatrix,
                 B1: BasisSetB, tol: float = 1e-8) -> StaggeredField:
    """Electro-static solve with prescribed rotation, divergence and moments.

    Returns the unique edge field with ``rot = G`` (label-1 tangential mask),
    ``div(eps*E) = f`` (label-2 natural side) and weighted moments ``zeta``
    against the compactly supported basis.
    """
    g = op.grid
    if data.G.kind != Kind.FACE or data.f.kind != Kind.NODE:
        raise ShapeError("electric static data must be (FACE, NODE)")
    if B1.side != 1:
        raise ValueError("electric solve needs the side-1 basis")
    sd = op.spectral()
    gr = data.G.values[op.idx_f]
    norm_g = np.linalg.norm(gr)
    # admissibility: solenoidal rotation data
    divG = g.operator("div", 1) @ data.G.values
    if norm_g > 0 and np.linalg.norm(divG) > 1e-10 * norm_g / g.spacing:
        raise ConstraintError("rotation data is not solenoidal")
    # minimum-eps-norm rotation preimage via the scaled SVD
    zf = gr / np.sqrt(op.lam_f)
    Ur = sd.U[:, : sd.rank]
    Vr = sd.Vt[: sd.rank]
    ze1 = Vr.T @ ((Ur.T @ zf) / sd.s[: sd.rank])
    resid = np.linalg.norm(op.C1 @ (ze1 / np.sqrt(op.lam_e)) - gr)
    if norm_g > 0 and resid > tol * norm_g:
        raise ConstraintError("rotation data is outside the attainable range")
    E1 = StaggeredField.zeros(g, Kind.EDGE)
    E1.values[op.idx_e] = ze1 / np.sqrt(op.lam_e)

    # gradient correction: div(eps * grad w) = f on the free nodes
    idx_n = np.flatnonzero(g.free_mask(Kind.NODE, 1))
    G1 = g.operator("grad", 1)[:, idx_n]
    we = op.law.dof_weights(g, Kind.EDGE, "eps")
    A = (G1.T @ sp.diags(we) @ G1).tocsc()
    fr = data.f.values[idx_n]
    ground = not any((l == 1).any() for l in g.face_labels)
    wsol = _poisson_solve(A, -fr, ground)
    Egrad = StaggeredField.zeros(g, Kind.EDGE)
    Egrad.values[:] = G1 @ wsol
    Ehat = E1 + Egrad

    # harmonic correction from the moment Gram system
    d = B1.d
    E = Ehat
    if d:
        kind, w = _side_weights(op, 1)
        # eps-orthonormalized harmonic projections of the basis (index order)
        H = []
        for Bl in B1.elements:
            hproj = project_along_gradients(Bl, op, 1)
            v = hproj.values.copy()
            for prev in H:
                v -= _weighted_ip(g, w, v, prev) * prev
            nv = np.sqrt(abs(_weighted_ip(g, w, v, v)))
            if nv <= 0:
                raise ConfigError("degenerate harmonic projection basis")
            H.append(v / nv)
        zeta_t = np.array([
            data.zeta[l] - _weighted_ip(g, w, Ehat.values, Bl.values)
            for l, Bl in enumerate(B1.elements)
        ])
        gram = np.array([
            [_weighted_ip(g, w, Hj, Bl.values) for Hj in H]
            for Bl in B1.elements
        ])
        coef = np.linalg.solve(gram, zeta_t)
        corr = StaggeredField.zeros(g, Kind.EDGE)
        for c, Hj in zip(coef, H):
            corr.values += c * Hj
        E = Ehat + corr
    elif len(np.atleast_1d(data.zeta)):
        raise ShapeError("moment vector length does not match basis size")
    return E


def solve_static_magnetic(data: StaticProblemData, op: MaxwellOperatorMatrix,
                          B2: BasisSetB, tol: float = 1e-8) -> StaggeredField:
    """Magneto-static role swap: rotation on edges, divergence on cells."""
    g = op.grid
    if data.G.kind != Kind.EDGE or data.f.kind != Kind.CELL:
        raise ShapeError("magnetic static data must be (EDGE, CELL)")
    if B2.side != 2:
        raise ValueError("magnetic solve needs the side-2 basis")
    sd = op.spectral()
    gr = data.G.values[op.idx_e]
    norm_g = np.linalg.norm(gr)
    divG = g.operator("div_dual", 1) @ data.G.values
    if norm_g > 0 and np.linalg.norm(divG) > 1e-10 * norm_g / g.spacing:
        raise ConstraintError("rotation data is not solenoidal")
    ze = gr / np.sqrt(op.lam_e)
    Ur = sd.U[:, : sd.rank]
    Vr = sd.Vt[: sd.rank]
    zf1 = Ur @ ((Vr @ ze) / sd.s[: sd.rank])
    resid = np.linalg.norm(op.C1.T @ (zf1 / np.sqrt(op.lam_f)) - gr)
    if norm_g > 0 and resid > tol * norm_g:
        raise ConstraintError("rotation data is outside the attainable range")
    H1 = StaggeredField.zeros(g, Kind.FACE)
    H1.values[op.idx_f] = zf1 / np.sqrt(op.lam_f)

    idx_c = np.flatnonzero(g.active_mask(Kind.CELL))
    Gd = g.operator("grad_dual", 1)[:, idx_c]
    wf = op.law.dof_weights(g, Kind.FACE, "mu")
    A = (Gd.T @ sp.diags(wf) @ Gd).tocsc()
    fr = data.f.values[idx_c]
    ground = not any((l == 2).any() for l in g.face_labels)
    ssol = _poisson_solve(A, -fr, ground)
    Hgrad = StaggeredField.zeros(g, Kind.FACE)
    Hgrad.values[:] = Gd @ ssol
    Hhat = H1 + Hgrad

    d = B2.d
    H = Hhat
    if d:
        kind, w = _side_weights(op, 2)
        basis = []
        for Bl in B2.elements:
            hproj = project_along_gradients(Bl, op, 2)
            v = hproj.values.copy()
            for prev in basis:
                v -= _weighted_ip(g, w, v, prev) * prev
            nv = np.sqrt(abs(_weighted_ip(g, w, v, v)))
            if nv <= 0:
                raise ConfigError("degenerate harmonic projection basis")
            basis.append(v / nv)
        theta_t = np.array([
            data.zeta[l] - _weighted_ip(g, w, Hhat.values, Bl.values)
            for l, Bl in enumerate(B2.elements)
        ])
        gram = np.array([
            [_weighted_ip(g, w, Hj, Bl.values) for Hj in basis]
            for Bl in B2.elements
        ])
        coef = np.linalg.solve(gram, theta_t)
        corr = StaggeredField.zeros(g, Kind.FACE)
        for c, Hj in zip(coef, basis):
            corr.values += c * Hj
        H = Hhat + corr
    elif len(np.atleast_1d(data.zeta)):
        raise ShapeError("moment vector length does not match basis size")
    return H
