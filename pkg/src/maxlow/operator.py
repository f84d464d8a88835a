"""Bounded-domain discrete Maxwell operator with mixed boundary conditions.

The block operator is ``M = [[0, -C1^T], [C1, 0]]`` where ``C1`` is the
tangentially-masked curl (label-1 edges zeroed) restricted to free edge and
active face DOFs, and ``script_M = i * Lambda^{-1} M`` with the mass-lumped
material diagonal ``Lambda = diag(eps_edges, mu_faces)``.  ``script_M`` is
self-adjoint in the Lambda-inner product by construction.

All spectral machinery reduces to one real dense SVD: with scaling
``S = sqrt(Lambda)`` the transformed operator is ``B = [[0, -i*Ct^T],
[i*Ct, 0]]`` for ``Ct = S_f^{-1} C1 S_e^{-1}``, so the SVD ``Ct = U S V^T``
yields the eigenvalues ``{0} ∪ {±sigma_i}``, the Lambda-orthogonal kernel and
range projections, and the reduced inverse in closed form.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    ConfigError,
    ConstraintError,
    NearSingularError,
    SeriesDivergenceError,
    ShapeError,
)
from .grid import GridDomain, Kind, MaterialLaw, StaggeredField

__all__ = [
    "MaxwellOperatorMatrix",
    "SpectralData",
    "DecompositionResult",
    "HarmonicBasis",
    "assemble",
    "kernel_basis",
    "helmholtz_decompose",
    "resolvent_solve",
    "static_inverse",
    "neumann_series",
]

DENSE_LIMIT = 20_000  # largest total dimension for dense factorizations


@dataclass
class SpectralData:
    """Spectral decomposition of the scaled Maxwell operator.

    ``U``, ``s``, ``Vt`` are the (full) SVD factors of the scaled curl; the
    nonzero eigenvalues of the Maxwell operator are ``±s[:rank]`` and the
    remaining directions span the kernel.
    """

    U: np.ndarray
    s: np.ndarray
    Vt: np.ndarray
    rank: int
    sigma_min: float
    gap_ratio: float
    gap_ok: bool
    kernel_pairs: list = field(default_factory=list)

    @property
    def eigenvalues(self) -> np.ndarray:
        sv = self.s[: self.rank]
        return np.sort(np.concatenate([sv, -sv]))

    def _split(self, z: np.ndarray):
        ne = self.Vt.shape[1]
        return z[:ne], z[ne:]

    def pi_R(self, z: np.ndarray) -> np.ndarray:
        """Orthogonal projection onto the range (scaled coordinates)."""
        ze, zf = self._split(z)
        Vr = self.Vt[: self.rank]
        Ur = self.U[:, : self.rank]
        return np.concatenate([Vr.T @ (Vr @ ze), Ur @ (Ur.T @ zf)])

    def pi_N(self, z: np.ndarray) -> np.ndarray:
        """Orthogonal projection onto the kernel (scaled coordinates)."""
        return z - self.pi_R(z)

    def pinv(self, z: np.ndarray) -> np.ndarray:
        """Reduced inverse on the range (scaled coordinates)."""
        ze, zf = self._split(z)
        Vr = self.Vt[: self.rank]
        Ur = self.U[:, : self.rank]
        sv = self.s[: self.rank]
        out_e = -1j * (Vr.T @ ((Ur.T @ zf) / sv))
        out_f = 1j * (Ur @ ((Vr @ ze) / sv))
        return np.concatenate([out_e, out_f])

    def distance_to_spectrum(self, omega: complex) -> float:
        lam = np.concatenate([[0.0], self.s[: self.rank], -self.s[: self.rank]])
        return float(np.min(np.abs(lam - omega)))


class MaxwellOperatorMatrix:
    """Sparse block Maxwell operator on the free DOFs of a labeled domain."""

    def __init__(self, grid: GridDomain, law: MaterialLaw) -> None:
        has_labels = any((l != 0).any() for l in grid.face_labels)
        if not has_labels:
            raise ConfigError("domain has no labeled boundary faces")
        grid.validate()
        self.grid = grid
        self.law = law
        self.idx_e = np.flatnonzero(grid.free_mask(Kind.EDGE, 1))
        self.idx_f = np.flatnonzero(grid.active_mask(Kind.FACE))
        C1 = grid.operator("curl", 1)
        self.C1 = sp.csr_matrix(C1[self.idx_f][:, self.idx_e])
        self.lam_e = law.dof_weights(grid, Kind.EDGE, "eps")[self.idx_e]
        self.lam_f = law.dof_weights(grid, Kind.FACE, "mu")[self.idx_f]
        self.ne = len(self.idx_e)
        self.nf = len(self.idx_f)
        self.n = self.ne + self.nf
        self._cache: dict = {}

    # --------------------------------------------------------- embeddings

    def pair_to_vec(self, E: StaggeredField, H: StaggeredField) -> np.ndarray:
        if E.kind != Kind.EDGE or H.kind != Kind.FACE:
            raise ShapeError("expected an (EDGE, FACE) pair")
        return np.concatenate([E.values[self.idx_e], H.values[self.idx_f]])

    def vec_to_pair(self, vec: np.ndarray):
        E = StaggeredField.zeros(self.grid, Kind.EDGE)
        H = StaggeredField.zeros(self.grid, Kind.FACE)
        E.values[self.idx_e] = vec[: self.ne]
        H.values[self.idx_f] = vec[self.ne:]
        return E, H

    # ----------------------------------------------------------- algebra

    @property
    def lam(self) -> np.ndarray:
        return np.concatenate([self.lam_e, self.lam_f])

    @property
    def M(self) -> sp.csr_matrix:
        if "M" not in self._cache:
            self._cache["M"] = sp.bmat(
                [[None, -self.C1.T], [self.C1, None]], format="csr"
            )
        return self._cache["M"]

    def apply_M(self, vec: np.ndarray) -> np.ndarray:
        return self.M @ vec

    def apply_script_M(self, vec: np.ndarray) -> np.ndarray:
        """Apply ``i * Lambda^{-1} M``."""
        return 1j * (self.M @ vec) / self.lam

    def lambda_inner(self, u: np.ndarray, v: np.ndarray) -> complex:
        return complex(np.dot(self.lam * u, np.conj(v)) * self.grid.spacing ** 3)

    def lambda_norm(self, u: np.ndarray) -> float:
        return float(np.sqrt(max(self.lambda_inner(u, u).real, 0.0)))

    def scaled_curl(self) -> np.ndarray:
        if "Ct" not in self._cache:
            D_f = sp.diags(1.0 / np.sqrt(self.lam_f))
            D_e = sp.diags(1.0 / np.sqrt(self.lam_e))
            self._cache["Ct"] = np.asarray((D_f @ self.C1 @ D_e).todense())
        return self._cache["Ct"]

    def spectral(self, tol: float = 1e-8) -> SpectralData:
        if "spectral" in self._cache:
            return self._cache["spectral"]
        if self.n > DENSE_LIMIT:
            raise ConfigError(
                f"dense spectral factorization limited to n <= {DENSE_LIMIT}"
            )
        Ct = self.scaled_curl()
        U, s, Vt = np.linalg.svd(Ct, full_matrices=True)
        smax = s[0] if len(s) else 0.0
        rank = int(np.sum(s > tol * smax))
        gap_ratio = float(s[rank - 1] / s[rank]) if 0 < rank < len(s) and s[rank] > 0 else np.inf
        gap_ok = gap_ratio >= 10.0
        if not gap_ok:
            warnings.warn(
                f"ambiguous singular-value gap at the rank cutoff (ratio {gap_ratio:.2e})"
            )
        sd = SpectralData(U, s, Vt, rank, float(s[rank - 1]) if rank else 0.0,
                          gap_ratio, gap_ok)
        self._cache["spectral"] = sd
        return sd

    def to_scaled(self, vec: np.ndarray) -> np.ndarray:
        return np.sqrt(self.lam) * vec

    def from_scaled(self, z: np.ndarray) -> np.ndarray:
        return z / np.sqrt(self.lam)


def assemble(domain: GridDomain, law: MaterialLaw) -> MaxwellOperatorMatrix:
    """Assemble the masked block operator for a labeled domain."""
    return MaxwellOperatorMatrix(domain, law)


# -------------------------------------------------------------- kernel basis


@dataclass
class HarmonicBasis:
    """Orthonormal basis of the discrete Dirichlet-Neumann fields of one side."""

    side: str
    dimension: int
    fields: list
    singular_values: np.ndarray
    gap_ratio: float
    gap_ok: bool


def _harmonic_compound(op: MaxwellOperatorMatrix, side: str):
    g = op.grid
    if side == "electric":
        idx = np.flatnonzero(g.free_mask(Kind.EDGE, 1))
        we = op.law.dof_weights(g, Kind.EDGE, "eps")
        rot = g.operator("curl", 1)[:, idx]
        div = (g.operator("div_dual", 1) @ sp.diags(we))[:, idx]
        wgt = we[idx]
        kind = Kind.EDGE
    elif side == "magnetic":
        idx = np.flatnonzero(g.free_mask(Kind.FACE, 1))
        wf = op.law.dof_weights(g, Kind.FACE, "mu")
        rot = g.operator("curl_dual", 1)[:, idx]
        div = (g.operator("div", 1) @ sp.diags(wf))[:, idx]
        wgt = wf[idx]
        kind = Kind.FACE
    else:
        raise ValueError("side must be 'electric' or 'magnetic'")
    return idx, wgt, rot, div, kind


def kernel_basis(op: MaxwellOperatorMatrix, tol: float = 1e-8,
                 side: str = "electric") -> HarmonicBasis:
    """Gamma-orthonormal basis of the harmonic (Dirichlet-Neumann) fields.

    Electric side: rotation-free with the tangential label-1 condition and
    eps-solenoidal with the natural label-2 normal condition.  Magnetic side:
    the role swap on face fields.  The dimension is decided by a dense SVD of
    the stacked constraint operator with a relative cutoff and a 10x gap
    check.
    """
    idx, wgt, rot, div, kind = _harmonic_compound(op, side)
    if rot.shape[1] > DENSE_LIMIT:
        raise ConfigError("dense kernel computation limited by DENSE_LIMIT")
    Sinv = sp.diags(1.0 / np.sqrt(wgt))
    A = np.asarray(sp.vstack([rot @ Sinv, div @ Sinv]).todense())
    _, s, Vt = np.linalg.svd(A, full_matrices=False)
    smax = s[0] if len(s) else 0.0
    rank = int(np.sum(s > tol * smax))
    dim = A.shape[1] - rank
    if 0 < rank < len(s) and s[rank] > 0:
        gap_ratio = float(s[rank - 1] / s[rank])
    else:
        gap_ratio = np.inf
    gap_ok = gap_ratio >= 10.0
    if not gap_ok:
        warnings.warn(
            f"ambiguous singular-value gap in kernel rank decision (ratio {gap_ratio:.2e})"
        )
    fields = []
    for row in Vt[rank:]:
        f = StaggeredField.zeros(op.grid, kind)
        f.values[idx] = row / np.sqrt(wgt)
        fields.append(f)
    return HarmonicBasis(side, dim, fields, s, gap_ratio, gap_ok)


# ----------------------------------------------------------- decompositions


@dataclass
class DecompositionResult:
    gradient_part: StaggeredField
    rot_part: StaggeredField
    harmonic_part: StaggeredField
    reconstruction_residual: float
    orthogonality_defect: float


def _grad_basis(op: MaxwellOperatorMatrix, side: str) -> np.ndarray:
    """Orthonormal basis (scaled coordinates) of the potential-range."""
    key = ("gradbasis", side)
    if key in op._cache:
        return op._cache[key]
    g = op.grid
    if side == "electric":
        idx = op.idx_e
        wgt = op.lam_e
        pot = g.operator("grad", 1)[idx][:, np.flatnonzero(g.free_mask(Kind.NODE, 1))]
    else:
        idx = op.idx_f
        wgt = op.lam_f
        pot = g.operator("grad_dual", 1)[idx][:, np.flatnonzero(g.active_mask(Kind.CELL))]
    A = sp.diags(np.sqrt(wgt)) @ pot
    UA, sA, _ = np.linalg.svd(np.asarray(A.todense()), full_matrices=False)
    rank = int(np.sum(sA > 1e-12 * sA[0])) if len(sA) else 0
    op._cache[key] = UA[:, :rank]
    return op._cache[key]


def helmholtz_decompose(X: StaggeredField, op: MaxwellOperatorMatrix,
                        side: str = "electric") -> DecompositionResult:
    """Three-part weighted Helmholtz decomposition of a field.

    Electric side (EDGE input, eps-inner product): potential gradients +
    ``eps^{-1} x`` (rot range with the complementary mask) + harmonic fields.
    Magnetic side (FACE input, mu-inner product): ``mu^{-1} x`` (rot range)
    + density gradients + harmonic fields.  All projections are orthogonal
    in the weighted inner product and computed from dense factorizations.
    """
    sd = op.spectral()
    if side == "electric":
        if X.kind != Kind.EDGE:
            raise ShapeError("electric decomposition expects an EDGE field")
        idx, wgt = op.idx_e, op.lam_e
        x = X.values[idx]
        z = np.sqrt(wgt) * x
        Vr = sd.Vt[: sd.rank]
        z_rot = Vr.T @ (Vr @ z)
    else:
        if X.kind != Kind.FACE:
            raise ShapeError("magnetic decomposition expects a FACE field")
        idx, wgt = op.idx_f, op.lam_f
        x = X.values[idx]
        z = np.sqrt(wgt) * x
        Ur = sd.U[:, : sd.rank]
        z_rot = Ur @ (Ur.T @ z)
    Q = _grad_basis(op, side)
    z0 = z - z_rot
    z_grad = Q @ (Q.T.conj() @ z0)
    z_harm = z0 - z_grad

    def back(zpart):
        f = StaggeredField.zeros(op.grid, X.kind)
        f.values[idx] = zpart / np.sqrt(wgt)
        return f

    nz = np.linalg.norm(z)
    recon = np.linalg.norm(z_rot + z_grad + z_harm - z) / nz if nz > 0 else 0.0
    ortho = 0.0
    if nz > 0:
        for a, b in ((z_grad, z_rot), (z_grad, z_harm), (z_rot, z_harm)):
            ortho = max(ortho, abs(np.dot(a, np.conj(b))) / nz ** 2)
    return DecompositionResult(back(z_grad), back(z_rot), back(z_harm),
                               float(recon), float(ortho))


# ------------------------------------------------------------------- solves


def resolvent_solve(op: MaxwellOperatorMatrix, omega: complex,
                    F: StaggeredField, G: StaggeredField,
                    check_spectrum: bool = True):
    """Direct sparse solve of ``(M + i*omega*Lambda)(E, H) = (F, G)``.

    Equivalent to applying ``i (script_M - omega)^{-1} Lambda^{-1}``.
    """
    omega = complex(omega)
    if check_spectrum and op.n <= DENSE_LIMIT:
        dist = op.spectral().distance_to_spectrum(omega)
        if dist < 1e-8:
            raise NearSingularError(
                f"frequency within {dist:.2e} of an eigenvalue"
            )
    rhs = op.pair_to_vec(F, G)
    A = (op.M + 1j * omega * sp.diags(op.lam)).tocsc()
    x = spla.splu(A).solve(rhs)
    res = np.linalg.norm(A @ x - rhs)
    nrhs = np.linalg.norm(rhs)
    if nrhs > 0 and res > 1e-10 * nrhs:
        raise NearSingularError(f"resolvent solve residual {res / nrhs:.2e}")
    return op.vec_to_pair(x)


def static_inverse(op: MaxwellOperatorMatrix, F: StaggeredField,
                   G: StaggeredField, tol: float = 1e-10):
    """Reduced static solve ``(E, H) = i * pinv(script_M) Lambda^{-1}(F, G)``.

    Requires ``Lambda^{-1}(F, G)`` to be Lambda-orthogonal to the kernel.
    """
    sd = op.spectral()
    vec = op.pair_to_vec(F, G)
    z = 1j * vec / np.sqrt(op.lam)  # scaled coordinates of i*Lambda^{-1}(F,G)
    nz = np.linalg.norm(z)
    if nz > 0 and np.linalg.norm(sd.pi_N(z)) > tol * nz:
        raise ConstraintError("input has a kernel component above tolerance")
    out = sd.pinv(z) / np.sqrt(op.lam)
    return op.vec_to_pair(out)


def neumann_series(op: MaxwellOperatorMatrix, omega: complex,
                   F: StaggeredField, G: StaggeredField,
                   tail_tol: float = 1e-12, max_terms: int = 200):
    """Low-frequency Neumann-series solve.

    Evaluates ``-omega^{-1} pi_N + sum_j omega^j L0^{j+1} pi_R`` applied to
    ``i*Lambda^{-1}(F, G)``; valid strictly inside the spectral gap.
    Returns ``((E, H), diagnostics)``.
    """
    omega = complex(omega)
    sd = op.spectral()
    if abs(omega) >= sd.sigma_min:
        raise SeriesDivergenceError(
            f"|omega|={abs(omega):.3e} is not inside the spectral gap "
            f"sigma_min={sd.sigma_min:.3e}"
        )
    vec = op.pair_to_vec(F, G)
    z = 1j * vec / np.sqrt(op.lam)
    total = np.zeros_like(z)
    if omega != 0:
        total = total - sd.pi_N(z) / omega
    term = sd.pinv(sd.pi_R(z))  # j = 0 contribution L0 pi_R
    term_norms = []
    terms_used = 0
    for _ in range(max_terms):
        tn = np.linalg.norm(term)
        term_norms.append(tn)
        total = total + term
        terms_used += 1
        if tn < tail_tol or omega == 0:
            break
        term = omega * sd.pinv(term)
    out = total / np.sqrt(op.lam)
    diagnostics = {
        "terms_used": terms_used,
        "term_norms": term_norms,
        "sigma_min": sd.sigma_min,
        "predicted_ratio": abs(omega) / sd.sigma_min if sd.sigma_min else np.inf,
    }
    return op.vec_to_pair(out), diagnostics
