"""Staggered-grid domains, fields, weighted inner products and mimetic operators.

Layout table (cell counts ``(nx, ny, nz)``, spacing ``h``, lower corner ``lo``):

====== ============================ ======================================
kind   array extents                degree-of-freedom location
====== ============================ ======================================
NODE   ``(nx+1, ny+1, nz+1)``       ``lo + h*(i, j, k)``
EDGE   x: ``(nx,   ny+1, nz+1)``    ``lo + h*(i+1/2, j, k)``
       y: ``(nx+1, ny,   nz+1)``    ``lo + h*(i, j+1/2, k)``
       z: ``(nx+1, ny+1, nz)``      ``lo + h*(i, j, k+1/2)``
FACE   x: ``(nx+1, ny,   nz)``      ``lo + h*(i, j+1/2, k+1/2)``
       y: ``(nx,   ny+1, nz)``      ``lo + h*(i+1/2, j, k+1/2)``
       z: ``(nx,   ny,   nz+1)``    ``lo + h*(i+1/2, j+1/2, k)``
CELL   ``(nx, ny, nz)``             ``lo + h*(i+1/2, j+1/2, k+1/2)``
====== ============================ ======================================

Vector kinds are flattened component-by-component (x block, then y, then z,
each in C order).  Electric-type fields live on edges, magnetic-type fields
on faces, scalar potentials on nodes and 3-form densities on cells.

Boundary conditions are realized by zeroing degrees of freedom that lie on
boundary faces carrying a given label (1 or 2).  With the mass-lumped
``h**3`` Hodge weights used throughout, the adjoint of the masked curl is
exactly the transpose matrix, which acts as the oppositely-conditioned curl
on face fields (homogeneous tangential trace on the unmasked boundary part
enters through truncated stencils, i.e. ghost values of zero).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy import ndimage

from .errors import GeometryError, ShapeError

__all__ = [
    "Kind",
    "GridDomain",
    "StaggeredField",
    "MaterialLaw",
    "WeightExponent",
    "rho",
    "weighted_inner_product",
    "field_norm",
    "discrete_grad",
    "discrete_curl",
    "discrete_curl_dual",
    "discrete_div",
    "discrete_div_dual",
    "discrete_grad_dual",
    "adjoint_defect",
]


class Kind(str, Enum):
    NODE = "NODE"
    EDGE = "EDGE"
    FACE = "FACE"
    CELL = "CELL"


def rho(x: np.ndarray) -> np.ndarray:
    """Polynomial weight ``(1 + |x|^2)**0.5`` for points ``x`` of shape (..., 3)."""
    x = np.asarray(x, dtype=float)
    return np.sqrt(1.0 + np.sum(x * x, axis=-1))


@dataclass(frozen=True)
class WeightExponent:
    """Exponent ``t`` of the polynomial weight ``rho**t``."""

    value: float

    def __post_init__(self) -> None:
        if not np.isfinite(self.value):
            raise ValueError("weight exponent must be finite")
        if abs(self.value) >= 4.0:
            warnings.warn(
                f"weight exponent t={self.value} outside the supported band (-4, 4)",
                stacklevel=2,
            )

    def __float__(self) -> float:
        return float(self.value)


def _as_exponent(t) -> float:
    if isinstance(t, WeightExponent):
        return float(t)
    return float(WeightExponent(float(t)))


def _or_shifts(padded: np.ndarray, axes: Sequence[int]) -> np.ndarray:
    """OR-reduce a zero-padded boolean array over the 2 shifts of each axis."""
    out = padded
    for ax in axes:
        lo = [slice(None)] * out.ndim
        hi = [slice(None)] * out.ndim
        lo[ax] = slice(None, -1)
        hi[ax] = slice(1, None)
        out = out[tuple(lo)] | out[tuple(hi)]
    return out


def _pad(a: np.ndarray, axes: Sequence[int]) -> np.ndarray:
    width = [(1, 1) if ax in axes else (0, 0) for ax in range(a.ndim)]
    return np.pad(a, width)


class GridDomain:
    """Truncated computational box with obstacle mask and labeled boundary faces.

    Parameters are normally supplied through :meth:`build`.  ``face_labels``
    holds one int8 array per face orientation with values 0 (not a boundary
    face), 1 or 2.
    """

    def __init__(
        self,
        cell_counts: tuple[int, int, int],
        spacing: float,
        origin: tuple[float, float, float],
        obstacle: np.ndarray,
        face_labels: list[np.ndarray],
        inner_radius: Optional[float],
        outer_radius: Optional[float],
    ) -> None:
        self.cell_counts = tuple(int(n) for n in cell_counts)
        self.spacing = float(spacing)
        self.origin = tuple(float(c) for c in origin)
        self.obstacle = obstacle
        self.face_labels = face_labels
        self.inner_radius = inner_radius
        self.outer_radius = outer_radius
        for a in [obstacle, *face_labels]:
            a.flags.writeable = False
        self._cache: dict = {}

    # ------------------------------------------------------------------ build

    @classmethod
    def build(
        cls,
        cell_counts,
        spacing: float,
        origin=(0.0, 0.0, 0.0),
        obstacle: Optional[np.ndarray] = None,
        label=2,
        inner_radius: Optional[float] = None,
        outer_radius: Optional[float] = None,
        strict: bool = True,
    ) -> "GridDomain":
        """Construct a domain, labeling every exposed boundary face.

        ``label`` is either a constant in {1, 2} or a callable
        ``label(center, axis) -> 1 | 2`` evaluated at face centers.
        """
        cell_counts = tuple(int(n) for n in cell_counts)
        if spacing <= 0:
            raise GeometryError("spacing must be positive")
        nx, ny, nz = cell_counts
        if obstacle is None:
            obstacle = np.zeros(cell_counts, dtype=bool)
        obstacle = np.asarray(obstacle, dtype=bool).copy()
        if obstacle.shape != cell_counts:
            raise ShapeError("obstacle mask extents do not match cell counts")
        active = ~obstacle
        if strict and not active.any():
            raise GeometryError("domain has no included cells")

        labels = []
        dom = cls(cell_counts, spacing, origin, obstacle,
                  [np.zeros(s, dtype=np.int8) for s in _face_shapes(cell_counts)],
                  inner_radius, outer_radius)
        exposed = dom._exposed_faces()
        for axis in range(3):
            lab = np.zeros(exposed[axis].shape, dtype=np.int8)
            idx = np.argwhere(exposed[axis])
            if callable(label):
                centers = dom.positions_of(Kind.FACE, axis, idx)
                vals = np.array([label(c, axis) for c in centers], dtype=np.int8)
            else:
                vals = np.full(len(idx), int(label), dtype=np.int8)
            lab[tuple(idx.T)] = vals
            labels.append(lab)
        dom = cls(cell_counts, spacing, origin, obstacle, labels,
                  inner_radius, outer_radius)
        if strict:
            dom.validate()
        return dom

    def relabel_active(self, active: np.ndarray, new_label: int) -> "GridDomain":
        """Sub-domain with the given active-cell set.

        Faces already labeled in the parent keep their label; newly exposed
        faces receive ``new_label``.  Used to carve the collar sub-domain.
        """
        active = np.asarray(active, dtype=bool) & self.active_cells
        sub = GridDomain(self.cell_counts, self.spacing, self.origin,
                         ~active, [l.copy() for l in self.face_labels],
                         self.inner_radius, self.outer_radius)
        exposed = sub._exposed_faces()
        labels = []
        for axis in range(3):
            lab = np.where(exposed[axis], self.face_labels[axis], 0).astype(np.int8)
            lab[exposed[axis] & (lab == 0)] = new_label
            labels.append(lab)
        return GridDomain(self.cell_counts, self.spacing, self.origin,
                          ~active, labels, self.inner_radius, self.outer_radius)

    # ------------------------------------------------------------- validation

    def validate(self) -> None:
        if self.inner_radius is not None and self.outer_radius is not None:
            if not self.inner_radius < self.outer_radius:
                raise GeometryError("inner radius must be below outer radius")
        if self.obstacle.any() and self.inner_radius is not None:
            centers = self.positions_of(Kind.CELL, 0, np.argwhere(self.obstacle))
            corner = np.linalg.norm(centers, axis=1) + 0.5 * np.sqrt(3.0) * self.spacing
            if not np.all(corner < self.inner_radius):
                raise GeometryError("excluded cells must lie strictly inside the inner ball")
        # connectivity of the included region (6-neighbor)
        structure = ndimage.generate_binary_structure(3, 1)
        _, num = ndimage.label(self.active_cells, structure=structure)
        if num > 1:
            raise GeometryError("included cell set is not edge-connected")
        for axis, (lab, exp) in enumerate(zip(self.face_labels, self._exposed_faces())):
            if np.any(exp & (lab == 0)):
                raise GeometryError(f"unlabeled exposed faces on axis {axis}")
            if np.any(~exp & (lab != 0)):
                raise GeometryError(f"labels on non-boundary faces on axis {axis}")

    # -------------------------------------------------------------- geometry

    @property
    def lower_corner(self) -> np.ndarray:
        n = np.array(self.cell_counts, dtype=float)
        return np.array(self.origin) - 0.5 * self.spacing * n

    def shapes(self, kind: Kind) -> list[tuple[int, int, int]]:
        nx, ny, nz = self.cell_counts
        if kind == Kind.NODE:
            return [(nx + 1, ny + 1, nz + 1)]
        if kind == Kind.EDGE:
            return _edge_shapes(self.cell_counts)
        if kind == Kind.FACE:
            return _face_shapes(self.cell_counts)
        return [(nx, ny, nz)]

    def n_dofs(self, kind: Kind) -> int:
        return sum(int(np.prod(s)) for s in self.shapes(kind))

    def component_offsets(self, kind: Kind) -> list[int]:
        sizes = [int(np.prod(s)) for s in self.shapes(kind)]
        return [0, *np.cumsum(sizes).tolist()]

    def _stagger(self, kind: Kind, axis: int) -> np.ndarray:
        """Half-offsets of the DOF location per coordinate."""
        if kind == Kind.NODE:
            return np.zeros(3)
        if kind == Kind.CELL:
            return np.full(3, 0.5)
        off = np.full(3, 0.5)
        if kind == Kind.EDGE:
            off = np.zeros(3)
            off[axis] = 0.5
        else:  # FACE
            off[axis] = 0.0
        return off

    def positions_of(self, kind: Kind, axis: int, idx: np.ndarray) -> np.ndarray:
        """Locations of the DOFs with integer indices ``idx`` (m, 3)."""
        off = self._stagger(kind, axis)
        return self.lower_corner + self.spacing * (np.asarray(idx, dtype=float) + off)

    def positions(self, kind: Kind) -> np.ndarray:
        """All DOF locations in flat order, shape (n_dofs, 3)."""
        key = ("positions", kind)
        if key not in self._cache:
            chunks = []
            for axis, shape in enumerate(self.shapes(kind)):
                grids = np.indices(shape, dtype=float)
                pts = np.stack([g.ravel() for g in grids], axis=1)
                chunks.append(self.positions_of(kind, axis, pts))
            self._cache[key] = np.concatenate(chunks, axis=0)
        return self._cache[key]

    # ------------------------------------------------------------ activity

    @property
    def active_cells(self) -> np.ndarray:
        return ~self.obstacle

    def _exposed_faces(self) -> list[np.ndarray]:
        key = "exposed"
        if key not in self._cache:
            act = self.active_cells
            out = []
            for axis in range(3):
                p = _pad(act, [axis])
                lo = [slice(None)] * 3
                hi = [slice(None)] * 3
                lo[axis] = slice(None, -1)
                hi[axis] = slice(1, None)
                out.append(p[tuple(lo)] ^ p[tuple(hi)])
            self._cache[key] = out
        return self._cache[key]

    def active_mask(self, kind: Kind) -> np.ndarray:
        """Flat boolean mask of DOFs adjacent to at least one included cell."""
        key = ("active", kind)
        if key not in self._cache:
            act = self.active_cells
            if kind == Kind.CELL:
                parts = [act]
            elif kind == Kind.FACE:
                parts = [_or_shifts(_pad(act, [ax]), [ax]) for ax in range(3)]
            elif kind == Kind.EDGE:
                parts = []
                for ax in range(3):
                    other = [a for a in range(3) if a != ax]
                    parts.append(_or_shifts(_pad(act, other), other))
            else:
                parts = [_or_shifts(_pad(act, [0, 1, 2]), [0, 1, 2])]
            self._cache[key] = np.concatenate([p.ravel() for p in parts])
        return self._cache[key]

    def _on_label(self, kind: Kind, side: int) -> np.ndarray:
        """Flat mask of DOFs lying on a boundary face labeled ``side``."""
        key = ("onlabel", kind, side)
        if key in self._cache:
            return self._cache[key]
        labs = [l == side for l in self.face_labels]
        if kind == Kind.FACE:
            parts = labs
        elif kind == Kind.NODE:
            acc = None
            for ax in range(3):
                other = [a for a in range(3) if a != ax]
                hit = _or_shifts(_pad(labs[ax], other), other)
                acc = hit if acc is None else (acc | hit)
            parts = [acc]
        elif kind == Kind.EDGE:
            parts = []
            for ax in range(3):
                other = [a for a in range(3) if a != ax]
                acc = None
                # an ax-edge lies on faces whose normal is one of the other axes;
                # such a face extends over the remaining third axis
                for nrm in other:
                    span = [a for a in other if a != nrm][0]
                    hit = _or_shifts(_pad(labs[nrm], [span]), [span])
                    acc = hit if acc is None else (acc | hit)
                parts.append(acc)
        else:
            raise ShapeError("cells carry no boundary labels")
        self._cache[key] = np.concatenate([p.ravel() for p in parts])
        return self._cache[key]

    def free_mask(self, kind: Kind, side: Optional[int]) -> np.ndarray:
        """Active DOFs not zeroed by the ``side`` boundary condition."""
        key = ("free", kind, side)
        if key not in self._cache:
            m = self.active_mask(kind).copy()
            if side is not None and kind != Kind.CELL:
                m &= ~self._on_label(kind, side)
            self._cache[key] = m
        return self._cache[key]

    # ----------------------------------------------------------- operators

    def _full_matrix(self, which: str) -> sp.csr_matrix:
        key = ("full", which)
        if key not in self._cache:
            if which == "grad":
                self._cache[key] = _build_grad(self)
            elif which == "curl":
                self._cache[key] = _build_curl(self)
            else:
                self._cache[key] = _build_div(self)
        return self._cache[key]

    def _proj(self, kind: Kind, side: Optional[int]) -> sp.dia_matrix:
        return sp.diags(self.free_mask(kind, side).astype(float))

    def operator(self, which: str, side: Optional[int]) -> sp.csr_matrix:
        """Masked mimetic operator as a sparse matrix.

        ``which`` is one of ``grad`` (NODE->EDGE), ``curl`` (EDGE->FACE),
        ``div`` (FACE->CELL), ``curl_dual`` (FACE->EDGE, the exact transpose
        of ``curl``) and ``div_dual`` (EDGE->NODE, minus the transpose of
        ``grad``).  ``side`` selects which label's DOFs are zeroed; ``None``
        masks only obstacle geometry.
        """
        key = ("op", which, side)
        if key in self._cache:
            return self._cache[key]
        if which == "grad":
            m = self._proj(Kind.EDGE, side) @ self._full_matrix("grad") @ self._proj(Kind.NODE, side)
        elif which == "curl":
            m = self._proj(Kind.FACE, side) @ self._full_matrix("curl") @ self._proj(Kind.EDGE, side)
        elif which == "div":
            m = self._proj(Kind.CELL, None) @ self._full_matrix("div") @ self._proj(Kind.FACE, side)
        elif which == "curl_dual":
            m = self.operator("curl", side).T.tocsr()
        elif which == "div_dual":
            m = (-self.operator("grad", side).T).tocsr()
        elif which == "grad_dual":
            m = (-self.operator("div", side).T).tocsr()
        else:
            raise ValueError(f"unknown operator {which!r}")
        m = sp.csr_matrix(m)
        m.eliminate_zeros()
        self._cache[key] = m
        return m


def _edge_shapes(counts):
    nx, ny, nz = counts
    return [(nx, ny + 1, nz + 1), (nx + 1, ny, nz + 1), (nx + 1, ny + 1, nz)]


def _face_shapes(counts):
    nx, ny, nz = counts
    return [(nx + 1, ny, nz), (nx, ny + 1, nz), (nx, ny, nz + 1)]


def _ravel(shape, i, j, k):
    return np.ravel_multi_index((i, j, k), shape)


def _build_grad(g: GridDomain) -> sp.csr_matrix:
    nx, ny, nz = g.cell_counts
    h = g.spacing
    nshape = g.shapes(Kind.NODE)[0]
    eshapes = g.shapes(Kind.EDGE)
    eoff = g.component_offsets(Kind.EDGE)
    rows, cols, vals = [], [], []
    for ax in range(3):
        shape = eshapes[ax]
        i, j, k = np.indices(shape)
        r = _ravel(shape, i, j, k).ravel() + eoff[ax]
        step = [0, 0, 0]
        step[ax] = 1
        hi = _ravel(nshape, i + step[0], j + step[1], k + step[2]).ravel()
        lo = _ravel(nshape, i, j, k).ravel()
        rows += [r, r]
        cols += [hi, lo]
        vals += [np.full(r.size, 1.0 / h), np.full(r.size, -1.0 / h)]
    n_e = g.n_dofs(Kind.EDGE)
    n_n = g.n_dofs(Kind.NODE)
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_e, n_n),
    )


def _build_curl(g: GridDomain) -> sp.csr_matrix:
    h = g.spacing
    eshapes = g.shapes(Kind.EDGE)
    fshapes = g.shapes(Kind.FACE)
    eoff = g.component_offsets(Kind.EDGE)
    foff = g.component_offsets(Kind.FACE)
    rows, cols, vals = [], [], []
    # face with normal `ax`: circulation of the two tangential edge families
    for ax in range(3):
        u = (ax + 1) % 3  # first tangential axis
        v = (ax + 2) % 3  # second tangential axis
        shape = fshapes[ax]
        i, j, k = np.indices(shape)
        r = _ravel(shape, i, j, k).ravel() + foff[ax]
        idx = [i, j, k]

        def edge_index(comp, shift_axis=None):
            ii = [idx[0], idx[1], idx[2]]
            if shift_axis is not None:
                step = [0, 0, 0]
                step[shift_axis] = 1
                ii = [ii[0] + step[0], ii[1] + step[1], ii[2] + step[2]]
            return _ravel(eshapes[comp], ii[0], ii[1], ii[2]).ravel() + eoff[comp]

        # (curl E)_ax = d_u E_v - d_v E_u
        rows += [r, r, r, r]
        cols += [edge_index(v, u), edge_index(v), edge_index(u, v), edge_index(u)]
        vals += [
            np.full(r.size, 1.0 / h),
            np.full(r.size, -1.0 / h),
            np.full(r.size, -1.0 / h),
            np.full(r.size, 1.0 / h),
        ]
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(g.n_dofs(Kind.FACE), g.n_dofs(Kind.EDGE)),
    )


def _build_div(g: GridDomain) -> sp.csr_matrix:
    h = g.spacing
    cshape = g.shapes(Kind.CELL)[0]
    fshapes = g.shapes(Kind.FACE)
    foff = g.component_offsets(Kind.FACE)
    i, j, k = np.indices(cshape)
    r = _ravel(cshape, i, j, k).ravel()
    rows, cols, vals = [], [], []
    for ax in range(3):
        step = [0, 0, 0]
        step[ax] = 1
        hi = _ravel(fshapes[ax], i + step[0], j + step[1], k + step[2]).ravel() + foff[ax]
        lo = _ravel(fshapes[ax], i, j, k).ravel() + foff[ax]
        rows += [r, r]
        cols += [hi, lo]
        vals += [np.full(r.size, 1.0 / h), np.full(r.size, -1.0 / h)]
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(g.n_dofs(Kind.CELL), g.n_dofs(Kind.FACE)),
    )


# ----------------------------------------------------------------- materials


@dataclass(frozen=True)
class MaterialLaw:
    """Material transformation ``eps = eps0*I + eps_hat``, ``mu = mu0*I + mu_hat``.

    ``eps_hat`` / ``mu_hat`` are per-cell symmetric 3x3 perturbations (or
    ``None`` for homogeneous isotropic media).  ``kappa`` records the declared
    far-field decay order; at truncated-box scale it is metadata only.
    """

    eps0: float = 1.0
    mu0: float = 1.0
    eps_hat: Optional[np.ndarray] = None
    mu_hat: Optional[np.ndarray] = None
    kappa: float = 0.0

    def __post_init__(self) -> None:
        if self.eps0 <= 0 or self.mu0 <= 0:
            raise ValueError("background coefficients must be positive")
        if self.kappa < 0:
            raise ValueError("decay order must be nonnegative")
        for name, hat, bg in (("eps_hat", self.eps_hat, self.eps0),
                              ("mu_hat", self.mu_hat, self.mu0)):
            if hat is None:
                continue
            hat = np.asarray(hat, dtype=float)
            if hat.shape[-2:] != (3, 3):
                raise ShapeError(f"{name} must hold per-cell 3x3 matrices")
            if not np.array_equal(hat, np.swapaxes(hat, -1, -2)):
                raise ValueError(f"{name} must be exactly symmetric")
            full = bg * np.eye(3) + hat
            if np.min(np.linalg.eigvalsh(full)) <= 0:
                raise ValueError(f"{name} breaks uniform positive definiteness")
            object.__setattr__(self, name, hat)

    def cell_diag(self, grid: GridDomain, which: str) -> np.ndarray:
        """Per-cell diagonal entries of eps or mu, shape (nx, ny, nz, 3)."""
        bg = self.eps0 if which == "eps" else self.mu0
        hat = self.eps_hat if which == "eps" else self.mu_hat
        out = np.full((*grid.cell_counts, 3), bg, dtype=float)
        if hat is not None:
            if hat.shape[:-2] != grid.cell_counts:
                raise ShapeError("material perturbation extents do not match grid")
            out += np.einsum("...dd->...d", hat)
        return out

    def dof_weights(self, grid: GridDomain, kind: Kind, which: Optional[str]) -> np.ndarray:
        """Mass-lumped diagonal Hodge coefficients for the requested kind.

        For vector kinds the axis-aligned diagonal entry of the material
        matrix is averaged over the adjacent included cells (the off-diagonal
        entries do not enter the lumped Hodge).  Scalar kinds use weight one.
        """
        n = grid.n_dofs(kind)
        if which is None or kind in (Kind.NODE, Kind.CELL):
            return np.ones(n)
        diag = self.cell_diag(grid, which)
        act = grid.active_cells
        parts = []
        for ax in range(3):
            if kind == Kind.EDGE:
                axes = [a for a in range(3) if a != ax]
            else:
                axes = [ax]
            vals = _pad(diag[..., ax] * act, axes)
            cnt = _pad(act.astype(float), axes)
            s = vals
            c = cnt
            for a in axes:
                lo = [slice(None)] * 3
                hi = [slice(None)] * 3
                lo[a] = slice(None, -1)
                hi[a] = slice(1, None)
                s = s[tuple(lo)] + s[tuple(hi)]
                c = c[tuple(lo)] + c[tuple(hi)]
            avg = np.where(c > 0, s / np.maximum(c, 1.0), 1.0)
            parts.append(avg.ravel())
        return np.concatenate(parts)


# -------------------------------------------------------------------- fields


@dataclass
class StaggeredField:
    """Complex field on the staggered locations of one :class:`Kind`."""

    grid: GridDomain
    kind: Kind
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.complex128).ravel()
        if self.values.size != self.grid.n_dofs(self.kind):
            raise ShapeError(
                f"{self.kind.value} field needs {self.grid.n_dofs(self.kind)} values, "
                f"got {self.values.size}"
            )

    @classmethod
    def zeros(cls, grid: GridDomain, kind: Kind) -> "StaggeredField":
        return cls(grid, kind, np.zeros(grid.n_dofs(kind), dtype=np.complex128))

    @classmethod
    def from_function(
        cls,
        grid: GridDomain,
        kind: Kind,
        fn: Callable[[np.ndarray, int], np.ndarray],
        side: Optional[int] = None,
    ) -> "StaggeredField":
        """Sample ``fn(points, component_axis)`` at the DOF locations.

        For scalar kinds the component axis is always 0.  DOFs on obstacle
        geometry (and, if ``side`` is given, on that boundary part) are zeroed.
        """
        chunks = []
        for axis, shape in enumerate(grid.shapes(kind)):
            grids = np.indices(shape, dtype=float)
            idx = np.stack([g.ravel() for g in grids], axis=1)
            pts = grid.positions_of(kind, axis, idx)
            chunks.append(np.asarray(fn(pts, axis), dtype=np.complex128).ravel())
        vals = np.concatenate(chunks)
        vals = vals * grid.free_mask(kind, side)
        return cls(grid, kind, vals)

    def components(self) -> list[np.ndarray]:
        shapes = self.grid.shapes(self.kind)
        offs = self.grid.component_offsets(self.kind)
        return [
            self.values[offs[i]:offs[i + 1]].reshape(shapes[i])
            for i in range(len(shapes))
        ]

    def masked(self, side: Optional[int]) -> "StaggeredField":
        return StaggeredField(self.grid, self.kind,
                              self.values * self.grid.free_mask(self.kind, side))

    def copy(self) -> "StaggeredField":
        return StaggeredField(self.grid, self.kind, self.values.copy())

    def _check_mate(self, other: "StaggeredField") -> None:
        if self.kind != other.kind or self.grid is not other.grid:
            raise ShapeError("fields live on different grids or kinds")

    def __add__(self, other: "StaggeredField") -> "StaggeredField":
        self._check_mate(other)
        return StaggeredField(self.grid, self.kind, self.values + other.values)

    def __sub__(self, other: "StaggeredField") -> "StaggeredField":
        self._check_mate(other)
        return StaggeredField(self.grid, self.kind, self.values - other.values)

    def __mul__(self, a) -> "StaggeredField":
        return StaggeredField(self.grid, self.kind, self.values * a)

    __rmul__ = __mul__


# --------------------------------------------------------- inner products


def _dof_weight_array(u: StaggeredField, t, gamma, law: Optional[MaterialLaw]) -> np.ndarray:
    texp = _as_exponent(t)
    g = u.grid
    w = np.full(g.n_dofs(u.kind), g.spacing ** 3)
    if texp != 0.0:
        w = w * rho(g.positions(u.kind)) ** (2.0 * texp)
    if gamma is not None:
        if isinstance(gamma, np.ndarray):
            w = w * gamma
        else:
            if law is None:
                law = MaterialLaw()
            w = w * law.dof_weights(g, u.kind, gamma)
    return w


def weighted_inner_product(
    u: StaggeredField,
    v: StaggeredField,
    t=0.0,
    gamma=None,
    law: Optional[MaterialLaw] = None,
) -> complex:
    """Discrete weighted inner product ``sum rho^{2t} (gamma u) conj(v) h^3``.

    ``gamma`` is ``None`` (identity), ``"eps"`` / ``"mu"`` (material diagonal
    of ``law``), or an explicit per-DOF weight array.  Sesquilinear in the
    second argument; summation order is the fixed flat DOF order.
    """
    if u.kind != v.kind or u.grid is not v.grid:
        raise ShapeError("inner product needs matching kind and grid")
    w = _dof_weight_array(u, t, gamma, law)
    return complex(np.dot(w * u.values, np.conj(v.values)))


def field_norm(u: StaggeredField, t=0.0, gamma=None, law=None) -> float:
    return float(np.sqrt(max(weighted_inner_product(u, u, t, gamma, law).real, 0.0)))


# ----------------------------------------------------------- operator API


def _apply(grid: GridDomain, which: str, side, f: StaggeredField,
           kin: Kind, kout: Kind) -> StaggeredField:
    if f.kind != kin:
        raise ShapeError(f"{which} expects a {kin.value} field, got {f.kind.value}")
    if f.grid is not grid:
        raise ShapeError("field grid does not match operator grid")
    return StaggeredField(grid, kout, grid.operator(which, side) @ f.values)


def discrete_grad(w: StaggeredField, side: Optional[int] = 1) -> StaggeredField:
    """Masked gradient NODE -> EDGE (homogeneous scalar trace on ``side``)."""
    return _apply(w.grid, "grad", side, w, Kind.NODE, Kind.EDGE)


def discrete_curl(E: StaggeredField, side: Optional[int] = 1) -> StaggeredField:
    """Masked curl EDGE -> FACE (homogeneous tangential trace on ``side``)."""
    return _apply(E.grid, "curl", side, E, Kind.EDGE, Kind.FACE)


def discrete_curl_dual(H: StaggeredField, side: Optional[int] = 1) -> StaggeredField:
    """Curl FACE -> EDGE; exact adjoint of :func:`discrete_curl` (same ``side``).

    Acting on face fields, the homogeneous tangential trace holds on the
    complementary boundary part through ghost-zero truncation, and rows on
    the ``side`` part are removed.
    """
    return _apply(H.grid, "curl_dual", side, H, Kind.FACE, Kind.EDGE)


def discrete_div(H: StaggeredField, side: Optional[int] = 1) -> StaggeredField:
    """Masked divergence FACE -> CELL (homogeneous normal trace on ``side``)."""
    return _apply(H.grid, "div", side, H, Kind.FACE, Kind.CELL)


def discrete_grad_dual(s: StaggeredField, side: Optional[int] = 1) -> StaggeredField:
    """Gradient CELL -> FACE; minus the exact adjoint of :func:`discrete_div`."""
    return _apply(s.grid, "grad_dual", side, s, Kind.CELL, Kind.FACE)


def discrete_div_dual(E: StaggeredField, side: Optional[int] = 1) -> StaggeredField:
    """Divergence EDGE -> NODE; minus the exact adjoint of :func:`discrete_grad`.

    The homogeneous normal trace holds on the boundary part complementary to
    ``side`` through ghost-zero truncation.
    """
    return _apply(E.grid, "div_dual", side, E, Kind.EDGE, Kind.NODE)


def adjoint_defect(
    grid: GridDomain,
    opA: sp.spmatrix,
    opB: sp.spmatrix,
    gammaA: Optional[np.ndarray] = None,
    gammaB: Optional[np.ndarray] = None,
    n_probes: int = 20,
    seed: int = 0,
) -> float:
    """Max relative defect ``|<A u, v>_B - <u, B v>_A|`` over random probes.

    ``opA`` maps the u-space into the v-space and ``opB`` the other way;
    ``gammaA`` / ``gammaB`` are per-DOF weights of the u- resp. v-space inner
    products (default: plain ``h^3`` lumping).  Probes are normalized, so the
    returned defect is relative.
    """
    rng = np.random.default_rng(seed)
    h3 = grid.spacing ** 3
    nu, nv = opA.shape[1], opA.shape[0]
    wu = h3 * (gammaA if gammaA is not None else np.ones(nu))
    wv = h3 * (gammaB if gammaB is not None else np.ones(nv))
    worst = 0.0
    for _ in range(n_probes):
        u = rng.standard_normal(nu) + 1j * rng.standard_normal(nu)
        v = rng.standard_normal(nv) + 1j * rng.standard_normal(nv)
        u /= np.sqrt(np.dot(wu, np.abs(u) ** 2))
        v /= np.sqrt(np.dot(wv, np.abs(v) ** 2))
        lhs = np.dot(wv * (opA @ u), np.conj(v))
        rhs = np.dot(wu * u, np.conj(opB @ v))
        scale = max(abs(lhs), abs(rhs), 1.0)
        worst = max(worst, abs(lhs - rhs) / scale)
    return worst
