"""Scalar Helmholtz fundamental solution and the three volume convolutions.

The kernel is ``phi(x) = -exp(-i*k*|x|) / (4*pi*|x|)`` with wavenumber
``k = omega*sqrt(eps0*mu0)`` and ``Im(omega) >= 0``; for ``omega = 0`` this is
the Newton kernel ``-1/(4*pi*|x|)``.

Convolutions use the midpoint rule ``sum_y phi(x - y) F(y) h^3`` over the
staggered source locations of each component.  When a target coincides with a
source location, the ``1/r`` part of the kernel is replaced by its analytic
integral over the equal-volume ball (:func:`singular_cell_weight`) and the
smooth remainder by its ``r -> 0`` limit; the odd ``1/r^2`` part of the
gradient kernel integrates to zero over the symmetric cell and is skipped.
Summation is direct (sources x targets), chunked over targets with
fixed-order accumulation.  When sources and targets both live on translates
of the same regular lattice, an FFT-based fast path evaluates the identical
sum (same self-cell rule) in near-linear time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError, SingularityError
from .grid import Kind, StaggeredField

__all__ = [
    "HelmholtzKernel",
    "eval_phi",
    "eval_grad_phi",
    "singular_cell_weight",
    "convolve_scalar",
    "convolve_grad",
    "cross_convolve",
]

_CHUNK_BUDGET = 4_000_000  # max source-target pairs held at once


@dataclass(frozen=True)
class HelmholtzKernel:
    """Frequency and background constants of the scalar kernel."""

    omega: complex
    eps0: float = 1.0
    mu0: float = 1.0

    def __post_init__(self) -> None:
        if self.eps0 <= 0 or self.mu0 <= 0:
            raise ValueError("background coefficients must be positive")
        if complex(self.omega).imag < 0:
            raise ValueError("frequency must lie in the closed upper half plane")
        object.__setattr__(self, "omega", complex(self.omega))

    @property
    def k(self) -> complex:
        return self.omega * np.sqrt(self.eps0 * self.mu0)


def _phi_of_r(k: complex, r: np.ndarray, sign: float = 1.0) -> np.ndarray:
    return -np.exp(sign * (-1j) * k * r) / (4.0 * np.pi * r)


def eval_phi(kernel: HelmholtzKernel, x) -> np.ndarray:
    """Fundamental solution at points ``x`` of shape (..., 3)."""
    x = np.asarray(x, dtype=float)
    r = np.sqrt(np.sum(x * x, axis=-1))
    if np.any(r == 0.0):
        raise SingularityError("kernel evaluated at the origin")
    return _phi_of_r(kernel.k, r)


def eval_grad_phi(kernel: HelmholtzKernel, x) -> np.ndarray:
    """Gradient of the fundamental solution, shape (..., 3)."""
    x = np.asarray(x, dtype=float)
    r = np.sqrt(np.sum(x * x, axis=-1))
    if np.any(r == 0.0):
        raise SingularityError("kernel gradient evaluated at the origin")
    phi = _phi_of_r(kernel.k, r)
    factor = -phi * (1j * kernel.k + 1.0 / r) / r
    return factor[..., None] * x


def singular_cell_weight(h: float) -> float:
    """Integral of ``1/(4*pi*|y|)`` over the ball of volume ``h**3``.

    Equals ``R**2 / 2`` with ``R = (3*h**3 / (4*pi))**(1/3)``; used (with a
    minus sign) as the self-cell contribution of the ``-1/(4*pi*r)`` kernel
    part.
    """
    if h <= 0:
        raise ValueError("spacing must be positive")
    R = (3.0 * h ** 3 / (4.0 * np.pi)) ** (1.0 / 3.0)
    return R * R / 2.0


def _self_cell_value(k: complex, h: float) -> complex:
    # integral of phi over the self cell: singular part plus smooth limit
    return -singular_cell_weight(h) + 1j * k * h ** 3 / (4.0 * np.pi)


# Near-field cutoffs in units of h: source cells closer than the outer
# cutoff get cell-averaged kernel values, with a higher Gauss order inside
# the inner cutoff where the kernel varies most.  Neither 2.8 nor 6.3 is an
# exact staggered lattice distance (4x their squares are not integers), so
# membership cannot be flipped by roundoff between the direct and FFT
# summation paths.
_NEAR_FIELD_CUTOFF = 6.3
_NEAR_FIELD_INNER = 2.8
_GAUSS_INNER = np.polynomial.legendre.leggauss(8)
_GAUSS_OUTER = np.polynomial.legendre.leggauss(4)


def _cell_average(dvec: np.ndarray, h: float, k: complex, mode: str,
                  grad_axis: int, sign: float, nodes) -> np.ndarray:
    x1, w1 = nodes
    x1 = 0.5 * h * x1
    w1 = 0.5 * w1
    ox, oy, oz = np.meshgrid(x1, x1, x1, indexing="ij")
    wx, wy, wz = np.meshgrid(w1, w1, w1, indexing="ij")
    offs = np.stack([ox.ravel(), oy.ravel(), oz.ravel()], axis=1)
    wts = (wx * wy * wz).ravel()
    pts = dvec[:, None, :] - offs[None, :, :]
    r = np.sqrt(np.einsum("mqc,mqc->mq", pts, pts))
    phi = -np.exp(sign * (-1j) * k * r) / (4.0 * np.pi * r)
    if mode == "phi":
        vals = phi
    else:
        vals = -phi * (sign * 1j * k + 1.0 / r) * pts[:, :, grad_axis] / r
    return vals @ wts


def _near_field_values(dvec: np.ndarray, h: float, k: complex, mode: str,
                       grad_axis: int, sign: float) -> np.ndarray:
    """Cell-averaged kernel for source cells close to the target.

    The midpoint rule is poor where the kernel varies strongly, so for
    difference vectors within the near-field cutoff the kernel is replaced
    by its tensor-Gauss average over the source cell; the closest shell
    uses a higher Gauss order.
    """
    r = np.sqrt(np.einsum("mc,mc->m", dvec, dvec))
    inner = r <= _NEAR_FIELD_INNER * h
    out = np.empty(len(dvec), dtype=np.complex128)
    if inner.any():
        out[inner] = _cell_average(dvec[inner], h, k, mode, grad_axis, sign,
                                   _GAUSS_INNER)
    if (~inner).any():
        out[~inner] = _cell_average(dvec[~inner], h, k, mode, grad_axis,
                                    sign, _GAUSS_OUTER)
    return out


def _sum_kernel(
    sources: np.ndarray,
    values: np.ndarray,
    targets: np.ndarray,
    h: float,
    k: complex,
    mode: str,
    grad_axis: int = -1,
    sign: float = 1.0,
) -> np.ndarray:
    """Direct midpoint-rule summation for one source component.

    ``mode`` is ``"phi"`` (scalar kernel, returns (M,)) or ``"grad"``
    (one gradient component ``grad_axis``, returns (M,)).
    """
    nz = np.flatnonzero(values)
    out = np.zeros(len(targets), dtype=np.complex128)
    if nz.size == 0:
        return out
    src = sources[nz]
    val = values[nz]
    h3 = h ** 3
    tol = 1e-9 * h
    step = max(1, _CHUNK_BUDGET // max(len(src), 1))
    for lo in range(0, len(targets), step):
        tgt = targets[lo:lo + step]
        d = tgt[:, None, :] - src[None, :, :]
        r = np.sqrt(np.einsum("mnc,mnc->mn", d, d))
        hit = r < tol
        rs = np.where(hit, 1.0, r)
        phi = -np.exp(sign * (-1j) * k * rs) / (4.0 * np.pi * rs)
        if mode == "phi":
            ker = np.where(hit, _self_cell_value(sign * k, h) / h3, phi)
        else:
            ker = -phi * (sign * 1j * k + 1.0 / rs) * d[:, :, grad_axis] / rs
            ker = np.where(hit, 0.0, ker)  # odd part: zero over symmetric cell
        near = (r <= _NEAR_FIELD_CUTOFF * h) & ~hit
        if near.any():
            mi, ni = np.nonzero(near)
            ker[mi, ni] = _near_field_values(d[mi, ni], h, k, mode,
                                             grad_axis, sign)
        out[lo:lo + step] = h3 * (ker @ val)
    return out


def _lattice_table(shape_t, shape_s, doff, h, k, mode, grad_axis, sign):
    """Kernel values on the target-minus-source difference lattice.

    Entry ``j`` along each axis corresponds to the index difference
    ``j - (n_s - 1)``, so a plain convolution of the source array with this
    table reproduces the direct sum of :func:`_sum_kernel`.
    """
    axes = [np.arange(-(ns - 1), nt) * h + off
            for nt, ns, off in zip(shape_t, shape_s, doff)]
    dx, dy, dz = np.meshgrid(*axes, indexing="ij", sparse=True)
    r = np.sqrt(dx * dx + dy * dy + dz * dz)
    tol = 1e-9 * h
    hit = r < tol
    rs = np.where(hit, 1.0, r)
    phi = -np.exp(sign * (-1j) * k * rs) / (4.0 * np.pi * rs)
    if mode == "phi":
        ker = np.where(hit, _self_cell_value(sign * k, h) / h ** 3, phi)
    else:
        d = (dx, dy, dz)[grad_axis]
        ker = np.where(hit, 0.0, -phi * (sign * 1j * k + 1.0 / rs) * d / rs)
    near = np.broadcast_to((r <= _NEAR_FIELD_CUTOFF * h) & ~hit, ker.shape)
    if near.any():
        ii, jj, ll = np.nonzero(near)
        dvec = np.stack([axes[0][ii], axes[1][jj], axes[2][ll]], axis=1)
        ker[ii, jj, ll] = _near_field_values(dvec, h, k, mode,
                                             grad_axis, sign)
    return ker


def _sum_kernel_lattice(
    vals3d: np.ndarray,
    shape_t,
    doff,
    h: float,
    k: complex,
    mode: str,
    grad_axis: int = -1,
    sign: float = 1.0,
) -> np.ndarray:
    """FFT evaluation of the kernel sum on a full target lattice.

    ``vals3d`` is one source component as a 3-D array; ``doff`` is the
    offset of the target lattice origin minus the source lattice origin.
    Returns the flattened (C-order) values at all ``shape_t`` targets.
    """
    from scipy.signal import fftconvolve

    shape_s = vals3d.shape
    table = _lattice_table(shape_t, shape_s, doff, h, k, mode, grad_axis, sign)
    full = fftconvolve(vals3d, table)
    sl = tuple(slice(ns - 1, ns - 1 + nt) for ns, nt in zip(shape_s, shape_t))
    return (h ** 3) * full[sl].ravel()


def _component_sources(F: StaggeredField):
    offs = F.grid.component_offsets(F.kind)
    pos = F.grid.positions(F.kind)
    for axis in range(len(F.grid.shapes(F.kind))):
        sl = slice(offs[axis], offs[axis + 1])
        yield pos[sl], F.values[sl]


def convolve_scalar(
    kernel: HelmholtzKernel,
    F: StaggeredField,
    targets: np.ndarray,
    component: int | None = None,
    sign: float = 1.0,
) -> np.ndarray:
    """Componentwise scalar convolution ``phi * F_l`` at the targets.

    Returns (M, n_components), or (M,) when ``component`` is given.  ``sign``
    -1 selects the conjugate (incoming) kernel for real frequencies.
    """
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    h = F.grid.spacing
    cols = []
    for axis, (src, val) in enumerate(_component_sources(F)):
        if component is not None and axis != component:
            continue
        cols.append(_sum_kernel(src, val, targets, h, kernel.k, "phi", sign=sign))
    out = np.stack(cols, axis=-1)
    return out[..., 0] if component is not None else out


def convolve_grad(
    kernel: HelmholtzKernel,
    s: StaggeredField,
    targets: np.ndarray,
    component: int | None = None,
    sign: float = 1.0,
) -> np.ndarray:
    """Gradient-kernel convolution ``s * grad(phi)`` at the targets.

    ``s`` is a scalar (NODE or CELL) field; returns (M, 3), or (M,) for a
    single gradient ``component``.
    """
    if s.kind not in (Kind.NODE, Kind.CELL):
        raise ShapeError("gradient-kernel convolution needs a scalar field")
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    src = s.grid.positions(s.kind)
    h = s.grid.spacing
    axes = range(3) if component is None else [component]
    cols = [
        _sum_kernel(src, s.values, targets, h, kernel.k, "grad", grad_axis=ax, sign=sign)
        for ax in axes
    ]
    out = np.stack(cols, axis=-1)
    return out[..., 0] if component is not None else out


def cross_convolve(
    kernel: HelmholtzKernel,
    F: StaggeredField,
    targets: np.ndarray,
    component: int | None = None,
    sign: float = 1.0,
) -> np.ndarray:
    """Cross-product convolution with the kernel gradient.

    Component ``l`` is ``F_{l+1} * d_{l+2} phi - F_{l+2} * d_{l+1} phi``
    (indices mod 3); for smooth compactly supported F this equals
    ``-phi * rot F``.  Returns (M, 3), or (M,) for one ``component``.
    """
    if F.kind not in (Kind.EDGE, Kind.FACE):
        raise ShapeError("cross convolution needs a vector field")
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    h = F.grid.spacing
    comps = list(_component_sources(F))
    axes = range(3) if component is None else [component]
    cols = []
    for l in axes:
        a, b = (l + 1) % 3, (l + 2) % 3
        sa, va = comps[a]
        sb, vb = comps[b]
        cols.append(
            _sum_kernel(sa, va, targets, h, kernel.k, "grad", grad_axis=b, sign=sign)
            - _sum_kernel(sb, vb, targets, h, kernel.k, "grad", grad_axis=a, sign=sign)
        )
    out = np.stack(cols, axis=-1)
    return out[..., 0] if component is not None else out
