"""Whole-space radiating solutions from the Green's-kernel representation.

For homogeneous isotropic space the electric and magnetic fields of the
first-order system ``rot E + i*omega*mu0*H = G``, ``-rot H + i*omega*eps0*E
= -F`` with outgoing behavior are

``E = cross(G) - i*omega*mu0 * phi * F - (i/(omega*eps0)) * div F * grad(phi)``
``H = -cross(F) - i*omega*eps0 * phi * G - (i/(omega*mu0)) * div G * grad(phi)``

where ``cross`` is the cross-product convolution of :mod:`maxlow.greens`,
``div F`` lives on nodes (edge fields) and ``div G`` on cells (face fields).
The ``omega -> 0`` termwise limits give the static solutions, with the scaled
divergences ``-i/omega * div`` replaced by their prescribed limits.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConstraintError, MaxlowError, ShapeError
from .greens import (
    HelmholtzKernel,
    _sum_kernel_lattice,
    convolve_grad,
    convolve_scalar,
    cross_convolve,
)
from .grid import (
    GridDomain,
    Kind,
    StaggeredField,
    discrete_curl,
    discrete_curl_dual,
    discrete_div,
    discrete_div_dual,
    discrete_grad,
    discrete_grad_dual,
    field_norm,
    rho,
)

__all__ = [
    "IsotropicBlockConstants",
    "WholeSpaceSolution",
    "helmholtz_rhs",
    "solve_whole_space",
    "solve_on_grid",
    "static_limit_solution",
    "static_limit_on_grid",
    "radiation_defect",
    "radiation_sweep",
    "limiting_absorption_sweep",
    "apriori_ratio",
    "box_points",
    "points_norm",
    "sphere_points",
    "vector_laplacian",
    "maxwell_residual",
    "interior_mask",
]


@dataclass(frozen=True)
class IsotropicBlockConstants:
    """Background constants and the algebraic blocks built from them."""

    eps0: float = 1.0
    mu0: float = 1.0

    def __post_init__(self) -> None:
        if self.eps0 <= 0 or self.mu0 <= 0:
            raise ValueError("background coefficients must be positive")

    @property
    def wave_speed_factor(self) -> float:
        return float(np.sqrt(self.eps0 * self.mu0))

    def xi_block(self, xi: np.ndarray, E: np.ndarray, H: np.ndarray):
        """Apply ``Xi(xi) = [[0, -xi x], [xi x, 0]]`` to the pair (E, H)."""
        return -np.cross(xi, H), np.cross(xi, E)


@dataclass
class WholeSpaceSolution:
    """Sampled radiating solution at a set of target points."""

    omega: complex
    targets: np.ndarray
    E: np.ndarray
    H: np.ndarray
    meta: dict = field(default_factory=dict)


def _require_omega(kernel: HelmholtzKernel) -> complex:
    if kernel.omega == 0:
        raise MaxlowError(
            "zero frequency: use static_limit_solution for the omega -> 0 limit"
        )
    return kernel.omega


def helmholtz_rhs(F: StaggeredField, G: StaggeredField, kernel: HelmholtzKernel):
    """Second-order right-hand side pair (F_hat, G_hat).

    ``(F_hat, G_hat) = (M - i*omega*Lambda~0)(F, G)
    - (i/omega) * Lambda0^{-1} (grad div F, grad div G)``
    with ``Lambda~0 = diag(mu0, eps0)``; whole-space (unmasked) operators.
    """
    omega = _require_omega(kernel)
    if F.kind != Kind.EDGE or G.kind != Kind.FACE:
        raise ShapeError("expected an EDGE source F and a FACE source G")
    e0, m0 = kernel.eps0, kernel.mu0
    F_hat = (
        -1.0 * discrete_curl_dual(G, None)
        - 1j * omega * m0 * F
        - (1j / (omega * e0)) * discrete_grad(discrete_div_dual(F, None), None)
    )
    G_hat = (
        discrete_curl(F, None)
        - 1j * omega * e0 * G
        - (1j / (omega * m0)) * discrete_grad_dual(discrete_div(G, None), None)
    )
    return F_hat, G_hat


def _field_component(
    F: StaggeredField,
    G: StaggeredField,
    kernel: HelmholtzKernel,
    pts: np.ndarray,
    d: int,
    which: str,
    sign: float,
) -> np.ndarray:
    omega = _require_omega(kernel)
    e0, m0 = kernel.eps0, kernel.mu0
    if which == "E":
        divF = discrete_div_dual(F, None)
        return (
            cross_convolve(kernel, G, pts, component=d, sign=sign)
            - 1j * omega * m0 * convolve_scalar(kernel, F, pts, component=d, sign=sign)
            - (1j / (omega * e0)) * convolve_grad(kernel, divF, pts, component=d, sign=sign)
        )
    divG = discrete_div(G, None)
    return (
        -cross_convolve(kernel, F, pts, component=d, sign=sign)
        - 1j * omega * e0 * convolve_scalar(kernel, G, pts, component=d, sign=sign)
        - (1j / (omega * m0)) * convolve_grad(kernel, divG, pts, component=d, sign=sign)
    )


def solve_whole_space(
    F: StaggeredField,
    G: StaggeredField,
    kernel: HelmholtzKernel,
    targets: np.ndarray,
    sign: float = 1.0,
) -> WholeSpaceSolution:
    """Radiating solution sampled as full 3-vectors at arbitrary points.

    ``sign=-1`` uses the conjugate kernel (incoming control, real omega only).
    """
    _require_omega(kernel)
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    E = np.stack(
        [_field_component(F, G, kernel, targets, d, "E", sign) for d in range(3)],
        axis=-1,
    )
    H = np.stack(
        [_field_component(F, G, kernel, targets, d, "H", sign) for d in range(3)],
        axis=-1,
    )
    return WholeSpaceSolution(kernel.omega, targets, E, H,
                              meta={"spacing": F.grid.spacing, "sign": sign})


def _component_array(f: StaggeredField, comp: int):
    """One component of ``f`` as a 3-D array plus its lattice origin."""
    g = f.grid
    offs = g.component_offsets(f.kind)
    shape = g.shapes(f.kind)[comp]
    vals = f.values[offs[comp]:offs[comp + 1]].reshape(shape)
    origin = g.positions_of(f.kind, comp, np.zeros((1, 3)))[0]
    return vals, origin


def _field_component_lattice(
    F: StaggeredField,
    G: StaggeredField,
    kernel: HelmholtzKernel,
    eval_grid: GridDomain,
    d: int,
    which: str,
    sign: float,
) -> np.ndarray:
    """FFT evaluation of one field component on a full staggered lattice."""
    omega = kernel.omega
    e0, m0 = kernel.eps0, kernel.mu0
    h = F.grid.spacing
    k = kernel.k
    kind_t = Kind.EDGE if which == "E" else Kind.FACE
    shape_t = eval_grid.shapes(kind_t)[d]
    origin_t = eval_grid.positions_of(kind_t, d, np.zeros((1, 3)))[0]

    def term(field, comp, mode, grad_axis=-1):
        vals, origin_s = _component_array(field, comp)
        return _sum_kernel_lattice(vals, shape_t, origin_t - origin_s, h, k,
                                   mode, grad_axis, sign)

    a, b = (d + 1) % 3, (d + 2) % 3
    if which == "E":
        divF = discrete_div_dual(F, None)
        return (
            term(G, a, "grad", b) - term(G, b, "grad", a)
            - 1j * omega * m0 * term(F, d, "phi")
            - (1j / (omega * e0)) * term(divF, 0, "grad", d)
        )
    divG = discrete_div(G, None)
    return (
        -(term(F, a, "grad", b) - term(F, b, "grad", a))
        - 1j * omega * e0 * term(G, d, "phi")
        - (1j / (omega * m0)) * term(divG, 0, "grad", d)
    )


def solve_on_grid(
    F: StaggeredField,
    G: StaggeredField,
    kernel: HelmholtzKernel,
    eval_grid: GridDomain,
    sign: float = 1.0,
):
    """Radiating solution sampled on the staggered locations of ``eval_grid``.

    Each component is evaluated only at its own staggered positions, so the
    result is directly comparable with staggered data on that grid.  When the
    evaluation grid shares the source spacing, all points lie on translates
    of one lattice and the convolutions run through the FFT fast path.
    """
    _require_omega(kernel)
    lattice = abs(eval_grid.spacing - F.grid.spacing) <= 1e-12 * F.grid.spacing
    e_chunks, h_chunks = [], []
    for d in range(3):
        if lattice:
            e_chunks.append(
                _field_component_lattice(F, G, kernel, eval_grid, d, "E", sign))
            h_chunks.append(
                _field_component_lattice(F, G, kernel, eval_grid, d, "H", sign))
            continue
        idx = np.stack([g.ravel() for g in np.indices(eval_grid.shapes(Kind.EDGE)[d], dtype=float)], axis=1)
        pts = eval_grid.positions_of(Kind.EDGE, d, idx)
        e_chunks.append(_field_component(F, G, kernel, pts, d, "E", sign))
        idx = np.stack([g.ravel() for g in np.indices(eval_grid.shapes(Kind.FACE)[d], dtype=float)], axis=1)
        pts = eval_grid.positions_of(Kind.FACE, d, idx)
        h_chunks.append(_field_component(F, G, kernel, pts, d, "H", sign))
    E = StaggeredField(eval_grid, Kind.EDGE, np.concatenate(e_chunks))
    H = StaggeredField(eval_grid, Kind.FACE, np.concatenate(h_chunks))
    return E, H


def _check_solenoidal(G: StaggeredField, tol: float = 1e-10) -> None:
    nrm = field_norm(G)
    if nrm == 0:
        return
    div_nrm = field_norm(discrete_div(G, None))
    if div_nrm > tol * nrm / G.grid.spacing:
        raise ConstraintError(
            f"face source is not discretely solenoidal (|div|={div_nrm:.3e})"
        )


def static_limit_solution(
    G: StaggeredField,
    f: StaggeredField | None,
    constants: IsotropicBlockConstants,
    targets: np.ndarray,
    magnetic: bool = False,
) -> np.ndarray:
    """Termwise ``omega -> 0`` limit field at arbitrary points.

    Electric variant: ``E0 = cross(G) + (1/eps0) f * grad(phi0)`` solving
    ``rot E0 = G``, ``div eps0 E0 = f`` with ``f`` the limit of the scaled
    divergence ``-i/omega * div F`` (a NODE scalar).  The magnetic variant
    swaps roles: pass the EDGE source as ``G`` with ``magnetic=True`` and a
    CELL scalar ``f``; it returns ``H0 = -cross(F) + (1/mu0) g * grad(phi0)``.
    """
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    kernel0 = HelmholtzKernel(0.0, constants.eps0, constants.mu0)
    if magnetic:
        out = -cross_convolve(kernel0, G, targets)
        bg = constants.mu0
    else:
        _check_solenoidal(G)
        out = cross_convolve(kernel0, G, targets)
        bg = constants.eps0
    if f is not None and np.any(f.values):
        out = out + convolve_grad(kernel0, f, targets) / bg
    return out


def static_limit_on_grid(
    G: StaggeredField,
    f: StaggeredField | None,
    constants: IsotropicBlockConstants,
    eval_grid: GridDomain,
    magnetic: bool = False,
) -> StaggeredField:
    """Static limit sampled at the staggered EDGE (or FACE) locations."""
    kernel0 = HelmholtzKernel(0.0, constants.eps0, constants.mu0)
    kind = Kind.FACE if magnetic else Kind.EDGE
    if not magnetic:
        _check_solenoidal(G)
    chunks = []
    sgn = -1.0 if magnetic else 1.0
    bg = constants.mu0 if magnetic else constants.eps0
    for d in range(3):
        idx = np.stack([g.ravel() for g in np.indices(eval_grid.shapes(kind)[d], dtype=float)], axis=1)
        pts = eval_grid.positions_of(kind, d, idx)
        vals = sgn * cross_convolve(kernel0, G, pts, component=d)
        if f is not None and np.any(f.values):
            vals = vals + convolve_grad(kernel0, f, pts, component=d) / bg
        chunks.append(vals)
    return StaggeredField(eval_grid, kind, np.concatenate(chunks))


# ----------------------------------------------------------- diagnostics


def box_points(center, side: float, n: int):
    """Midpoint sampling of a cube: returns (points (n^3, 3), cell volume)."""
    center = np.asarray(center, dtype=float)
    h = side / n
    coords = [center[d] - side / 2 + h * (np.arange(n) + 0.5) for d in range(3)]
    X, Y, Z = np.meshgrid(*coords, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)
    return pts, h ** 3


def points_norm(values: np.ndarray, pts: np.ndarray, t: float, cell_vol: float) -> float:
    """Weighted norm ``(sum rho^{2t} |v|^2 vol)^(1/2)`` over a point cloud."""
    v2 = np.sum(np.abs(values) ** 2, axis=-1) if values.ndim > 1 else np.abs(values) ** 2
    return float(np.sqrt(np.sum(rho(pts) ** (2.0 * t) * v2 * cell_vol)))


def sphere_points(radius: float, n: int) -> np.ndarray:
    """Deterministic Fibonacci sampling of the sphere of given radius."""
    i = np.arange(n) + 0.5
    phi = np.arccos(1.0 - 2.0 * i / n)
    theta = np.pi * (1.0 + np.sqrt(5.0)) * i
    return radius * np.stack(
        [np.sin(phi) * np.cos(theta), np.sin(phi) * np.sin(theta), np.cos(phi)],
        axis=1,
    )


def radiation_defect(
    E: np.ndarray,
    H: np.ndarray,
    points: np.ndarray,
    constants: IsotropicBlockConstants,
) -> float:
    """Scaled Silver-Mueller defect on one sphere of samples.

    Computes ``r * rms`` of the outgoing-wave combination
    ``(eps0*E + c xi x H, mu0*H - c xi x E)`` with ``c = sqrt(eps0*mu0)``;
    this pair is ``o(1/r)`` exactly for outgoing fields, so the returned
    quantity decays with a positive rate for outgoing solutions and levels
    off for incoming ones.
    """
    points = np.atleast_2d(points)
    r = np.linalg.norm(points, axis=1)
    xi = points / r[:, None]
    c = constants.wave_speed_factor
    d1 = constants.eps0 * E + c * np.cross(xi, H)
    d2 = constants.mu0 * H - c * np.cross(xi, E)
    mag2 = np.sum(np.abs(d1) ** 2 + np.abs(d2) ** 2, axis=1)
    return float(np.mean(r) * np.sqrt(np.mean(mag2)))


def fit_loglog_slope(x: np.ndarray, y: np.ndarray) -> float:
    """Least-squares slope of log(y) against log(x)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = y > 0
    if keep.sum() < 2:
        return float("nan")
    A = np.stack([np.log(x[keep]), np.ones(keep.sum())], axis=1)
    slope, _ = np.linalg.lstsq(A, np.log(y[keep]), rcond=None)[0]
    return float(slope)


def radiation_sweep(
    F: StaggeredField,
    G: StaggeredField,
    kernel: HelmholtzKernel,
    radii,
    n_dirs: int = 200,
    sign: float = 1.0,
):
    """Per-radius scaled defect of the computed solution plus decay exponent."""
    constants = IsotropicBlockConstants(kernel.eps0, kernel.mu0)
    radii = list(radii)
    defects = []
    for r in radii:
        pts = sphere_points(r, n_dirs)
        sol = solve_whole_space(F, G, kernel, pts, sign=sign)
        defects.append(radiation_defect(sol.E, sol.H, pts, constants))
    exponent = -fit_loglog_slope(np.array(radii), np.array(defects))
    return np.array(radii), np.array(defects), exponent


def limiting_absorption_sweep(
    F: StaggeredField,
    G: StaggeredField,
    omega_real: float,
    deltas,
    targets: np.ndarray,
    cell_vol: float,
    t: float = -1.0,
    eps0: float = 1.0,
    mu0: float = 1.0,
):
    """Difference norms between ``omega + i*delta`` and real-``omega`` solutions.

    Returns rows ``(delta, diff_norm)`` ordered as given (descending deltas
    expected) plus the fitted log-log slope.
    """
    if omega_real == 0:
        raise MaxlowError("limiting absorption sweep needs a nonzero real frequency")
    base = solve_whole_space(F, G, HelmholtzKernel(omega_real, eps0, mu0), targets)
    rows = []
    for d in deltas:
        if d == 0:
            rows.append((0.0, 0.0))
            continue
        sol = solve_whole_space(F, G, HelmholtzKernel(omega_real + 1j * d, eps0, mu0), targets)
        diff = np.concatenate([sol.E - base.E, sol.H - base.H], axis=0)
        pts2 = np.concatenate([targets, targets], axis=0)
        rows.append((float(d), points_norm(diff, pts2, t, cell_vol)))
    ds = [r[0] for r in rows if r[0] > 0]
    ns = [r[1] for r in rows if r[0] > 0]
    slope = fit_loglog_slope(np.array(ds), np.array(ns))
    return rows, slope


def apriori_ratio(
    F: StaggeredField,
    G: StaggeredField,
    omega: float,
    eval_grid: GridDomain,
    t: float = -1.0,
    s: float = 1.0,
    eps0: float = 1.0,
    mu0: float = 1.0,
    sign: float = 1.0,
) -> float:
    """Solution-to-data ratio of the frequency-uniform a-priori estimate.

    Numerator: the weighted graph norm of the sampled solution (fields plus
    their discrete rotations) at exponent ``t``.  Denominator: the weighted
    data norm at exponent ``s`` plus the ``1/|omega|``-scaled divergence
    norms.  A bounded band of this ratio across omega is the observable form
    of the uniform estimate.
    """
    kernel = HelmholtzKernel(omega, eps0, mu0)
    E, H = solve_on_grid(F, G, kernel, eval_grid, sign=sign)
    num = np.sqrt(
        field_norm(E, t) ** 2
        + field_norm(H, t) ** 2
        + field_norm(discrete_curl(E, None), t) ** 2
        + field_norm(discrete_curl_dual(H, None), t) ** 2
    )
    divF = discrete_div_dual(F, None)
    divG = discrete_div(G, None)
    den = (
        np.sqrt(field_norm(F, s) ** 2 + field_norm(G, s) ** 2)
        + (field_norm(divF, s) + field_norm(divG, s)) / abs(omega)
    )
    return float(num / den)


# ----------------------------------------------------- residual diagnostics


def interior_mask(grid: GridDomain, kind: Kind, layers: int) -> np.ndarray:
    """Flat mask of DOFs at least ``layers`` cells away from the box boundary."""
    lo = grid.lower_corner + layers * grid.spacing
    hi = grid.lower_corner + (np.array(grid.cell_counts) - layers) * grid.spacing
    pts = grid.positions(kind)
    eps = 1e-9 * grid.spacing
    return np.all((pts >= lo - eps) & (pts <= hi + eps), axis=1)


def maxwell_residual(
    E: StaggeredField,
    H: StaggeredField,
    F: StaggeredField,
    G: StaggeredField,
    kernel: HelmholtzKernel,
    layers: int = 2,
):
    """Relative interior residual of the first-order system.

    Checks ``-rot H + i*omega*eps0*E - F`` on edges and ``rot E +
    i*omega*mu0*H - G`` on faces, restricted to DOFs ``layers`` cells away
    from the evaluation-box boundary.
    """
    omega = kernel.omega
    r1 = (-1.0) * discrete_curl_dual(H, None) + 1j * omega * kernel.eps0 * E - F
    r2 = discrete_curl(E, None) + 1j * omega * kernel.mu0 * H - G
    m1 = interior_mask(E.grid, Kind.EDGE, layers)
    m2 = interior_mask(E.grid, Kind.FACE, layers)
    num = np.sqrt(
        np.sum(np.abs(r1.values[m1]) ** 2) + np.sum(np.abs(r2.values[m2]) ** 2)
    )
    den = np.sqrt(
        np.sum(np.abs(F.values[m1]) ** 2) + np.sum(np.abs(G.values[m2]) ** 2)
    )
    return float(num / den) if den > 0 else float(num)


def vector_laplacian(E: StaggeredField) -> StaggeredField:
    """Unmasked mimetic vector Laplacian ``grad div - rot rot`` on edges."""
    return discrete_grad(discrete_div_dual(E, None), None) - discrete_curl_dual(
        discrete_curl(E, None), None
    )
