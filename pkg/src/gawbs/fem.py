"""Plane-strain eigenfrequency analysis on linear triangles.

The generalized problem ``K u = omega^2 M u`` is solved with free boundaries
(no constraints), so three rigid-body modes sit at ``omega = 0``.  Eigenpairs
below ``f_max`` are found by spectrum slicing: the range ``[0, omega_max^2]``
is cut into windows using Sylvester inertia counts of ``K - sigma M``, and
each window is solved by shift-invert Lanczos (ARPACK) at its center.  The
final inertia count guarantees that no eigenvalue in range was missed.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Union

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, eigsh, splu

from .cylinder import thermal_amplitude_sq
from .errors import NumericalError, ValidationError
from .geometry import Material
from .mesh import TriMesh

log = logging.getLogger(__name__)

RIGID_CUT_HZ = 1e3
SLICE_SIZE = 60
MAX_SHIFT_RETRIES = 5
INTERIOR = "interior"
TORSIONAL = "torsional"


@dataclass(frozen=True, eq=False)
class FemOperatorPair:
    """Assembled stiffness and consistent mass matrices.

    DOFs are interleaved: node ``i`` owns ``(2 i, 2 i + 1)`` for ``(ux, uy)``.
    """

    stiffness: sp.csr_matrix
    mass: sp.csr_matrix
    mesh: TriMesh
    material: Material
    areas: np.ndarray
    grads: np.ndarray  # (T, 3, 2) shape-function gradients

    @property
    def n_dof(self) -> int:
        return self.stiffness.shape[0]

    def dof_map(self, node: int):
        return 2 * node, 2 * node + 1

    def constitutive(self):
        lam, mu = self.material.lame_lambda, self.material.lame_mu
        return np.array([[lam + 2 * mu, lam, 0.0], [lam, lam + 2 * mu, 0.0], [0.0, 0.0, mu]])

    def strain(self, u):
        """Per-triangle tensor strain ``(S_xx, S_yy, S_xy)`` from nodal ``u`` of shape (N, 2)."""
        ue = u[self.mesh.triangles]  # (T, 3, 2)
        g = self.grads
        sxx = np.einsum("ti,ti->t", g[:, :, 0], ue[:, :, 0])
        syy = np.einsum("ti,ti->t", g[:, :, 1], ue[:, :, 1])
        sxy = 0.5 * (np.einsum("ti,ti->t", g[:, :, 1], ue[:, :, 0])
                     + np.einsum("ti,ti->t", g[:, :, 0], ue[:, :, 1]))
        return np.stack([sxx, syy, sxy], axis=1)

    def energy_density(self, strain):
        """Strain energy density ``1/2 eps . D eps`` per triangle."""
        lam, mu = self.material.lame_lambda, self.material.lame_mu
        sxx, syy, sxy = strain.T
        return 0.5 * (lam * (sxx + syy) ** 2 + 2 * mu * (sxx**2 + syy**2 + 2 * sxy**2))


def rigid_body_vectors(mesh: TriMesh):
    """Two translations and the in-plane rotation, as DOF vectors."""
    x, y = mesh.nodes[:, 0], mesh.nodes[:, 1]
    n = len(x)
    tx = np.zeros((n, 2))
    tx[:, 0] = 1.0
    ty = np.zeros((n, 2))
    ty[:, 1] = 1.0
    rot = np.stack([-y, x], axis=1)
    return [v.ravel() for v in (tx, ty, rot)]


def element_stiffness(xy, material: Material):
    """6x6 plane-strain stiffness of one linear triangle with vertices ``xy`` (3, 2)."""
    ops = _element_data(np.asarray(xy, dtype=float)[None])
    area, grads = ops
    return _stiffness_blocks(area, grads, material)[0]


def _element_data(p):
    x, y = p[:, :, 0], p[:, :, 1]
    b = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
    c = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
    area = 0.5 * (b[:, 0] * c[:, 1] - b[:, 1] * c[:, 0])
    with np.errstate(divide="ignore", invalid="ignore"):  # degenerate triangles are rejected by callers
        grads = np.stack([b, c], axis=2) / (2.0 * area[:, None, None])
    return area, grads


def _stiffness_blocks(area, grads, material):
    T = len(area)
    B = np.zeros((T, 3, 6))
    B[:, 0, 0::2] = grads[:, :, 0]
    B[:, 1, 1::2] = grads[:, :, 1]
    B[:, 2, 0::2] = grads[:, :, 1]
    B[:, 2, 1::2] = grads[:, :, 0]
    lam, mu = material.lame_lambda, material.lame_mu
    D = np.array([[lam + 2 * mu, lam, 0.0], [lam, lam + 2 * mu, 0.0], [0.0, 0.0, mu]])
    return area[:, None, None] * np.einsum("tki,kl,tlj->tij", B, D, B)


def assemble(mesh: TriMesh, material: Material) -> FemOperatorPair:
    """Assemble K and the consistent M; no boundary conditions are applied."""
    p = mesh.nodes[mesh.triangles]
    area, grads = _element_data(p)
    bad = np.flatnonzero(np.abs(area) < 1e-20)
    if bad.size:
        raise ValidationError(f"degenerate triangle {bad[0]} (area {area[bad[0]]:.3g} m^2)", "mesh")
    if np.any(area < 0):
        raise ValidationError(f"clockwise triangle {np.flatnonzero(area < 0)[0]}", "mesh")
    ke = _stiffness_blocks(area, grads, material)
    m3 = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0
    me = np.zeros((len(area), 6, 6))
    blk = material.density * area[:, None, None] * m3
    me[:, 0::2, 0::2] = blk
    me[:, 1::2, 1::2] = blk
    dofs = np.empty((len(area), 6), dtype=np.int64)
    dofs[:, 0::2] = 2 * mesh.triangles
    dofs[:, 1::2] = 2 * mesh.triangles + 1
    rows = np.repeat(dofs, 6, axis=1).ravel()
    cols = np.tile(dofs, (1, 6)).ravel()
    n = 2 * mesh.n_nodes
    K = sp.csr_matrix((ke.ravel(), (rows, cols)), shape=(n, n))
    M = sp.csr_matrix((me.ravel(), (rows, cols)), shape=(n, n))
    # exact symmetry regardless of summation order
    K = (0.5 * (K + K.T)).tocsr()
    M = (0.5 * (M + M.T)).tocsr()
    return FemOperatorPair(K, M, mesh, material, area, grads)


# -- eigen-solver ----------------------------------------------------------


class _ShiftedFactor:
    """Symmetric-pivoting LU of ``K - sigma M``; doubles as an LDL^T for inertia."""

    def __init__(self, K, M, sigma):
        A = (K - sigma * M).tocsc()
        self.sigma = sigma
        self.lu = splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                       options={"SymmetricMode": True})
        if not np.array_equal(self.lu.perm_r, self.lu.perm_c):
            raise np.linalg.LinAlgError("row pivoting occurred; inertia unavailable")
        d = self.lu.U.diagonal()
        if np.any(d == 0) or not np.all(np.isfinite(d)):
            raise np.linalg.LinAlgError("zero pivot")
        self.n_negative = int(np.count_nonzero(d < 0))

    def solve(self, b):
        return self.lu.solve(np.asarray(b, dtype=float))


def _factor(K, M, sigma, scale):
    last = None
    for attempt in range(MAX_SHIFT_RETRIES + 1):
        s = sigma + attempt * 1e-7 * scale * (1 if attempt % 2 else -1) * (attempt + 1)
        try:
            return _ShiftedFactor(K, M, s)
        except (np.linalg.LinAlgError, RuntimeError) as exc:
            last = exc
            log.debug("factorization at shift %g failed (%s); perturbing", s, exc)
    raise NumericalError(f"factorization of K - sigma M failed after {MAX_SHIFT_RETRIES} retries: {last}")


def inertia_count(ops: FemOperatorPair, f: float) -> int:
    """Number of eigenvalues with ``omega < 2 pi f`` (rigid modes included)."""
    lam = (2 * math.pi * f) ** 2
    return _factor(ops.stiffness, ops.mass, lam, lam).n_negative


@dataclass
class EigenResult:
    eigenvalues: np.ndarray  # omega^2, ascending
    vectors: np.ndarray  # (n_dof, k), M-orthonormal columns
    inertia: int  # eigenvalue count below the upper shift
    upper_shift: float
    slices: int = 0


def _start_vector(n):
    return np.random.default_rng(20061016).standard_normal(n)


def _solve_window(K, M, fac, a, b, count):
    n = K.shape[0]
    op = LinearOperator((n, n), matvec=fac.solve, dtype=float)
    for extra in (4, 16, 48):
        k = min(count + extra, n - 2)
        vals, vecs = eigsh(K, k=k, M=M, sigma=fac.sigma, which="LM", OPinv=op,
                           v0=_start_vector(n), tol=0.0, ncv=min(n, max(2 * k + 1, 20)))
        sel = (vals >= a) & (vals < b)
        if np.count_nonzero(sel) == count:
            return vals[sel], vecs[:, sel]
        if k >= n - 2:
            break
    raise NumericalError(f"window [{a:.6g}, {b:.6g}) expected {count} eigenvalues, "
                         f"found {int(np.count_nonzero(sel))}")


def _rayleigh_ritz_clusters(K, M, vals, vecs, rel=1e-6):
    """Re-orthonormalize near-degenerate clusters (possibly split across windows)."""
    if len(vals) < 2:
        return vals, vecs
    scale = max(abs(vals[-1]), 1.0)
    groups, cur = [], [0]
    for i in range(1, len(vals)):
        if vals[i] - vals[i - 1] <= rel * max(abs(vals[i]), 1e-3 * scale):
            cur.append(i)
        else:
            groups.append(cur)
            cur = [i]
    groups.append(cur)
    for g in groups:
        if len(g) < 2:
            continue
        V = vecs[:, g]
        H = V.T @ (K @ V)
        G = V.T @ (M @ V)
        w, C = scipy.linalg.eigh(0.5 * (H + H.T), 0.5 * (G + G.T))
        vals[g] = w
        vecs[:, g] = V @ C
    return vals, vecs


def solve_eigen(ops: FemOperatorPair, f_max: float, slice_size: int = SLICE_SIZE) -> EigenResult:
    """All eigenpairs with ``omega <= 2 pi f_max``, rigid modes included."""
    if not f_max > 0:
        raise ValidationError("must be > 0", "f_max")
    K, M = ops.stiffness, ops.mass
    lam_max = (2 * math.pi * f_max) ** 2
    lo = -0.01 * lam_max
    f_lo = _factor(K, M, lo, lam_max)
    f_hi = _factor(K, M, lam_max, lam_max)
    lam_max = f_hi.sigma
    if f_lo.n_negative != 0:
        raise NumericalError("stiffness matrix is not positive semi-definite")
    total = f_hi.n_negative
    if total > ops.n_dof - 2:
        raise NumericalError("more eigenvalues requested than the mesh can resolve")

    # split [lo, lam_max) until each window holds at most slice_size eigenvalues
    windows = []
    stack = [(lo, lam_max, 0, total, f_lo)]
    while stack:
        a, b, ca, cb, fa = stack.pop()
        if cb - ca == 0:
            continue
        if cb - ca <= slice_size or (b - a) < 1e-9 * lam_max:
            windows.append((a, b, cb - ca))
            continue
        mid = 0.5 * (a + b)
        fm = _factor(K, M, mid, lam_max)
        mid = fm.sigma
        stack.append((mid, b, fm.n_negative, cb, fm))
        stack.append((a, mid, ca, fm.n_negative, fa))
    windows.sort()

    all_vals, all_vecs = [], []
    for a, b, count in windows:
        fac = _factor(K, M, 0.5 * (a + b), lam_max)
        vals, vecs = _solve_window(K, M, fac, a, b, count)
        all_vals.append(vals)
        all_vecs.append(vecs)
    if all_vals:
        vals = np.concatenate(all_vals)
        vecs = np.concatenate(all_vecs, axis=1)
    else:
        vals, vecs = np.empty(0), np.empty((ops.n_dof, 0))
    order = np.argsort(vals, kind="stable")
    vals, vecs = vals[order], vecs[:, order]
    vals, vecs = _rayleigh_ritz_clusters(K, M, vals, vecs)
    if len(vals) != total:
        raise NumericalError(f"inertia count {total} but {len(vals)} eigenvalues found")
    # fix the sign of each eigenvector for reproducible output
    for j in range(vecs.shape[1]):
        i = int(np.argmax(np.abs(vecs[:, j])))
        if vecs[i, j] < 0:
            vecs[:, j] = -vecs[:, j]
    return EigenResult(vals, vecs, total, lam_max, len(windows))


def solve_lowest(ops: FemOperatorPair, count: int) -> EigenResult:
    """The ``count`` lowest eigenpairs (rigid modes included)."""
    n = ops.n_dof
    if count > n - 2:
        warnings.warn(f"requested {count} eigenpairs but only {n - 2} available; truncating", stacklevel=2)
        count = n - 2
    K, M = ops.stiffness, ops.mass
    diag = K.diagonal() / M.diagonal()
    sigma = -1e-3 * float(np.median(diag))
    fac = _factor(K, M, sigma, abs(sigma))
    op = LinearOperator((n, n), matvec=fac.solve, dtype=float)
    vals, vecs = eigsh(K, k=count, M=M, sigma=fac.sigma, which="LM", OPinv=op,
                       v0=_start_vector(n), tol=0.0)
    order = np.argsort(vals)
    vals, vecs = _rayleigh_ritz_clusters(K, M, vals[order], vecs[:, order])
    return EigenResult(vals, vecs, count, float("nan"))


@dataclass(frozen=True, eq=False)
class FemMode:
    """One elastic eigenmode on a mesh; ``u^T M u = 1``."""

    index: int
    frequency: float
    displacement: np.ndarray  # (N, 2)
    ops: FemOperatorPair = field(repr=False)
    angular_order: Union[int, str, None] = None
    thermal_amplitude_sq: Optional[float] = None

    @property
    def omega(self) -> float:
        return 2 * math.pi * self.frequency

    @cached_property
    def strain(self):
        return self.ops.strain(self.displacement)

    @cached_property
    def energy_density(self):
        return self.ops.energy_density(self.strain)

    @property
    def divergence(self):
        s = self.strain
        return s[:, 0] + s[:, 1]


CLUSTER_GAP = 5e-4


def solve_modes(ops: FemOperatorPair, f_max: Optional[float] = None, n_max: Optional[int] = None,
                rigid_cut: float = RIGID_CUT_HZ, classify: bool = True, temperature: Optional[float] = None,
                fiber_length: Optional[float] = None):
    """Elastic modes with ``rigid_cut < f <= f_max`` sorted by frequency.

    With only ``n_max`` given, the ``n_max`` lowest elastic modes are returned.
    When ``temperature`` and ``fiber_length`` are given the equipartition
    amplitude is filled in (modal mass is 1 by normalization).
    """
    if not ((f_max is not None and f_max > 0) or (n_max is not None and n_max > 0)):
        raise ValidationError("need f_max > 0 or n_max > 0", "f_max")
    if f_max is not None:
        res = solve_eigen(ops, f_max)
    else:
        res = solve_lowest(ops, n_max + 3)
    freqs = np.sqrt(np.maximum(res.eigenvalues, 0.0)) / (2 * math.pi)
    keep = np.flatnonzero(freqs > rigid_cut)
    if f_max is not None:
        keep = keep[freqs[keep] <= f_max]
    if n_max is not None and len(keep) > n_max:
        keep = keep[:n_max]
    modes = []
    for i, j in enumerate(keep):
        u = res.vectors[:, j].reshape(-1, 2)
        c2 = None
        if temperature is not None and fiber_length is not None:
            c2 = thermal_amplitude_sq(2 * math.pi * freqs[j], 1.0, temperature, fiber_length)
        mode = FemMode(i, float(freqs[j]), u, ops, None, c2)
        if classify:
            object.__setattr__(mode, "angular_order", classify_angular_order(mode, ops.mesh))
        modes.append(mode)
    if classify:
        _relabel_clusters(modes, ops.mesh)
    return modes


def _boundary_power(mode, mesh, n_cap):
    nodes, theta = _outer_boundary(mesh)
    ub = mode.displacement[nodes]
    c, s = np.cos(theta), np.sin(theta)
    p = (boundary_fourier_power(ub[:, 0] * c + ub[:, 1] * s, theta, n_cap)
         + boundary_fourier_power(-ub[:, 0] * s + ub[:, 1] * c, theta, n_cap))
    return p / p.sum() if p.sum() > 0 else p


def _relabel_clusters(modes, mesh, rel=CLUSTER_GAP, n_max=32):
    """Joint labels for runs of three or more near-degenerate modes.

    On an unstructured mesh two accidentally degenerate pairs of different
    order hybridize, so per-vector classification can report the same order
    for all of them. The cluster's summed boundary spectrum decides which
    orders are present (a pair for n >= 1), then members are assigned greedily.
    """
    n_cap = min(n_max, max(1, len(_outer_boundary(mesh)[0]) // 4))
    i = 0
    while i < len(modes):
        j = i + 1
        while j < len(modes) and modes[j].frequency - modes[j - 1].frequency <= rel * modes[j].frequency:
            j += 1
        group = [m for m in modes[i:j] if isinstance(m.angular_order, int)]
        if len(group) >= 3:
            P = np.array([_boundary_power(m, mesh, n_cap) for m in group])
            free = list(range(len(group)))
            total = P.sum(axis=0)
            while free:
                n = int(np.argmax(total))
                take = sorted(free, key=lambda k: -P[k, n])[: 1 if n == 0 else 2]
                for k in take:
                    object.__setattr__(group[k], "angular_order", n)
                    free.remove(k)
                total[n] = -np.inf
        i = j


def _outer_boundary(mesh: TriMesh):
    nodes = np.unique(mesh.boundary_edges[mesh.boundary_tags < 0])
    xy = mesh.nodes[nodes]
    theta = np.arctan2(xy[:, 1], xy[:, 0])
    order = np.argsort(theta)
    return nodes[order], theta[order]


def boundary_fourier_power(u_r, theta, n_max):
    """Fourier power of ``u_r(theta)`` for orders 0..n_max (trapezoid on a periodic grid)."""
    t = np.concatenate([theta, theta[:1] + 2 * math.pi])
    f = np.concatenate([u_r, u_r[:1]])
    w = np.zeros_like(t)
    dt = np.diff(t)
    w[:-1] += 0.5 * dt
    w[1:] += 0.5 * dt
    n = np.arange(n_max + 1)[:, None]
    c = (w * f * np.cos(n * t)).sum(axis=1)
    s = (w * f * np.sin(n * t)).sum(axis=1)
    power = c**2 + s**2
    power[1:] *= 0.5  # cos^2 averages to 1/2 for n >= 1
    return power


def classify_angular_order(mode, mesh: TriMesh, n_max: int = 32, interior_tol: float = 1e-3,
                           torsional_tol: float = 0.05):
    """Dominant angular order of the outer-boundary displacement.

    Radial and tangential Fourier power are summed; high-order TR modes move
    the surface mostly tangentially, so ``u_r`` alone is easily swamped by
    discretization crosstalk.

    Returns an int, ``"torsional"`` when the boundary rotates rigidly with
    (almost) no radial motion,
    or ``"interior"`` when the outer boundary is essentially at rest.
    Orders beyond ``n_max`` are not resolved.
    """
    u = mode.displacement if hasattr(mode, "displacement") else np.asarray(mode)
    nodes, theta = _outer_boundary(mesh)
    ub = u[nodes]
    u_r = ub[:, 0] * np.cos(theta) + ub[:, 1] * np.sin(theta)
    u_t = -ub[:, 0] * np.sin(theta) + ub[:, 1] * np.cos(theta)
    peak = np.abs(u).max()
    b_rms = math.sqrt(np.mean(u_r**2 + u_t**2))
    if peak == 0 or b_rms < interior_tol * peak:
        return INTERIOR
    n_cap = min(n_max, max(1, len(theta) // 4))
    if math.sqrt(np.mean(u_r**2)) < torsional_tol * math.sqrt(np.mean(u_t**2)):
        pt = boundary_fourier_power(u_t, theta, n_cap)
        if int(np.argmax(pt)) == 0:
            return TORSIONAL
    power = boundary_fourier_power(u_r, theta, n_cap) + boundary_fourier_power(u_t, theta, n_cap)
    best = power.max()
    return int(np.flatnonzero(power >= best * (1 - 1e-12))[0])


def core_energy_fraction(mode: FemMode, mesh: TriMesh, region_radius: float) -> float:
    """Share of the strain energy in triangles whose centroid is within ``region_radius``.

    ``mode`` may also be a per-triangle energy-density array.
    """
    r = np.hypot(*mesh.centroids().T)
    if not 0 < region_radius < np.hypot(*mesh.nodes.T).max():
        raise ValidationError("region_radius must lie between 0 and the outer radius", "region_radius")
    density = mode.energy_density if hasattr(mode, "energy_density") else np.asarray(mode, dtype=float)
    e = density * np.abs(mesh.signed_areas())
    total = e.sum()
    return float(e[r < region_radius].sum() / total) if total > 0 else 0.0
