"""Stretched polar discretisation of the plane with quadrature and the
weighted norms used throughout the solver.

Radial nodes are uniform in the stretched coordinate t = ln(1 + r), so the
spacing is ~h near the origin and ~r*h far out; this resolves vortex cores
and the slowly decaying far field on one grid.  The discrete Laplacian is a
conservative flux form in (t, theta): flux coefficients are shared between
neighbouring cells, which makes volume * laplacian a symmetric matrix and
keeps the scheme second order, including at the origin node.

Quadrature weights are exact moments of piecewise-quadratic interpolation
against the measure r dr, so polynomials of degree <= 2 in r (times any
resolvable trigonometric factor) integrate exactly.  Summation uses numpy's
pairwise reduction, so results are deterministic for a fixed grid.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import RegularGridInterpolator


@dataclass(frozen=True)
class WeightParams:
    """Weight exponent d of sigma = 1 + |x| appearing in the X and Y norms."""

    d: float = 0.1

    def __post_init__(self):
        if not 0.0 < self.d < 0.25:
            raise ValueError(f"weight exponent d must lie in (0, 1/4), got {self.d}")


def sigma(x) -> np.ndarray | float:
    """1 + |x| for points given as complex numbers or (..., 2) arrays."""
    arr = np.asarray(x)
    if np.iscomplexobj(arr):
        return 1.0 + np.abs(arr)
    if arr.ndim >= 1 and arr.shape[-1] == 2:
        return 1.0 + np.sqrt(arr[..., 0] ** 2 + arr[..., 1] ** 2)
    return 1.0 + np.abs(arr)


def sigma_r(r) -> np.ndarray:
    return 1.0 + np.asarray(r, dtype=float)


# ---------------------------------------------------------------------------
# radial node layout and quadrature
# ---------------------------------------------------------------------------


def _stretched_rings(r_in: float, r_out: float, n_r: int) -> tuple[np.ndarray, np.ndarray, float]:
    """Ring coordinates uniform in t = ln(1+r).

    With r_in == 0 the origin is *not* a ring; rings sit at t = h, 2h, ..., n_r*h.
    Returns (t_rings, r_rings, h).
    """
    t_out = math.log1p(r_out)
    if r_in == 0.0:
        h = t_out / n_r
        t = h * np.arange(1, n_r + 1)
    else:
        t_in = math.log1p(r_in)
        h = (t_out - t_in) / (n_r - 1)
        t = t_in + h * np.arange(n_r)
    return t, np.expm1(t), h


def _triple_weights(x0: float, x1: float, x2: float, lo: float, hi: float) -> np.ndarray:
    """Weights (w0, w1, w2) with sum_k w_k f(x_k) = int_lo^hi L(f)(r) r dr for the
    quadratic interpolant L(f) through (x0, x1, x2); exact for quadratic f."""

    def moment(p, q):
        # int (r - p)(r - q) r dr = r^4/4 - (p+q) r^3/3 + p q r^2/2
        def anti(r):
            return r**4 / 4.0 - (p + q) * r**3 / 3.0 + p * q * r**2 / 2.0

        return anti(hi) - anti(lo)

    w0 = moment(x1, x2) / ((x0 - x1) * (x0 - x2))
    w1 = moment(x0, x2) / ((x1 - x0) * (x1 - x2))
    w2 = moment(x0, x1) / ((x2 - x0) * (x2 - x1))
    return np.array([w0, w1, w2])


def _moment_weights(nodes: np.ndarray) -> np.ndarray:
    """Nodal weights for int f(r) r dr over [nodes[0], nodes[-1]], exact for
    piecewise-quadratic f.  Intervals are consumed in pairs; a trailing odd
    interval reuses the quadratic through the last three nodes."""
    n = len(nodes)
    w = np.zeros(n)
    n_int = n - 1
    k = 0
    while k + 2 <= n_int:
        w[k : k + 3] += _triple_weights(*nodes[k : k + 3], nodes[k], nodes[k + 2])
        k += 2
    if k < n_int:  # one interval left
        w[n - 3 : n] += _triple_weights(*nodes[n - 3 : n], nodes[n - 2], nodes[n - 1])
    return w


#: Blend window for the flux-face convention.  Inside r < 0.25 faces sit at
#: exact r-midpoints (the polar coordinate singularity makes stretched
#: midpoints only first order there); beyond r > 1 they sit at t-midpoints;
#: a smooth ramp in between keeps the truncation error O(h^2) uniformly.
_CORE_BLEND = (0.25, 1.0)


def _ring_faces(t_rings: np.ndarray, r_rings: np.ndarray, h: float):
    """Face radii between consecutive rings and per-radian, per-angle flux
    coefficients: flux = coef * (u_outer - u_inner)."""
    t_mid = 0.5 * (t_rings[:-1] + t_rings[1:])
    r_t = np.expm1(t_mid)
    r_m = 0.5 * (r_rings[:-1] + r_rings[1:])
    lo, hi = np.log1p(_CORE_BLEND[0]), np.log1p(_CORE_BLEND[1])
    u = np.clip((t_mid - lo) / (hi - lo), 0.0, 1.0)
    s = u * u * (3.0 - 2.0 * u)
    faces = (1.0 - s) * r_m + s * r_t
    dr = np.diff(r_rings)
    coef = (1.0 - s) * (r_m / dr) + s * (r_t / (1.0 + r_t)) / h
    return faces, coef


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------


class RadialGrid:
    """1D grid for radially symmetric fields on [0, r_out] (or an annulus).

    Nodes: optional origin node at r = 0 followed by the stretched rings.
    ``weights`` integrate f against 2 pi r dr.
    """

    def __init__(self, r_out: float, n_r: int, r_in: float = 0.0):
        if n_r < 8:
            raise ValueError("radial grid needs at least 8 rings")
        if not 0.0 <= r_in < r_out:
            raise ValueError("need 0 <= r_in < r_out")
        self.r_in = float(r_in)
        self.r_out = float(r_out)
        self.n_r = int(n_r)
        self.has_origin = r_in == 0.0
        t, rr, self.h = _stretched_rings(self.r_in, self.r_out, self.n_r)
        if self.has_origin:
            self.t = np.concatenate(([0.0], t))
            self.r = np.concatenate(([0.0], rr))
        else:
            self.t = t
            self.r = rr
        self.n = len(self.r)
        self.weights = 2.0 * math.pi * _moment_weights(self.r)
        if not np.all(np.diff(self.r) > 0):
            raise ValueError("radial nodes must be strictly increasing")

    # -- geometry used by the flux-form Laplacian

    @cached_property
    def _fv(self):
        """Faces, per-node cell volumes (per radian) and flux coefficients."""
        r = self.r
        i0 = 1 if self.has_origin else 0  # index of first ring
        rings = r[i0:]
        r_face, flux = _ring_faces(self.t[i0:], rings, self.h)
        if self.has_origin:
            f_in = r[1] / 2.0
            inner_flux = f_in / r[1]  # gradient taken in r across [0, r1]
            faces = np.concatenate(([f_in], r_face, [r[-1]]))
        else:
            inner_flux = 0.0
            faces = np.concatenate(([r[i0]], r_face, [r[-1]]))
        return faces, flux, inner_flux

    def laplacian(self) -> tuple[sp.csr_matrix, np.ndarray]:
        """Sparse radial Laplacian and the boolean mask of interior rows.

        Rows exist for the origin (if present) and all rings except the two
        boundary ones (outermost ring always; innermost ring too on annuli).
        """
        n = self.n
        faces, flux, inner_flux = self._fv
        A = sp.lil_matrix((n, n))
        interior = np.zeros(n, dtype=bool)
        i0 = 1 if self.has_origin else 0
        n_rings = n - i0
        # volumes per radian: rings
        for ring in range(n_rings - 1):
            i = i0 + ring
            lo = faces[ring]
            hi = faces[ring + 1]
            vol = (hi**2 - lo**2) / 2.0
            if ring == 0:
                if not self.has_origin:
                    continue  # inner boundary ring on an annulus
                A[i, 0] += inner_flux / vol
                A[i, i] -= inner_flux / vol
            else:
                A[i, i - 1] += flux[ring - 1] / vol
                A[i, i] -= flux[ring - 1] / vol
            A[i, i + 1] += flux[ring] / vol
            A[i, i] -= flux[ring] / vol
            interior[i] = True
        if self.has_origin:
            r1 = self.r[1]
            A[0, 1] += 4.0 / r1**2
            A[0, 0] -= 4.0 / r1**2
            interior[0] = True
        return A.tocsr(), interior

    @cached_property
    def _lap(self):
        return self.laplacian()

    def laplacian_apply(self, values: np.ndarray) -> np.ndarray:
        A, interior = self._lap
        out = A @ values
        out[~interior] = 0.0
        return out

    @property
    def interior(self) -> np.ndarray:
        return self._lap[1]

    def integrate(self, values: np.ndarray) -> float:
        return float(self.weights @ values)

    def interpolator(self, values: np.ndarray, fill_value: float = 0.0):
        """Linear-in-t interpolant; beyond r_out the field is the fill value."""
        t_nodes = self.t

        def ev(r):
            t = np.log1p(np.asarray(r, dtype=float))
            out = np.interp(t, t_nodes, values, left=values[0], right=fill_value)
            return out

        return ev

    @cached_property
    def grid_hash(self) -> str:
        hsh = hashlib.sha256()
        hsh.update(b"radial")
        hsh.update(np.asarray([self.r_in, self.r_out, self.n_r]).tobytes())
        hsh.update(self.r.tobytes())
        return hsh.hexdigest()[:16]


class DiskGrid:
    """Polar tensor grid on a disk (r_in = 0, origin node included) or an
    annulus (r_in > 0).

    Node ordering is ring-major: node(i, j) = i * n_theta + j for ring i and
    angle j, with the origin node appended last when present.
    """

    def __init__(self, r_out: float, n_r: int, n_theta: int, r_in: float = 0.0):
        if n_theta < 8 or n_theta % 2 != 0:
            raise ValueError("angular node count must be even and >= 8")
        if n_r < 8:
            raise ValueError("need at least 8 radial rings")
        if not 0.0 <= r_in < r_out:
            raise ValueError("need 0 <= r_in < r_out")
        self.r_in = float(r_in)
        self.r_out = float(r_out)
        self.n_r = int(n_r)
        self.n_theta = int(n_theta)
        self.has_origin = r_in == 0.0
        self.t_rings, self.r_rings, self.h = _stretched_rings(self.r_in, self.r_out, self.n_r)
        self.h_theta = 2.0 * math.pi / n_theta
        self.theta = self.h_theta * np.arange(n_theta)

        rr, tt = np.meshgrid(self.r_rings, self.theta, indexing="ij")
        r_flat = rr.ravel()
        th_flat = tt.ravel()
        if self.has_origin:
            r_flat = np.concatenate([r_flat, [0.0]])
            th_flat = np.concatenate([th_flat, [0.0]])
            self.origin_index = self.n_r * self.n_theta
        else:
            self.origin_index = None
        self.node_r = r_flat
        self.node_theta = th_flat
        self.node_x = r_flat * np.cos(th_flat)
        self.node_y = r_flat * np.sin(th_flat)
        self.node_z = self.node_x + 1j * self.node_y
        self.n = len(self.node_r)

        # quadrature: radial moment weights (with r = 0 in the node set when
        # the origin is included) spread uniformly over the angles
        if self.has_origin:
            radial_nodes = np.concatenate(([0.0], self.r_rings))
            w_radial = _moment_weights(radial_nodes)
            w = np.empty(self.n)
            w[: self.n_r * self.n_theta] = np.repeat(w_radial[1:], n_theta) * self.h_theta
            w[self.origin_index] = w_radial[0] * 2.0 * math.pi
        else:
            w_radial = _moment_weights(self.r_rings)
            w = np.repeat(w_radial, n_theta) * self.h_theta
        self.weights = w
        #: weights clipped at zero; used for norms so squared sums stay monotone
        self.weights_pos = np.clip(w, 0.0, None)

    def index(self, i: int, j: int) -> int:
        return i * self.n_theta + (j % self.n_theta)

    def ring_values(self, values: np.ndarray, i: int) -> np.ndarray:
        return values[i * self.n_theta : (i + 1) * self.n_theta]

    def integrate(self, values: np.ndarray) -> float:
        return float(self.weights @ values)

    # -- conservative Laplacian -------------------------------------------

    @cached_property
    def _fv(self):
        r_face, coef = _ring_faces(self.t_rings, self.r_rings, self.h)
        flux_r = coef * self.h_theta
        if self.has_origin:
            f_in = self.r_rings[0] / 2.0
            inner_flux = f_in * self.h_theta / self.r_rings[0]
        else:
            f_in = self.r_rings[0]
            inner_flux = 0.0
        faces = np.concatenate(([f_in], r_face, [self.r_rings[-1]]))
        vol = self.h_theta * (faces[1:] ** 2 - faces[:-1] ** 2) / 2.0  # per ring cell
        # angular flux coefficient per ring; the midpoint form (cell width
        # over ring radius) is exact for the linear harmonics near the origin
        # where the tangential derivative grows like r
        ang = (faces[1:] - faces[:-1]) / (self.r_rings * self.h_theta)
        return faces, flux_r, inner_flux, vol, ang

    @cached_property
    def _lap(self) -> tuple[sp.csr_matrix, np.ndarray]:
        """Sparse Laplacian A (rows only at interior nodes) and interior mask."""
        nt = self.n_theta
        faces, flux_r, inner_flux, vol, ang = self._fv
        rows: list[np.ndarray] = []
        cols: list[np.ndarray] = []
        vals: list[np.ndarray] = []
        interior = np.zeros(self.n, dtype=bool)
        j = np.arange(nt)

        def add(r_idx, c_idx, v):
            rows.append(r_idx)
            cols.append(c_idx)
            vals.append(np.broadcast_to(v, r_idx.shape).astype(float))

        first_interior = 0 if self.has_origin else 1
        for i in range(first_interior, self.n_r - 1):
            me = i * nt + j
            interior[me] = True
            v_i = vol[i]
            # outward radial flux
            add(me, (i + 1) * nt + j, flux_r[i] / v_i)
            add(me, me, np.full(nt, -flux_r[i] / v_i))
            # inward radial flux
            if i > 0:
                add(me, (i - 1) * nt + j, flux_r[i - 1] / v_i)
                add(me, me, np.full(nt, -flux_r[i - 1] / v_i))
            else:  # ring 0 couples to the origin node
                add(me, np.full(nt, self.origin_index), np.full(nt, inner_flux / v_i))
                add(me, me, np.full(nt, -inner_flux / v_i))
            # angular fluxes
            c = ang[i] / v_i
            add(me, i * nt + (j + 1) % nt, np.full(nt, c))
            add(me, i * nt + (j - 1) % nt, np.full(nt, c))
            add(me, me, np.full(nt, -2.0 * c))
        if self.has_origin:
            o = self.origin_index
            interior[o] = True
            r1 = self.r_rings[0]
            coef = 4.0 / (r1**2 * nt)
            add(np.full(nt, o), j, np.full(nt, coef))
            add(np.array([o]), np.array([o]), np.array([-4.0 / r1**2]))
        A = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.n, self.n),
        )
        return A, interior

    @property
    def laplacian_matrix(self) -> sp.csr_matrix:
        return self._lap[0]

    @property
    def interior(self) -> np.ndarray:
        return self._lap[1]

    def laplacian_apply(self, values: np.ndarray) -> np.ndarray:
        A, interior = self._lap
        out = A @ values
        out[~interior] = 0.0
        return out

    @cached_property
    def cell_volumes(self) -> np.ndarray:
        """Finite-volume cell measures; volume * laplacian is symmetric."""
        _, _, _, vol, _ = self._fv
        out = np.empty(self.n)
        out[: self.n_r * self.n_theta] = np.repeat(vol, self.n_theta)
        if self.has_origin:
            faces = self._fv[0]
            out[self.origin_index] = math.pi * faces[0] ** 2
        return out

    # -- interpolation ------------------------------------------------------

    def interpolator(self, values: np.ndarray, fill_value: float = 0.0):
        """Bilinear interpolation in (t, theta), periodic in theta.

        Points beyond r_out evaluate to ``fill_value`` (fields of interest
        decay or are extended by zero there).
        """
        nt = self.n_theta
        mat = values[: self.n_r * nt].reshape(self.n_r, nt)
        mat = np.hstack([mat, mat[:, :1]])  # periodic seam
        theta_ax = np.concatenate([self.theta, [2.0 * math.pi]])
        if self.has_origin:
            row0 = np.full((1, nt + 1), values[self.origin_index])
            mat = np.vstack([row0, mat])
            t_ax = np.concatenate(([0.0], self.t_rings))
        else:
            t_ax = self.t_rings
        rgi = RegularGridInterpolator(
            (t_ax, theta_ax), mat, method="linear", bounds_error=False, fill_value=fill_value
        )

        def ev(px, py):
            px = np.asarray(px, dtype=float)
            py = np.asarray(py, dtype=float)
            r = np.hypot(px, py)
            th = np.mod(np.arctan2(py, px), 2.0 * math.pi)
            t = np.log1p(r)
            pts = np.stack([t.ravel(), th.ravel()], axis=-1)
            out = rgi(pts).reshape(t.shape)
            return out

        return ev

    @cached_property
    def grid_hash(self) -> str:
        hsh = hashlib.sha256()
        hsh.update(b"disk")
        hsh.update(np.asarray([self.r_in, self.r_out, self.n_r, self.n_theta]).tobytes())
        hsh.update(self.r_rings.tobytes())
        return hsh.hexdigest()[:16]


# ---------------------------------------------------------------------------
# fields and norms
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScalarField:
    """One real value per grid node."""

    grid: object
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.grid.n,):
            raise ValueError(f"value count {vals.shape} does not match node count {self.grid.n}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("field contains non-finite values")
        object.__setattr__(self, "values", vals)


def integrate(field: ScalarField) -> float:
    return field.grid.integrate(field.values)


def _pos_weights(grid) -> np.ndarray:
    return getattr(grid, "weights_pos", np.clip(grid.weights, 0.0, None))


def norm_Y(field: ScalarField, w: WeightParams) -> float:
    """Weighted norm || sigma^(1+d) h ||_{L2} by grid quadrature."""
    grid = field.grid
    s = sigma_r(grid.node_r if hasattr(grid, "node_r") else grid.r)
    integrand = s ** (2.0 + 2.0 * w.d) * field.values**2
    return math.sqrt(float(_pos_weights(grid) @ integrand))


def weighted_l2(grid, values: np.ndarray) -> float:
    return math.sqrt(float(_pos_weights(grid) @ values**2))


def norm_X(field: ScalarField, w: WeightParams) -> float:
    """sqrt(||sigma^(1+d) lap v||^2 + ||sigma^(-1-d) v||^2); the Laplacian
    term is accumulated over the stencil-interior nodes."""
    grid = field.grid
    n_rings = getattr(grid, "n_r", None)
    if n_rings is not None and n_rings < 3:
        raise ValueError("grid too coarse for the Laplacian stencil")
    r = grid.node_r if hasattr(grid, "node_r") else grid.r
    s = sigma_r(r)
    lap = grid.laplacian_apply(field.values)
    wpos = _pos_weights(grid)
    lap_term = float(wpos @ (s ** (2.0 + 2.0 * w.d) * lap**2))
    zer_term = float(wpos @ (s ** (-2.0 - 2.0 * w.d) * field.values**2))
    return math.sqrt(lap_term + zer_term)


def h2_norm(grid, values: np.ndarray) -> float:
    """Discrete stand-in for the H2 norm: L2 of the values plus L2 of the
    discrete Laplacian over interior nodes."""
    lap = grid.laplacian_apply(values)
    wpos = _pos_weights(grid)
    return math.sqrt(float(wpos @ values**2) + float(wpos @ lap**2))


# ---------------------------------------------------------------------------
# truncation helpers
# ---------------------------------------------------------------------------


def tail_bound_sigma4(c: float, r_out: float) -> float:
    """Upper bound for int_{|x|>R} of an integrand bounded by c*sigma^-4."""
    return c * math.pi / r_out**2


def r_out_for_tail(c: float, tol: float) -> float:
    """Smallest truncation radius with tail_bound_sigma4 <= tol."""
    return math.sqrt(c * math.pi / tol)
