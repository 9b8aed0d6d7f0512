"""Frequency-domain exterior Dirichlet solver via the single-layer BIE.

Nystrom discretization on the product grid of `geometry.build_surface_grid`.
The kernel exp(-s|x-y|) / (4 pi |x-y|) is split into

    static part     1 / (4 pi |x-y|)          (weakly singular)
    remainder       (exp(-s|x-y|) - 1) / (4 pi |x-y|)   (entire in |x-y|)

The remainder is assembled with plain product weights.  The static part is
assembled once per grid ("static core") with a singularity correction: the
kernel is blended into a long-range piece that is smooth in the squared
distance (spectral under the plain product rule) and a localized singular
piece integrated per collocation node in rotated polar coordinates (the
polar Jacobian cancels the 1/|x-y| singularity).  Within the cap the
density is reconstructed from grid values by trigonometric interpolation
along each phi-ring and barycentric Lagrange interpolation across
theta-rings (through-pole continuation handled by reflection).  The same
pass builds a second correction matrix for the kernel |x-y|, which repairs
the remainder's leading odd term s^2 |x-y| / 2 at every frequency for free.

Solves are dense LU with a residual check and a reciprocal-condition
estimate; imaginary-axis conditioning is surfaced, never regularized.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.linalg import lapack

from .geometry import StarShape, SurfaceGrid, build_surface_grid, gauss_legendre
from .incident import ShellPulse, incident_trace

logger = logging.getLogger(__name__)

# Singularity-blending knobs.  The static kernel is split as
#     1/d = [1/d - q_W(d^2)] + q_W(d^2),
#     q_W(t) = (t + W^2 exp(-t / W^2))^(-1/2),
# with W a few physical grid spacings.  q_W depends on the squared distance
# only, hence is C-infinity on the surface and integrates spectrally under
# the plain product rule; the bracket decays like exp(-d^2/W^2) and is
# integrated over a local cap in rotated polar coordinates by composite
# Gauss rules of fixed order 8 with panels no wider than the window.
WINDOW_FACTOR = 3.0
WINDOW_CUTOFF = 6.5          # cap radius, in units of the window width
N_GAMMA = 8
N_ALPHA = 16
STENCIL_MARGIN = 2

RESIDUAL_TOL = 1e-10
NEAR_FIELD_FACTOR = 2.0


class GridDegenerateError(ValueError):
    """Grid contains coincident distinct nodes."""


class NearResonanceError(RuntimeError):
    """Dense solve failed its residual check (likely near a resonance)."""

    def __init__(self, message, s=None, condition_estimate=None):
        super().__init__(message)
        self.s = s
        self.condition_estimate = condition_estimate


class NearFieldEvaluationError(ValueError):
    """Evaluation point too close to the surface for plain quadrature."""


# ---------------------------------------------------------------------------
# Static core: singular-corrected Nystrom matrix for 1 / (4 pi |x-y|)
# ---------------------------------------------------------------------------
@dataclass
class _StaticCore:
    matrix: np.ndarray          # (N, N) real: corrected static kernel 1/(4 pi d)
    linear_correction: np.ndarray   # (N, N) real: correction for the kernel d
    window: float               # blending width W, physical length units


def _window_width(grid: SurfaceGrid) -> float:
    """Blending width: WINDOW_FACTOR times the coarsest physical spacing."""
    h = max(math.pi / grid.n_theta, 2.0 * math.pi / grid.n_phi)
    metric = grid.jacobian / grid.radial_values      # sqrt(r^2 + r_t^2 + (r_p/sin)^2)
    return WINDOW_FACTOR * h * grid.epsilon * float(np.max(metric))


def _q_blend(d2: np.ndarray, W: float) -> np.ndarray:
    """Smooth long-range part q_W(d^2) of the static kernel (without 1/4pi)."""
    W2 = W * W
    return 1.0 / np.sqrt(d2 + W2 * np.exp(-d2 / W2))


def _local_difference_kernel(dist: np.ndarray, W: float) -> np.ndarray:
    """1/d - q_W(d^2), computed stably for d >> W (without 1/4pi)."""
    W2 = W * W
    u = (W2 / (dist * dist)) * np.exp(-(dist * dist) / W2)
    small = u < 1e-8
    out = np.empty(dist.shape)
    out[small] = (0.5 * u[small] - 0.375 * u[small] ** 2) / dist[small]
    ul = u[~small]
    out[~small] = (1.0 - 1.0 / np.sqrt(1.0 + ul)) / dist[~small]
    return out


def _trig_interp_weights(n: int, x: np.ndarray) -> np.ndarray:
    """Cardinal weights of trigonometric interpolation on the uniform grid
    x_b = 2 pi b / n, evaluated at azimuths x.  Returns (len(x), n)."""
    b = 2.0 * math.pi * np.arange(n) / n
    u = x[:, None] - b[None, :]
    out = np.empty((len(x), n))
    small = np.abs(np.remainder(u + math.pi, 2.0 * math.pi) - math.pi) < 1e-12
    if n % 2 == 0:
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.sin(0.5 * n * u) / (n * np.tan(0.5 * u))
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.sin(0.5 * n * u) / (n * np.sin(0.5 * u))
    out[small] = 1.0
    return out


def _barycentric_weights(nodes: np.ndarray) -> np.ndarray:
    w = np.ones(len(nodes))
    for k in range(len(nodes)):
        d = nodes[k] - np.delete(nodes, k)
        w[k] = 1.0 / np.prod(d)
    return w / np.max(np.abs(w))


def _barycentric_eval_matrix(nodes: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Lagrange cardinal functions l_k(x), shape (len(x), len(nodes))."""
    w = _barycentric_weights(nodes)
    diff = x[:, None] - nodes[None, :]
    exact = np.abs(diff) < 1e-14
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = w[None, :] / diff
    terms[exact] = 0.0
    denom = np.sum(terms, axis=1)
    out = terms / denom[:, None]
    hit = exact.any(axis=1)
    out[hit] = 0.0
    out[exact] = 1.0
    return out


def _extended_theta(grid: SurfaceGrid):
    """Signed polar grid continued through both poles by reflection.

    Returns (theta_ext ascending, row index into the real grid, pi-shift flag).
    """
    nt = grid.n_theta
    th = grid.theta
    below = -th[::-1]                       # rows reflected through theta = 0
    above = 2.0 * math.pi - th[::-1]        # rows reflected through theta = pi
    theta_ext = np.concatenate([below, th, above])
    rows = np.concatenate([np.arange(nt)[::-1], np.arange(nt), np.arange(nt)[::-1]])
    flags = np.concatenate([np.ones(nt, bool), np.zeros(nt, bool), np.ones(nt, bool)])
    return theta_ext, rows, flags


def _static_core(grid: SurfaceGrid) -> _StaticCore:
    N = grid.n_nodes
    W = _window_width(grid)
    eps2 = grid.epsilon ** 2
    W2 = W * W

    # --- far part: plain product weights on the smooth long-range kernel.
    # linear_correction accumulates [local polar - plain product] for the
    # windowed kernel eta d; the frequency kernel's odd term s^2 d / 2
    # carries the same cone singularity as 1/d and is corrected with it.
    matrix = np.zeros((N, N))
    cmat = np.zeros((N, N))
    block = max(1, int(2.0e7 // N))
    for lo in range(0, N, block):
        hi = min(N, lo + block)
        diff = grid.nodes[lo:hi, None, :] - grid.nodes[None, :, :]
        d2 = np.sum(diff * diff, axis=-1)
        if np.min(d2 + np.eye(hi - lo, N, k=lo)) <= 0.0:
            raise GridDegenerateError("coincident distinct grid nodes")
        matrix[lo:hi] = _q_blend(d2, W) * grid.weights[None, :] / (4.0 * math.pi)
        cmat[lo:hi] = -np.exp(-d2 / W2) * np.sqrt(d2) * grid.weights[None, :]

    # --- local part: rotated polar integration with grid interpolation ---
    r_min = float(np.min(grid.radial_values))
    chord_cut = min(2.0, WINDOW_CUTOFF * W / (grid.epsilon * r_min))
    gamma_max = 2.0 * math.asin(min(1.0, 0.5 * chord_cut))
    gamma_w = W / (grid.epsilon * r_min)            # window width in polar angle
    n_panels = max(2, math.ceil(gamma_max / gamma_w))
    edges = np.linspace(0.0, gamma_max, n_panels + 1)
    xg, wg = gauss_legendre(N_GAMMA)
    gam = np.concatenate([0.5 * (a + b) + 0.5 * (b - a) * xg
                          for a, b in zip(edges[:-1], edges[1:])])
    wgam = np.concatenate([np.full(N_GAMMA, 0.5 * (b - a)) * wg
                           for a, b in zip(edges[:-1], edges[1:])])
    alpha = 2.0 * math.pi * np.arange(N_ALPHA) / N_ALPHA
    w_alpha = 2.0 * math.pi / N_ALPHA

    GG, AA = np.meshgrid(gam, alpha, indexing="ij")
    gq = GG.ravel()
    pole_dirs = np.stack([np.sin(gq) * np.cos(AA.ravel()),
                          np.sin(gq) * np.sin(AA.ravel()),
                          np.cos(gq)], axis=1)                    # (nq, 3)
    wq = (np.outer(wgam, np.full(N_ALPHA, w_alpha)).ravel()) * np.sin(gq)
    nq = len(gq)

    theta_ext, ext_rows, ext_flags = _extended_theta(grid)
    dtheta_max = np.max(np.diff(grid.theta))
    span = gamma_max + STENCIL_MARGIN * dtheta_max

    # All rows on a theta-ring share the same polar cloud up to an azimuth
    # rotation: theta* is ring-invariant, phi* shifts by the node azimuth,
    # so the interpolation matrices are built once per ring and the result
    # rolled in phi.
    for a in range(grid.n_theta):
        th_a = grid.theta[a]
        ct, st = math.cos(th_a), math.sin(th_a)
        # rotation R_y(theta_a): cloud for the (a, phi=0) node
        ydirs0 = np.stack([ct * pole_dirs[:, 0] + st * pole_dirs[:, 2],
                           pole_dirs[:, 1],
                           -st * pole_dirs[:, 0] + ct * pole_dirs[:, 2]], axis=1)
        th_q = np.arccos(np.clip(ydirs0[:, 2], -1.0, 1.0))
        ph_q0 = np.arctan2(ydirs0[:, 1], ydirs0[:, 0]) % (2.0 * math.pi)

        lo = np.searchsorted(theta_ext, th_a - span)
        hi = np.searchsorted(theta_ext, th_a + span)
        flags = ext_flags[lo:hi]
        real_rows = ext_rows[lo:hi]
        L = _barycentric_eval_matrix(theta_ext[lo:hi], th_q)       # (nq, n_rows)
        T0 = _trig_interp_weights(grid.n_phi, ph_q0)               # (nq, n_phi)
        T1 = _trig_interp_weights(grid.n_phi, ph_q0 + math.pi)

        # ring geometry: rotate the phi=0 cloud to every azimuth at once
        cb, sb = np.cos(grid.phi), np.sin(grid.phi)
        ydirs = np.empty((grid.n_phi, nq, 3))
        ydirs[:, :, 0] = cb[:, None] * ydirs0[None, :, 0] - sb[:, None] * ydirs0[None, :, 1]
        ydirs[:, :, 1] = sb[:, None] * ydirs0[None, :, 0] + cb[:, None] * ydirs0[None, :, 1]
        ydirs[:, :, 2] = ydirs0[None, :, 2]
        ph_q = (ph_q0[None, :] + grid.phi[:, None]) % (2.0 * math.pi)
        th_q_ring = np.broadcast_to(th_q, (grid.n_phi, nq))
        r_q, rt_q, rp_q = grid.shape.radial_derivatives(th_q_ring, ph_q)
        st_q = np.maximum(np.sin(th_q_ring), 1e-300)
        rp_over = rp_q / st_q
        jac_q = r_q * np.sqrt(r_q ** 2 + rt_q ** 2 + rp_over ** 2)
        ypts = grid.epsilon * (grid.shape.center[None, None, :] + r_q[..., None] * ydirs)

        node_slice = slice(a * grid.n_phi, (a + 1) * grid.n_phi)
        dist_q = np.linalg.norm(ypts - grid.nodes[node_slice][:, None, :], axis=2)
        base = wq[None, :] * jac_q * eps2
        fker_ring = base * _local_difference_kernel(dist_q, W) / (4.0 * math.pi)
        cker_ring = base * np.exp(-dist_q * dist_q / W2) * dist_q

        for b in range(grid.n_phi):
            for target, fker in ((matrix, fker_ring[b]), (cmat, cker_ring[b])):
                contrib = np.empty((hi - lo, grid.n_phi))
                if np.any(~flags):
                    contrib[~flags] = (L[:, ~flags] * fker[:, None]).T @ T0
                if np.any(flags):
                    contrib[flags] = (L[:, flags] * fker[:, None]).T @ T1
                contrib = np.roll(contrib, b, axis=1)
                np.add.at(target[a * grid.n_phi + b].reshape(grid.n_theta, grid.n_phi),
                          (real_rows,), contrib)

    return _StaticCore(matrix=matrix, linear_correction=cmat, window=W)


def get_static_core(grid: SurfaceGrid) -> _StaticCore:
    """Static-kernel Nystrom matrix, computed once per grid and cached on it."""
    core = getattr(grid, "_static_core", None)
    if core is None:
        core = _static_core(grid)
        object.__setattr__(grid, "_static_core", core)
    return core


def _node_distances(grid: SurfaceGrid) -> np.ndarray:
    """Pairwise node distances with unit diagonal, cached on the grid
    (reused by every frequency of a sweep)."""
    dist = getattr(grid, "_node_distances", None)
    if dist is None:
        diff = grid.nodes[:, None, :] - grid.nodes[None, :, :]
        dist = np.sqrt(np.sum(diff * diff, axis=-1))
        np.fill_diagonal(dist, 1.0)
        object.__setattr__(grid, "_node_distances", dist)
    return dist


# ---------------------------------------------------------------------------
# Assembly and solves
# ---------------------------------------------------------------------------
@dataclass
class SingleLayerMatrix:
    """Dense Nystrom matrix of the single-layer trace operator at frequency s."""

    matrix: np.ndarray
    s: complex
    grid: SurfaceGrid


@dataclass(frozen=True)
class SolveDiagnostics:
    residual: float
    condition_estimate: float


def assemble_single_layer(grid: SurfaceGrid, s: complex) -> SingleLayerMatrix:
    """Nystrom matrix for phi -> int_Gamma exp(-s|x-y|)/(4 pi |x-y|) phi dGamma."""
    core = get_static_core(grid)
    s = complex(s)
    if s == 0:
        return SingleLayerMatrix(matrix=core.matrix.copy(), s=s, grid=grid)
    dist = _node_distances(grid)
    rem = np.expm1(-s * dist) / (4.0 * math.pi * dist) * grid.weights[None, :]
    np.fill_diagonal(rem, -s / (4.0 * math.pi) * grid.weights)
    # the remainder's odd expansion term s^2 d / (8 pi) is cone-singular at
    # the diagonal; re-route it through the precomputed local correction
    mat = core.matrix + rem + (s * s / (8.0 * math.pi)) * core.linear_correction
    if s.imag == 0.0:
        mat = mat.real
    return SingleLayerMatrix(matrix=mat, s=s, grid=grid)


def _lu_solve_with_cond(A: np.ndarray, rhs: np.ndarray):
    lu, piv = sla.lu_factor(A)
    x = sla.lu_solve((lu, piv), rhs)
    anorm = np.linalg.norm(A, 1)
    if np.iscomplexobj(A):
        rcond, info = lapack.zgecon(lu, anorm, norm="1")
    else:
        rcond, info = lapack.dgecon(lu, anorm, norm="1")
    cond = float("inf") if (info != 0 or rcond == 0.0) else 1.0 / float(rcond)
    return x, cond


def solve_density_with_diagnostics(mat: SingleLayerMatrix, rhs: np.ndarray):
    """Direct dense solve with residual verification and condition estimate."""
    rhs = np.asarray(rhs)
    if rhs.shape != (mat.grid.n_nodes,):
        raise ValueError(f"rhs length {rhs.shape} does not match grid ({mat.grid.n_nodes},)")
    rhs_norm = np.linalg.norm(rhs)
    if rhs_norm == 0.0:
        return np.zeros_like(rhs), SolveDiagnostics(residual=0.0, condition_estimate=0.0)
    A = mat.matrix if (np.iscomplexobj(mat.matrix) or not np.iscomplexobj(rhs)) \
        else mat.matrix.astype(complex)
    try:
        x, cond = _lu_solve_with_cond(A, rhs)
    except Exception as exc:
        raise NearResonanceError(f"factorization breakdown at s={mat.s}", s=mat.s) from exc
    residual = float(np.linalg.norm(A @ x - rhs) / rhs_norm)
    if not np.isfinite(residual) or residual > RESIDUAL_TOL:
        raise NearResonanceError(
            f"solve residual {residual:.3e} exceeds {RESIDUAL_TOL:.1e} at s={mat.s} "
            f"(condition estimate {cond:.3e})", s=mat.s, condition_estimate=cond)
    logger.debug("solve s=%s residual=%.3e cond=%.3e", mat.s, residual, cond)
    return x, SolveDiagnostics(residual=residual, condition_estimate=cond)


def solve_density(mat: SingleLayerMatrix, rhs: np.ndarray) -> np.ndarray:
    """Boundary density lambda with ||mat lambda - rhs|| <= 1e-10 ||rhs||."""
    x, _ = solve_density_with_diagnostics(mat, rhs)
    return x


# ---------------------------------------------------------------------------
# Capacitance
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class CapacitanceResult:
    """Unit-scale capacitance c1 and its equilibrium density sigma1."""

    c1: float
    sigma1: np.ndarray
    n_theta: int
    n_phi: int

    def __post_init__(self):
        if self.c1 <= 0:
            raise ValueError("capacitance must be positive")


def capacitance(shape: StarShape, n_theta: int = 24, n_phi: int = 48) -> CapacitanceResult:
    """Solve the static equilibrium problem S0 sigma1 = 1 at unit scale.

    The scale-eps capacitance is eps * c1 (exact dilation identity of the
    static single layer).
    """
    grid = build_surface_grid(shape, 1.0, n_theta, n_phi)
    mat = assemble_single_layer(grid, 0.0)
    sigma = solve_density(mat, np.ones(grid.n_nodes))
    c1 = float(np.sum(grid.weights * sigma))
    return CapacitanceResult(c1=c1, sigma1=sigma, n_theta=n_theta, n_phi=n_phi)


# ---------------------------------------------------------------------------
# Off-surface evaluation and solution pipelines
# ---------------------------------------------------------------------------
def evaluate_potential(grid: SurfaceGrid, density: np.ndarray, s: complex,
                       points: np.ndarray) -> np.ndarray:
    """Single-layer potential of a node density at off-surface points."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    diff = points[:, None, :] - grid.nodes[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    min_dist = float(np.min(dist))
    threshold = NEAR_FIELD_FACTOR * grid.mesh_width()
    if min_dist < threshold:
        raise NearFieldEvaluationError(
            f"evaluation point at distance {min_dist:.3e} from the surface "
            f"(need >= {threshold:.3e}); use a refined grid or move the point")
    s = complex(s)
    kern = np.exp(-s * dist) / (4.0 * math.pi * dist) if s != 0 \
        else 1.0 / (4.0 * math.pi * dist)
    return kern @ (grid.weights * density)


def scattered_frequency(shape: StarShape, epsilon: float, pulse: ShellPulse,
                        s: complex, points: np.ndarray, *,
                        n_theta: int = 20, n_phi: int = 40,
                        grid: SurfaceGrid | None = None) -> np.ndarray:
    """Laplace-domain scattered field u_hat_sc(s, x) at the given points.

    Pipeline: trace of the incident field, solve with flipped sign
    (sound-soft condition), radiate with the single-layer potential.
    """
    if grid is None:
        grid = build_surface_grid(shape, epsilon, n_theta, n_phi)
    g = incident_trace(pulse, s, grid)
    mat = assemble_single_layer(grid, s)
    lam = solve_density(mat, -g)
    return evaluate_potential(grid, lam, s, points)


def exterior_dirichlet(shape: StarShape, epsilon: float, z: complex,
                       boundary_data, *, n_theta: int = 20, n_phi: int = 40,
                       grid: SurfaceGrid | None = None):
    """Exterior Dirichlet solution operator at frequency z.

    boundary_data is either a callable on 3-vectors or per-node values.
    Returns an evaluator: points -> complex field values.  Defined for any
    complex z off the discrete resonance set (Re z > 0 always safe).
    """
    if grid is None:
        grid = build_surface_grid(shape, epsilon, n_theta, n_phi)
    if callable(boundary_data):
        g = np.asarray(boundary_data(grid.nodes), dtype=complex)
    else:
        g = np.asarray(boundary_data, dtype=complex)
        if g.shape != (grid.n_nodes,):
            raise ValueError("boundary data length does not match the grid")
    mat = assemble_single_layer(grid, z)
    lam = solve_density(mat, g)

    def evaluate(points):
        return evaluate_potential(grid, lam, z, points)

    evaluate.density = lam
    evaluate.grid = grid
    return evaluate


def boundary_projections(grid: SurfaceGrid, density: np.ndarray):
    """Split a density into its weighted mean and zero-mean fluctuation.

    The discrete L2(Gamma^eps) orthogonality of the two parts is exact.
    """
    density = np.asarray(density)
    if density.shape != (grid.n_nodes,):
        raise ValueError("density length does not match the grid")
    mean = np.sum(grid.weights * density) / np.sum(grid.weights)
    return mean, density - mean
