"""Shell norms, local energy, and scaling-law verification checks.

Every scaling claim is tested the same way: compute a norm per obstacle
scale, fit a line through (log eps, log norm), and compare the slope and
the maximum log-residual against the expected window.  H^(1/2) boundary
norms are replaced by computable L2 surrogates with correspondingly
adjusted exponents (mean part O(eps), fluctuation O(eps^2)); the
substitution is noted at each check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .asymptotic import apply_S_app, density_app
from .bem import assemble_single_layer, boundary_projections, capacitance, \
    evaluate_potential, exterior_dirichlet, solve_density
from .geometry import ShellRegion, StarShape, build_surface_grid, shell_quadrature
from .incident import ShellPulse, incident_trace


@dataclass(frozen=True)
class ScalingFit:
    """Least-squares line through (log x, log y) with its worst residual."""

    abscissae: tuple
    ordinates: tuple
    slope: float
    intercept: float
    max_residual: float

    def within(self, target: float, slope_tol: float, residual_tol: float = np.inf) -> bool:
        return (abs(self.slope - target) <= slope_tol
                and self.max_residual <= residual_tol)


def fit_power_law(points) -> ScalingFit:
    """Fit y ~ C x^p on positive data; returns slope p and log residuals."""
    points = list(points)
    if len(points) < 2:
        raise ValueError("power-law fit needs at least two points")
    x = np.array([p[0] for p in points], dtype=float)
    y = np.array([p[1] for p in points], dtype=float)
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("power-law fit requires positive data")
    lx, ly = np.log(x), np.log(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    return ScalingFit(abscissae=tuple(x), ordinates=tuple(y),
                      slope=float(slope), intercept=float(intercept),
                      max_residual=float(np.max(np.abs(resid))))


# ---------------------------------------------------------------------------
# Shell norms and local energy
# ---------------------------------------------------------------------------
def shell_l2_norm(sampler, region: ShellRegion, n_r: int = 8, n_ang: int = 6) -> float:
    """L2 norm over the shell of a field given as points -> values."""
    pts, w = shell_quadrature(region, n_r, n_ang)
    if len(w) == 0:
        return 0.0
    vals = np.asarray(sampler(pts))
    return float(np.sqrt(np.sum(w * np.abs(vals) ** 2)))


def shell_l2_norm_of_values(values: np.ndarray, weights: np.ndarray) -> float:
    """Same norm for precomputed samples on a shell rule."""
    return float(np.sqrt(np.sum(weights * np.abs(values) ** 2)))


def local_energy(grad_sampler, v_sampler, region: ShellRegion,
                 n_r: int = 8, n_ang: int = 6) -> float:
    """(1/2)(||grad u||^2 + ||v||^2) over the shell.

    grad_sampler: points -> (n, 3) gradient samples; v_sampler: points ->
    values of the time derivative.
    """
    pts, w = shell_quadrature(region, n_r, n_ang)
    if len(w) == 0:
        return 0.0
    grad = np.asarray(grad_sampler(pts))
    v = np.asarray(v_sampler(pts))
    return float(0.5 * (np.sum(w * np.sum(np.abs(grad) ** 2, axis=1))
                        + np.sum(w * np.abs(v) ** 2)))


# ---------------------------------------------------------------------------
# Proposition checks
# ---------------------------------------------------------------------------
def check_projection_scaling(shape: StarShape, pulse: ShellPulse, s: complex,
                             eps_list, n_theta: int = 20, n_phi: int = 40,
                             data_center=(0.5, 0.0, 0.0)):
    """Mean / fluctuation split of the incident trace across scales.

    Returns (mean fit, fluctuation fit): the weighted-mean part of the
    trace carries an O(eps) L2(Gamma) norm (slope 1); the fluctuation's L2
    norm scales as eps^2 (L2 surrogate of the H^(1/2) bound, which lowers
    the paper exponent 3/2 to 2).

    The pulse is recentered at data_center: the generic-position exponents
    require a nonzero field gradient at the contraction point, and a
    radial field centered exactly there has none (the fluctuation would
    gain an extra power of eps).
    """
    import dataclasses
    probe = dataclasses.replace(pulse, center=tuple(data_center))
    mean_pts, fluct_pts = [], []
    for eps in eps_list:
        grid = build_surface_grid(shape, eps, n_theta, n_phi)
        trace = incident_trace(probe, s, grid)
        mean, fluct = boundary_projections(grid, trace)
        area = np.sum(grid.weights)
        mean_pts.append((eps, abs(mean) * np.sqrt(area)))
        fluct_pts.append((eps, np.sqrt(np.sum(grid.weights * np.abs(fluct) ** 2))))
    return fit_power_law(mean_pts), fit_power_law(fluct_pts)


def check_density_expansion(shape: StarShape, pulse: ShellPulse, s: complex,
                            eps_list, n_theta: int = 20, n_phi: int = 40) -> ScalingFit:
    """Relative L2(Gamma) error of the equilibrium-density approximation
    of the solved BIE density; expected slope 1 in eps."""
    cap = capacitance(shape, n_theta, n_phi)
    pts = []
    for eps in eps_list:
        grid = build_surface_grid(shape, eps, n_theta, n_phi)
        trace = incident_trace(pulse, s, grid)
        lam = solve_density(assemble_single_layer(grid, s), -trace)
        lam_app = density_app(grid, pulse, s, cap.sigma1)
        num = np.sqrt(np.sum(grid.weights * np.abs(lam - lam_app) ** 2))
        den = np.sqrt(np.sum(grid.weights * np.abs(lam) ** 2))
        pts.append((eps, num / den))
    return fit_power_law(pts)


def check_dilation_identity(shape: StarShape, epsilon: float, s: complex,
                            boundary_data=None, points=None,
                            n_theta: int = 16, n_phi: int = 32) -> float:
    """Max relative mismatch between the two dilation solution paths:
    solve at (eps, s) vs solve at (1, eps*s) with mapped data and points."""
    if boundary_data is None:
        def boundary_data(pts):
            return np.exp(-0.3 * pts[:, 0]) * (1.0 + 0.5 * pts[:, 1]) + 0.2 * pts[:, 2]
    if points is None:
        points = np.array([[2.0, 0.3, -0.4], [0.5, 2.2, 0.9], [-1.5, 1.0, 1.2]])
    points = np.atleast_2d(np.asarray(points, dtype=float))

    grid_eps = build_surface_grid(shape, epsilon, n_theta, n_phi)
    grid_one = build_surface_grid(shape, 1.0, n_theta, n_phi)
    field_eps = exterior_dirichlet(shape, epsilon, s,
                                   boundary_data(grid_eps.nodes), grid=grid_eps)
    field_one = exterior_dirichlet(shape, 1.0, epsilon * s,
                                   boundary_data(epsilon * grid_one.nodes), grid=grid_one)
    va = field_eps(points)
    vb = field_one(points / epsilon)
    return float(np.max(np.abs(va - vb)) / np.max(np.abs(va)))


def check_kernel_difference(shape: StarShape, eps_list, s: complex,
                            region: ShellRegion | None = None,
                            n_theta: int = 20, n_phi: int = 40,
                            n_r: int = 6, n_ang: int = 4) -> ScalingFit:
    """||(S - S_app) sigma_eps|| over the far-field shell per eps; the
    point-monopole replacement of the single layer loses O(eps^2)."""
    if region is None:
        region = ShellRegion(2.0, 3.0)
    cap = capacitance(shape, n_theta, n_phi)
    pts, w = shell_quadrature(region, n_r, n_ang)
    out = []
    for eps in eps_list:
        grid = build_surface_grid(shape, eps, n_theta, n_phi)
        sigma_eps = cap.sigma1 / eps
        exact = evaluate_potential(grid, sigma_eps, s, pts)
        approx = apply_S_app(grid, sigma_eps, s, pts)
        out.append((eps, shell_l2_norm_of_values(exact - approx, w)))
    return fit_power_law(out)
