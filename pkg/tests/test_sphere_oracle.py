import numpy as np
import pytest
from scipy.integrate import quad

from conftest import piecewise_laplace
from smallscat.incident import ShellPulse, incident_time
from smallscat.metrics import fit_power_law
from smallscat.sphere_oracle import (
    SphereScenario, sphere_scattered_frequency, sphere_scattered_time,
)


@pytest.fixture(scope="module")
def scenario(pulse):
    return SphereScenario(0.1, pulse)


def test_scenario_validation(pulse):
    with pytest.raises(ValueError):
        SphereScenario(2.5, pulse)
    with pytest.raises(ValueError):
        SphereScenario(0.1, ShellPulse(center=(0.5, 0.0, 0.0)))


def test_boundary_condition_exact(scenario, pulse):
    # on r = eps the scattered trace cancels the incident trace exactly
    for t in (2.2, 2.5, 2.9):
        assert sphere_scattered_time(scenario, t, scenario.epsilon) == \
            -incident_time(pulse, t, scenario.epsilon)


def test_causality_exact_zero(scenario, pulse):
    # no signal before the boundary trace is excited
    r = 2.5
    first_arrival = (r - scenario.epsilon) + (pulse.r0 - scenario.epsilon)
    for t in (0.0, 1.0, first_arrival - 1e-9):
        assert sphere_scattered_time(scenario, t, r) == 0.0


def test_extinction_exact_zero(scenario, pulse):
    # strong Huygens: identically zero behind the trailing front
    r = 2.5
    t_ext = (r - scenario.epsilon) + (pulse.R0 + scenario.epsilon)
    for t in (t_ext + 1e-9, t_ext + 1.0, 10.0):
        assert sphere_scattered_time(scenario, t, r) == 0.0


def test_wave_equation_residual(scenario):
    def resid(t, r, h):
        u = lambda tt, rr: sphere_scattered_time(scenario, tt, rr)
        utt = (u(t + h, r) - 2 * u(t, r) + u(t - h, r)) / h ** 2
        w = lambda rr: rr * u(t, rr)
        wrr = (w(r + h) - 2 * w(r) + w(r - h)) / h ** 2
        return utt - wrr / r

    for (t, r) in ((5.0, 2.6), (4.6, 2.2)):
        assert abs(resid(t, r, 1e-3)) < 1e-4


def test_frequency_formula_matches_time_transform(scenario, pulse):
    r = 2.5
    eps = scenario.epsilon
    base = r - eps
    bps = [base, base + pulse.r0 - eps, base + 0.5 * (pulse.r0 + pulse.R0),
           base + pulse.R0 + eps]
    for s in (1.0, 1 + 2j, 3j):
        num = piecewise_laplace(lambda t: sphere_scattered_time(scenario, t, r), s, bps)
        assert abs(num - sphere_scattered_frequency(scenario, s, r)) < 1e-8


def test_static_frequency_value(scenario, pulse):
    from smallscat.incident import incident_laplace
    r = 2.5
    expected = -(scenario.epsilon / r) * incident_laplace(pulse, 0.0, scenario.epsilon)
    assert sphere_scattered_frequency(scenario, 0.0, r) == pytest.approx(expected, rel=1e-14)


def test_inside_sphere_rejected(scenario):
    with pytest.raises(ValueError):
        sphere_scattered_time(scenario, 1.0, 0.05)
    with pytest.raises(ValueError):
        sphere_scattered_frequency(scenario, 1.0, 0.05)


def test_model_error_slope_preview(pulse):
    # formula-level preview of the eps^2 error law: both fields closed-form,
    # shell norm by adaptive quadrature, fit over the standard eps sweep
    t0 = 5.0

    def error_norm(eps):
        scn = SphereScenario(eps, pulse)

        def e_sq(r):
            u_sc = sphere_scattered_time(scn, t0, r)
            tau = t0 - r
            g0 = incident_time(pulse, max(tau, 0.0), 0.0) if tau > 0 else 0.0
            u_app = -(eps / r) * g0          # c1 = 4 pi for the unit sphere
            return (u_app - u_sc) ** 2 * 4 * np.pi * r ** 2

        val, _ = quad(e_sq, 2.0, 3.0, limit=200, epsabs=1e-18, epsrel=1e-12)
        return np.sqrt(val)

    fit = fit_power_law([(eps, error_norm(eps)) for eps in (0.02, 0.04, 0.08, 0.16)])
    assert abs(fit.slope - 2.0) <= 0.2
