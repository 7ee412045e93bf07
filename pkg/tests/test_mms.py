import numpy as np
import pytest

from ldgcouple.checks.forcing import forcing_errors
from ldgcouple.errors import MmsError
from ldgcouple.mms import BED_SLOPE, ManufacturedSolution, eval_exact, eval_forcing


@pytest.fixture
def solution() -> ManufacturedSolution:
    return ManufacturedSolution()


@pytest.fixture
def points(rng):
    t = rng.uniform(0.0, 10.0, 50)
    x = rng.uniform(0.0, 100.0, 50)
    return t, x


def test_requires_unit_gravity():
    with pytest.raises(MmsError):
        ManufacturedSolution(gravity=9.81)


def test_unknown_names_raise():
    with pytest.raises(MmsError, match="Unknown manufactured field"):
        eval_exact("vorticity", 0.0, 1.0)
    with pytest.raises(MmsError, match="Unknown equation"):
        eval_forcing("energy", 0.0, 1.0)


def test_eval_exact_matches_methods(solution):
    assert eval_exact("xi", 1.0, 20.0) == pytest.approx(solution.xi(1.0, 20.0))
    assert eval_exact("flux_z", 1.0, 20.0, -1.0) == pytest.approx(solution.seepage(1.0, 20.0, -1.0)[1])
    assert eval_forcing("darcy", 1.0, 20.0, -1.0) == pytest.approx(solution.darcy_source(1.0, 20.0, -1.0))


def test_velocity_vanishes_on_the_bed(solution, points):
    t, x = points
    np.testing.assert_allclose(solution.u(t, x, BED_SLOPE * x), 0.0, atol=1e-15)


def test_head_matches_elevation_on_the_bed(solution, points):
    t, x = points
    np.testing.assert_allclose(solution.head(t, x, solution.z_b(x)), solution.xi(t, x), atol=1e-14)


def test_continuity_holds_pointwise(solution, points, rng):
    t, x = points
    z = rng.uniform(0.0, 5.0, x.shape)
    np.testing.assert_allclose(solution.continuity_residual(t, x, z), 0.0, atol=1e-14)


def test_normal_velocity_is_continuous_across_the_interface(solution, points):
    t, x = points
    zb = solution.z_b(x)
    ux, uz = solution.seepage(t, x, zb)
    free = solution.u(t, x, zb) * BED_SLOPE - solution.w(t, x, zb)
    np.testing.assert_allclose(free, ux * BED_SLOPE - uz, atol=1e-14)


def test_stress_uses_the_diffusion_tensor(points):
    t, x = points
    a = ManufacturedSolution()
    b = ManufacturedSolution(diffusion=2.0 * a.diffusion)
    np.testing.assert_allclose(b.stress(t, x, 1.0 + 0 * x)[0], 2.0 * a.stress(t, x, 1.0 + 0 * x)[0])


def test_closed_form_sources_match_residuals(solution, rng):
    errors = forcing_errors(solution, rng)
    assert errors["momentum"] < 1e-6
    assert errors["darcy"] < 1e-6
    assert errors["pce"] < 1e-6
    assert errors["continuity"] < 1e-9


def test_pce_source_against_quadrature(solution):
    for t, x in ((0.0, 0.0), (3.7, 41.0), (9.9, 99.0)):
        reference = solution.pce_source_by_quadrature(t, x)
        assert float(solution.pce_source(t, np.array([x]))[0]) == pytest.approx(reference, rel=1e-6, abs=1e-8)
