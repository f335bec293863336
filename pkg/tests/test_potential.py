"""Potential construction, validation, format round-trips, and extension."""

import numpy as np
import pytest

from chainbreak import (EvaluationError, ExtensionError, PotentialFormatError,
                        PotentialSpec, example_quadratic, extend,
                        potential_from_dict, potential_to_dict,
                        validate_potential)
from chainbreak.errors import ConfigError


def test_example_quadratic_geometry():
    spec = example_quadratic()
    assert spec.a == pytest.approx(2.0)
    assert spec.b == pytest.approx(3.0)
    assert spec.u0 == pytest.approx(2.0)
    # vertex value and the two roots of y^2 - 4y + 3
    assert spec.evaluate(2.0) == pytest.approx(-1.0)
    assert spec.evaluate(1.0) == pytest.approx(0.0)
    assert spec.evaluate(3.0) == pytest.approx(0.0, abs=1e-14)


def test_quadratic_derivatives_and_symmetry():
    spec = example_quadratic()
    ys = np.linspace(0.2, 2.9, 57)
    np.testing.assert_allclose(spec.evaluate(ys, order=1), 2 * ys - 4,
                               rtol=0, atol=1e-12)
    np.testing.assert_allclose(spec.evaluate(ys, order=2), 2.0, atol=1e-12)
    # even extension: U(-y) = U(y), U'(-y) = -U'(y)
    np.testing.assert_allclose(spec.evaluate(-ys), spec.evaluate(ys), atol=1e-12)
    np.testing.assert_allclose(spec.evaluate(-ys, order=1),
                               -spec.evaluate(ys, order=1), atol=1e-12)


def test_cutoff_and_raw_continuation():
    spec = example_quadratic()
    assert spec.evaluate(3.5) == 0.0
    assert spec.evaluate(3.5, order=1) == 0.0
    # raw keeps following the polynomial past the cutoff
    assert spec.raw(4.0) == pytest.approx(16 - 16 + 3)


def test_validation_passes_on_example():
    report = validate_potential(example_quadratic())
    assert report.all_passed, f"failed checks: {[c.name for c in report.checks if not c.passed]}"
    names = {c.name for c in report.checks}
    assert "geometry_ordering" in names
    assert "minimum_at_equilibrium" in names


def test_validation_flags_wrong_equilibrium():
    # claim the minimum sits at 1.5 when it actually sits at 2
    spec = PotentialSpec.quadratic(1.0, -4.0, 3.0, a=1.5)
    report = validate_potential(spec)
    assert not report.all_passed
    failing = {c.name for c in report.checks if not c.passed}
    assert "minimum_at_equilibrium" in failing


def test_dict_round_trip_quadratic():
    spec = example_quadratic()
    d = potential_to_dict(spec)
    back = potential_from_dict(d)
    assert potential_to_dict(back) == d
    ys = np.linspace(0.0, 3.2, 41)
    np.testing.assert_allclose(back.evaluate(ys), spec.evaluate(ys), atol=1e-14)


def test_dict_rejects_unknown_field():
    d = potential_to_dict(example_quadratic())
    d["wiggle"] = 1.0
    with pytest.raises(PotentialFormatError, match="wiggle"):
        potential_from_dict(d)


def test_dict_rejects_bad_form():
    with pytest.raises(PotentialFormatError):
        potential_from_dict({"form": "sinusoid", "coeffs": [1.0]})


def test_piecewise_round_trip_and_evaluation():
    # the example well split into two pieces with a smooth join at y = 2,
    # written in local coordinates relative to each piece's left edge
    spec = PotentialSpec.piecewise(
        breaks=[0.0, 2.0],
        coeffs=[[1.0, -4.0, 3.0], [1.0, 0.0, -1.0]],
        a=2.0, b=3.0)
    assert spec.evaluate(2.0) == pytest.approx(-1.0)
    assert spec.evaluate(1.5) == pytest.approx((1.5 - 2.0) ** 2 - 1.0)
    assert spec.evaluate(2.5) == pytest.approx((2.5 - 2.0) ** 2 - 1.0)
    d = potential_to_dict(spec)
    back = potential_from_dict(d)
    ys = np.linspace(0.0, 3.0, 33)
    np.testing.assert_allclose(back.evaluate(ys), spec.evaluate(ys), atol=1e-14)


def test_extension_matches_inside_and_is_stiff_outside():
    spec = example_quadratic()
    ext = extend(spec)
    ys = np.linspace(0.0, 3.0, 61)
    np.testing.assert_allclose(ext.evaluate(ys), spec.evaluate(ys), atol=1e-12)
    # beyond the blend the profile keeps curving upward at least as fast
    # as the declared floor
    far = np.linspace(3.0, 5.0, 41)
    assert np.all(ext.evaluate(far, order=2) >= spec.u0 - 1e-9)
    # value and slope continuous at the cutoff
    eps = 1e-7
    assert ext.evaluate(3.0 + eps) == pytest.approx(ext.evaluate(3.0 - eps), abs=1e-5)
    assert ext.evaluate(3.0 + eps, order=1) == pytest.approx(
        ext.evaluate(3.0 - eps, order=1), abs=1e-4)


def test_extension_rejects_width_that_dips():
    # cubic well -0.1 y^3 + 1.2 y^2 - 3.6 y + 2.7: minimum at 2, zero at 3,
    # curvature 0.6 at the cutoff but falling 0.6 per unit length, so a wide
    # blend would sink below the declared floor of 0.5
    spec = PotentialSpec.piecewise(
        breaks=[0.0], coeffs=[[-0.1, 1.2, -3.6, 2.7]], a=2.0, b=3.0, u0=0.5)
    with pytest.raises(ExtensionError, match="u0"):
        extend(spec, blend_width=0.5)
    ext = extend(spec, blend_width=0.05)
    far = np.linspace(3.0, 3.2, 21)
    assert np.all(ext.evaluate(far, order=2) >= 0.5 - 1e-9)


def test_extension_tables_shapes():
    ext = extend(example_quadratic())
    breaks, c1 = ext.tables(order=1)
    assert breaks.ndim == 1 and c1.ndim == 2
    assert len(breaks) == c1.shape[0]
    breaks0, c0 = ext.tables(order=0)
    assert c0.shape[1] == c1.shape[1] + 1


def test_quadratic_rejects_nonconvex():
    with pytest.raises((PotentialFormatError, ConfigError)):
        PotentialSpec.quadratic(-1.0, 0.0, 0.0)
