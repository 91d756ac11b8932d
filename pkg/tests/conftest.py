import math

import pytest

from filippov.expr import PlanarField, ScalarField
from filippov.system import Domain, FilippovSystem, RegionSpec, SwitchingCurve


def build_plane_system(fields_pos, fields_neg, bounds=(-2, 2, -1, 1), h="y", validate=False):
    """h-split plane with one curve; fields given as (fx, fy) source pairs."""
    domain = Domain("plane_rect", *bounds)
    curve = SwitchingCurve(0, ScalarField(h), 1, 2)
    regions = [
        RegionSpec(1, PlanarField(*fields_pos), [(0, +1)]),
        RegionSpec(2, PlanarField(*fields_neg), [(0, -1)]),
    ]
    return FilippovSystem(domain, [curve], regions, validate=validate)


@pytest.fixture
def flat_system():
    """h = y, sliding everywhere: Y1 = (1,-1) above, Y2 = (1,1) below."""
    return build_plane_system(("1", "-1"), ("1", "1"))


@pytest.fixture
def fold_system():
    """h = y, Y1 = (1, x): sliding for x<0, fold at the origin, crossing x>0."""
    return build_plane_system(("1", "x"), ("1", "1"))


@pytest.fixture
def pe_system():
    """h = y, anti-parallel fields with a pseudo-equilibrium at the origin."""
    return build_plane_system(("-x", "-1"), ("-x", "1"))


@pytest.fixture
def belt_system():
    """Flat torus with a sliding belt at y=0 and an escaping belt at y=0.5."""
    domain = Domain("flat_torus", 0, 1, 0, 1)
    curve = SwitchingCurve(0, ScalarField("sin(2*pi*y)"), 1, 2)
    regions = [
        RegionSpec(1, PlanarField("1", "-1"), [(0, +1)]),
        RegionSpec(2, PlanarField("1", "1"), [(0, -1)]),
    ]
    return FilippovSystem(domain, [curve], regions, validate=False)


@pytest.fixture
def circle_system():
    """Rotation field with a switching curve the circular orbit never meets."""
    domain = Domain("plane_rect", -2, 2, -2, 2)
    curve = SwitchingCurve(0, ScalarField("y + 1.9"), 1, 2)
    regions = [
        RegionSpec(1, PlanarField("-y", "x"), [(0, +1)]),
        RegionSpec(2, PlanarField("1", "0"), [(0, -1)]),
    ]
    return FilippovSystem(domain, [curve], regions, validate=False)
