import math

import numpy as np
import pytest

from manifold import Lattice, Space, displacement, reflect, wrap

TORUS2 = Space.torus(2)
TORUS1 = Space.torus(1)
LINE_BOX = Space.box([-5.0], [23.0])


def test_wrap_torus_reduces_into_canonical_interval():
    out = wrap(np.array([3.5, 0.0]), TORUS2)
    assert out[0] == pytest.approx(3.5 - 2 * math.pi)
    assert out[1] == 0.0


def test_wrap_canonical_point_is_untouched():
    x = np.array([0.0, -math.pi])
    assert np.array_equal(wrap(x, TORUS2), x)


def test_wrap_maps_pi_to_minus_pi():
    out = wrap(np.array([math.pi, -math.pi]), TORUS2)
    assert np.all(out == -math.pi)


def test_wrap_is_identity_on_box():
    assert wrap(np.array([7.0]), LINE_BOX)[0] == 7.0


def test_wrap_is_idempotent(rng):
    x = rng.uniform(-50, 50, size=(1000, 2))
    once = wrap(x, TORUS2)
    assert np.array_equal(wrap(once, TORUS2), once)
    assert np.all((once >= -math.pi) & (once < math.pi))


def test_wrap_rejects_wrong_dimension():
    with pytest.raises(ValueError):
        wrap(np.zeros(3), TORUS2)


@pytest.mark.parametrize(
    "x, p, expected_x, expected_p",
    [
        (-5.1, -0.3, -4.9, 0.3),
        (10.0, 1.0, 10.0, 1.0),
        (23.4, 0.2, 22.6, -0.2),
    ],
)
def test_reflect_mirrors_about_the_wall(x, p, expected_x, expected_p):
    x_new, p_new = reflect(np.array([x]), np.array([p]), LINE_BOX)
    assert x_new[0] == pytest.approx(expected_x)
    assert p_new[0] == pytest.approx(expected_p)


def test_reflect_preserves_momentum_magnitude(rng):
    x = rng.uniform(-10, 28, size=(500, 1))
    p = rng.normal(size=(500, 1))
    _, p_new = reflect(x, p, LINE_BOX)
    assert np.array_equal(np.abs(p_new), np.abs(p))


def test_reflect_rejects_full_width_overshoot():
    with pytest.raises(ValueError):
        reflect(np.array([23.0 + 28.0]), np.array([1.0]), LINE_BOX)


def test_reflect_rejects_torus():
    with pytest.raises(ValueError):
        reflect(np.zeros(2), np.zeros(2), TORUS2)


def test_displacement_takes_short_way_across_seam():
    d = displacement(np.array([3.0]), np.array([-3.0]), TORUS1)
    assert d[0] == pytest.approx(2 * math.pi - 6.0)


def test_displacement_box_and_identity():
    assert displacement(np.array([2.0]), np.array([5.0]), LINE_BOX)[0] == 3.0
    assert displacement(np.array([0.5]), np.array([0.5]), TORUS1)[0] == 0.0


def test_displacement_is_antisymmetric_and_bounded(rng):
    a = wrap(rng.uniform(-4, 4, size=(1000, 2)), TORUS2)
    b = wrap(rng.uniform(-4, 4, size=(1000, 2)), TORUS2)
    ab = displacement(a, b, TORUS2)
    ba = displacement(b, a, TORUS2)
    assert np.all(np.abs(ab) <= math.pi)
    # 정확히 pi 떨어진 경우만 부호가 같을 수 있음
    away = np.abs(np.abs(ab) - math.pi) > 1e-12
    assert np.allclose(ab[away], -ba[away])


def test_box_lattice_includes_both_walls():
    lattice = Lattice.build(LINE_BOX, 0.01)
    assert lattice.shape == (2801,)
    axis = lattice.axes()[0]
    assert axis[0] == -5.0
    assert axis[-1] == pytest.approx(23.0)


def test_box_lattice_clamps_out_of_range_points():
    lattice = Lattice.build(LINE_BOX, 0.01)
    (idx,) = lattice.cell_index(np.array([[-7.0], [30.0], [-2.0]]))
    assert idx.tolist() == [0, 2800, 300]


def test_torus_lattice_neighbouring_cells_across_seam():
    lattice = Lattice.build(TORUS1, 0.1)
    n = lattice.shape[0]
    assert n == 63
    (idx,) = lattice.cell_index(np.array([[math.pi - 1e-9], [-math.pi]]))
    assert idx.tolist() == [n - 1, 0]
