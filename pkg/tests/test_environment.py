import math

import numpy as np
import pytest

from environment import (
    LOG_REWARD_FLOOR,
    P_PARALLEL,
    TorusPotential,
    grid_reward,
    line_reward,
    make_env,
    target_density,
    torus_reward,
)
from errors import UnknownNameError
from manifold import Lattice, Space
from policy import MixtureKind


def test_line_reward_peak_at_twenty():
    assert float(line_reward(20.0)) == pytest.approx(1 / math.sqrt(2 * math.pi * 0.1), rel=1e-3)


def test_grid_reward_at_a_centre():
    assert float(grid_reward(np.array([7.0, 7.0]))) == pytest.approx(1 / (4 * math.pi), rel=1e-3)
    assert float(grid_reward(np.array([7.0, 7.0]))) == pytest.approx(0.0796, abs=1e-4)


def test_rewards_vanish_outside_the_box():
    assert float(line_reward(-6.0)) == 0.0
    assert float(line_reward(23.5)) == 0.0
    assert float(grid_reward(np.array([16.0, 0.0]))) == 0.0


def test_log_reward_is_floored(line_env):
    values = line_env.log_reward_clipped(np.array([[30.0], [20.0]]))
    assert values[0] == LOG_REWARD_FLOOR
    assert values[1] == pytest.approx(math.log(float(line_reward(20.0))))


def test_line_target_has_quarter_mass_near_twenty(line_env):
    target = line_env.target_density()
    assert target.values.sum() == pytest.approx(1.0, abs=1e-9)
    assert target.mass_between([18.0], [22.0]) == pytest.approx(0.25, abs=1e-3)


def test_grid_target_splits_evenly_between_quadrants(grid_env):
    target = target_density(grid_env)
    for lower, upper in (([0, 0], [15, 15]), ([-15, 0], [0, 15]), ([-15, -15], [0, 0]), ([0, -15], [15, 0])):
        assert target.mass_between(lower, upper) == pytest.approx(0.25, abs=1e-3)


def test_target_on_coarser_grid(line_env):
    coarse = target_density(line_env, spacing=0.1)
    assert coarse.lattice.shape == (281,)
    assert coarse.values.sum() == pytest.approx(1.0, abs=1e-9)


def test_target_mass_is_stable_under_refinement(line_env):
    coarse = target_density(line_env, spacing=0.02).values
    fine = target_density(line_env, spacing=0.01).values
    assert fine.shape == (2 * coarse.shape[0] - 1,)
    # 경계 노드는 이웃한 두 거친 셀에 반씩
    aggregated = np.convolve(fine, [0.5, 1.0, 0.5], mode="same")[::2]
    assert np.max(np.abs(aggregated - coarse)) < 1e-3


def _entropy(weights):
    p = weights / weights.sum()
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


def test_colder_torus_reward_is_more_concentrated():
    potential = TorusPotential.synthetic()
    nodes = Lattice.build(Space.torus(2), 0.1).nodes()
    warm = torus_reward(nodes[..., 0], nodes[..., 1], potential, beta=0.4009)
    cold = torus_reward(nodes[..., 0], nodes[..., 1], potential, beta=2 * 0.4009)
    assert _entropy(cold) < _entropy(warm)


def test_environment_shapes(line_env, grid_env, torus_env):
    assert (line_env.dim, grid_env.dim, torus_env.dim) == (1, 2, 2)
    assert line_env.policy_kind == MixtureKind.GAUSS_1D
    assert grid_env.policy_kind == MixtureKind.GAUSS_2D
    assert torus_env.policy_kind == MixtureKind.VON_MISES_2D
    assert [len(e.basins()) for e in (line_env, grid_env, torus_env)] == [3, 4, 6]
    assert np.array_equal(torus_env.source, np.asarray(P_PARALLEL))
    x = np.zeros((5, 2))
    assert np.array_equal(grid_env.cv(x), x)
    assert grid_env.cv_jacobian(x).shape == (5, 2, 2)


def test_unknown_environment():
    with pytest.raises(UnknownNameError) as exc:
        make_env("sphere")
    assert exc.value.exit_code == 3
    assert "line, grid, torus" in str(exc.value)


# =========================
# Torus
# =========================
def test_torus_reward_needs_a_potential():
    with pytest.raises(RuntimeError):
        torus_reward(0.0, 0.0, None)


def test_synthetic_potential_is_deepest_at_source(torus_env):
    potential = TorusPotential.synthetic()
    assert potential.values.min() == 0.0
    e = potential.energy(np.asarray(P_PARALLEL))
    assert float(e) < 0.5
    assert float(torus_env.reward(np.asarray(P_PARALLEL))) > 0.8
    # 주기적: 2pi 이동해도 같은 값
    assert float(potential.energy(np.asarray(P_PARALLEL) + 2 * math.pi)) == pytest.approx(float(e), abs=1e-12)


def test_potential_file_round_trip(tmp_path):
    potential = TorusPotential.synthetic(spacing=0.1)
    potential.save(tmp_path / "fes.txt")
    loaded = TorusPotential.from_file(tmp_path / "fes.txt")
    assert loaded.lattice.same_as(potential.lattice)
    assert np.array_equal(loaded.values, potential.values)


def test_potential_must_live_on_the_torus():
    lattice = Lattice.build(Space.box([0.0, 0.0], [1.0, 1.0]), 0.1)
    with pytest.raises(ValueError):
        TorusPotential(lattice, np.zeros(lattice.shape))


def test_loaded_potential_is_shifted_to_zero_minimum():
    lattice = Lattice.build(Space.torus(2), 0.5)
    potential = TorusPotential(lattice, np.full(lattice.shape, 12.0))
    assert np.array_equal(potential.values, np.zeros(lattice.shape))


def test_torus_env_reads_potential_from_environment(tmp_path, monkeypatch):
    TorusPotential.synthetic(depths={"alpha_D": 25.0}, spacing=0.1).save(tmp_path / "fes.txt")
    monkeypatch.setenv("METAGFN_TORUS_POTENTIAL", str(tmp_path / "fes.txt"))
    env = make_env("torus")
    assert env.mode_names[0] == "P_parallel"
    assert len(env.mode_names) == 6
    assert float(env.reward(np.array([1.05, -2.1]))) > 0.0
