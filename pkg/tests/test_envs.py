import numpy as np
import pytest
from scipy import stats

from bisim.envs import (
    DEFAULT_LAYOUT_ROWS,
    DOWN,
    GridLayout,
    LEFT,
    NoiseModel,
    RIGHT,
    UP,
    build_gridworld,
    build_pessimism_mdp,
    default_layout,
    duplicate_mdp,
    embed_xy,
    load_layout,
    mirror_state_map,
    parse_layout,
    random_deterministic_mdp,
)
from bisim.exact import solve_fixed_point
from bisim.mdp import validate, value_iteration_optimal


class TestLayout:
    def test_default_counts(self):
        lay = default_layout()
        assert lay.num_states == 31
        assert len(lay.goal_states) == 2

    def test_state_ids_row_major(self):
        lay = default_layout()
        assert lay.state_of[(0, 0)] == 0
        assert lay.state_of[(0, 4)] == 4
        assert lay.state_of[(3, 2)] == 15   # hallway, the only row-3 cell

    def test_rejects_bad_character(self):
        with pytest.raises(ValueError, match="invalid character"):
            GridLayout(["G.", ".X"])

    def test_rejects_ragged_rows(self):
        with pytest.raises(ValueError, match="length"):
            GridLayout(["G..", ".."])

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            GridLayout([])

    def test_parse_and_load_roundtrip(self, tmp_path):
        text = "\n".join(DEFAULT_LAYOUT_ROWS) + "\n"
        assert parse_layout(text).num_states == 31
        path = tmp_path / "grid.txt"
        path.write_text(text)
        assert load_layout(path).num_states == 31

    def test_mirror_map_default(self):
        lay = default_layout()
        mirror = mirror_state_map(lay)
        assert mirror[lay.state_of[(0, 0)]] == lay.state_of[(6, 0)]
        assert mirror[lay.state_of[(3, 2)]] == lay.state_of[(3, 2)]
        # An involution that maps goals to goals.
        np.testing.assert_array_equal(mirror[mirror], np.arange(31))
        assert sorted(mirror[lay.goal_states]) == sorted(lay.goal_states)

    def test_mirror_map_rejects_asymmetric(self):
        with pytest.raises(ValueError, match="mirror"):
            mirror_state_map(GridLayout(["G.", "..", ".#"]))


class TestBuildGridworld:
    def test_shape(self):
        mdp = build_gridworld(default_layout(), 0.9)
        assert mdp.num_states == 31
        assert mdp.num_actions == 4
        assert validate(mdp) == []

    def test_wall_bump_stays_at_penalty(self):
        lay = default_layout()
        mdp = build_gridworld(lay, 0.9)
        corner = lay.state_of[(0, 0)]
        for a in (UP, LEFT):
            assert mdp.next_state[corner, a] == corner
            assert mdp.reward[corner, a] == -1.0

    def test_goal_entry_reward(self):
        lay = default_layout()
        mdp = build_gridworld(lay, 0.9)
        below_goal = lay.state_of[(1, 0)]
        assert mdp.next_state[below_goal, UP] == lay.state_of[(0, 0)]
        assert mdp.reward[below_goal, UP] == 1.0

    def test_plain_move_zero_reward(self):
        lay = default_layout()
        mdp = build_gridworld(lay, 0.9)
        s = lay.state_of[(1, 2)]
        assert mdp.reward[s, RIGHT] == 0.0
        assert mdp.next_state[s, RIGHT] == lay.state_of[(1, 3)]

    def test_hallway_connects_rooms(self):
        lay = default_layout()
        mdp = build_gridworld(lay, 0.9)
        hall = lay.state_of[(3, 2)]
        assert mdp.next_state[hall, UP] == lay.state_of[(2, 2)]
        assert mdp.next_state[hall, DOWN] == lay.state_of[(4, 2)]
        assert mdp.next_state[hall, LEFT] == hall
        assert mdp.reward[hall, LEFT] == -1.0

    def test_goal_cells_not_absorbing(self):
        lay = default_layout()
        mdp = build_gridworld(lay, 0.9)
        goal = lay.state_of[(0, 0)]
        assert mdp.next_state[goal, RIGHT] == lay.state_of[(0, 1)]
        assert mdp.reward[goal, RIGHT] == 0.0

    def test_rejects_goalless_layout(self):
        with pytest.raises(ValueError, match="goal"):
            build_gridworld(GridLayout(["...", "..."]), 0.9)

    def test_mirror_pairs_indistinguishable_under_lax_metric(self):
        # The reflection swaps the up/down action labels, so the plain
        # action-matched metric may separate mirror twins; the label-free
        # variant must not.
        lay = default_layout()
        mdp = build_gridworld(lay, 0.9)
        mirror = mirror_state_map(lay)
        d_lax, _ = solve_fixed_point(mdp, "lax", tol=1e-8)
        for s in range(31):
            assert d_lax[s, mirror[s]] <= 1e-7


class TestEmbedXy:
    def test_corner_extremes(self):
        lay = default_layout()
        np.testing.assert_allclose(
            embed_xy(lay, lay.state_of[(0, 0)]), [-1.0, -1.0])
        np.testing.assert_allclose(
            embed_xy(lay, lay.state_of[(6, 4)]), [1.0, 1.0])

    def test_degenerate_axis_collapses_to_zero(self):
        lay = GridLayout(["G", ".", "."])
        np.testing.assert_allclose(embed_xy(lay, 0), [0.0, -1.0])

    def test_zero_sigma_noise_is_identity(self):
        lay = default_layout()
        rng = np.random.default_rng(0)
        noise = NoiseModel(sigma=0.0, clip=0.3)
        np.testing.assert_array_equal(
            embed_xy(lay, 7, noise, rng), embed_xy(lay, 7))

    def test_noise_requires_rng(self):
        with pytest.raises(ValueError, match="rng"):
            embed_xy(default_layout(), 0, NoiseModel(0.1, 0.3))


class TestNoiseModel:
    def test_truncated_sd_matches_closed_form(self):
        rng = np.random.default_rng(1)
        noise = NoiseModel(sigma=0.1, clip=0.3)
        draws = noise.draw(rng, (100_000,))
        expected_sd = stats.truncnorm.std(-3.0, 3.0, loc=0.0, scale=0.1)
        assert abs(draws.std() - expected_sd) <= 0.1 * expected_sd
        assert np.abs(draws).max() <= 0.3

    def test_clamp_mode_respects_bounds(self):
        rng = np.random.default_rng(2)
        noise = NoiseModel(sigma=0.5, clip=0.3, mode="clamp")
        draws = noise.draw(rng, (10_000,))
        assert np.abs(draws).max() <= 0.3
        # Clamping piles mass on the boundary; truncation does not.
        assert (np.abs(draws) == 0.3).sum() > 0

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            NoiseModel(-0.1, 0.3)
        with pytest.raises(ValueError):
            NoiseModel(0.1, 0.0)
        with pytest.raises(ValueError):
            NoiseModel(0.1, 0.3, mode="wrap")


class TestPessimismMdp:
    def test_reference_values(self):
        mdp = build_pessimism_mdp(k=1.0, gamma=0.9)
        v = value_iteration_optimal(mdp, 1e-8)
        np.testing.assert_allclose(v[[0, 1]], [10.0, 10.0], atol=1e-7)
        d, _ = solve_fixed_point(mdp, "bisim", tol=1e-8)
        np.testing.assert_allclose(d[0, 1], 10.0, atol=1e-7)
        d_lax, _ = solve_fixed_point(mdp, "lax", tol=1e-8)
        assert d_lax[0, 1] <= 1e-7


class TestDuplicateMdp:
    def test_row_sums(self):
        mdp = duplicate_mdp(build_pessimism_mdp(), 0.3)
        np.testing.assert_allclose(mdp.transition.sum(axis=2), 1.0)
        assert validate(mdp) == []

    def test_zero_jump_is_two_copies(self):
        base = build_pessimism_mdp()
        mdp = duplicate_mdp(base, 0.0)
        for s in range(3):
            for a in range(2):
                assert mdp.transition[s, a, base.next_state[s, a]] == 1.0
                assert mdp.transition[s + 3, a, base.next_state[s, a] + 3] == 1.0

    @pytest.mark.parametrize("jump", [0.0, 0.5, 1.0])
    def test_twin_distances_zero_at_fixed_point(self, jump):
        base = random_deterministic_mdp(4, 2, gamma=0.8, seed=5)
        mdp = duplicate_mdp(base, jump)
        d, _ = solve_fixed_point(mdp, "bisim", tol=1e-4)
        for s in range(4):
            assert d[s, s + 4] <= 1e-9

    def test_rejects_bad_probability(self):
        with pytest.raises(ValueError):
            duplicate_mdp(build_pessimism_mdp(), 1.5)


class TestRandomMdp:
    def test_seed_reproducibility(self):
        a = random_deterministic_mdp(10, 3, seed=42)
        b = random_deterministic_mdp(10, 3, seed=42)
        np.testing.assert_array_equal(a.next_state, b.next_state)
        np.testing.assert_array_equal(a.reward, b.reward)

    def test_generated_mdp_validates(self):
        for seed in range(5):
            assert validate(random_deterministic_mdp(8, 2, seed=seed)) == []

    def test_single_action_lax_equals_bisim(self):
        mdp = random_deterministic_mdp(6, 1, seed=3)
        d, _ = solve_fixed_point(mdp, "bisim", tol=1e-8)
        d_lax, _ = solve_fixed_point(mdp, "lax", tol=1e-8)
        np.testing.assert_array_equal(d, d_lax)

    def test_size_validation(self):
        with pytest.raises(ValueError):
            random_deterministic_mdp(0, 2)
