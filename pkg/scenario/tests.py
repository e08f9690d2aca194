"""
Tests for scenario app
"""

from dataclasses import replace

import numpy as np
from django.test import SimpleTestCase

from Hybridsim.exceptions import ConfigError, UnknownVehicleError
from .services import (
    BACKGROUND_G5,
    BACKGROUND_LTE,
    NO_RAT,
    ScenarioConfig,
    background_in_range,
    init_scenario,
    neighbor_ids,
    neighbors_in_range,
    step_mobility,
)


class InitScenarioTestCase(SimpleTestCase):
    """Test initial vehicle placement"""

    def test_platoon_positions(self):
        """Members trail the leader at the configured spacing"""
        state = init_scenario(ScenarioConfig(platoon_size=5, platoon_spacing=10, platoon_start=100))
        np.testing.assert_allclose(state.positions[state.platoon_ids], [100, 90, 80, 70, 60])
        self.assertEqual(state.platoon_ids, [0, 1, 2, 3, 4])

    def test_no_background(self):
        """background_count=0 leaves only the platoon"""
        state = init_scenario(ScenarioConfig(background_count=0))
        self.assertEqual(state.vehicle_count, 5)

    def test_same_seed_same_positions(self):
        """Placement is reproducible per seed"""
        a = init_scenario(ScenarioConfig(seed=3))
        b = init_scenario(ScenarioConfig(seed=3))
        c = init_scenario(ScenarioConfig(seed=4))
        np.testing.assert_array_equal(a.positions, b.positions)
        np.testing.assert_array_equal(a.background_rats, b.background_rats)
        self.assertFalse(np.array_equal(a.positions, c.positions))

    def test_vehicles_on_road(self):
        """Every vehicle starts within the highway"""
        state = init_scenario(ScenarioConfig(background_count=200, seed=1))
        self.assertTrue(((state.positions >= 0) & (state.positions <= 2000)).all())

    def test_background_rats(self):
        """Background stations use one RAT each, platoon members none"""
        state = init_scenario(ScenarioConfig(background_count=100, seed=2))
        background = state.background_rats[~state.is_platoon]
        self.assertTrue(set(background) <= {BACKGROUND_G5, BACKGROUND_LTE})
        self.assertTrue((state.background_rats[state.is_platoon] == NO_RAT).all())

    def test_invalid_spacing(self):
        """Negative spacing is rejected"""
        with self.assertRaises(ConfigError):
            init_scenario(ScenarioConfig(platoon_spacing=-1))

    def test_platoon_off_road(self):
        """A platoon that does not fit behind its start position is rejected"""
        with self.assertRaises(ConfigError):
            ScenarioConfig(platoon_start=20).validate()

    def test_unknown_vehicle(self):
        """Lookups of absent ids raise a KeyError"""
        state = init_scenario(ScenarioConfig(background_count=0))
        with self.assertRaises(UnknownVehicleError):
            state.vehicle(99)
        with self.assertRaises(KeyError):
            state.vehicle(-1)


class StepMobilityTestCase(SimpleTestCase):
    """Test vehicle movement"""

    def setUp(self):
        self.state = init_scenario(ScenarioConfig(background_count=3, seed=0))

    def test_platoon_kinematics(self):
        """Leader advances speed * dt and gaps are preserved"""
        moved = step_mobility(self.state, 1.0)
        platoon = moved.positions[moved.platoon_ids]
        self.assertAlmostEqual(platoon[0], 110.0)
        np.testing.assert_allclose(-np.diff(platoon), 10.0)

    def test_background_wrap(self):
        """A vehicle leaving the road re-enters at the other end"""
        positions = self.state.positions.copy()
        directions = self.state.directions.copy()
        positions[5], directions[5] = 1995.0, 1
        state = replace(self.state, positions=positions, directions=directions)
        moved = step_mobility(state, 1.0)
        self.assertAlmostEqual(moved.positions[5], 15.0)

    def test_step_linearity(self):
        """Ten 0.1 s steps equal one 1 s step"""
        small = self.state
        for _ in range(10):
            small = step_mobility(small, 0.1)
        big = step_mobility(self.state, 1.0)
        np.testing.assert_allclose(small.positions, big.positions, atol=1e-9)
        self.assertAlmostEqual(small.time_s, 1.0)

    def test_input_untouched(self):
        """Stepping returns a new state"""
        before = self.state.positions.copy()
        step_mobility(self.state, 1.0)
        np.testing.assert_array_equal(self.state.positions, before)

    def test_platoon_reenters_rigidly(self):
        """The platoon wraps as a column once the leader passes the end"""
        state = self.state
        for _ in range(200):
            state = step_mobility(state, 1.0)
            platoon = state.positions[state.platoon_ids]
            np.testing.assert_allclose(-np.diff(platoon), 10.0, atol=1e-9)
            self.assertTrue((platoon >= 0).all() and (platoon <= 2000).all())

    def test_non_positive_dt(self):
        """dt must be positive"""
        with self.assertRaises(ValueError):
            step_mobility(self.state, 0.0)


class NeighborsTestCase(SimpleTestCase):
    """Test range queries"""

    def setUp(self):
        self.state = init_scenario(ScenarioConfig(background_count=40, seed=5))

    def test_platoon_members_in_range(self):
        """The leader always hears the other four members at 500 m"""
        ids = {v.id for v in neighbors_in_range(self.state, 0, 500)}
        self.assertTrue({1, 2, 3, 4} <= ids)
        self.assertNotIn(0, ids)

    def test_short_range(self):
        """Members 10 m apart are not within 5 m"""
        leader = self.state.vehicle(0)
        members = [v for v in neighbors_in_range(self.state, leader, 5) if v.is_platoon_member]
        self.assertEqual(members, [])

    def test_symmetry(self):
        """w in neighbors(v) iff v in neighbors(w)"""
        for v in range(self.state.vehicle_count):
            for w in neighbor_ids(self.state, v, 300):
                self.assertIn(v, neighbor_ids(self.state, w, 300))

    def test_ordered_by_id(self):
        """Results are sorted by vehicle id"""
        ids = neighbor_ids(self.state, 0, 2000)
        self.assertEqual(ids, sorted(ids))

    def test_background_in_range(self):
        """Only background stations on the requested RAT are returned"""
        ids = background_in_range(self.state, 100.0, 500.0, BACKGROUND_G5)
        for i in ids:
            self.assertEqual(self.state.background_rats[i], BACKGROUND_G5)
            self.assertLessEqual(abs(self.state.positions[i] - 100.0), 500.0)
