"""
Tests for baselines app
"""

import numpy as np
from django.test import SimpleTestCase

from Hybridsim.exceptions import ConfigError
from agent.services import ObservationSnapshot, StateVec
from hybrid.services import CommMode
from radio.services import RatKind
from .services import (
    BENEFIT,
    COST,
    StaticPolicy,
    StaticSelector,
    TopsisConfig,
    TopsisInput,
    TopsisSelector,
    build_decision_matrix,
    static_select,
    topsis_rank,
    topsis_select,
)

G5 = RatKind.ITS_G5
LTE = RatKind.LTE_V2X_PC5
SAME_LATENCY = {G5: 5.0, LTE: 5.0}


def snapshot(snir_g5, snir_lte, prr_g5, prr_lte):
    return ObservationSnapshot(snir_db={G5: snir_g5, LTE: snir_lte}, prr={G5: prr_g5, LTE: prr_lte})


class StaticSelectTestCase(SimpleTestCase):
    """Test fixed-mode baselines"""

    def test_modes(self):
        """Each policy maps to its mode"""
        self.assertEqual(static_select(StaticPolicy.ALWAYS_ITS_G5), CommMode.SINGLE_ITS_G5)
        self.assertEqual(static_select(StaticPolicy.ALWAYS_LTE), CommMode.SINGLE_LTE)
        self.assertEqual(static_select(StaticPolicy.ALWAYS_REDUNDANT), CommMode.HYBRID_REDUNDANT)

    def test_ignores_observations(self):
        """The choice never depends on what was observed"""
        selector = StaticSelector(StaticPolicy.ALWAYS_REDUNDANT)
        rng = np.random.default_rng(0)
        for _ in range(20):
            state = StateVec.from_array(rng.uniform(size=6))
            obs = snapshot(*rng.uniform(-10, 40, size=2), *rng.uniform(size=2))
            self.assertEqual(selector.select(state, obs), CommMode.HYBRID_REDUNDANT)
        self.assertEqual(selector.name, 'static-redundant')
        self.assertFalse(selector.learns)


class TopsisRankTestCase(SimpleTestCase):
    """Test closeness coefficients"""

    def test_single_benefit(self):
        """One benefit criterion ranks by value"""
        closeness = topsis_rank(TopsisInput([[1], [2], [3], [4]], [1.0], [BENEFIT]))
        self.assertTrue((np.diff(closeness) > 0).all())
        self.assertEqual(int(np.argmax(closeness)), 3)

    def test_identical_alternatives(self):
        """Indistinguishable alternatives all get 0.5"""
        closeness = topsis_rank(TopsisInput(np.ones((4, 3)), [0.2, 0.3, 0.5], [BENEFIT, COST, BENEFIT]))
        np.testing.assert_array_equal(closeness, 0.5)

    def test_symmetric_pair(self):
        """[[1,0],[0,1]] with equal weights ties at 0.5"""
        closeness = topsis_rank(TopsisInput([[1, 0], [0, 1]], [0.5, 0.5], [BENEFIT, BENEFIT]))
        np.testing.assert_allclose(closeness, [0.5, 0.5])

    def test_cost_sense(self):
        """Lower is better on a cost criterion"""
        closeness = topsis_rank(TopsisInput([[1], [2], [3]], [1.0], [COST]))
        self.assertEqual(int(np.argmax(closeness)), 0)

    def test_zero_column(self):
        """A zero-norm column contributes nothing"""
        closeness = topsis_rank(TopsisInput([[0, 1], [0, 2]], [0.5, 0.5], [BENEFIT, BENEFIT]))
        self.assertTrue(np.isfinite(closeness).all())
        self.assertEqual(int(np.argmax(closeness)), 1)

    def test_scale_invariance(self):
        """Rescaling a column leaves the closeness unchanged"""
        rng = np.random.default_rng(0)
        matrix = rng.uniform(1, 10, size=(4, 4))
        weights = [0.1, 0.2, 0.3, 0.4]
        senses = [BENEFIT, COST, BENEFIT, COST]
        base = topsis_rank(TopsisInput(matrix, weights, senses))
        scaled = topsis_rank(TopsisInput(matrix * [3.0, 0.5, 7.0, 100.0], weights, senses))
        np.testing.assert_allclose(base, scaled)

    def test_invalid_inputs(self):
        """NaN cells and unnormalized weights are rejected"""
        with self.assertRaises(ValueError):
            TopsisInput([[np.nan, 1.0]], [0.5, 0.5], [BENEFIT, BENEFIT])
        with self.assertRaises(ValueError):
            TopsisInput([[1.0, 1.0]], [0.5, 0.6], [BENEFIT, BENEFIT])
        with self.assertRaises(ValueError):
            TopsisInput([[1.0, 1.0]], [0.5, 0.5], [BENEFIT, 'neutral'])


class TopsisSelectTestCase(SimpleTestCase):
    """Test the MCDM mode selector"""

    def test_decision_matrix(self):
        """Redundant takes the better RAT and costs two, division the worse"""
        matrix = build_decision_matrix(snapshot(20.0, 10.0, 0.9, 0.8), {G5: 2.0, LTE: 10.0})
        self.assertEqual(list(matrix.columns), ['snir', 'prr', 'resource_cost', 'latency'])
        self.assertEqual(matrix.loc['HYBRID_REDUNDANT'].tolist(), [20.0, 0.9, 2.0, 2.0])
        self.assertEqual(matrix.loc['HYBRID_DIVISION'].tolist(), [10.0, 0.8, 1.0, 10.0])

    def test_dominant_g5(self):
        """ITS-G5 better on every criterion wins"""
        obs = snapshot(30.0, 10.0, 0.95, 0.6)
        self.assertEqual(topsis_select(obs, (0.25,) * 4, {G5: 2.0, LTE: 10.0}), CommMode.SINGLE_ITS_G5)

    def test_identical_rats(self):
        """With identical RATs the cost of duplication picks a single mode"""
        mode = topsis_select(snapshot(15.0, 15.0, 0.8, 0.8), (0.25,) * 4, SAME_LATENCY)
        self.assertIn(mode, (CommMode.SINGLE_ITS_G5, CommMode.SINGLE_LTE))

    def test_cost_only(self):
        """All weight on resource cost never duplicates"""
        rng = np.random.default_rng(0)
        for _ in range(50):
            obs = snapshot(*rng.uniform(-10, 40, size=2), *rng.uniform(size=2))
            self.assertNotEqual(topsis_select(obs, (0.0, 0.0, 1.0, 0.0)), CommMode.HYBRID_REDUNDANT)

    def test_missing_observations(self):
        """Unobserved RATs fall back to neutral values"""
        mode = topsis_select(snapshot(None, None, None, None), (0.25,) * 4, SAME_LATENCY)
        self.assertIsInstance(mode, CommMode)

    def test_selector(self):
        """TopsisSelector ranks on the snapshot it is given"""
        selector = TopsisSelector(TopsisConfig(), {G5: 2.0, LTE: 10.0})
        state = StateVec.from_array(np.full(6, 0.5))
        self.assertEqual(selector.select(state, snapshot(30.0, 10.0, 0.95, 0.6)), CommMode.SINGLE_ITS_G5)

    def test_invalid_weights(self):
        """Weights must sum to one"""
        with self.assertRaises(ConfigError):
            TopsisConfig(weights=(0.5, 0.5, 0.5, 0.5)).validate()
