"""
Tests for agent app
"""

import numpy as np
from django.test import SimpleTestCase

from Hybridsim.exceptions import ConfigError
from experiments.validation import buffer_uniformity_check
from hybrid.services import AckRecord, CommMode
from nn.services import AdamState, MlpParams, forward, init_weights, sync_target
from radio.services import RatKind
from .services import (
    DOUBLE_Q,
    MAX_Q,
    AgentConfig,
    DQNAgent,
    LinkObserver,
    ReplayBuffer,
    StateVec,
    Transition,
    bootstrap_values,
    build_state,
    compute_reward,
    epsilon_decay,
    link_quality_delta,
    performance_satisfaction,
    select_action,
    store_transition,
    td_targets,
    train_step,
)

NEUTRAL = StateVec(0.5, 0.5, 0.5, 0.5, 1.0, 0.95)


def constant_q_net(q):
    """Network whose output ignores its input"""
    return MlpParams([np.zeros((6, 4))], [np.asarray(q, dtype=float)])


def transition(i, terminal=False, reward=None):
    s = StateVec.from_array(np.full(6, (i % 100) / 100.0))
    return Transition(s=s, a=CommMode(i % 4), r=float(i) if reward is None else reward, s_next=s, terminal=terminal)


class StateTestCase(SimpleTestCase):
    """Test observation normalization"""

    def test_snir_ceiling(self):
        """40 dB and above maps to 1"""
        self.assertEqual(build_state(40.0, None, None, None, 100, 0.95).snir_g5, 1.0)
        self.assertEqual(build_state(55.0, None, None, None, 100, 0.95).snir_g5, 1.0)

    def test_snir_midpoint(self):
        """15 dB is the middle of [-10, 40]"""
        self.assertEqual(build_state(None, 15.0, None, None, 100, 0.95).snir_lte, 0.5)

    def test_requirements(self):
        """L=100 ms and R=0.95 become (1.0, 0.95)"""
        s = build_state(None, None, None, None, 100, 0.95)
        self.assertEqual((s.latency_req_norm, s.reliability_req), (1.0, 0.95))

    def test_missing_observations(self):
        """Unobserved features are neutral"""
        self.assertEqual(build_state(None, None, None, None, 100, 0.95), NEUTRAL)

    def test_feature_range(self):
        """Every feature lies in [0, 1]"""
        s = build_state(-50.0, 80.0, 0.0, 1.0, 10, 0.0)
        self.assertTrue(((s.as_array() >= 0) & (s.as_array() <= 1)).all())

    def test_invalid_prr(self):
        """PRR outside [0, 1] is rejected"""
        with self.assertRaises(ValueError):
            build_state(None, None, 1.5, None, 100, 0.95)


class LinkObserverTestCase(SimpleTestCase):
    """Test running per-RAT measurements"""

    def test_empty(self):
        """Nothing observed yet gives None"""
        snapshot = LinkObserver().snapshot()
        self.assertEqual(snapshot.snir_pair(), (None, None))
        self.assertIsNone(snapshot.prr[RatKind.ITS_G5])

    def test_latest_snir(self):
        """SNIR is the latest decoded frame"""
        observer = LinkObserver()
        observer.record_reception(RatKind.LTE_V2X_PC5, 12.0)
        observer.record_reception(RatKind.LTE_V2X_PC5, 8.0)
        self.assertEqual(observer.snapshot().snir_pair(), (None, 8.0))

    def test_prr_window(self):
        """PRR covers the last window outcomes"""
        observer = LinkObserver(prr_window=4)
        for delivered in (False, False, True, True, True, True):
            observer.record_link_outcome(RatKind.ITS_G5, delivered)
        self.assertEqual(observer.prr(RatKind.ITS_G5), 1.0)
        observer.record_link_outcome(RatKind.ITS_G5, False)
        self.assertEqual(observer.prr(RatKind.ITS_G5), 0.75)

    def test_snapshot_frozen(self):
        """Later receptions do not change an earlier snapshot"""
        observer = LinkObserver()
        observer.record_reception(RatKind.ITS_G5, 20.0)
        snapshot = observer.snapshot()
        observer.record_reception(RatKind.ITS_G5, 5.0)
        self.assertEqual(snapshot.snir_db[RatKind.ITS_G5], 20.0)


class SelectActionTestCase(SimpleTestCase):
    """Test epsilon-greedy selection"""

    def test_greedy(self):
        """epsilon=0 takes the argmax"""
        rng = np.random.default_rng(0)
        self.assertEqual(select_action(NEUTRAL, 0.0, constant_q_net([0.1, 0.9, 0.3, 0.3]), rng), 1)

    def test_tie_break(self):
        """Ties go to the lowest action code"""
        rng = np.random.default_rng(0)
        self.assertEqual(select_action(NEUTRAL, 0.0, constant_q_net([0.5, 0.5, 0.2, 0.1]), rng), 0)

    def test_uniform_exploration(self):
        """epsilon=1 draws every action equally often"""
        rng = np.random.default_rng(1)
        net = constant_q_net([0.0, 1.0, 0.0, 0.0])
        counts = np.bincount([select_action(NEUTRAL, 1.0, net, rng) for _ in range(100_000)], minlength=4)
        np.testing.assert_allclose(counts / 100_000, 0.25, atol=0.02)

    def test_shift_invariance(self):
        """Adding a constant to every Q-value keeps the greedy choice"""
        rng = np.random.default_rng(3)
        net = init_weights((6, 8, 4), rng)
        shifted = net.copy()
        shifted.biases[-1] += 7.5
        for _ in range(50):
            s = StateVec.from_array(rng.random(6))
            self.assertEqual(
                select_action(s, 0.0, net, np.random.default_rng(0)),
                select_action(s, 0.0, shifted, np.random.default_rng(0)),
            )

    def test_invalid_epsilon(self):
        """Epsilon must be a probability"""
        with self.assertRaises(ValueError):
            select_action(NEUTRAL, 1.5, constant_q_net([0, 0, 0, 0]), np.random.default_rng(0))


class EpsilonDecayTestCase(SimpleTestCase):
    """Test linear exploration decay"""

    def test_one_step(self):
        """1.0 decays to 0.99999"""
        self.assertAlmostEqual(epsilon_decay(1.0), 0.99999)

    def test_floor(self):
        """The floor is sticky"""
        self.assertEqual(epsilon_decay(0.01), 0.01)

    def test_long_run(self):
        """99,000 decays reach the floor"""
        eps = 1.0
        for _ in range(99_000):
            eps = epsilon_decay(eps)
        self.assertAlmostEqual(eps, 0.01, places=9)


class RewardTestCase(SimpleTestCase):
    """Test the three-part reward"""

    def test_perfect_round(self):
        """All single receptions, satisfied, stable link"""
        self.assertEqual(compute_reward({1: 1, 2: 1, 3: 1, 4: 1}, 1, 0), 1.0)

    def test_failed_round(self):
        """Nothing received, unsatisfied, degrading link"""
        self.assertEqual(compute_reward({1: 0, 2: 0, 3: 0, 4: 0}, -1, -1), -1.0)

    def test_duplicates_penalized(self):
        """Doubly received messages score theta"""
        reward = compute_reward({1: 2, 2: 2, 3: 2, 4: 2}, 1, 0, theta=0.5)
        self.assertEqual(reward, 0.75)
        self.assertLess(reward, 1.0)

    def test_literal_form(self):
        """Without normalization the reception term sums over neighbors"""
        self.assertEqual(compute_reward({1: 1, 2: 1, 3: 1, 4: 1}, 1, 0, normalize=False), 2.5)

    def test_no_neighbors(self):
        """An empty round contributes no reception term"""
        self.assertEqual(compute_reward({}, 1, 1), 1.0)


class PerformanceSatisfactionTestCase(SimpleTestCase):
    """Test the requirement check"""

    def test_all_on_time(self):
        """Everyone received within L"""
        acks = [AckRecord(n, 0, 1, 5.0) for n in range(4)]
        self.assertEqual(performance_satisfaction(acks, [0, 1, 2, 3], 100, 0.95), 1)

    def test_too_few(self):
        """Three of four misses R=0.95"""
        acks = [AckRecord(n, 0, 1, 5.0) for n in range(3)]
        self.assertEqual(performance_satisfaction(acks, [0, 1, 2, 3], 100, 0.95), -1)

    def test_too_late(self):
        """One late copy breaks the latency requirement"""
        acks = [AckRecord(n, 0, 1, 5.0) for n in range(3)] + [AckRecord(3, 0, 1, 99.0)]
        self.assertEqual(performance_satisfaction(acks, [0, 1, 2, 3], 50, 0.95), -1)


class LinkQualityTestCase(SimpleTestCase):
    """Test the link quality term"""

    def test_unchanged(self):
        """Identical pairs give 0"""
        self.assertEqual(link_quality_delta((10.0, 20.0), (10.0, 20.0)), 0)

    def test_improving(self):
        """Mean change of +2 dB gives +1"""
        self.assertEqual(link_quality_delta((13.0, 21.0), (10.0, 20.0)), 1)

    def test_degrading(self):
        """Mean change of -1 dB gives -1"""
        self.assertEqual(link_quality_delta((8.0, 20.0), (10.0, 20.0)), -1)

    def test_first_round(self):
        """No previous measurement gives 0"""
        self.assertEqual(link_quality_delta((8.0, 20.0), None), 0)
        self.assertEqual(link_quality_delta((None, 20.0), (10.0, 20.0)), 0)


class ReplayBufferTestCase(SimpleTestCase):
    """Test the experience ring"""

    def test_eviction(self):
        """Capacity 3 keeps the last three in order"""
        buf = ReplayBuffer(3)
        for i in range(4):
            store_transition(buf, transition(i))
        self.assertEqual([t.r for t in buf.contents()], [1.0, 2.0, 3.0])

    def test_size(self):
        """Size counts inserts below capacity"""
        buf = ReplayBuffer(10)
        for i in range(7):
            store_transition(buf, transition(i))
        self.assertEqual(len(buf), 7)

    def test_growth(self):
        """Storage grows past its first allocation"""
        buf = ReplayBuffer(5000, initial_allocation=16)
        for i in range(100):
            store_transition(buf, transition(i))
        self.assertEqual([t.r for t in buf.contents()], [float(i) for i in range(100)])

    def test_samples_are_members(self):
        """Sampled rows come from stored transitions"""
        buf = ReplayBuffer(50)
        for i in range(20):
            store_transition(buf, transition(i))
        batch = buf.sample(8, np.random.default_rng(0))
        self.assertTrue(set(batch.rewards) <= set(float(i) for i in range(20)))
        self.assertEqual(len(set(batch.rewards)), 8)

    def test_oversample(self):
        """A batch cannot exceed the stored count"""
        buf = ReplayBuffer(50)
        store_transition(buf, transition(0))
        with self.assertRaises(ValueError):
            buf.sample(2, np.random.default_rng(0))


class TrainStepTestCase(SimpleTestCase):
    """Test the double Q-learning update"""

    def setUp(self):
        self.rng = np.random.default_rng(0)
        self.behavior = init_weights((6, 8, 4), self.rng)
        self.target = self.behavior.copy()

    def _buffer(self, n, **kwargs):
        buf = ReplayBuffer(100)
        for i in range(n):
            store_transition(buf, transition(i, **kwargs))
        return buf

    def test_waits_for_batch(self):
        """No update before batch_size transitions"""
        config = AgentConfig(batch_size=8, hidden_layers=(8,))
        loss = train_step(self._buffer(7), self.behavior, self.target, AdamState.create(self.behavior), config, self.rng)
        self.assertIsNone(loss)

    def test_no_discount(self):
        """gamma=0 regresses on raw rewards"""
        config = AgentConfig(gamma=0.0, batch_size=4, hidden_layers=(8,))
        buf = self._buffer(4)
        q = forward(self.behavior, buf.states[:4])
        expected = float(np.sum((buf.rewards[:4] - q[np.arange(4), buf.actions[:4]]) ** 2) / 4)
        loss = train_step(buf, self.behavior, self.target, AdamState.create(self.behavior), config, self.rng)
        self.assertAlmostEqual(loss, expected)

    def test_terminal_target(self):
        """Terminal transitions bootstrap nothing"""
        buf = self._buffer(4, terminal=True)
        batch = buf.sample(4, self.rng)
        np.testing.assert_allclose(td_targets(batch, self.behavior, self.target, 0.99), batch.rewards)

    def test_zero_bootstrap(self):
        """A zero target network leaves y = r"""
        buf = ReplayBuffer(10)
        store_transition(buf, transition(3, reward=1.0))
        batch = buf.sample(1, self.rng)
        target = MlpParams([np.zeros((6, 8)), np.zeros((8, 4))], [np.zeros(8), np.zeros(4)])
        self.assertEqual(td_targets(batch, self.behavior, target, 0.99)[0], 1.0)

    def test_estimators_agree_after_sync(self):
        """Right after a hard sync the double-Q and max-Q bootstraps coincide"""
        target = init_weights((6, 8, 4), np.random.default_rng(9))
        sync_target(self.behavior, target)
        batch = self._buffer(20).sample(16, self.rng)
        double_q = bootstrap_values(batch, self.behavior, target, DOUBLE_Q)
        max_q = bootstrap_values(batch, self.behavior, target, MAX_Q)
        np.testing.assert_allclose(double_q, max_q)
        np.testing.assert_allclose(max_q, forward(target, batch.next_states).max(axis=1))

    def test_estimators_differ_without_sync(self):
        """Double-Q never exceeds max-Q on the same target network"""
        target = init_weights((6, 8, 4), np.random.default_rng(9))
        batch = self._buffer(20).sample(16, self.rng)
        double_q = bootstrap_values(batch, self.behavior, target, DOUBLE_Q)
        max_q = bootstrap_values(batch, self.behavior, target, MAX_Q)
        self.assertTrue(np.all(double_q <= max_q + 1e-12))

    def test_target_sync_period(self):
        """The target copies the behavior network every period updates"""
        config = AgentConfig(batch_size=4, target_sync_period=2, hidden_layers=(8,))
        buf = self._buffer(10)
        adam = AdamState.create(self.behavior)
        train_step(buf, self.behavior, self.target, adam, config, self.rng)
        self.assertFalse(np.array_equal(self.behavior.weights[0], self.target.weights[0]))
        train_step(buf, self.behavior, self.target, adam, config, self.rng)
        np.testing.assert_array_equal(self.behavior.weights[0], self.target.weights[0])


class DQNAgentTestCase(SimpleTestCase):
    """Test the agent wrapper"""

    def test_epsilon_decays_per_selection(self):
        """Every training-time selection decays epsilon"""
        agent = DQNAgent(AgentConfig(hidden_layers=(8,)), np.random.default_rng(0))
        for _ in range(3):
            agent.select(NEUTRAL, None)
        self.assertAlmostEqual(agent.epsilon, 1.0 - 3e-5)

    def test_freeze(self):
        """Frozen agents are greedy and do not learn"""
        agent = DQNAgent(AgentConfig(hidden_layers=(8,), batch_size=1), np.random.default_rng(0))
        agent.freeze()
        self.assertEqual(agent.epsilon, 0.0)
        self.assertIsNone(agent.observe(transition(1)))
        self.assertEqual(len(agent.buffer), 0)
        greedy = int(np.argmax(agent.q_values(NEUTRAL)))
        self.assertEqual(agent.select(NEUTRAL, None), greedy)

    def test_invalid_config(self):
        """Bad hyperparameters are rejected"""
        with self.assertRaises(ConfigError):
            DQNAgent(AgentConfig(epsilon_min=0.5, epsilon_start=0.1), np.random.default_rng(0))

    def test_bandit(self):
        """The greedy policy learns a two-context bandit"""
        config = AgentConfig(
            hidden_layers=(32, 32),
            batch_size=32,
            learning_rate=1e-3,
            epsilon_decrement=1e-4,
            epsilon_min=0.05,
            target_sync_period=100,
            buffer_capacity=20_000,
        )
        for seed in range(3):
            rng = np.random.default_rng(100 + seed)
            agent = DQNAgent(config, np.random.default_rng(seed))
            optimal = 0
            for step in range(20_000):
                feature = int(rng.integers(2))
                state = StateVec(float(feature), 0.5, 0.5, 0.5, 1.0, 0.95)
                best = CommMode.HYBRID_REDUNDANT if feature else CommMode.SINGLE_ITS_G5
                if step >= 19_000:
                    optimal += int(np.argmax(agent.q_values(state))) == best
                action = agent.select(state, None)
                reward = 1.0 if action == best else 0.0
                agent.observe(Transition(s=state, a=action, r=reward, s_next=state, terminal=True))
            self.assertGreaterEqual(optimal / 1000, 0.95)


class BufferUniformityTestCase(SimpleTestCase):
    """Test the chi-square sampler check against broken samplers"""

    def test_biased_sampler_fails(self):
        """A sampler favouring one slot is rejected"""
        def biased(buf, rng):
            return 0 if rng.random() < 0.1 else int(rng.integers(len(buf)))

        result = buffer_uniformity_check(draws=10_000, sampler=biased)
        self.assertFalse(result.passed)
        self.assertLess(result.measured, result.threshold)

    def test_round_robin_sampler_fails(self):
        """Perfectly even deterministic counts are rejected"""
        draws = iter(range(10_000))

        def round_robin(buf, rng):
            return next(draws) % len(buf)

        result = buffer_uniformity_check(draws=10_000, sampler=round_robin)
        self.assertFalse(result.passed)
        self.assertGreater(result.measured, 1.0 - result.threshold)
