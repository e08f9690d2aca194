"""
Tests for engine app
"""

import shutil
import tempfile
from dataclasses import replace
from pathlib import Path

import numpy as np
import pandas as pd
from django.test import SimpleTestCase

from Hybridsim.exceptions import ConfigError, GameAbortedError, SimulationFault
from agent.services import DQNAgent
from baselines.services import StaticSelector, TopsisSelector
from hybrid.services import CommMode
from .charts import save_figure, training_figures
from .exports import GAME_COLUMNS, GameStatsWriter, read_games, write_training_series
from .services import (
    OVERRIDE_BLACKOUT,
    OVERRIDE_LOSSLESS,
    OVERRIDE_NONE,
    EngineConfig,
    EventKind,
    EventQueue,
    SimulationSetup,
    build_selectors,
    moving_average,
    run_evaluation,
    run_game,
    run_training,
)


def small_setup(override=OVERRIDE_LOSSLESS, sr_target=5, max_rounds_factor=20):
    """Five-vehicle platoon with a tiny Q-network and a short game"""
    setup = SimulationSetup()
    agent = replace(setup.agent, sr_target=sr_target, hidden_layers=(8,), batch_size=4, buffer_capacity=256)
    engine = replace(setup.engine, channel_override=override, max_rounds_factor=max_rounds_factor)
    return replace(setup, agent=agent, engine=engine).validate()


def play(setup, selector, seed=0, game_index=0):
    """Play one game, returning partial statistics of an aborted one"""
    try:
        return run_game(setup, build_selectors(setup, selector, seed), game_index=game_index, seed=seed)
    except GameAbortedError as e:
        return e.stats


class EventQueueTestCase(SimpleTestCase):
    """Test the discrete-event queue"""

    def test_time_order(self):
        """Events pop by time, ties in insertion order"""
        queue = EventQueue()
        queue.push(5.0, EventKind.ACK, 'late')
        queue.push(1.0, EventKind.DELIVERY, 'first')
        queue.push(1.0, EventKind.BEACON_DUE, 'second')
        popped = [queue.pop() for _ in range(3)]
        self.assertEqual([e.payload[0] for e in popped], ['first', 'second', 'late'])
        self.assertEqual(queue.now, 5.0)
        self.assertEqual(len(queue), 0)

    def test_past_event(self):
        """Scheduling before the current time is a fault"""
        queue = EventQueue()
        queue.push(10.0, EventKind.MOBILITY_TICK)
        queue.pop()
        with self.assertRaises(SimulationFault):
            queue.push(9.0, EventKind.MOBILITY_TICK)


class EngineConfigTestCase(SimpleTestCase):
    """Test engine configuration guards"""

    def test_defaults_valid(self):
        """Default setup validates"""
        SimulationSetup().validate()

    def test_invalid(self):
        """Bad override and beacon period are rejected together"""
        with self.assertRaises(ConfigError) as ctx:
            EngineConfig(beacon_period_ms=50.0, channel_override='noisy').validate()
        self.assertEqual(len(ctx.exception.errors['engine']), 2)

    def test_max_rounds(self):
        """Round cap scales with the SR target"""
        self.assertEqual(small_setup(sr_target=5, max_rounds_factor=20).max_rounds, 100)


class BuildSelectorsTestCase(SimpleTestCase):
    """Test selector construction"""

    def test_kinds(self):
        """One selector per platoon vehicle of the requested kind"""
        setup = small_setup()
        self.assertTrue(all(isinstance(s, DQNAgent) for s in build_selectors(setup, 'drl', 0)))
        self.assertTrue(all(isinstance(s, TopsisSelector) for s in build_selectors(setup, 'topsis', 0)))
        statics = build_selectors(setup, 'static-lte', 0)
        self.assertEqual(len(statics), setup.scenario.platoon_size)
        self.assertTrue(all(isinstance(s, StaticSelector) for s in statics))

    def test_shared_parameters(self):
        """Shared parameters use one network and buffer for the whole platoon"""
        setup = replace(small_setup(), agent=replace(small_setup().agent, shared_parameters=True))
        agents = build_selectors(setup, 'drl', 0)
        self.assertEqual(len({id(a) for a in agents}), setup.scenario.platoon_size)
        self.assertTrue(all(a.behavior is agents[0].behavior for a in agents))
        self.assertTrue(all(a.buffer is agents[0].buffer for a in agents))
        self.assertEqual([a.owns_parameters for a in agents], [True] + [False] * (len(agents) - 1))

    def test_shared_epsilon_schedule(self):
        """Each vehicle's epsilon decays once per message it sends"""
        setup = replace(small_setup(), agent=replace(small_setup().agent, shared_parameters=True))
        config = setup.agent
        agents = build_selectors(setup, 'drl', 0)
        try:
            stats = run_game(setup, agents, seed=0)
        except GameAbortedError as e:
            stats = e.stats
        self.assertGreater(len(agents[0].buffer), stats.n_sent[0])
        for agent, sent in zip(agents, stats.n_sent):
            expected = max(config.epsilon_min, config.epsilon_start - sent * config.epsilon_decrement)
            self.assertAlmostEqual(agent.epsilon, expected)

    def test_unknown(self):
        """Unknown selector names are configuration errors"""
        with self.assertRaises(ConfigError):
            build_selectors(small_setup(), 'random', 0)


class RunGameTestCase(SimpleTestCase):
    """Test single games"""

    def test_lossless_single_rat(self):
        """Without losses every round succeeds and PRR is 1"""
        stats = run_game(small_setup(sr_target=20), build_selectors(small_setup(sr_target=20), 'static-g5', 0))
        self.assertTrue(stats.completed)
        self.assertEqual(stats.n_sent, [20] * 5)
        self.assertEqual(stats.prr, [1.0] * 5)
        self.assertEqual(stats.delivery_ratio, [1.0] * 5)
        self.assertEqual(stats.dup_pct, 0.0)

    def test_blackout_aborts(self):
        """Nothing delivered hits the round cap and carries partial stats"""
        setup = small_setup(override=OVERRIDE_BLACKOUT, sr_target=2, max_rounds_factor=3)
        with self.assertRaises(GameAbortedError) as ctx:
            run_game(setup, build_selectors(setup, 'static-g5', 0))
        stats = ctx.exception.stats
        self.assertFalse(stats.completed)
        self.assertEqual(stats.sr, [0] * 5)
        self.assertEqual(stats.prr, [0.0] * 5)
        self.assertEqual(max(stats.n_sent), 6)

    def test_redundant_duplicates(self):
        """Redundant copies over a lossless channel are all duplicates"""
        setup = small_setup(sr_target=2, max_rounds_factor=3)
        stats = play(setup, 'static-redundant')
        self.assertFalse(stats.completed)
        self.assertEqual(stats.dup_pct, 100.0)
        self.assertEqual(stats.redundant_pct, 100.0)

    def test_accounting(self):
        """Mode counts add up to the messages sent"""
        stats = play(small_setup(override=OVERRIDE_NONE, sr_target=5), 'drl', seed=3)
        for k in range(stats.n_agents):
            self.assertEqual(sum(stats.mode_counts[k]), stats.n_sent[k])
            self.assertLessEqual(stats.sr[k], stats.n_sent[k])
        self.assertEqual(sum(stats.total_mode_counts), sum(stats.n_sent))

    def test_deterministic(self):
        """Same seed, same game"""
        setup = small_setup(override=OVERRIDE_NONE, sr_target=5)
        first = play(setup, 'drl', seed=11)
        second = play(setup, 'drl', seed=11)
        self.assertEqual(first.n_sent, second.n_sent)
        self.assertEqual(first.mode_counts, second.mode_counts)
        self.assertEqual(first.cumulative_reward, second.cumulative_reward)

    def test_selector_count(self):
        """A selector is needed for every platoon vehicle"""
        setup = small_setup()
        with self.assertRaises(ConfigError):
            run_game(setup, build_selectors(setup, 'static-g5', 0)[:2])


class RunTrainingTestCase(SimpleTestCase):
    """Test multi-game training and evaluation"""

    def test_training(self):
        """Agents persist across games and exploration only decays"""
        setup = small_setup(override=OVERRIDE_NONE, sr_target=3)
        selectors = build_selectors(setup, 'drl', 0)
        seen = []
        series = run_training(setup, selectors, games=2, seed=0, on_game=seen.append)
        self.assertEqual(len(series), 2)
        self.assertEqual(seen, series)
        for k in range(5):
            self.assertLessEqual(series[1].epsilon[k], series[0].epsilon[k])
            self.assertLess(series[0].epsilon[k], 1.0)
        self.assertTrue(any(len(agent.buffer) > 0 for agent in selectors))

    def test_evaluation_static(self):
        """Single-RAT evaluation never duplicates"""
        setup = small_setup(sr_target=5)
        summary = run_evaluation(setup, build_selectors(setup, 'static-g5', 0), games=2, seed=0,
                                 selector_name='static-g5')
        self.assertEqual(summary.completed_games, 2)
        self.assertEqual(summary.prr_mean, 1.0)
        self.assertEqual(summary.dup_pct, 0.0)
        self.assertEqual(summary.mode_usage_pct[CommMode.SINGLE_ITS_G5], 100.0)
        self.assertEqual(summary.as_dict()['selector'], 'static-g5')

    def test_evaluation_freezes(self):
        """Evaluation turns learning agents greedy"""
        setup = small_setup(sr_target=2)
        selectors = build_selectors(setup, 'drl', 0)
        summary = run_evaluation(setup, selectors, games=1, seed=0)
        self.assertEqual(summary.selector, 'drl')
        self.assertTrue(all(a.epsilon == 0.0 and not a.learns for a in selectors))
        self.assertTrue(all(len(a.buffer) == 0 for a in selectors))


class MovingAverageTestCase(SimpleTestCase):
    """Test the trailing mean"""

    def test_window(self):
        """Partial windows at the head"""
        self.assertEqual(moving_average([1, 2, 3, 4], 2), [1.0, 1.5, 2.5, 3.5])
        self.assertEqual(moving_average([4, 4], 100), [4.0, 4.0])
        self.assertEqual(moving_average([], 3), [])

    def test_invalid_window(self):
        """Window must be positive"""
        with self.assertRaises(ValueError):
            moving_average([1.0], 0)


class ExportsTestCase(SimpleTestCase):
    """Test result files"""

    def setUp(self):
        self.tmp = Path(tempfile.mkdtemp())
        setup = small_setup(sr_target=3)
        self.series = [play(setup, 'static-lte', game_index=g) for g in range(3)]

    def tearDown(self):
        shutil.rmtree(self.tmp, ignore_errors=True)

    def test_writer_appends(self):
        """One platoon row per game and one row per agent"""
        writer = GameStatsWriter(self.tmp)
        for stats in self.series:
            writer(stats)
        games = read_games(self.tmp)
        agents = pd.read_csv(self.tmp / 'agents.csv')
        self.assertEqual(list(games.columns), GAME_COLUMNS)
        self.assertEqual(GAME_COLUMNS, [
            'game', 'agent', 'n_sent', 'sr', 'prr', 'mean_reward', 'eps',
            'mode0', 'mode1', 'mode2', 'mode3', 'dup_pct', 'delivery_ratio', 'mean_loss', 'completed',
        ])
        self.assertEqual(games['game'].tolist(), [0, 1, 2])
        self.assertTrue((games['agent'] == 'mean').all())
        self.assertEqual(len(agents), 15)
        self.assertEqual(games['mode1'].tolist(), [15, 15, 15])

    def test_writer_overwrites(self):
        """A fresh writer replaces an earlier run"""
        GameStatsWriter(self.tmp).write(self.series[0])
        GameStatsWriter(self.tmp).write(self.series[1])
        self.assertEqual(len(read_games(self.tmp)), 1)

    def test_prefix(self):
        """Prefixed files leave the training files alone"""
        GameStatsWriter(self.tmp).write(self.series[0])
        GameStatsWriter(self.tmp, prefix='eval-').write(self.series[1])
        self.assertTrue((self.tmp / 'eval-games.csv').exists())
        self.assertEqual(read_games(self.tmp)['game'].tolist(), [0])

    def test_series_dat(self):
        """Game number and value per line"""
        paths = write_training_series(self.tmp, self.series)
        data = np.loadtxt(paths['prr'])
        self.assertEqual(data.shape, (3, 2))
        np.testing.assert_array_equal(data[:, 0], [1, 2, 3])
        np.testing.assert_allclose(data[:, 1], 1.0)

    def test_summary_row(self):
        """Counts summed and rates averaged over agents"""
        row = self.series[0].summary_row()
        self.assertEqual(row['n_sent'], 15)
        self.assertEqual(row['prr'], 1.0)
        self.assertTrue(np.isnan(row['mean_loss']))

    def test_charts(self):
        """Training figures render to HTML"""
        writer = GameStatsWriter(self.tmp)
        for stats in self.series:
            writer(stats)
        figures = training_figures(read_games(self.tmp))
        self.assertEqual(set(figures), {'reward', 'prr', 'modes'})
        written = save_figure(figures['prr'], self.tmp / 'prr')
        self.assertTrue(written['html'].exists())
