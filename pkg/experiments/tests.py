"""
Tests for experiments app
"""

import json
import shutil
import tempfile
from io import StringIO
from pathlib import Path

import numpy as np
import pandas as pd
from django.conf import settings
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from Hybridsim.exceptions import ConfigError
from nn.services import MlpGradients, backward
from radio.services import RatKind
from .config import RunConfig, from_mapping, parse_config
from .services import cmd_compare, cmd_evaluate, cmd_train, compare_cells
from .validation import (
    adam_trace_check,
    buffer_uniformity_check,
    gradient_check,
    run_checks,
    textbook_topsis,
    topsis_oracle_check,
)

SMALL_RUN = """
games = 2
seed = 4
eval_games = 1

[agent]
sr_target = 3
hidden_layers = [8]
batch_size = 4
buffer_capacity = 64

[engine]
max_rounds_factor = 5
"""


class TempDirMixin:
    def setUp(self):
        self.tmp = Path(tempfile.mkdtemp())

    def tearDown(self):
        shutil.rmtree(self.tmp, ignore_errors=True)

    def write_config(self, text, name='run.toml'):
        path = self.tmp / name
        path.write_text(text)
        return path


class ParseConfigTestCase(TempDirMixin, SimpleTestCase):
    """Test run configuration loading"""

    def test_empty_file_defaults(self):
        """An empty document yields the documented defaults"""
        config = parse_config(self.write_config(''))
        setup = config.setup
        self.assertEqual(setup.radio[RatKind.ITS_G5].tx_power_dbm, 23.0)
        self.assertEqual(setup.agent.learning_rate, 0.0005)
        self.assertEqual(setup.agent.gamma, 0.99)
        self.assertEqual(setup.agent.buffer_capacity, 1_000_000)
        self.assertEqual(setup.agent.batch_size, 64)
        self.assertEqual(setup.agent.sr_target, 100)
        self.assertEqual(config.latency_req_ms, 100.0)
        self.assertEqual(config.reliability_req, 0.95)
        self.assertEqual(config.selector, 'drl')
        self.assertEqual(config.output_dir, str(settings.SIMULATION_OUTPUT_ROOT))

    def test_overrides_win(self):
        """Command-line overrides beat the file; None is ignored"""
        path = self.write_config('seed = 3\ngames = 7\n')
        config = parse_config(path, overrides={'seed': 9, 'games': None, 'agent.sr_target': 12})
        self.assertEqual(config.seed, 9)
        self.assertEqual(config.games, 7)
        self.assertEqual(config.setup.agent.sr_target, 12)

    def test_sections(self):
        """Section values reach the typed configuration"""
        config = parse_config(self.write_config(
            'latency_req_ms = 50\n'
            '[radio.lte_v2x_pc5]\ntx_power_dbm = 20\n'
            '[scenario]\nbase_station_positions = [250.0]\n'
            '[topsis]\nweights = [0.4, 0.4, 0.1, 0.1]\n'
        ))
        setup = config.setup
        self.assertEqual(setup.radio[RatKind.LTE_V2X_PC5].tx_power_dbm, 20.0)
        self.assertEqual(setup.radio[RatKind.LTE_V2X_PC5].base_latency_ms, 10.0)
        self.assertEqual(setup.scenario.base_station_positions, (250.0,))
        self.assertEqual(setup.topsis.weights, (0.4, 0.4, 0.1, 0.1))
        self.assertEqual(setup.engine.latency_req_ms, 50.0)

    def test_invariant_violation(self):
        """Broken invariants name their section"""
        with self.assertRaises(ConfigError) as ctx:
            parse_config(self.write_config('[scenario]\nplatoon_spacing = -1.0\n'))
        self.assertIn('scenario: platoon_spacing must be > 0', str(ctx.exception))

    def test_unknown_key(self):
        """Unknown keys are reported with their dotted path"""
        with self.assertRaises(ConfigError) as ctx:
            parse_config(self.write_config('[agent]\ngama = 0.9\n'))
        self.assertIn('agent.gama', str(ctx.exception))

    def test_type_mismatch(self):
        """Wrong types are rejected"""
        with self.assertRaises(ConfigError) as ctx:
            parse_config(self.write_config('games = "many"\n'))
        self.assertIn('games', str(ctx.exception))

    def test_no_type_coercion(self):
        """Values of the wrong kind are rejected, never converted"""
        cases = [
            ({'games': '3'}, 'games'),
            ({'games': True}, 'games'),
            ({'agent': {'batch_size': 64.0}}, 'agent.batch_size'),
            ({'agent': {'hidden_layers': [8, '8']}}, 'agent.hidden_layers'),
            ({'scenario': {'platoon_spacing': '10'}}, 'scenario.platoon_spacing'),
            ({'scenario': {'platoon_spacing': False}}, 'scenario.platoon_spacing'),
            ({'agent': {'normalize_reception': 'yes'}}, 'agent.normalize_reception'),
            ({'agent': {'shared_parameters': 1}}, 'agent.shared_parameters'),
            ({'output_dir': 7}, 'output_dir'),
        ]
        for document, key in cases:
            with self.subTest(document=document):
                with self.assertRaises(ConfigError) as ctx:
                    from_mapping(document)
                self.assertIn(key, str(ctx.exception))

    def test_integer_accepted_as_float(self):
        """An integer literal is a valid float value"""
        config = from_mapping({'scenario': {'platoon_spacing': 12}})
        self.assertEqual(config.setup.scenario.platoon_spacing, 12.0)

    def test_congestion_overrides_background_count(self):
        """An explicit background count replaced by a preset is logged"""
        presets = settings.HYBRIDSIM['CONGESTION_PRESETS']
        with self.assertLogs('experiments.config', level='WARNING') as logs:
            config = from_mapping({'congestion': 'high', 'scenario': {'background_count': 3}})
        self.assertEqual(config.setup.scenario.background_count, presets['high'])
        self.assertIn('scenario.background_count', logs.output[0])

    def test_missing_and_malformed(self):
        """Unreadable documents are configuration errors"""
        with self.assertRaises(ConfigError):
            parse_config(self.tmp / 'absent.toml')
        with self.assertRaises(ConfigError):
            parse_config(self.write_config('[agent\n'))

    def test_echo_round_trip(self):
        """The echoed document parses back to the same configuration"""
        config = parse_config(self.write_config(SMALL_RUN), overrides={'congestion': 'high'})
        self.assertEqual(from_mapping(config.to_dict()), config)

    def test_congestion(self):
        """Presets set the background vehicle count"""
        config = parse_config(overrides={'congestion': 'high'})
        presets = settings.HYBRIDSIM['CONGESTION_PRESETS']
        self.assertEqual(config.setup.scenario.background_count, presets['high'])
        self.assertEqual(config.with_congestion('low').setup.scenario.background_count, presets['low'])
        with self.assertRaises(ConfigError):
            parse_config(overrides={'congestion': 'extreme'})

    def test_compare_cells(self):
        """Every selector under every congestion level"""
        cells = compare_cells(RunConfig())
        self.assertEqual(len(cells), 10)
        self.assertEqual({c.congestion for c in cells}, {'low', 'high'})
        self.assertEqual(cells[0].selector, 'drl')
        self.assertEqual(len({(c.selector, c.congestion) for c in cells}), 10)


class ValidationTestCase(SimpleTestCase):
    """Test the invariant suite"""

    def test_checks_pass(self):
        """The shipped implementation passes every check"""
        results = run_checks(seed=0)
        self.assertEqual(len(results), 6)
        for result in results:
            self.assertTrue(result.passed, str(result))

    def test_injected_gradient_bug(self):
        """A slightly wrong backward pass is caught"""
        def skewed(net, x, g):
            grads = backward(net, x, g)
            return MlpGradients([w * 1.01 for w in grads.weights], grads.biases)

        result = gradient_check(networks=2, probes=20, backward_fn=skewed)
        self.assertFalse(result.passed)
        self.assertGreater(result.measured, result.threshold)

    def test_individual_checks(self):
        """Adam trace, TOPSIS oracle and buffer uniformity"""
        self.assertTrue(adam_trace_check().passed)
        self.assertTrue(topsis_oracle_check(cases=50).passed)
        self.assertTrue(buffer_uniformity_check().passed)

    def test_textbook_topsis(self):
        """Reference ranking of a two-alternative case"""
        closeness = textbook_topsis(np.array([[1.0, 0.0], [0.0, 1.0]]), np.array([0.5, 0.5]), ('benefit', 'benefit'))
        np.testing.assert_allclose(closeness, [0.5, 0.5])


class CommandsTestCase(TempDirMixin, SimpleTestCase):
    """Test training, evaluation and comparison runs"""

    def small_config(self, name='run'):
        return parse_config(self.write_config(SMALL_RUN), overrides={'output_dir': str(self.tmp / name)})

    def test_train_files(self):
        """Training writes per-game rows, one weight file per vehicle and a summary"""
        result = cmd_train(self.small_config())
        out = result.out_dir
        games = pd.read_csv(out / 'games.csv')
        self.assertEqual(len(games), 2)
        self.assertEqual(len(pd.read_csv(out / 'agents.csv')), 10)
        for k in range(5):
            self.assertTrue((out / f'weights-agent{k}.bin').is_file())
        self.assertEqual(np.loadtxt(out / 'prr.dat').shape, (2, 2))
        summary = json.loads((out / 'summary.json').read_text())
        self.assertEqual(summary['mode'], 'train')
        self.assertEqual(summary['games'], 2)
        self.assertEqual(summary['config']['seed'], 4)
        self.assertIn('schema_version', summary)

    def test_train_reproducible(self):
        """Same seed, byte-identical result rows"""
        first = cmd_train(self.small_config('a')).out_dir
        second = cmd_train(self.small_config('b')).out_dir
        self.assertEqual((first / 'games.csv').read_bytes(), (second / 'games.csv').read_bytes())
        self.assertEqual((first / 'weights-agent0.bin').read_bytes(), (second / 'weights-agent0.bin').read_bytes())

    def test_train_needs_drl(self):
        """Static selectors cannot be trained"""
        config = parse_config(self.write_config(SMALL_RUN), overrides={'selector': 'topsis'})
        with self.assertRaises(ConfigError):
            cmd_train(config)

    def test_evaluate_trained(self):
        """Evaluation loads the trained weights and keeps training files"""
        config = self.small_config()
        cmd_train(config)
        result = cmd_evaluate(config)
        out = result.out_dir
        self.assertEqual(len(pd.read_csv(out / 'eval-games.csv')), 1)
        self.assertEqual(len(pd.read_csv(out / 'games.csv')), 2)
        self.assertEqual(result.summary['evaluation']['games'], 1)

    def test_evaluate_without_weights(self):
        """DRL evaluation without weights is a configuration error"""
        with self.assertRaises(ConfigError) as ctx:
            cmd_evaluate(self.small_config())
        self.assertIn('--mode train', str(ctx.exception))

    def test_compare(self):
        """One comparison row per selector and congestion level"""
        config = self.small_config()
        cmd_train(config)
        result = cmd_compare(config, jobs=1)
        table = pd.read_csv(result.out_dir / 'compare.csv')
        self.assertEqual(len(table), 10)
        static_g5 = table[table['selector'] == 'static-g5']
        self.assertTrue((static_g5['dup_pct'] == 0.0).all())
        self.assertTrue((static_g5['redundant_pct'] == 0.0).all())
        self.assertTrue((result.out_dir / 'compare-summary.json').is_file())
        summary = json.loads((result.out_dir / 'compare-summary.json').read_text())
        self.assertIn('prr_mean', summary['column_notes'])
        self.assertIn('delivery_ratio_mean', summary['column_notes'])


class SimulateCommandTestCase(TempDirMixin, SimpleTestCase):
    """Test the management command and its exit codes"""

    def test_train(self):
        """A small training run finishes and lists its files"""
        out = StringIO()
        call_command('simulate', '--config', str(self.write_config(SMALL_RUN)),
                     '--out', str(self.tmp / 'run'), stdout=out)
        self.assertIn('train finished', out.getvalue())
        self.assertTrue((self.tmp / 'run' / 'summary.json').is_file())

    def test_config_error_exit(self):
        """Configuration problems exit with code 1"""
        with self.assertRaises(CommandError) as ctx:
            call_command('simulate', '--config', str(self.tmp / 'absent.toml'), stdout=StringIO())
        self.assertEqual(ctx.exception.returncode, 1)

    def test_runtime_error_exit(self):
        """Corrupt weight files exit with code 2"""
        for k in range(5):
            (self.tmp / f'weights-agent{k}.bin').write_bytes(b'garbage')
        with self.assertRaises(CommandError) as ctx:
            call_command('simulate', '--mode', 'eval', '--config', str(self.write_config(SMALL_RUN)),
                         '--out', str(self.tmp / 'eval'), '--weights', str(self.tmp), stdout=StringIO())
        self.assertEqual(ctx.exception.returncode, 2)
