"""
Management command running the hybrid V2X simulator
Usage: python manage.py simulate --mode train --games 1000 --out runs/seed0
"""

import logging

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from Hybridsim.exceptions import ConfigError, HybridsimError
from engine.services import SELECTORS
from experiments.config import parse_config
from experiments.services import cmd_compare, cmd_evaluate, cmd_train, cmd_validate

logger = logging.getLogger('hybridsim.experiments')

EXIT_CONFIG = 1
EXIT_RUNTIME = 2


class Command(BaseCommand):
    help = 'Train, evaluate or compare communication-mode selectors for a platoon'

    def add_arguments(self, parser):
        parser.add_argument('--config', help='Path of a TOML run configuration')
        parser.add_argument(
            '--mode',
            choices=['train', 'eval', 'compare', 'validate'],
            default='train',
            help='What to run (default: train)'
        )
        parser.add_argument('--selector', choices=SELECTORS, help='Mode selector to train or evaluate')
        parser.add_argument('--seed', type=int, help='Run seed')
        parser.add_argument('--games', type=int, help='Number of training games')
        parser.add_argument(
            '--congestion',
            choices=list(settings.HYBRIDSIM['CONGESTION_PRESETS']),
            help='Background traffic preset'
        )
        parser.add_argument('--out', help='Output directory')
        parser.add_argument('--weights', help='Directory holding weights-agent<k>.bin (default: --out)')
        parser.add_argument('--jobs', type=int, help='Parallel comparison cells (default: SIMULATION_JOBS)')
        parser.add_argument('--charts', action='store_true', help='Also write plotly charts')

    def handle(self, *args, **options):
        mode = options['mode']
        try:
            config = parse_config(
                options['config'],
                overrides={
                    'selector': options['selector'],
                    'seed': options['seed'],
                    'games': options['games'],
                    'congestion': options['congestion'],
                    'output_dir': options['out'],
                },
            )
            self.stdout.write(f"Mode: {mode}, selector: {config.selector}, seed: {config.seed}")

            if mode == 'validate':
                self._report_checks(cmd_validate(config))
                return

            if mode == 'train':
                result = cmd_train(config, charts=options['charts'])
            elif mode == 'eval':
                result = cmd_evaluate(config, weights_dir=options['weights'], charts=options['charts'])
                evaluation = result.summary['evaluation']
                self.stdout.write(
                    f"PRR {evaluation['prr_mean']:.3f} ± {evaluation['prr_std']:.3f}, "
                    f"duplicated {evaluation['dup_pct']:.1f}%, redundant {evaluation['redundant_pct']:.1f}%"
                )
            else:
                result = cmd_compare(
                    config, weights_dir=options['weights'], jobs=options['jobs'], charts=options['charts']
                )
                for row in result.summary['cells']:
                    self.stdout.write(
                        f"  {row['selector']:<17} {row['congestion']:<5} PRR {row['prr_mean']:.3f} "
                        f"± {row['prr_std']:.3f}  dup {row['dup_pct']:5.1f}%  redundant {row['redundant_pct']:5.1f}%"
                    )

            for path in result.files:
                self.stdout.write(f"  wrote {path}")
            self.stdout.write(self.style.SUCCESS(f"{mode} finished, results in {result.out_dir}"))

        except ConfigError as e:
            self.stdout.write(self.style.ERROR(str(e)))
            raise CommandError(str(e), returncode=EXIT_CONFIG)
        except (HybridsimError, OSError) as e:
            logger.error(f"{mode} failed: {e}")
            self.stdout.write(self.style.ERROR(f"{mode} failed: {e}"))
            raise CommandError(str(e), returncode=EXIT_RUNTIME)

    def _report_checks(self, results):
        for result in results:
            style = self.style.SUCCESS if result.passed else self.style.ERROR
            self.stdout.write(style(f"{result} [{result.seconds:.2f}s]"))
        failed = [r.name for r in results if not r.passed]
        if failed:
            raise CommandError(f"Validation failed: {', '.join(failed)}", returncode=EXIT_RUNTIME)
        self.stdout.write(self.style.SUCCESS(f"All {len(results)} checks passed"))
