"""
Run configuration
Loads a sectioned TOML document, layers CLI overrides on top, validates it
with the section serializers and freezes the result into RunConfig.
"""

import logging
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Mapping, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from django.conf import settings

from Hybridsim.exceptions import ConfigError
from agent.services import AgentConfig
from baselines.services import TopsisConfig
from engine.services import SELECTOR_DRL, EngineConfig, SimulationSetup
from experiments.serializers import RunConfigSerializer, flatten_errors
from hybrid.services import HybridConfig
from radio.services import RatKind, RatParams
from scenario.services import ScenarioConfig

logger = logging.getLogger(__name__)

# [engine] keys settable from a file; latency/reliability live at top level
ENGINE_FILE_KEYS = ('mobility_tick_ms', 'max_rounds_factor', 'channel_override')


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved configuration of one run"""

    setup: SimulationSetup = field(default_factory=SimulationSetup)
    selector: str = SELECTOR_DRL
    games: int = 1000
    seed: int = 0
    output_dir: str = 'runs'
    eval_games: int = 10
    congestion: Optional[str] = None

    @property
    def latency_req_ms(self) -> float:
        return self.setup.engine.latency_req_ms

    @property
    def reliability_req(self) -> float:
        return self.setup.engine.reliability_req

    @property
    def output_path(self) -> Path:
        return Path(self.output_dir)

    def to_dict(self) -> Dict[str, Any]:
        """Echo in the input document's shape; parses back to an equal RunConfig"""
        setup = self.setup
        scenario = asdict(setup.scenario)
        scenario['base_station_positions'] = list(setup.scenario.base_station_positions)
        agent = asdict(setup.agent)
        agent['hidden_layers'] = list(setup.agent.hidden_layers)
        document = {
            'selector': self.selector,
            'games': self.games,
            'seed': self.seed,
            'output_dir': self.output_dir,
            'latency_req_ms': self.latency_req_ms,
            'reliability_req': self.reliability_req,
            'eval_games': self.eval_games,
            'congestion': self.congestion,
            'scenario': scenario,
            'radio': {rat.label: asdict(setup.radio[rat]) for rat in RatKind},
            'hybrid': asdict(setup.hybrid),
            'agent': agent,
            'topsis': {'weights': list(setup.topsis.weights)},
            'engine': {key: getattr(setup.engine, key) for key in ENGINE_FILE_KEYS},
        }
        return document

    def with_congestion(self, level: str) -> 'RunConfig':
        """Copy with the scenario's background traffic set from a named preset"""
        presets = settings.HYBRIDSIM['CONGESTION_PRESETS']
        if level not in presets:
            raise ConfigError(f"Unknown congestion level '{level}'", errors={'congestion': [level]})
        scenario = replace(self.setup.scenario, background_count=presets[level])
        return replace(self, setup=replace(self.setup, scenario=scenario), congestion=level)

    def with_output_dir(self, output_dir) -> 'RunConfig':
        return replace(self, output_dir=str(output_dir))


def _set_dotted(document: Dict[str, Any], dotted_key: str, value):
    node = document
    *parents, leaf = dotted_key.split('.')
    for key in parents:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            raise ConfigError(f"{dotted_key}: '{key}' is not a section", errors={dotted_key: ['not a section']})
    node[leaf] = value


def from_mapping(document: Mapping[str, Any]) -> RunConfig:
    """
    Validate a configuration document and build the RunConfig.

    Raises:
        ConfigError: unknown key, type mismatch or broken invariant, listing
            every offending dotted key path
    """
    presets = settings.HYBRIDSIM['CONGESTION_PRESETS']
    serializer = RunConfigSerializer(data=dict(document), congestion_levels=tuple(presets))
    if not serializer.is_valid():
        lines = flatten_errors(serializer.errors)
        raise ConfigError('Invalid configuration:\n  ' + '\n  '.join(lines), errors=serializer.errors)
    data = serializer.validated_data

    scenario_data = dict(data.get('scenario', {}))
    if 'base_station_positions' in scenario_data:
        scenario_data['base_station_positions'] = tuple(scenario_data['base_station_positions'])
    agent_data = dict(data.get('agent', {}))
    if 'hidden_layers' in agent_data:
        agent_data['hidden_layers'] = tuple(agent_data['hidden_layers'])
    topsis_data = dict(data.get('topsis', {}))
    if 'weights' in topsis_data:
        topsis_data['weights'] = tuple(topsis_data['weights'])
    radio_data = data.get('radio', {})

    engine_data = dict(data.get('engine', {}))
    for key in ('latency_req_ms', 'reliability_req'):
        if key in data:
            engine_data[key] = data[key]

    setup = SimulationSetup(
        scenario=ScenarioConfig(**scenario_data),
        radio={rat: RatParams.defaults_for(rat).with_overrides(**radio_data.get(rat.label, {})) for rat in RatKind},
        hybrid=HybridConfig(**data.get('hybrid', {})),
        agent=AgentConfig(**agent_data),
        topsis=TopsisConfig(**topsis_data),
        engine=EngineConfig(**engine_data),
    )

    config = RunConfig(
        setup=setup,
        selector=data.get('selector', SELECTOR_DRL),
        games=data.get('games', 1000),
        seed=data.get('seed', 0),
        output_dir=data.get('output_dir', str(settings.SIMULATION_OUTPUT_ROOT)),
        eval_games=data.get('eval_games', 10),
    )
    if data.get('congestion'):
        preset = presets[data['congestion']]
        explicit = scenario_data.get('background_count')
        if explicit is not None and explicit != preset:
            logger.warning(
                f"congestion '{data['congestion']}' overrides scenario.background_count = {explicit} with {preset}"
            )
        config = config.with_congestion(data['congestion'])
    try:
        config.setup.validate()
    except ConfigError as e:
        lines = [f'{section}: {problem}' for section, problems in e.errors.items() for problem in problems]
        raise ConfigError('Invalid configuration:\n  ' + '\n  '.join(lines or [str(e)]), errors=e.errors) from e
    return config


def parse_config(path=None, overrides: Optional[Mapping[str, Any]] = None) -> RunConfig:
    """
    Build a RunConfig from built-in defaults, an optional TOML file and
    CLI overrides given as {dotted.key: value}, in that order of precedence.
    """
    document: Dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"Configuration file not found: {path}", errors={'config': [str(path)]})
        try:
            with path.open('rb') as f:
                document = tomllib.load(f)
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"Malformed configuration file {path}: {e}", errors={'config': [str(e)]}) from e
        logger.info(f"Configuration loaded from {path}")

    for key, value in (overrides or {}).items():
        if value is not None:
            _set_dotted(document, key, value)
    return from_mapping(document)
