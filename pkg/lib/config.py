import os
from dataclasses import dataclass, field
from typing import Optional

import yaml

from lib.channel_model import DmsSpec
from lib.errors import ConfigError
from lib.validator import SUITES, Validator

DEFAULT_BUDGET = 2_000_000


def load_yaml(path: str):
    with open(path, 'r') as f:
        return yaml.safe_load(f)


@dataclass
class ExperimentConfig:
    name: str
    channel: dict
    n: int
    L: int
    beta: object = 0.3
    method: str = 'monte_carlo'
    samples: int = 100_000
    trials: int = 100
    seed: int = 0
    workers: int = 1
    out_dir: str = 'out'
    sets_cache: Optional[str] = None
    suites: list = field(default_factory=lambda: ['reliability'])
    budget: int = DEFAULT_BUDGET
    leakage_samples: int = 20_000
    bootstrap: int = 200
    no_key_ablation: bool = False
    scan_n: list = field(default_factory=list)
    scan_L: list = field(default_factory=list)
    trend_erasures: list = field(default_factory=list)
    trend_n: list = field(default_factory=list)

    def spec(self) -> DmsSpec:
        return DmsSpec.from_config(self.channel)

    @classmethod
    def from_dict(cls, data: dict, base_dir: str = None) -> 'ExperimentConfig':
        """Builds a config from an already validated mapping."""
        channel = data['channel']
        if isinstance(channel, str):
            path = channel if os.path.isabs(channel) or base_dir is None else os.path.join(base_dir, channel)
            channel = load_yaml(path)
        construction = data.get('construction') or {}
        output = data.get('output') or {}
        leakage = data.get('leakage') or {}
        scan = data.get('scan') or {}
        trend = data.get('trend') or {}
        return cls(
            name=data.get('name', 'experiment'),
            channel=channel,
            n=data['n'],
            L=data['L'],
            beta=data.get('beta', 0.3),
            method=construction.get('method', 'monte_carlo'),
            samples=construction.get('samples', 100_000),
            trials=data.get('trials', 100),
            seed=data['seed'],
            workers=data.get('workers', 1),
            out_dir=output.get('dir', 'out'),
            sets_cache=output.get('sets_cache'),
            suites=list(data.get('suites', ['reliability'])),
            budget=data.get('budget', DEFAULT_BUDGET),
            leakage_samples=leakage.get('samples', 20_000),
            bootstrap=leakage.get('bootstrap', 200),
            no_key_ablation=leakage.get('no_key_ablation', False),
            scan_n=list(scan.get('n_list', [])),
            scan_L=list(scan.get('L_list', [])),
            trend_erasures=list(trend.get('erasures', [])),
            trend_n=list(trend.get('n_list', [])),
        )

    def to_dict(self) -> dict:
        return {
            'name': self.name,
            'channel': self.channel,
            'n': self.n,
            'L': self.L,
            'beta': self.beta,
            'construction': {'method': self.method, 'samples': self.samples},
            'trials': self.trials,
            'seed': self.seed,
            'workers': self.workers,
            'output': {'dir': self.out_dir, 'sets_cache': self.sets_cache},
            'suites': list(self.suites),
            'budget': self.budget,
            'leakage': {
                'samples': self.leakage_samples,
                'bootstrap': self.bootstrap,
                'no_key_ablation': self.no_key_ablation,
            },
            'scan': {'n_list': list(self.scan_n), 'L_list': list(self.scan_L)},
            'trend': {'erasures': list(self.trend_erasures), 'n_list': list(self.trend_n)},
        }

    def identity(self) -> dict:
        """The settings that determine results; output location and worker count are excluded."""
        data = self.to_dict()
        data.pop('output')
        data.pop('workers')
        return data

    def with_overrides(self, seed=None, workers=None, sets_cache=None, out_dir=None, suites=None) -> 'ExperimentConfig':
        if seed is not None:
            self.seed = seed
        if workers is not None:
            self.workers = workers
        if sets_cache is not None:
            self.sets_cache = sets_cache
        if out_dir is not None:
            self.out_dir = out_dir
        if suites:
            unknown = [s for s in suites if s not in SUITES]
            if unknown:
                raise ConfigError(f"Unknown suite(s) {unknown} (known: {', '.join(SUITES)})")
            self.suites = list(suites)
        return self


def load_config(path: str) -> ExperimentConfig:
    """Reads, validates and parses an experiment file (YAML or JSON)."""
    try:
        raw = load_yaml(path)
    except OSError as e:
        raise ConfigError(f"Cannot read config '{path}': {e}") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"Config '{path}' is not valid YAML: {e}") from e
    base_dir = os.path.dirname(os.path.abspath(path))
    Validator(raw, base_dir=base_dir).validate()
    return ExperimentConfig.from_dict(raw, base_dir=base_dir)
