import logging
import os

import yaml

from lib.channel_model import DmsSpec
from lib.errors import ConfigError
from lib.set_builder import METHODS
from lib.utils import is_power_of_two

SUITES = ('reliability', 'trend', 'leakage', 'plugin_leakage', 'tv', 'independence', 'scan')
REQUIRED = ('channel', 'n', 'L', 'seed')


class Validator:
    def __init__(self, config: dict, base_dir: str = None):
        self.config = config if isinstance(config, dict) else {}
        self.raw = config
        self.base_dir = base_dir

    def validate(self):
        """Runs every check. Raises ConfigError listing all problems."""
        if not isinstance(self.raw, dict):
            raise ConfigError("Configuration Validation Failed:\n- top level must be a mapping")
        errors = []
        errors.extend(self._validate_required())
        errors.extend(self._validate_sizes())
        errors.extend(self._validate_beta())
        errors.extend(self._validate_construction())
        errors.extend(self._validate_suites())
        errors.extend(self._validate_lists())
        errors.extend(self._validate_channel())

        if errors:
            error_msg = "\n".join([f"- {e}" for e in errors])
            raise ConfigError(f"Configuration Validation Failed:\n{error_msg}")

        logging.info("Configuration validation passed.")

    def _validate_required(self):
        return [f"missing required key '{key}'" for key in REQUIRED if key not in self.config]

    def _validate_sizes(self):
        errors = []
        n = self.config.get('n')
        if n is not None and (isinstance(n, bool) or not is_power_of_two(n) or n < 2):
            errors.append(f"n must be a power of two >= 2, got {n!r}")
        L = self.config.get('L')
        if L is not None and (not isinstance(L, int) or isinstance(L, bool) or L < 2):
            errors.append(f"L must be an integer >= 2, got {L!r}")
        seed = self.config.get('seed')
        if 'seed' in self.config and (not isinstance(seed, int) or isinstance(seed, bool) or seed < 0):
            errors.append(f"seed must be an explicit non-negative integer, got {seed!r}")
        for key in ('trials', 'workers', 'budget'):
            value = self.config.get(key)
            if value is not None and (not isinstance(value, int) or isinstance(value, bool) or value < 1):
                errors.append(f"{key} must be a positive integer, got {value!r}")
        return errors

    def _validate_beta(self):
        beta = self.config.get('beta', 0.3)
        if beta == 'auto':
            return []
        if isinstance(beta, bool) or not isinstance(beta, (int, float)) or not 0 < beta < 0.5:
            return [f"beta must lie in the open interval (0, 1/2) or be 'auto', got {beta!r}"]
        return []

    def _validate_construction(self):
        errors = []
        construction = self.config.get('construction') or {}
        if not isinstance(construction, dict):
            return ["construction must be a mapping"]
        method = construction.get('method', 'monte_carlo')
        if method not in METHODS:
            errors.append(f"construction.method must be one of {list(METHODS)}, got '{method}'")
        samples = construction.get('samples', 1)
        if not isinstance(samples, int) or isinstance(samples, bool) or samples < 1:
            errors.append(f"construction.samples must be a positive integer, got {samples!r}")
        return errors

    def _validate_suites(self):
        suites = self.config.get('suites', ['reliability'])
        if not isinstance(suites, list):
            return ["suites must be a list"]
        return [f"unknown suite '{s}' (known: {', '.join(SUITES)})" for s in suites if s not in SUITES]

    def _validate_lists(self):
        errors = []
        scan = self.config.get('scan') or {}
        n_list = scan.get('n_list', [])
        if any(not is_power_of_two(n) for n in n_list):
            errors.append(f"scan.n_list must hold powers of two, got {n_list}")
        elif list(n_list) != sorted(n_list):
            errors.append(f"scan.n_list must be ascending, got {n_list}")
        if any(not isinstance(L, int) or L < 2 for L in scan.get('L_list', [])):
            errors.append(f"scan.L_list entries must be integers >= 2")
        trend = self.config.get('trend') or {}
        erasures = trend.get('erasures', [])
        if any(not isinstance(e, (int, float)) or not 0 <= e <= 1 for e in erasures):
            errors.append(f"trend.erasures must lie in [0, 1], got {erasures}")
        trend_n = trend.get('n_list', [])
        if any(not is_power_of_two(n) or n < 2 for n in trend_n):
            errors.append(f"trend.n_list must hold powers of two >= 2, got {trend_n}")
        elif list(trend_n) != sorted(set(trend_n)):
            errors.append(f"trend.n_list must be strictly ascending, got {trend_n}")
        return errors

    def _validate_channel(self):
        channel = self.config.get('channel')
        if channel is None:
            return []
        if isinstance(channel, str):
            path = channel if os.path.isabs(channel) or self.base_dir is None else os.path.join(self.base_dir, channel)
            if not os.path.exists(path):
                return [f"channel file '{path}' does not exist"]
            with open(path, 'r') as f:
                channel = yaml.safe_load(f)
        try:
            DmsSpec.from_config(channel)
        except (ConfigError, AttributeError, KeyError, TypeError, ValueError) as e:
            return [f"channel: {e}"]
        return []
