"""
This file is part of varbpr.

varbpr is free software: you can redistribute it and/or modify
it under the terms of the GNU General Public License as published by
the Free Software Foundation, either version 3 of the License, or
(at your option) any later version.

varbpr is distributed in the hope that it will be useful,
but WITHOUT ANY WARRANTY; without even the implied warranty of
MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
GNU General Public License for more details.

You should have received a copy of the GNU General Public License
along with varbpr.  If not, see <http://www.gnu.org/licenses/>.
"""

__author__ = "varbpr developers"
__license__ = "GPLv3"

import logging
from dataclasses import asdict, dataclass
from pathlib import Path

import yaml

from varbpr import packages
from varbpr.dataio.dataio import DataInit
from varbpr.evaluation.evaluation import EvalConfig, EvaluateItem
from varbpr.exceptions import ConfigError
from varbpr.item import Var, config_controls, control_options
from varbpr.learning.learning import TrainItem
from varbpr.randomness import stream_rng, stream_seed

_logger = logging.getLogger(__name__)

STAGES = {'dataio': DataInit, 'learning': TrainItem, 'evaluation': EvaluateItem}
SECTIONS = ('dataset', 'model', 'loss', 'eval', 'noise', 'output')


def config_sections():
    """Maps every configuration variable to its report section."""
    return {name: control['section'] for name, control in config_controls().items()}


def config_listing():
    """Configuration keys grouped by unit category, with their labels, tooltips and accepted values."""
    groups = {}
    for name, control in config_controls().items():
        groups.setdefault(control['category'], []).append((name, control))
    lines = ['configuration keys:']
    for category, controls in groups.items():
        lines.append(f'  {category}')
        for name, control in controls:
            options = control_options(name)
            accepted = f' ({" | ".join(options)})' if options else ''
            lines.append(f'    {name:<20}{control["label"]}{accepted}')
            lines.append(f'    {"":<20}{control["tooltip"]}')
    return '\n'.join(lines)


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: dict
    model: dict
    loss: dict
    eval: dict
    noise: dict
    output: dict

    @classmethod
    def from_var(cls, var):
        grouped = {section: {} for section in SECTIONS}
        for name, section in config_sections().items():
            value = var.get(name)
            grouped[section][name] = list(value) if isinstance(value, tuple) else value
        return cls(**grouped)

    def as_dict(self):
        return asdict(self)


def read_config(path):
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f'configuration file {path} does not exist')
    try:
        with open(path) as f:
            values = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ConfigError(f'could not parse {path}\n\nMessage: {e}')
    if values is None:
        return {}
    if not isinstance(values, dict):
        raise ConfigError(f'{path} should hold key: value pairs')
    nested = [key for key, value in values.items() if isinstance(value, dict)]
    if nested:
        raise ConfigError(f'{path} should be flat, nested keys: {", ".join(map(str, nested))}')
    return values


class Experiment:
    """Variable store plus the dataset, learning and evaluation stages of one run."""

    def __init__(self, values=None):
        self.var = Var()
        self.items = {name: STAGES[name](name, self) for name in packages}
        self._default('seed', 2024)
        self._default('output_directory', 'results')
        self._default('verbose', 'no')

        values = dict(values or {})
        known = set(self.var.names())
        unknown = sorted(str(key) for key in values if key not in known)
        if unknown:
            raise ConfigError(f'unknown configuration keys: {", ".join(unknown)}')
        for name, value in values.items():
            self.var.set(name, value)

        self.log = None
        self.bundle = None
        self.clean_bundle = None
        self.signals = None
        self.model = None
        self.report = None
        self.evaluation = None
        self.eval_config = EvalConfig()

    @classmethod
    def from_file(cls, path, output_directory=None, seed=None):
        values = read_config(path)
        if output_directory is not None:
            values['output_directory'] = str(output_directory)
        if seed is not None:
            values['seed'] = seed
        return cls(values)

    def _default(self, name, value):
        if not self.var.has(name):
            self.var.set(name, value)

    @property
    def seed(self):
        return self.var.seed

    @property
    def output_directory(self):
        return Path(self.var.output_directory)

    def seed_for(self, stream):
        return stream_seed(self.seed, stream)

    def rng(self, stream):
        return stream_rng(self.seed, stream)

    def prepare(self):
        seed = self.var.seed
        if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
            raise ConfigError('seed should be a non-negative integer')
        if not isinstance(self.var.output_directory, str) or not self.var.output_directory:
            raise ConfigError('output_directory should name a directory')
        for item in self.items.values():
            item.prepare()

    def run(self, stages=None):
        for name in stages or packages:
            _logger.debug('running stage %s', name)
            self.items[name].run()

    def config_echo(self):
        return ExperimentConfig.from_var(self.var).as_dict()
