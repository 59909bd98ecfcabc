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

import importlib
import logging

from varbpr.exceptions import ConfigError

# units whose controls make up the configuration file
CONFIG_UNITS = ('dataio', 'sampler', 'inference', 'learning', 'evaluation', 'cli')
SWITCH_OPTIONS = ('yes', 'no')


def config_controls():
    """Maps every configuration variable to its control, tagged with the category of its unit."""
    controls = {}
    for unit in CONFIG_UNITS:
        package = importlib.import_module(f'varbpr.{unit}')
        for control in package.controls:
            controls[control['var']] = {**control, 'category': package.category}
    return controls


def control_options(name):
    """Values a combobox or checkbox control accepts, None for free-form controls."""
    control = config_controls().get(name, {})
    if control.get('type') == 'checkbox':
        return SWITCH_OPTIONS
    if control.get('type') == 'combobox':
        return tuple(control['options'])
    return None


class Var:
    """Flat variable store shared by all items of one experiment."""

    def __init__(self, **values):
        self.__dict__.update(values)

    def set(self, name, value):
        setattr(self, name, value)

    def get(self, name, default=None):
        return self.__dict__.get(name, default)

    def has(self, name):
        return name in self.__dict__

    def names(self):
        return list(self.__dict__)

    def __contains__(self, name):
        return self.has(name)


class Item:

    def __init__(self, name, experiment):
        self.name = name
        self.experiment = experiment
        self.var = experiment.var
        self.verbose = 'no'
        self._logger = logging.getLogger(type(self).__module__)
        self.reset()

    def reset(self):
        pass

    def prepare(self):
        self.verbose = self._choice_var('verbose')

    def run(self):
        raise NotImplementedError

    def _default(self, name, value):
        if not self.var.has(name):
            self.var.set(name, value)

    def _int_var(self, name, minimum=None):
        value = self.var.get(name)
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f'{name} should be an integer')
        if minimum is not None and value < minimum:
            raise ConfigError(f'{name} should be at least {minimum}')
        return value

    def _float_var(self, name, minimum=None, positive=False):
        value = self.var.get(name)
        # YAML reads exponent notation without a dot, like 1e-3, as a string
        if isinstance(value, str):
            try:
                value = float(value)
            except ValueError:
                raise ConfigError(f'{name} should be a number, got {value!r}')
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f'{name} should be a number')
        value = float(value)
        if positive and not value > 0:
            raise ConfigError(f'{name} should be greater than 0')
        if minimum is not None and value < minimum:
            raise ConfigError(f'{name} can not be smaller than {minimum}')
        return value

    def _choice_var(self, name, options=None):
        value = self.var.get(name)
        options = options or control_options(name)
        if value not in options:
            raise ConfigError(f'{name} should be one of {", ".join(options)}, got {value!r}')
        return value

    def _show_message(self, message):
        self._logger.debug(message)
        if self.verbose == 'yes':
            print(message)
