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


class VarBPRException(Exception):
    pass


class DomainError(VarBPRException, ValueError):
    pass


class ParseError(DomainError):

    def __init__(self, message, line_number=None):
        if line_number is not None:
            message = f'line {line_number}: {message}'
        super().__init__(message)
        self.line_number = line_number


class ConfigError(VarBPRException):
    pass


class DivergenceError(VarBPRException):

    def __init__(self, message, epoch=None, bag=None, norms=None):
        self.epoch = epoch
        self.bag = bag
        self.norms = norms or {}
        details = []
        if epoch is not None:
            details.append(f'epoch {epoch}')
        if bag is not None:
            details.append(f'bag {bag}')
        for name, value in self.norms.items():
            details.append(f'|{name}| = {value:.6g}')
        if details:
            message = f'{message} ({", ".join(details)})'
        super().__init__(message)
