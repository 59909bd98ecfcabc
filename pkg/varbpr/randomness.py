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

import numpy as np

from varbpr.exceptions import DomainError

# Independent random streams spawned from the master seed. Appending a stream
# keeps the draws of the existing ones unchanged.
STREAMS = ('split', 'noise', 'init', 'sampling', 'probe', 'probe_bags')


def stream_seed(seed, stream):
    if stream not in STREAMS:
        raise DomainError(f'unknown random stream {stream!r}')
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)) or seed < 0:
        raise DomainError('seed should be a non-negative integer')
    return np.random.SeedSequence(int(seed), spawn_key=(STREAMS.index(stream),))


def stream_rng(seed, stream):
    return np.random.default_rng(stream_seed(seed, stream))
