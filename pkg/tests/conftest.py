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
import pytest
import yaml

from varbpr.dataio.dataio import compute_signals, load_ratings, split_clean_test

TOY_USERS = 12
TOY_ITEMS = 30
TOY_ITEMS_PER_USER = 12


def write_ml100k(path, records):
    with open(path, 'w') as f:
        for user, item, rating, timestamp in records:
            f.write(f'{user}\t{item}\t{rating}\t{timestamp}\n')
    return path


def toy_records(seed=7):
    """Every user rates 12 of 30 items; the first four of them with a 5."""
    rng = np.random.default_rng(seed)
    records = []
    for user in range(1, TOY_USERS + 1):
        items = rng.choice(np.arange(1, TOY_ITEMS + 1), size=TOY_ITEMS_PER_USER, replace=False)
        for k, item in enumerate(items):
            rating = 5 if k < 4 else int(rng.integers(1, 6))
            records.append((user, int(item), rating, 880000000 + 100 * user + k))
    return records


@pytest.fixture
def toy_path(tmp_path):
    return write_ml100k(tmp_path / 'u.data', toy_records())


@pytest.fixture
def toy_log(toy_path):
    return load_ratings(toy_path, 'ml100k_tab')


@pytest.fixture
def toy_bundle(toy_log):
    return split_clean_test(toy_log, 0)


@pytest.fixture
def toy_signals(toy_bundle, toy_log):
    return compute_signals(toy_bundle, toy_log)


@pytest.fixture
def toy_values(toy_path, tmp_path):
    return {'dataset_path': str(toy_path),
            'dataset_format': 'ml100k_tab',
            'split': 'clean_test',
            'd': 8,
            'lr': 0.01,
            'epochs': 2,
            'batch_size': 16,
            'M': 2,
            'N': 2,
            'seed': 11,
            'K': 5,
            'probe_bags': 32,
            'likelihood_samples': 5,
            'output_directory': str(tmp_path / 'results')}


@pytest.fixture
def write_config(tmp_path, toy_values):
    def write(**changes):
        path = tmp_path / 'config.yaml'
        with open(path, 'w') as f:
            yaml.safe_dump({**toy_values, **changes}, f)
        return path
    return write
