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
import math
import re
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path

import numpy as np
import pandas as pd
from scipy import sparse
from scipy.special import expit

from varbpr.exceptions import ConfigError, DomainError, ParseError
from varbpr.item import Item

_logger = logging.getLogger(__name__)

FORMATS = ('ml100k_tab', 'ml1m_doublecolon', 'generic_implicit_csv')
COLUMNS = ('user', 'item', 'rating', 'timestamp')
CLEAN_THRESHOLD = 4.0
RATING_RANGE = (0.5, 5.0)
LONG_TAIL_FRACTION = 0.85
# share of items a prior preset boosts
PRESET_FRACTION = 0.5
NOISE_RETRIES = 100


@dataclass(frozen=True)
class InteractionLog:
    users: np.ndarray
    items: np.ndarray
    ratings: np.ndarray = None
    timestamps: np.ndarray = None
    user_ids: np.ndarray = None
    item_ids: np.ndarray = None
    duplicates: int = 0

    @property
    def user_count(self):
        return len(self.user_ids)

    @property
    def item_count(self):
        return len(self.item_ids)

    @property
    def record_count(self):
        return len(self.users)

    @property
    def has_ratings(self):
        return self.ratings is not None


@dataclass(frozen=True)
class SplitBundle:
    train_positives: tuple
    test_positives: tuple
    user_count: int
    item_count: int
    dropped_users: int = 0
    noise_pairs: np.ndarray = field(default_factory=lambda: np.empty((0, 2), dtype=np.int64))

    @property
    def train_size(self):
        return int(sum(len(items) for items in self.train_positives))

    @property
    def test_size(self):
        return int(sum(len(items) for items in self.test_positives))

    @cached_property
    def train_sets(self):
        return tuple(frozenset(items.tolist()) for items in self.train_positives)

    @cached_property
    def seen_sets(self):
        return tuple(train | frozenset(test.tolist())
                     for train, test in zip(self.train_sets, self.test_positives))

    @cached_property
    def train_matrix(self):
        return _pairs_matrix(*self.train_pairs(), self.user_count, self.item_count)

    @cached_property
    def seen_matrix(self):
        users, items = self.train_pairs()
        test_users, test_items = self.test_pairs()
        return _pairs_matrix(np.concatenate([users, test_users]),
                             np.concatenate([items, test_items]),
                             self.user_count, self.item_count)

    def train_pairs(self):
        return _flatten(self.train_positives)

    def test_pairs(self):
        return _flatten(self.test_positives)

    def active_users(self):
        return np.array([u for u, items in enumerate(self.train_positives) if len(items)], dtype=np.int64)

    def eval_users(self):
        return np.array([u for u, items in enumerate(self.test_positives) if len(items)], dtype=np.int64)

    def without_test(self):
        empty = tuple(np.empty(0, dtype=np.int64) for _ in range(self.user_count))
        return replace(self, test_positives=empty)


@dataclass(frozen=True)
class SignalBuffer:
    counts: np.ndarray
    popularity: np.ndarray
    rarity: np.ndarray
    long_tail_mask: np.ndarray
    quality: np.ndarray = None

    @property
    def has_quality(self):
        return self.quality is not None

    @property
    def item_count(self):
        return len(self.popularity)

    @cached_property
    def low_popularity_mask(self):
        return bottom_mask(self.popularity, PRESET_FRACTION)

    @cached_property
    def high_quality_mask(self):
        if self.quality is None:
            raise DomainError('the quality preset needs ratings')
        return ~bottom_mask(self.quality, PRESET_FRACTION)


def _flatten(per_user):
    lengths = np.array([len(items) for items in per_user], dtype=np.int64)
    users = np.repeat(np.arange(len(per_user), dtype=np.int64), lengths)
    items = np.concatenate(per_user) if len(per_user) else np.empty(0, dtype=np.int64)
    return users, items.astype(np.int64)


def _pairs_matrix(users, items, user_count, item_count):
    data = np.ones(len(users), dtype=bool)
    matrix = sparse.csr_matrix((data, (users, items)), shape=(user_count, item_count))
    matrix.sum_duplicates()
    matrix.sort_indices()
    return matrix


def _group(users, items, user_count):
    order = np.lexsort((items, users))
    users = users[order]
    items = items[order]
    bounds = np.searchsorted(users, np.arange(user_count + 1))
    return tuple(np.unique(items[bounds[u]:bounds[u + 1]]) for u in range(user_count))


def _make_bundle(train_users, train_items, test_users, test_items, user_count, item_count):
    train = _group(train_users, train_items, user_count)
    test = _group(test_users, test_items, user_count)
    dropped = [u for u in range(user_count) if len(train[u]) == 0 and len(test[u]) > 0]
    if dropped:
        _logger.warning('dropped %d users without training positives after splitting', len(dropped))
        test = tuple(np.empty(0, dtype=np.int64) if len(train[u]) == 0 else test[u]
                     for u in range(user_count))
    return SplitBundle(train, test, user_count, item_count, dropped_users=len(dropped))


def bottom_mask(values, fraction):
    """Marks the ceil(fraction * n) lowest values, lower item id first on ties."""
    values = np.nan_to_num(np.asarray(values, dtype=np.float64), nan=-np.inf)
    n_marked = math.ceil(round(fraction * len(values), 9))
    order = np.lexsort((np.arange(len(values)), values))
    mask = np.zeros(len(values), dtype=bool)
    mask[order[:n_marked]] = True
    return mask


def _parse_error(error):
    match = re.search(r'line (\d+)', str(error))
    line_number = int(match.group(1)) if match else None
    return ParseError(f'malformed record: {error}', line_number)


def _read_frame(path, format):
    try:
        if format == 'generic_implicit_csv':
            frame = pd.read_csv(path, sep=',', dtype=str, skip_blank_lines=False,
                                keep_default_na=False, na_values=[''])
            header = [name.strip() for name in frame.columns]
            if header[:2] != ['user', 'item'] or header != list(COLUMNS[:len(header)]):
                raise ParseError('header must be user,item[,rating][,timestamp]', 1)
            frame.columns = header
            first_line = 2
        else:
            sep = '\t' if format == 'ml100k_tab' else '::'
            frame = pd.read_csv(path, sep=sep, header=None, dtype=str, engine='python',
                                skip_blank_lines=False, keep_default_na=False, na_values=[''])
            if frame.shape[1] != len(COLUMNS):
                raise ParseError(f'expected {len(COLUMNS)} fields, found {frame.shape[1]}', 1)
            frame.columns = list(COLUMNS)
            first_line = 1
    except pd.errors.EmptyDataError:
        raise DomainError(f'{path} is empty')
    except pd.errors.ParserError as e:
        raise _parse_error(e)
    frame.index = np.arange(first_line, first_line + len(frame))
    return frame.dropna(how='all')


def _numeric(frame, column, integer=False):
    values = pd.to_numeric(frame[column], errors='coerce')
    bad = values.isna() | (integer and ~np.isclose(values.fillna(0) % 1, 0))
    if bad.any():
        line_number = int(bad.idxmax())
        raise ParseError(f'{column} field {frame[column][line_number]!r} is not a valid number', line_number)
    return values.to_numpy()


def load_ratings(path, format='ml100k_tab'):
    if format not in FORMATS:
        raise DomainError(f'unknown format {format!r}, expected one of {", ".join(FORMATS)}')
    path = Path(path)
    if not path.is_file():
        raise DomainError(f'{path} does not exist')

    frame = _read_frame(path, format)
    if frame.empty:
        raise DomainError(f'{path} contains no records')

    missing = frame[['user', 'item']].isna().any(axis=1)
    if missing.any():
        raise ParseError('record has no user or item field', int(missing.idxmax()))

    if format == 'generic_implicit_csv':
        raw_users = frame['user'].str.strip().to_numpy()
        raw_items = frame['item'].str.strip().to_numpy()
    else:
        raw_users = _numeric(frame, 'user', integer=True).astype(np.int64)
        raw_items = _numeric(frame, 'item', integer=True).astype(np.int64)

    ratings = None
    if 'rating' in frame:
        ratings = _numeric(frame, 'rating').astype(np.float64)
        outside = (ratings < RATING_RANGE[0]) | (ratings > RATING_RANGE[1])
        if outside.any():
            line_number = int(frame.index[np.argmax(outside)])
            raise ParseError(f'rating {ratings[np.argmax(outside)]} outside {RATING_RANGE}', line_number)
    timestamps = None
    if 'timestamp' in frame:
        timestamps = _numeric(frame, 'timestamp', integer=True).astype(np.int64)

    records = pd.DataFrame({'user': raw_users, 'item': raw_items})
    keep = ~records.duplicated(['user', 'item'], keep='last').to_numpy()
    duplicates = int(len(keep) - keep.sum())
    if duplicates:
        _logger.warning('%s: removed %d duplicate (user, item) records', path, duplicates)

    users, user_ids = pd.factorize(raw_users[keep], sort=True)
    items, item_ids = pd.factorize(raw_items[keep], sort=True)
    return InteractionLog(users=users.astype(np.int64),
                          items=items.astype(np.int64),
                          ratings=None if ratings is None else ratings[keep],
                          timestamps=None if timestamps is None else timestamps[keep],
                          user_ids=np.asarray(user_ids),
                          item_ids=np.asarray(item_ids),
                          duplicates=duplicates)


def export_remap(log, directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, raw in (('users', log.user_ids), ('items', log.item_ids)):
        pd.DataFrame({'raw_id': raw, 'dense_id': np.arange(len(raw))}).to_csv(
            directory / f'{name}.csv', index=False)


def split_clean_test(log, seed):
    if not log.has_ratings:
        raise DomainError('the clean test split needs ratings')
    rng = np.random.default_rng(seed)
    order = np.lexsort((log.items, log.users))
    users = log.users[order]
    items = log.items[order]
    ratings = log.ratings[order]
    bounds = np.searchsorted(users, np.arange(log.user_count + 1))

    test_mask = np.zeros(len(users), dtype=bool)
    for u in range(log.user_count):
        liked = np.flatnonzero(ratings[bounds[u]:bounds[u + 1]] >= CLEAN_THRESHOLD) + bounds[u]
        n_test = len(liked) // 2
        if n_test:
            test_mask[rng.choice(liked, n_test, replace=False)] = True

    return _make_bundle(users[~test_mask], items[~test_mask], users[test_mask], items[test_mask],
                        log.user_count, log.item_count)


def split_implicit(log, test_fraction, seed):
    if not 0 < test_fraction < 1:
        raise DomainError('test fraction should be between 0 and 1')
    rng = np.random.default_rng(seed)
    n_test = int(round(test_fraction * log.record_count))
    test_mask = np.zeros(log.record_count, dtype=bool)
    test_mask[rng.permutation(log.record_count)[:n_test]] = True
    if log.has_ratings:
        # held-out records rated below the threshold go back to training
        test_mask &= log.ratings >= CLEAN_THRESHOLD
    return _make_bundle(log.users[~test_mask], log.items[~test_mask],
                        log.users[test_mask], log.items[test_mask],
                        log.user_count, log.item_count)


def inject_noise(bundle, rate, seed):
    if not 0 <= rate < 1:
        raise DomainError('noise rate should be in [0, 1)')
    n_noise = math.floor(rate * bundle.train_size + 1e-9)
    if n_noise == 0:
        return bundle

    rng = np.random.default_rng(seed)
    eligible = np.array([bundle.item_count - len(seen) if len(train) else 0
                         for seen, train in zip(bundle.seen_sets, bundle.train_positives)],
                        dtype=np.float64)
    if eligible.sum() < n_noise:
        raise DomainError(f'only {int(eligible.sum())} unobserved pairs left for {n_noise} noisy positives')
    cumulative = np.cumsum(eligible / eligible.sum())

    injected = {}
    max_tries = NOISE_RETRIES * n_noise
    tries = 0
    while len(injected) < n_noise:
        if tries >= max_tries:
            raise DomainError(f'could not place {n_noise} noisy positives after {tries} draws')
        tries += 1
        u = min(int(np.searchsorted(cumulative, rng.random(), side='right')), bundle.user_count - 1)
        i = int(rng.integers(bundle.item_count))
        if i in bundle.seen_sets[u] or (u, i) in injected:
            continue
        injected[(u, i)] = None
    if tries > n_noise:
        _logger.debug('noise injection resampled %d draws', tries - n_noise)

    noise_pairs = np.array(list(injected), dtype=np.int64)
    users, items = bundle.train_pairs()
    train = _group(np.concatenate([users, noise_pairs[:, 0]]),
                   np.concatenate([items, noise_pairs[:, 1]]),
                   bundle.user_count)
    return replace(bundle, train_positives=train,
                   noise_pairs=np.concatenate([bundle.noise_pairs, noise_pairs]))


def compute_signals(bundle, log):
    users, items = bundle.train_pairs()
    counts = np.bincount(items, minlength=bundle.item_count).astype(np.float64)
    max_count = counts.max() if len(counts) else 0.0
    if max_count > 0:
        popularity = np.log1p(counts) / np.log1p(max_count)
    else:
        popularity = np.zeros(bundle.item_count)
    rarity = 1.0 - popularity

    quality = None
    if log.has_ratings:
        in_train = np.asarray(bundle.train_matrix[log.users, log.items]).ravel().astype(bool)
        rated_items = log.items[in_train]
        rated_values = log.ratings[in_train]
        rated_counts = np.bincount(rated_items, minlength=bundle.item_count)
        sums = np.bincount(rated_items, weights=rated_values, minlength=bundle.item_count)
        quality = np.full(bundle.item_count, np.nan)
        if len(rated_values):
            global_mean = rated_values.mean()
            has_rating = rated_counts > 0
            quality[has_rating] = expit(sums[has_rating] / rated_counts[has_rating] - global_mean)

    return SignalBuffer(counts=counts,
                        popularity=popularity,
                        rarity=rarity,
                        long_tail_mask=bottom_mask(popularity, LONG_TAIL_FRACTION),
                        quality=quality)


class DataInit(Item):

    def reset(self):
        self._default('dataset_path', '')
        self._default('dataset_format', 'ml100k_tab')
        self._default('split', 'clean_test')
        self._default('test_fraction', 0.2)
        self._default('noise_rate', 0.0)

    def prepare(self):
        super().prepare()
        self._init_var()

        self._show_message('\nChosen dataset parameters:\n')
        self._show_message(f'Dataset: {self.dataset_path}')
        self._show_message(f'Format: {self.dataset_format}')
        self._show_message(f'Split: {self.split}')
        if self.split == 'implicit_80_20':
            self._show_message(f'Test fraction: {self.test_fraction}')
        self._show_message(f'Noise rate: {self.noise_rate}')
        self._show_message('')

    def run(self):
        self._show_message(f'Loading interactions from {self.dataset_path} ...')
        log = load_ratings(self.dataset_path, self.dataset_format)
        self._show_message(f'{log.record_count} records, {log.user_count} users, {log.item_count} items')

        if self.split == 'clean_test':
            bundle = split_clean_test(log, self.experiment.seed_for('split'))
        else:
            bundle = split_implicit(log, self.test_fraction, self.experiment.seed_for('split'))
        self._show_message(f'Split into {bundle.train_size} training and {bundle.test_size} test positives')
        if bundle.dropped_users:
            self._show_message(f'Dropped {bundle.dropped_users} users without training positives')
        self.experiment.clean_bundle = bundle

        if self.noise_rate > 0:
            bundle = inject_noise(bundle, self.noise_rate, self.experiment.seed_for('noise'))
            self._show_message(f'Injected {len(bundle.noise_pairs)} noisy positives')

        signals = compute_signals(bundle, log)
        if not signals.has_quality:
            self._show_message('No ratings available, quality factor omitted from the priors')

        self.experiment.log = log
        self.experiment.bundle = bundle
        self.experiment.signals = signals

    def _init_var(self):
        self.dataset_path = self.var.dataset_path
        if not isinstance(self.dataset_path, str) or not self.dataset_path:
            raise ConfigError('dataset_path should name an interaction file')
        if not Path(self.dataset_path).is_file():
            raise ConfigError(f'dataset_path {self.dataset_path} does not exist')
        self.dataset_format = self._choice_var('dataset_format')
        self.split = self._choice_var('split')
        if self.split == 'clean_test' and self.dataset_format == 'generic_implicit_csv':
            self._show_message('Clean test split on a csv file, the file must carry a rating column')
        self.test_fraction = self._float_var('test_fraction')
        if not 0 < self.test_fraction < 1:
            raise ConfigError('test_fraction should be between 0 and 1')
        self.noise_rate = self._float_var('noise_rate', minimum=0.0)
        if self.noise_rate >= 1:
            raise ConfigError('noise_rate should be smaller than 1')
