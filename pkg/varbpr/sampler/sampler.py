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

from dataclasses import dataclass

import numpy as np

from varbpr.exceptions import DomainError

# bound on redraw rounds when rejecting negatives in a batch
MAX_REDRAWS = 1000


@dataclass(frozen=True)
class EnrichedInteraction:
    user: int
    positives: np.ndarray
    negatives: np.ndarray

    @property
    def M(self):
        return len(self.positives)

    @property
    def N(self):
        return len(self.negatives)


@dataclass(frozen=True)
class BagBatch:
    users: np.ndarray
    positives: np.ndarray
    negatives: np.ndarray

    def __len__(self):
        return len(self.users)

    @property
    def M(self):
        return self.positives.shape[1]

    @property
    def N(self):
        return self.negatives.shape[1]

    def bag(self, k):
        return EnrichedInteraction(int(self.users[k]), self.positives[k], self.negatives[k])

    def take(self, index):
        return BagBatch(self.users[index], self.positives[index], self.negatives[index])

    @classmethod
    def from_bags(cls, bags):
        return cls(np.array([bag.user for bag in bags], dtype=np.int64),
                   np.stack([bag.positives for bag in bags]),
                   np.stack([bag.negatives for bag in bags]))


def _check_sizes(bundle, user, M, N):
    if M < 1 or N < 1:
        raise DomainError('bags need at least one positive and one negative')
    positives = bundle.train_positives[user]
    if len(positives) == 0:
        raise DomainError(f'user {user} has no training positives')
    if N >= bundle.item_count - len(positives):
        raise DomainError(f'user {user} has fewer than {N + 1} negatives to sample from')
    return positives


def _draw_positives(positives, M, rng, anchor=None):
    if anchor is None:
        if len(positives) >= M:
            return rng.choice(positives, M, replace=False)
        return rng.choice(positives, M, replace=True)
    if M == 1:
        return np.array([anchor], dtype=np.int64)
    if len(positives) >= M:
        rest = rng.choice(positives[positives != anchor], M - 1, replace=False)
    else:
        rest = rng.choice(positives, M - 1, replace=True)
    return np.concatenate([[anchor], rest]).astype(np.int64)


def sample_bag(user, bundle, M, N, rng, anchor=None):
    positives = _check_sizes(bundle, user, M, N)
    if anchor is not None and anchor not in bundle.train_sets[user]:
        raise DomainError(f'item {anchor} is not a training positive of user {user}')
    bag_positives = _draw_positives(positives, M, rng, anchor)

    train = bundle.train_sets[user]
    negatives = []
    while len(negatives) < N:
        j = int(rng.integers(bundle.item_count))
        if j in train or j in negatives:
            continue
        negatives.append(j)
    return EnrichedInteraction(int(user), bag_positives.astype(np.int64), np.array(negatives, dtype=np.int64))


def _row_duplicates(values):
    order = np.argsort(values, axis=1, kind='stable')
    ordered = np.take_along_axis(values, order, axis=1)
    repeated = np.zeros(values.shape, dtype=bool)
    repeated[:, 1:] = ordered[:, 1:] == ordered[:, :-1]
    duplicates = np.zeros(values.shape, dtype=bool)
    np.put_along_axis(duplicates, order, repeated, axis=1)
    return duplicates


def sample_batch(users, anchors, bundle, M, N, rng):
    """Bags for a batch of scheduled (user, anchor) pairs.

    Positives follow the same rule as `sample_bag`; negatives are drawn for
    the whole batch at once and rejected entries are redrawn until every row
    holds N distinct non-positives.
    """
    users = np.asarray(users, dtype=np.int64)
    anchors = np.asarray(anchors, dtype=np.int64)
    positives = np.empty((len(users), M), dtype=np.int64)
    for k, (user, anchor) in enumerate(zip(users, anchors)):
        positives[k] = _draw_positives(_check_sizes(bundle, user, M, N), M, rng, anchor)

    negatives = rng.integers(bundle.item_count, size=(len(users), N))
    rows = np.repeat(users[:, None], N, axis=1)
    train = bundle.train_matrix
    for _ in range(MAX_REDRAWS):
        invalid = np.asarray(train[rows.ravel(), negatives.ravel()]).reshape(negatives.shape).astype(bool)
        invalid |= _row_duplicates(negatives)
        if not invalid.any():
            return BagBatch(users, positives, negatives)
        negatives[invalid] = rng.integers(bundle.item_count, size=int(invalid.sum()))
    raise DomainError('negative sampling did not converge')


def epoch_schedule(bundle, rng):
    """One (user, anchor positive) row per training positive, shuffled."""
    users, items = bundle.train_pairs()
    if len(users) == 0:
        raise DomainError('the training set is empty')
    schedule = np.column_stack([users, items])
    return schedule[rng.permutation(len(schedule))]


def iter_batches(schedule, batch_size):
    for start in range(0, len(schedule), batch_size):
        yield schedule[start:start + batch_size]
