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

import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from conftest import TOY_ITEMS_PER_USER, TOY_USERS, toy_records, write_ml100k
from varbpr.dataio.dataio import (CLEAN_THRESHOLD, LONG_TAIL_FRACTION, bottom_mask, compute_signals,
                                  export_remap, inject_noise, load_ratings, split_clean_test,
                                  split_implicit)
from varbpr.exceptions import DomainError, ParseError


def _pairs(per_user):
    return {(u, int(i)) for u, items in enumerate(per_user) for i in items}


class TestLoadRatings:

    def test_toy_file(self, toy_log):
        assert toy_log.user_count == TOY_USERS
        assert toy_log.record_count == TOY_USERS * TOY_ITEMS_PER_USER
        assert toy_log.has_ratings
        assert_array_equal(toy_log.user_ids, np.arange(1, TOY_USERS + 1))
        assert toy_log.users.min() == 0 and toy_log.users.max() == TOY_USERS - 1
        assert toy_log.items.max() == toy_log.item_count - 1

    def test_remap_is_dense_and_sorted(self, tmp_path):
        path = write_ml100k(tmp_path / 'u.data', [(50, 900, 4, 1), (7, 12, 3, 2), (50, 12, 5, 3)])
        log = load_ratings(path)
        assert_array_equal(log.user_ids, [7, 50])
        assert_array_equal(log.item_ids, [12, 900])
        assert_array_equal(log.users, [1, 0, 1])
        assert_array_equal(log.items, [1, 0, 0])

    def test_duplicates_keep_last(self, tmp_path, caplog):
        path = write_ml100k(tmp_path / 'u.data', [(1, 1, 2, 1), (1, 2, 4, 2), (1, 1, 5, 3)])
        with caplog.at_level(logging.WARNING):
            log = load_ratings(path)
        assert log.duplicates == 1
        assert log.record_count == 2
        assert_array_equal(log.ratings, [4.0, 5.0])
        assert 'duplicate' in caplog.text

    def test_ml1m_format(self, tmp_path):
        path = tmp_path / 'ratings.dat'
        path.write_text('1::10::5::978300760\n2::10::3::978302109\n')
        log = load_ratings(path, 'ml1m_doublecolon')
        assert log.user_count == 2 and log.item_count == 1

    def test_generic_csv_without_ratings(self, tmp_path):
        path = tmp_path / 'clicks.csv'
        path.write_text('user,item\nalice,a\nbob,b\nalice,b\n')
        log = load_ratings(path, 'generic_implicit_csv')
        assert not log.has_ratings
        assert list(log.user_ids) == ['alice', 'bob']
        with pytest.raises(DomainError):
            split_clean_test(log, 0)

    def test_generic_csv_bad_header(self, tmp_path):
        path = tmp_path / 'clicks.csv'
        path.write_text('item,user\na,alice\n')
        with pytest.raises(ParseError) as error:
            load_ratings(path, 'generic_implicit_csv')
        assert error.value.line_number == 1

    def test_malformed_field_reports_line(self, tmp_path):
        path = tmp_path / 'u.data'
        path.write_text('1\t1\t5\t1\n1\t2\t4\t2\n1\tabc\t5\t3\n')
        with pytest.raises(ParseError) as error:
            load_ratings(path)
        assert error.value.line_number == 3

    def test_missing_field_reports_line(self, tmp_path):
        path = tmp_path / 'u.data'
        path.write_text('1\t1\t5\t1\n1\t2\t4\n')
        with pytest.raises(ParseError) as error:
            load_ratings(path)
        assert error.value.line_number == 2

    def test_rating_out_of_range(self, tmp_path):
        path = write_ml100k(tmp_path / 'u.data', [(1, 1, 5, 1), (1, 2, 9, 2)])
        with pytest.raises(ParseError) as error:
            load_ratings(path)
        assert error.value.line_number == 2

    def test_missing_and_empty_files(self, tmp_path):
        with pytest.raises(DomainError):
            load_ratings(tmp_path / 'nothing.data')
        (tmp_path / 'empty.data').write_text('')
        with pytest.raises(DomainError):
            load_ratings(tmp_path / 'empty.data')
        with pytest.raises(DomainError):
            load_ratings(tmp_path / 'empty.data', 'parquet')


class TestSplits:

    def test_clean_test_holds_out_half_of_the_liked_items(self, toy_log, toy_bundle):
        for u in range(toy_log.user_count):
            rows = toy_log.users == u
            liked = set(toy_log.items[rows & (toy_log.ratings >= CLEAN_THRESHOLD)].tolist())
            test = set(toy_bundle.test_positives[u].tolist())
            assert test <= liked
            assert len(test) == len(liked) // 2

    def test_clean_test_partitions_the_log(self, toy_log, toy_bundle):
        train = _pairs(toy_bundle.train_positives)
        test = _pairs(toy_bundle.test_positives)
        assert not train & test
        assert train | test == set(zip(toy_log.users.tolist(), toy_log.items.tolist()))

    def test_clean_test_is_deterministic(self, toy_log):
        first = split_clean_test(toy_log, 3)
        second = split_clean_test(toy_log, 3)
        assert _pairs(first.test_positives) == _pairs(second.test_positives)

    def test_implicit_split(self, toy_log):
        bundle = split_implicit(toy_log, 0.2, 5)
        train = _pairs(bundle.train_positives)
        test = _pairs(bundle.test_positives)
        assert not train & test
        assert len(train) + len(test) <= toy_log.record_count
        assert bundle.test_size <= round(0.2 * toy_log.record_count)
        assert len(train) >= toy_log.record_count - round(0.2 * toy_log.record_count)

    def test_implicit_split_holds_out_liked_items_only(self, toy_log):
        bundle = split_implicit(toy_log, 0.5, 3)
        rating = {(int(u), int(i)): r for u, i, r in zip(toy_log.users, toy_log.items, toy_log.ratings)}
        test = _pairs(bundle.test_positives)
        assert test
        assert all(rating[pair] >= CLEAN_THRESHOLD for pair in test)
        # low ratings drawn for the test side stay implicit training positives
        assert _pairs(bundle.train_positives) | test == set(rating)

    def test_implicit_split_without_ratings(self, tmp_path):
        path = tmp_path / 'clicks.csv'
        path.write_text('user,item\n' + ''.join(f'{u},{i}\n' for u in range(10) for i in range(10)))
        bundle = split_implicit(load_ratings(path, 'generic_implicit_csv'), 0.2, 1)
        assert bundle.test_size == 20
        assert bundle.train_size == 80

    def test_implicit_split_fraction(self, toy_log):
        with pytest.raises(DomainError):
            split_implicit(toy_log, 1.0, 0)

    def test_users_without_training_positives_are_dropped(self, tmp_path, caplog):
        path = write_ml100k(tmp_path / 'u.data', [(1, 1, 5, 1), (2, 1, 3, 2), (2, 2, 3, 3)])
        log = load_ratings(path)
        with caplog.at_level(logging.WARNING):
            bundle = split_implicit(log, 0.5, 0)
        # whoever lost every record to the test side keeps no test items
        for u in range(bundle.user_count):
            if len(bundle.train_positives[u]) == 0:
                assert len(bundle.test_positives[u]) == 0

    def test_without_test(self, toy_bundle):
        assert toy_bundle.without_test().test_size == 0
        assert toy_bundle.without_test().train_size == toy_bundle.train_size


class TestNoise:

    def test_injected_pairs(self, toy_bundle):
        noisy = inject_noise(toy_bundle, 0.1, 4)
        expected = math.floor(0.1 * toy_bundle.train_size + 1e-9)
        assert len(noisy.noise_pairs) == expected
        assert noisy.train_size == toy_bundle.train_size + expected
        seen = _pairs(toy_bundle.train_positives) | _pairs(toy_bundle.test_positives)
        injected = {(int(u), int(i)) for u, i in noisy.noise_pairs}
        assert len(injected) == expected
        assert not injected & seen
        assert injected <= _pairs(noisy.train_positives)
        assert _pairs(noisy.test_positives) == _pairs(toy_bundle.test_positives)

    def test_zero_rate_is_a_no_op(self, toy_bundle):
        assert inject_noise(toy_bundle, 0.0, 4) is toy_bundle

    def test_rate_range(self, toy_bundle):
        with pytest.raises(DomainError):
            inject_noise(toy_bundle, 1.0, 4)

    def test_deterministic(self, toy_bundle):
        assert_array_equal(inject_noise(toy_bundle, 0.05, 9).noise_pairs,
                           inject_noise(toy_bundle, 0.05, 9).noise_pairs)


class TestSignals:

    def test_popularity_and_rarity(self, toy_bundle, toy_signals):
        users, items = toy_bundle.train_pairs()
        counts = np.bincount(items, minlength=toy_bundle.item_count)
        assert_array_equal(toy_signals.counts, counts)
        assert toy_signals.popularity.max() == pytest.approx(1.0)
        assert_allclose(toy_signals.popularity, np.log1p(counts) / np.log1p(counts.max()))
        assert_allclose(toy_signals.rarity, 1.0 - toy_signals.popularity)

    def test_long_tail_share(self, toy_signals):
        n = toy_signals.item_count
        assert toy_signals.long_tail_mask.sum() == math.ceil(LONG_TAIL_FRACTION * n)
        head = toy_signals.popularity[~toy_signals.long_tail_mask]
        tail = toy_signals.popularity[toy_signals.long_tail_mask]
        assert head.min() >= tail.max()

    def test_quality(self, toy_signals):
        rated = ~np.isnan(toy_signals.quality)
        assert rated.any()
        assert np.all((toy_signals.quality[rated] > 0) & (toy_signals.quality[rated] < 1))

    def test_quality_uses_training_ratings_only(self, tmp_path):
        path = write_ml100k(tmp_path / 'u.data', [(1, 1, 5, 1), (1, 2, 1, 2), (2, 1, 5, 3), (2, 2, 1, 4)])
        log = load_ratings(path)
        bundle = split_implicit(log, 0.25, 0)
        signals = compute_signals(bundle, log)
        users, items = bundle.train_pairs()
        for i in range(log.item_count):
            if i not in items:
                assert np.isnan(signals.quality[i])

    def test_quality_midpoint(self, tmp_path):
        path = write_ml100k(tmp_path / 'u.data', [(1, 1, 3, 1), (1, 2, 5, 2), (2, 1, 3, 3), (2, 3, 1, 4)])
        log = load_ratings(path)
        signals = compute_signals(split_implicit(log, 0.01, 0), log)
        # item 1 averages 3, exactly the global mean
        assert signals.quality[0] == pytest.approx(0.5)

    def test_signals_ignore_the_test_set(self, toy_bundle, toy_log, toy_signals):
        without = compute_signals(toy_bundle.without_test(), toy_log)
        assert_array_equal(without.popularity, toy_signals.popularity)
        assert_array_equal(without.quality, toy_signals.quality)

    def test_no_ratings_means_no_quality(self, tmp_path):
        path = tmp_path / 'clicks.csv'
        path.write_text('user,item\n1,a\n1,b\n2,a\n2,c\n')
        log = load_ratings(path, 'generic_implicit_csv')
        signals = compute_signals(split_implicit(log, 0.25, 0), log)
        assert not signals.has_quality
        with pytest.raises(DomainError):
            signals.high_quality_mask

    def test_preset_masks(self, toy_signals):
        n = toy_signals.item_count
        assert toy_signals.low_popularity_mask.sum() == math.ceil(0.5 * n)
        assert toy_signals.high_quality_mask.sum() == n - math.ceil(0.5 * n)


class TestBottomMask:

    def test_ties_mark_lower_ids_first(self):
        assert_array_equal(bottom_mask([1.0, 1.0, 1.0, 0.0], 0.5), [True, False, False, True])

    def test_rounds_up(self):
        assert bottom_mask(np.arange(10.0), 0.85).sum() == 9

    def test_nan_counts_as_lowest(self):
        assert_array_equal(bottom_mask([0.5, np.nan, 0.1], 0.34), [False, True, True])


def test_export_remap(tmp_path, toy_log):
    export_remap(toy_log, tmp_path / 'out')
    users = pd.read_csv(tmp_path / 'out' / 'users.csv')
    items = pd.read_csv(tmp_path / 'out' / 'items.csv')
    assert list(users.columns) == ['raw_id', 'dense_id']
    assert_array_equal(users['raw_id'], toy_log.user_ids)
    assert_array_equal(items['dense_id'], np.arange(toy_log.item_count))


def test_toy_records_are_reproducible():
    assert toy_records() == toy_records()
