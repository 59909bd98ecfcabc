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

import math
import os
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

from varbpr.dataio.dataio import compute_signals, inject_noise, load_ratings, split_clean_test
from varbpr.evaluation.evaluation import EvalConfig, evaluate_model
from varbpr.inference.inference import InferenceConfig
from varbpr.learning.learning import TrainConfig, train
from varbpr.randomness import stream_seed

ML100K = os.environ.get('VARBPR_ML100K')
SEED = 2024
EVAL = EvalConfig(K=20)

pytestmark = [pytest.mark.slow,
              pytest.mark.skipif(not ML100K or not Path(ML100K).is_file(),
                                 reason='set VARBPR_ML100K to the path of u.data')]


@pytest.fixture(scope='module')
def ml100k():
    log = load_ratings(ML100K, 'ml100k_tab')
    bundle = split_clean_test(log, stream_seed(SEED, 'split'))
    return log, bundle, compute_signals(bundle, log)


def _metrics(bundle, signals, **settings):
    """Trains with the default hyperparameters and scores the final model."""
    inference = {name: settings.pop(name) for name in list(settings)
                 if name in ('prior', 'posterior', 'c_pos', 'c_neg')}
    config = TrainConfig(seed=SEED, inference=InferenceConfig(**inference), **settings)
    model, report = train(config, bundle, signals, EVAL, diagnostics=False)
    return {**evaluate_model(model, bundle, signals, EVAL, seed=SEED), 'seconds': report.seconds_per_epoch}


@pytest.fixture(scope='module')
def baselines(ml100k):
    _, bundle, signals = ml100k
    return {loss: _metrics(bundle, signals, loss=loss) for loss in ('bpr', 'varbpr')}


def test_file_counts(ml100k):
    log, bundle, signals = ml100k
    assert log.record_count == 100000
    assert (log.user_count, log.item_count) == (943, 1682)
    assert bundle.train_size + bundle.test_size == 100000
    assert signals.long_tail_mask.sum() == 1430


def test_bpr_baseline(baselines):
    assert baselines['bpr']['recall_k'] == pytest.approx(0.3226, abs=0.02)
    assert baselines['bpr']['ndcg_k'] == pytest.approx(0.4374, abs=0.02)


def test_varbpr_beats_bpr(baselines):
    assert baselines['varbpr']['recall_k'] == pytest.approx(0.3566, abs=0.02)
    assert baselines['varbpr']['ndcg_k'] == pytest.approx(0.4919, abs=0.02)
    assert baselines['varbpr']['ndcg_k'] >= 1.05 * baselines['bpr']['ndcg_k']


def test_ablation_ordering(ml100k, baselines):
    _, bundle, signals = ml100k
    full = baselines['varbpr']['ndcg_k']
    no_prior = _metrics(bundle, signals, prior='uniform')['ndcg_k']
    no_vi = _metrics(bundle, signals, posterior='uniform')['ndcg_k']
    no_plugin = _metrics(bundle, signals, loss='varbpr_elbo')['ndcg_k']
    assert full > no_prior > no_vi
    assert no_plugin >= full - 0.01


def test_long_tail_exposure_grows_with_strength(ml100k):
    _, bundle, signals = ml100k
    strengths = [2.0, 4.0, 6.0, 8.0, 10.0]
    aplt = [_metrics(bundle, signals, prior='long_tail', c_pos=c, c_neg=c)['aplt_k'] for c in strengths]
    assert stats.spearmanr(strengths, aplt)[0] > 0.8


def test_noise_widens_the_likelihood_gap(ml100k):
    log, bundle, _ = ml100k
    gaps = []
    for rate in (0.05, 0.10):
        noisy = inject_noise(bundle, rate, stream_seed(SEED, 'noise'))
        signals = compute_signals(noisy, log)
        likelihood = {loss: _metrics(noisy, signals, loss=loss)['likelihood'] for loss in ('bpr', 'varbpr')}
        assert likelihood['varbpr'] > likelihood['bpr']
        gaps.append(likelihood['varbpr'] - likelihood['bpr'])
    assert gaps[1] >= gaps[0]


def test_epoch_time_is_linear_in_the_bag_size(ml100k):
    _, bundle, signals = ml100k
    sizes = [2, 4, 8, 16]
    seconds = []
    for size in sizes:
        M = math.ceil(size / 2)
        seconds.append(np.mean(_metrics(bundle, signals, M=M, N=size - M, epochs=3)['seconds']))
    assert stats.linregress(sizes, seconds).rvalue ** 2 >= 0.9
