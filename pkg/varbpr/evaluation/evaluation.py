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

import json
import logging
import os
import socket
import threading
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.spatial.distance import pdist
from scipy.special import expit, logsumexp

from varbpr.dataio.dataio import LONG_TAIL_FRACTION, bottom_mask
from varbpr.exceptions import ConfigError, DomainError
from varbpr.inference.inference import encode_prior_batch, solve_posteriors
from varbpr.item import Item
from varbpr.mathcore.mathcore import kl_divergence, log_sigmoid, normalize
from varbpr.randomness import stream_rng
from varbpr.sampler.sampler import MAX_REDRAWS, epoch_schedule, sample_batch

_logger = logging.getLogger(__name__)

THREADS_ENV = 'VARBPR_EVAL_THREADS'
SCOPES = ('bag', 'global')
# smoothing added to pooled posterior mass before renormalization
POOL_FLOOR = 1e-12
# rounding slack on both sides of the Jensen-gap sandwich
JENSEN_TOL = 1e-12
# rows per group entering the pairwise uniformity statistic
REPRESENTATION_ROWS = 2000


@dataclass(frozen=True)
class EvalConfig:
    K: int = 20
    eval_every: int = 1
    probe_bags: int = 2048
    likelihood_samples: int = 100

    def __post_init__(self):
        error_msg_list = []
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
                error_msg_list.append(f'- {f.name} should be an integer of at least 1\n')
        if error_msg_list:
            raise DomainError(f"Invalid evaluation settings\n{''.join(error_msg_list)}")


@dataclass(frozen=True)
class RankedList:
    """Top-K item ids per user, best first; -1 pads users with fewer candidates."""
    users: np.ndarray
    items: np.ndarray

    @property
    def K(self):
        return self.items.shape[1]

    def __len__(self):
        return len(self.users)

    def for_user(self, user):
        row = self.items[np.flatnonzero(self.users == user)[0]]
        return row[row >= 0]


def eval_threads():
    value = os.environ.get(THREADS_ENV, '1')
    try:
        threads = int(value)
    except ValueError:
        raise ConfigError(f'{THREADS_ENV} should be an integer, got {value!r}')
    if threads < 1:
        raise ConfigError(f'{THREADS_ENV} should be at least 1')
    return threads


def _rank_chunk(model, bundle, users, K, out):
    scores = model.user_scores(users)
    rows = np.repeat(np.arange(len(users)), [len(bundle.train_positives[u]) for u in users])
    if len(rows):
        scores[rows, np.concatenate([bundle.train_positives[u] for u in users])] = -np.inf
    # a stable sort of the negated scores keeps lower ids first among ties
    order = np.argsort(-scores, axis=1, kind='stable')[:, :K]
    top = np.take_along_axis(scores, order, axis=1)
    out[:] = np.where(np.isneginf(top), -1, order)


def rank_topk(model, bundle, K, users=None):
    """Exact top-K over the whole catalog, training positives excluded."""
    if isinstance(K, bool) or not isinstance(K, (int, np.integer)) or K < 1:
        raise DomainError('K should be a positive integer')
    users = bundle.eval_users() if users is None else np.asarray(users, dtype=np.int64)
    K = min(int(K), bundle.item_count)
    items = np.full((len(users), K), -1, dtype=np.int64)
    if len(users) == 0:
        return RankedList(users, items)

    chunks = np.array_split(np.arange(len(users)), min(eval_threads(), len(users)))
    threads = []
    for chunk in chunks:
        thread = threading.Thread(target=_rank_chunk,
                                  args=(model, bundle, users[chunk], K, items[chunk[0]:chunk[-1] + 1]))
        thread.start()
        threads.append(thread)
    for thread in threads:
        thread.join()
    return RankedList(users, items)


def _hits(lists, test_positives):
    """Hit matrix and test set sizes of the users with held-out items."""
    sizes = np.array([len(test_positives[u]) for u in lists.users], dtype=np.int64)
    keep = sizes > 0
    hits = np.zeros((int(keep.sum()), lists.K), dtype=bool)
    for k, row in enumerate(np.flatnonzero(keep)):
        hits[k] = np.isin(lists.items[row], test_positives[lists.users[row]])
    return hits, sizes[keep]


def recall_at_k(lists, test_positives):
    hits, sizes = _hits(lists, test_positives)
    if len(sizes) == 0:
        return 0.0
    return float(np.mean(hits.sum(axis=1) / sizes))


def ndcg_at_k(lists, test_positives):
    hits, sizes = _hits(lists, test_positives)
    if len(sizes) == 0:
        return 0.0
    discounts = 1.0 / np.log2(np.arange(lists.K) + 2.0)
    dcg = (hits * discounts).sum(axis=1)
    ideal = np.cumsum(discounts)[np.minimum(sizes, lists.K) - 1]
    return float(np.mean(dcg / ideal))


def aplt_at_k(lists, signals):
    """Mean share of long-tail items in each top-K list."""
    if len(lists) == 0:
        return 0.0
    valid = lists.items >= 0
    long_tail = signals.long_tail_mask[np.where(valid, lists.items, 0)] & valid
    return float(np.mean(long_tail.sum(axis=1) / lists.K))


def exposure_profile(lists, n_items):
    """Each item's share of all filled top-K slots."""
    items = lists.items[lists.items >= 0]
    counts = np.bincount(items, minlength=n_items).astype(np.float64)
    if len(items) == 0:
        return counts
    return counts / len(items)


def sphere_uniformity(vectors):
    """log mean exp(-2 |x - y|^2) over pairs of L2-normalized rows, None below two rows.

    Lower values mean the rows spread more evenly over the unit sphere.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    if len(vectors) < 2:
        return None
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    unit = vectors / np.where(norms > 0, norms, 1.0)
    return float(logsumexp(-2.0 * pdist(unit, 'sqeuclidean')) - np.log(len(vectors) * (len(vectors) - 1) / 2))


def representation_profile(model, bundle, signals, rng, max_rows=REPRESENTATION_ROWS):
    """Count, mean norm and sphere uniformity of head and tail items and of head and tail users.

    Items split by the long-tail mask; users split the same way by their
    number of training positives. Groups above max_rows are subsampled.
    """
    activity = np.array([len(items) for items in bundle.train_positives], dtype=np.float64)
    tail_users = bottom_mask(activity, LONG_TAIL_FRACTION)
    groups = {'head_items': model.item_factors[~signals.long_tail_mask],
              'tail_items': model.item_factors[signals.long_tail_mask],
              'head_users': model.user_factors[~tail_users],
              'tail_users': model.user_factors[tail_users]}
    profile = {}
    for name, vectors in groups.items():
        if len(vectors) > max_rows:
            vectors = vectors[np.sort(rng.choice(len(vectors), max_rows, replace=False))]
        profile[name] = {'count': int(len(vectors)),
                         'mean_norm': float(np.linalg.norm(vectors, axis=1).mean()) if len(vectors) else None,
                         'uniformity': sphere_uniformity(vectors)}
    return profile


def _probe_margins(model, bundle, samples_per_user, rng):
    users, positives = bundle.test_pairs()
    if len(users) == 0:
        raise DomainError('the likelihood probe needs held-out positives')
    users = np.repeat(users, samples_per_user)
    positives = np.repeat(positives, samples_per_user)
    negatives = rng.integers(bundle.item_count, size=len(users))
    seen = bundle.seen_matrix
    for _ in range(MAX_REDRAWS):
        invalid = np.asarray(seen[users, negatives]).ravel().astype(bool)
        if not invalid.any():
            break
        negatives[invalid] = rng.integers(bundle.item_count, size=int(invalid.sum()))
    else:
        raise DomainError('could not sample unobserved items for the likelihood probe')
    U = model.user_factors[users]
    return np.einsum('bd,bd->b', U, model.item_factors[positives] - model.item_factors[negatives])


def likelihood_probe(model, bundle, samples_per_user, rng, log=False):
    """Mean sigma(x_ui - x_uj) over held-out positives i and unobserved j.

    With log=True the mean of ln sigma is returned instead.
    """
    margins = _probe_margins(model, bundle, samples_per_user, rng)
    if log:
        return float(np.mean(log_sigmoid(margins)))
    return float(np.mean(expit(margins)))


def bag_scores(model, bags):
    U = model.user_factors[bags.users]
    pos_scores = np.einsum('bd,bmd->bm', U, model.item_factors[bags.positives])
    neg_scores = np.einsum('bd,bnd->bn', U, model.item_factors[bags.negatives])
    return pos_scores, neg_scores


def bag_posteriors(model, bags, signals, cfg):
    pos_scores, neg_scores = bag_scores(model, bags)
    prior = encode_prior_batch(bags.positives, bags.negatives, signals, pos_scores, neg_scores, cfg)
    return prior, solve_posteriors(pos_scores, neg_scores, prior, cfg)


@dataclass(frozen=True)
class JensenGapSummary:
    gaps: np.ndarray
    variances: np.ndarray

    @property
    def mean(self):
        return float(np.mean(self.gaps))

    @property
    def median(self):
        return float(np.median(self.gaps))

    @property
    def max(self):
        return float(np.max(self.gaps))

    @property
    def margin_var_mean(self):
        return float(np.mean(self.variances))

    @property
    def violations(self):
        outside = (self.gaps < -JENSEN_TOL) | (self.gaps > self.variances / 8.0 + JENSEN_TOL)
        return int(outside.sum())


def jensen_gaps(pos_scores, neg_scores, posterior):
    """Per bag gap ln sigma(E Gamma) - E ln sigma(Gamma) and Var(Gamma) under alpha x beta."""
    gamma = np.asarray(pos_scores)[..., :, None] - np.asarray(neg_scores)[..., None, :]
    weights = np.asarray(posterior.alpha)[..., :, None] * np.asarray(posterior.beta)[..., None, :]
    mean = (weights * gamma).sum(axis=(-2, -1))
    variance = (weights * (gamma - mean[..., None, None]) ** 2).sum(axis=(-2, -1))
    gap = log_sigmoid(mean) - (weights * log_sigmoid(gamma)).sum(axis=(-2, -1))
    return gap, variance


def jensen_gap_probe(model, bags, signals, cfg):
    pos_scores, neg_scores = bag_scores(model, bags)
    _, posterior = bag_posteriors(model, bags, signals, cfg)
    gaps, variances = jensen_gaps(pos_scores, neg_scores, posterior)
    return JensenGapSummary(np.atleast_1d(gaps), np.atleast_1d(variances))


def _user_prior(model, user, positives, negatives, signals, cfg):
    """Prior over the user's whole positive and negative support, hardness included."""
    u = model.user_factors[user]
    pos_scores = model.item_factors[positives] @ u
    neg_scores = model.item_factors[negatives] @ u
    prior = encode_prior_batch(positives, negatives, signals, pos_scores, neg_scores, cfg)
    return normalize(prior.pos), normalize(prior.neg)


def _pooled(support, items, mass):
    pooled = np.zeros(len(support))
    np.add.at(pooled, np.searchsorted(support, items.ravel()), mass.ravel())
    return normalize(pooled + POOL_FLOOR)


def kl_compliance(model, bundle, signals, cfg, scope, bags):
    """Mean (KL(alpha || prior+), KL(beta || prior-)) over bags or over users.

    The bag scope compares every bag posterior with its renormalized bag
    prior. The global scope pools posterior mass per user over all of the
    user's positives and non-positives and compares it with the user-level
    prior; users without bags are skipped.
    """
    if scope not in SCOPES:
        raise DomainError(f'scope should be one of {", ".join(SCOPES)}')
    prior, posterior = bag_posteriors(model, bags, signals, cfg)
    if scope == 'bag':
        pos_prior, neg_prior = prior.normalized()
        return (float(np.mean(kl_divergence(posterior.alpha, pos_prior))),
                float(np.mean(kl_divergence(posterior.beta, neg_prior))))

    kl_pos, kl_neg = [], []
    all_items = np.arange(bundle.item_count)
    for user in np.unique(bags.users):
        rows = bags.users == user
        positives = bundle.train_positives[user]
        negatives = np.setdiff1d(all_items, positives, assume_unique=True)
        pos_prior, neg_prior = _user_prior(model, user, positives, negatives, signals, cfg)
        kl_pos.append(kl_divergence(_pooled(positives, bags.positives[rows], posterior.alpha[rows]), pos_prior))
        kl_neg.append(kl_divergence(_pooled(negatives, bags.negatives[rows], posterior.beta[rows]), neg_prior))
    return float(np.mean(kl_pos)), float(np.mean(kl_neg))


def sample_probe_bags(bundle, M, N, n_bags, rng):
    """A fixed random subset of one epoch's bags."""
    schedule = epoch_schedule(bundle, rng)
    rows = schedule[np.sort(rng.choice(len(schedule), size=min(n_bags, len(schedule)), replace=False))]
    return sample_batch(rows[:, 0], rows[:, 1], bundle, M, N, rng)


EPOCH_COLUMNS = ('epoch', 'loss', 'recall_k', 'ndcg_k', 'aplt_k', 'likelihood', 'log_likelihood',
                 'jensen_gap_mean', 'jensen_gap_median', 'jensen_gap_max', 'margin_var_mean',
                 'jensen_violations', 'kl_bag_pos', 'kl_bag_neg', 'kl_global_pos', 'kl_global_neg')


@dataclass(frozen=True)
class DiagnosticsRow:
    epoch: int
    loss: float
    recall_k: float
    ndcg_k: float
    aplt_k: float
    likelihood: float
    log_likelihood: float
    jensen_gap_mean: float
    jensen_gap_median: float
    jensen_gap_max: float
    margin_var_mean: float
    jensen_violations: int
    kl_bag_pos: float
    kl_bag_neg: float
    kl_global_pos: float
    kl_global_neg: float

    def metrics(self):
        values = asdict(self)
        del values['epoch']
        return values


@dataclass
class RunReport:
    config: dict
    rows: list = field(default_factory=list)
    final: dict = field(default_factory=dict)
    losses: list = field(default_factory=list)
    seconds_per_epoch: list = field(default_factory=list)

    def frame(self):
        return pd.DataFrame([asdict(row) for row in self.rows], columns=list(EPOCH_COLUMNS))

    def summary(self):
        return {'config': self.config,
                'final': self.final,
                'rows': len(self.rows),
                'epochs': len(self.losses),
                'losses': self.losses}

    def write(self, directory):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        self.frame().to_csv(directory / 'epochs.csv', index=False)
        with open(directory / 'report.json', 'w') as f:
            json.dump(self.summary(), f, indent=2, sort_keys=True)

    def write_run_info(self, directory, started, finished):
        """Sidecar with the host and timings, kept apart from the deterministic outputs."""
        with open(Path(directory) / 'run_info.json', 'w') as f:
            json.dump({'hostname': socket.gethostname(),
                       'started': started.isoformat(),
                       'finished': finished.isoformat(),
                       'seconds_per_epoch': self.seconds_per_epoch}, f, indent=2)


def evaluate_model(model, bundle, signals, eval_config, seed):
    lists = rank_topk(model, bundle, eval_config.K)
    margins = _probe_margins(model, bundle, eval_config.likelihood_samples, stream_rng(seed, 'probe'))
    return {'K': eval_config.K,
            'recall_k': recall_at_k(lists, bundle.test_positives),
            'ndcg_k': ndcg_at_k(lists, bundle.test_positives),
            'aplt_k': aplt_at_k(lists, signals),
            'likelihood': float(np.mean(expit(margins))),
            'log_likelihood': float(np.mean(log_sigmoid(margins)))}


def diagnose(model, bundle, signals, cfg, M, N, eval_config, epoch, loss, seed):
    """One DiagnosticsRow for the current model snapshot.

    Probes draw from a fresh 'probe' stream so every epoch is measured on
    the same bags and likelihood triplets.
    """
    metrics = evaluate_model(model, bundle, signals, eval_config, seed)
    bags = sample_probe_bags(bundle, M, N, eval_config.probe_bags, stream_rng(seed, 'probe_bags'))
    gaps = jensen_gap_probe(model, bags, signals, cfg)
    kl_bag = kl_compliance(model, bundle, signals, cfg, 'bag', bags)
    kl_global = kl_compliance(model, bundle, signals, cfg, 'global', bags)
    return DiagnosticsRow(epoch=int(epoch), loss=float(loss),
                          recall_k=metrics['recall_k'], ndcg_k=metrics['ndcg_k'], aplt_k=metrics['aplt_k'],
                          likelihood=metrics['likelihood'], log_likelihood=metrics['log_likelihood'],
                          jensen_gap_mean=gaps.mean, jensen_gap_median=gaps.median, jensen_gap_max=gaps.max,
                          margin_var_mean=gaps.margin_var_mean, jensen_violations=gaps.violations,
                          kl_bag_pos=kl_bag[0], kl_bag_neg=kl_bag[1],
                          kl_global_pos=kl_global[0], kl_global_neg=kl_global[1])


class EvaluateItem(Item):

    def reset(self):
        self._default('K', 20)
        self._default('eval_every', 1)
        self._default('probe_bags', 2048)
        self._default('likelihood_samples', 100)

    def prepare(self):
        super().prepare()
        self._init_var()
        self.experiment.eval_config = self.config

        self._show_message('\nChosen evaluation parameters:\n')
        self._show_message(f'Cut-off K: {self.config.K}')
        self._show_message(f'Diagnostics every {self.config.eval_every} epoch(s)')
        self._show_message(f'Probe bags: {self.config.probe_bags}')
        self._show_message(f'Likelihood samples per held-out positive: {self.config.likelihood_samples}')
        self._show_message(f'Evaluation threads: {eval_threads()}')
        self._show_message('')

    def run(self):
        self._show_message('Evaluating model ...')
        self.experiment.evaluation = evaluate_model(self.experiment.model, self.experiment.bundle,
                                                    self.experiment.signals, self.config,
                                                    self.experiment.seed)
        for name in ('recall_k', 'ndcg_k', 'aplt_k', 'likelihood', 'log_likelihood'):
            self._show_message(f'{name}: {self.experiment.evaluation[name]:.6f}')

    def _init_var(self):
        try:
            self.config = EvalConfig(K=self._int_var('K', minimum=1),
                                     eval_every=self._int_var('eval_every', minimum=1),
                                     probe_bags=self._int_var('probe_bags', minimum=1),
                                     likelihood_samples=self._int_var('likelihood_samples', minimum=1))
        except DomainError as e:
            raise ConfigError(str(e))
        eval_threads()
