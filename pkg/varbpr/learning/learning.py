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
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit, logsumexp
from tqdm import tqdm

from varbpr.evaluation.evaluation import EvalConfig, RunReport, diagnose
from varbpr.exceptions import ConfigError, DivergenceError, DomainError
from varbpr.inference.inference import (InferenceConfig, PosteriorPair, encode_prior_batch,
                                        interest_centers, solve_posteriors)
from varbpr.item import Item
from varbpr.mathcore.mathcore import (cross_entropy, entropy, finite_array, log_sigmoid,
                                      softplus, unwrap_scalar)
from varbpr.randomness import stream_rng
from varbpr.sampler.sampler import BagBatch, epoch_schedule, iter_batches, sample_bag, sample_batch

_logger = logging.getLogger(__name__)

LOSSES = ('bpr', 'varbpr', 'varbpr_elbo')
INIT_SCALE = 0.01
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
CHECKPOINT_VERSION = 1


@dataclass
class EmbeddingModel:
    user_factors: np.ndarray
    item_factors: np.ndarray

    def __post_init__(self):
        self.user_factors = np.asarray(self.user_factors, dtype=np.float64)
        self.item_factors = np.asarray(self.item_factors, dtype=np.float64)
        if self.user_factors.ndim != 2 or self.item_factors.ndim != 2:
            raise DomainError('factor tables must be matrices')
        if self.user_factors.shape[1] != self.item_factors.shape[1]:
            raise DomainError('user and item factors must share the embedding dimension')

    @classmethod
    def initialize(cls, n_users, n_items, d, rng, scale=INIT_SCALE):
        return cls(rng.normal(0.0, scale, size=(n_users, d)),
                   rng.normal(0.0, scale, size=(n_items, d)))

    @property
    def d(self):
        return self.user_factors.shape[1]

    @property
    def n_users(self):
        return self.user_factors.shape[0]

    @property
    def n_items(self):
        return self.item_factors.shape[0]

    def params(self):
        return {'user_factors': self.user_factors, 'item_factors': self.item_factors}

    def norms(self):
        return {name: float(np.linalg.norm(value)) for name, value in self.params().items()}

    def copy(self):
        return EmbeddingModel(self.user_factors.copy(), self.item_factors.copy())

    def score(self, user, item):
        for name, value, bound in (('user', user, self.n_users), ('item', item, self.n_items)):
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or not 0 <= value < bound:
                raise DomainError(f'{name} id {value!r} out of range [0, {bound})')
        return float(self.user_factors[user] @ self.item_factors[item])

    def user_scores(self, users):
        """Full catalog scores, one row per user."""
        return self.user_factors[users] @ self.item_factors.T


def score(model, user, item):
    return model.score(user, item)


def _loss_choice(value):
    if value not in LOSSES:
        raise DomainError(f'loss should be one of {", ".join(LOSSES)}, got {value!r}')
    return value


@dataclass(frozen=True)
class TrainConfig:
    loss: str = 'varbpr'
    d: int = 64
    lr: float = 1e-3
    l2: float = 1e-4
    epochs: int = 100
    M: int = 4
    N: int = 4
    seed: int = 2024
    batch_size: int = 256
    inference: InferenceConfig = field(default_factory=InferenceConfig)

    def __post_init__(self):
        _loss_choice(self.loss)
        error_msg_list = []
        for name in ('d', 'epochs', 'M', 'N', 'batch_size'):
            if getattr(self, name) < 1:
                error_msg_list.append(f'- {name} should be at least 1\n')
        if not self.lr > 0:
            error_msg_list.append('- lr should be greater than 0\n')
        if not self.l2 >= 0:
            error_msg_list.append('- l2 can not be negative\n')
        if error_msg_list:
            raise DomainError(f"Invalid training settings\n{''.join(error_msg_list)}")
        # plain BPR trains on single (user, positive, negative) triplets
        if self.loss == 'bpr' and (self.M, self.N) != (1, 1):
            _logger.info('loss bpr uses one positive and one negative per bag, ignoring M=%d N=%d',
                         self.M, self.N)
            object.__setattr__(self, 'M', 1)
            object.__setattr__(self, 'N', 1)

    def as_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class SparseGradient:
    """Gradient rows of one factor table; every row appears once."""
    rows: np.ndarray
    values: np.ndarray

    @classmethod
    def from_rows(cls, rows, values):
        rows = np.asarray(rows, dtype=np.int64).ravel()
        values = np.asarray(values, dtype=np.float64).reshape(len(rows), -1)
        unique, inverse = np.unique(rows, return_inverse=True)
        summed = np.zeros((len(unique), values.shape[1]))
        np.add.at(summed, inverse, values)
        return cls(unique, summed)


@dataclass
class OptimizerState:
    first_moments: dict
    second_moments: dict
    step: int = 0
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS

    @classmethod
    def for_params(cls, params):
        return cls({name: np.zeros_like(value) for name, value in params.items()},
                   {name: np.zeros_like(value) for name, value in params.items()})


def adam_step(state, params, grads, lr):
    """Bias corrected Adam, in place.

    A `SparseGradient` only updates the moments and values of its rows; a
    dense array updates the whole table. The step counter is shared by all
    tables.
    """
    state.step += 1
    correction1 = 1.0 - state.beta1 ** state.step
    correction2 = 1.0 - state.beta2 ** state.step
    for name, grad in grads.items():
        if name not in params or name not in state.first_moments:
            raise DomainError(f'no parameter table named {name!r}')
        param = params[name]
        if isinstance(grad, SparseGradient):
            rows, values = grad.rows, grad.values.reshape((len(grad.rows),) + param.shape[1:])
        else:
            rows, values = slice(None), np.asarray(grad, dtype=np.float64)
            if values.shape != param.shape:
                raise DomainError(f'gradient of {name} has shape {values.shape}, expected {param.shape}')
        m = state.first_moments[name]
        v = state.second_moments[name]
        m[rows] = state.beta1 * m[rows] + (1.0 - state.beta1) * values
        v[rows] = state.beta2 * v[rows] + (1.0 - state.beta2) * values ** 2
        param[rows] -= lr * (m[rows] / correction1) / (np.sqrt(v[rows] / correction2) + state.eps)
    return params


def bpr_loss(margin):
    """-ln sigma(margin)."""
    return softplus(-finite_array(margin, 'margin'))


def summarized_margin(u, c_plus, c_minus):
    return unwrap_scalar(np.sum(np.asarray(u) * (np.asarray(c_plus) - np.asarray(c_minus)), axis=-1))


def varbpr_loss(u, c_plus, c_minus):
    return bpr_loss(summarized_margin(u, c_plus, c_minus))


def contrastive_loss(u, c_plus, c_minus):
    """The same loss written as a two-way softmax over the centers."""
    positive = np.sum(np.asarray(u) * np.asarray(c_plus), axis=-1)
    negative = np.sum(np.asarray(u) * np.asarray(c_minus), axis=-1)
    return unwrap_scalar(np.logaddexp(positive, negative) - positive)


def pair_margins(u, positive_vectors, negative_vectors):
    """Gamma_mn = u.i_m - u.j_n, shape (..., M, N)."""
    positive = np.einsum('...d,...md->...m', u, positive_vectors)
    negative = np.einsum('...d,...nd->...n', u, negative_vectors)
    return positive[..., :, None] - negative[..., None, :]


def _pair_weights(posterior):
    return np.asarray(posterior.alpha)[..., :, None] * np.asarray(posterior.beta)[..., None, :]


def elbo_loss(u, positive_vectors, negative_vectors, posterior):
    gamma = pair_margins(u, positive_vectors, negative_vectors)
    return unwrap_scalar(-(_pair_weights(posterior) * log_sigmoid(gamma)).sum(axis=(-2, -1)))


@dataclass(frozen=True)
class BagGradients:
    user: np.ndarray
    positives: np.ndarray
    negatives: np.ndarray


def varbpr_gradients(u, positive_vectors, negative_vectors, posterior, l2=0.0):
    """Gradients of varbpr_loss plus l2 * squared norms, posteriors held fixed."""
    u = np.asarray(u, dtype=np.float64)
    positive_vectors = np.asarray(positive_vectors, dtype=np.float64)
    negative_vectors = np.asarray(negative_vectors, dtype=np.float64)
    c_plus, c_minus = interest_centers(positive_vectors, negative_vectors, posterior)
    difference = c_plus - c_minus
    g = expit(-np.sum(u * difference, axis=-1))[..., None]
    grad_u = -g * difference + 2.0 * l2 * u
    grad_positives = -(g * posterior.alpha)[..., None] * u[..., None, :] + 2.0 * l2 * positive_vectors
    grad_negatives = (g * posterior.beta)[..., None] * u[..., None, :] + 2.0 * l2 * negative_vectors
    return BagGradients(grad_u, grad_positives, grad_negatives)


def elbo_gradients(u, positive_vectors, negative_vectors, posterior, l2=0.0):
    u = np.asarray(u, dtype=np.float64)
    positive_vectors = np.asarray(positive_vectors, dtype=np.float64)
    negative_vectors = np.asarray(negative_vectors, dtype=np.float64)
    gamma = pair_margins(u, positive_vectors, negative_vectors)
    w = _pair_weights(posterior) * expit(-gamma)
    grad_u = -(np.einsum('...mn,...md->...d', w, positive_vectors)
               - np.einsum('...mn,...nd->...d', w, negative_vectors)) + 2.0 * l2 * u
    grad_positives = -w.sum(axis=-1)[..., None] * u[..., None, :] + 2.0 * l2 * positive_vectors
    grad_negatives = w.sum(axis=-2)[..., None] * u[..., None, :] + 2.0 * l2 * negative_vectors
    return BagGradients(grad_u, grad_positives, grad_negatives)


def bpr_gradients(u, positive_vector, negative_vector, l2=0.0):
    positive_vector = np.asarray(positive_vector, dtype=np.float64)
    ones = np.ones(positive_vector.shape[:-1] + (1,))
    grads = varbpr_gradients(u, positive_vector[..., None, :], np.asarray(negative_vector)[..., None, :],
                             PosteriorPair(ones, ones), l2)
    return BagGradients(grads.user, grads.positives[..., 0, :], grads.negatives[..., 0, :])


def _log_joint(u, positive_vectors, negative_vectors, prior):
    pos_prior, neg_prior = prior.normalized()
    gamma = pair_margins(u, positive_vectors, negative_vectors)
    return np.log(pos_prior)[..., :, None] + np.log(neg_prior)[..., None, :] + log_sigmoid(gamma)


def log_evidence(u, positive_vectors, negative_vectors, prior):
    """ln sum_h P(h) P(x | h), enumerating every (m, n) index pair."""
    return unwrap_scalar(logsumexp(_log_joint(u, positive_vectors, negative_vectors, prior), axis=(-2, -1)))


def exact_posterior(u, positive_vectors, negative_vectors, prior):
    log_joint = _log_joint(u, positive_vectors, negative_vectors, prior)
    return np.exp(log_joint - logsumexp(log_joint, axis=(-2, -1), keepdims=True))


def elbo(u, positive_vectors, negative_vectors, posterior, prior):
    pos_prior, neg_prior = prior.normalized()
    alpha, beta = posterior.alpha, posterior.beta
    return unwrap_scalar(-np.asarray(elbo_loss(u, positive_vectors, negative_vectors, posterior))
                         + entropy(alpha) - cross_entropy(alpha, pos_prior)
                         + entropy(beta) - cross_entropy(beta, neg_prior))


def infer_batch(batch, signals, pos_scores, neg_scores, config):
    """E-step for a batch: priors from the current scores, then closed-form posteriors."""
    if config.loss == 'bpr':
        ones = np.ones((len(batch), 1))
        return PosteriorPair(ones, ones)
    cfg = config.inference
    prior = encode_prior_batch(batch.positives, batch.negatives, signals, pos_scores, neg_scores, cfg)
    return solve_posteriors(pos_scores, neg_scores, prior, cfg)


def batch_objective(model, batch, signals, config):
    """Mean regularized loss of a batch of bags and its sparse gradients."""
    U = model.user_factors[batch.users]
    P = model.item_factors[batch.positives]
    Q = model.item_factors[batch.negatives]
    pos_scores = np.einsum('bd,bmd->bm', U, P)
    neg_scores = np.einsum('bd,bnd->bn', U, Q)
    if not (np.all(np.isfinite(pos_scores)) and np.all(np.isfinite(neg_scores))):
        raise FloatingPointError('non-finite bag scores')

    posterior = infer_batch(batch, signals, pos_scores, neg_scores, config)
    if config.loss == 'varbpr_elbo':
        losses = elbo_loss(U, P, Q, posterior)
        grads = elbo_gradients(U, P, Q, posterior, config.l2)
    else:
        c_plus, c_minus = interest_centers(P, Q, posterior)
        losses = varbpr_loss(U, c_plus, c_minus)
        grads = varbpr_gradients(U, P, Q, posterior, config.l2)

    penalty = config.l2 * ((U ** 2).sum(axis=-1) + (P ** 2).sum(axis=(-2, -1)) + (Q ** 2).sum(axis=(-2, -1)))
    loss = float(np.mean(losses + penalty))
    if not math.isfinite(loss):
        raise FloatingPointError('non-finite loss')

    B = len(batch)
    item_rows = np.concatenate([batch.positives.ravel(), batch.negatives.ravel()])
    item_values = np.concatenate([grads.positives.reshape(-1, model.d), grads.negatives.reshape(-1, model.d)])
    return loss, {'user_factors': SparseGradient.from_rows(batch.users, grads.user / B),
                  'item_factors': SparseGradient.from_rows(item_rows, item_values / B)}


def _draw_batch(rows, bundle, config, rng):
    if config.batch_size == 1:
        user, anchor = rows[0]
        return BagBatch.from_bags([sample_bag(int(user), bundle, config.M, config.N, rng, anchor=int(anchor))])
    return sample_batch(rows[:, 0], rows[:, 1], bundle, config.M, config.N, rng)


def _touched_finite(model, grads):
    return all(np.all(np.isfinite(model.params()[name][grad.rows])) for name, grad in grads.items())


def train(config, bundle, signals, eval_config=None, progress=False, diagnostics=True, echo=None):
    """Train an embedding model; returns the model and its RunReport.

    Every epoch visits each training positive once as the anchor of a bag.
    With batch_size 1 the parameters are updated after every bag.
    """
    eval_config = eval_config or EvalConfig()
    if config.inference.prior == 'quality' and not signals.has_quality and config.loss != 'bpr':
        raise DomainError('the quality prior needs a dataset with ratings')

    model = EmbeddingModel.initialize(bundle.user_count, bundle.item_count, config.d,
                                      stream_rng(config.seed, 'init'))
    state = OptimizerState.for_params(model.params())
    rng = stream_rng(config.seed, 'sampling')
    report = RunReport(config=echo if echo is not None else config.as_dict())

    for epoch in range(1, config.epochs + 1):
        started = time.perf_counter()
        schedule = epoch_schedule(bundle, rng)
        batches = tqdm(iter_batches(schedule, config.batch_size),
                       total=math.ceil(len(schedule) / config.batch_size),
                       desc=f'Epoch {epoch}/{config.epochs}', leave=False, disable=not progress)
        total = 0.0
        for index, rows in enumerate(batches):
            batch = _draw_batch(rows, bundle, config, rng)
            try:
                loss, grads = batch_objective(model, batch, signals, config)
            except FloatingPointError as e:
                raise DivergenceError(f'training diverged: {e}', epoch=epoch,
                                      bag=index * config.batch_size, norms=model.norms())
            adam_step(state, model.params(), grads, config.lr)
            if not _touched_finite(model, grads):
                raise DivergenceError('training diverged: non-finite parameters after update',
                                      epoch=epoch, bag=index * config.batch_size, norms=model.norms())
            total += loss * len(batch)
        mean_loss = total / len(schedule)
        report.seconds_per_epoch.append(time.perf_counter() - started)
        _logger.info('epoch %d/%d: loss %.6f (%.2f s)', epoch, config.epochs, mean_loss,
                     report.seconds_per_epoch[-1])

        if diagnostics and (epoch % eval_config.eval_every == 0 or epoch == config.epochs):
            row = diagnose(model, bundle, signals, config.inference, config.M, config.N,
                           eval_config, epoch=epoch, loss=mean_loss, seed=config.seed)
            report.rows.append(row)
        report.losses.append(mean_loss)

    if report.rows:
        report.final = report.rows[-1].metrics()
    return model, report


def save_checkpoint(model, path, config=None):
    """Writes a versioned .npz archive: d, table sizes, both factor tables and the config echo."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'wb') as f:
        np.savez(f,
                 format_version=np.int64(CHECKPOINT_VERSION),
                 d=np.int64(model.d),
                 n_users=np.int64(model.n_users),
                 n_items=np.int64(model.n_items),
                 user_factors=np.ascontiguousarray(model.user_factors),
                 item_factors=np.ascontiguousarray(model.item_factors),
                 config=np.array(json.dumps(config or {}, sort_keys=True)))
    return path


def load_checkpoint(path):
    path = Path(path)
    if not path.is_file():
        raise DomainError(f'checkpoint {path} does not exist')
    with np.load(path, allow_pickle=False) as archive:
        version = int(archive['format_version'])
        if version != CHECKPOINT_VERSION:
            raise DomainError(f'unsupported checkpoint version {version}')
        model = EmbeddingModel(archive['user_factors'], archive['item_factors'])
        if (model.d, model.n_users, model.n_items) != (int(archive['d']), int(archive['n_users']),
                                                        int(archive['n_items'])):
            raise DomainError(f'checkpoint {path} is inconsistent')
        config = json.loads(str(archive['config']))
    return model, config


class TrainItem(Item):

    def reset(self):
        self._default('d', 64)
        self._default('lr', 0.001)
        self._default('l2', 0.0001)
        self._default('epochs', 100)
        self._default('batch_size', 256)
        self._default('loss', 'varbpr')
        self._default('M', 4)
        self._default('N', 4)
        self._default('c_pos', 4.0)
        self._default('c_neg', 4.0)
        self._default('tau', 1.0)
        self._default('lambda_pos', [1.0, 1.0, 1.0])
        self._default('lambda_neg', [1.0, 1.0, 1.0])
        self._default('prior', 'signals')
        self._default('posterior', 'variational')

    def prepare(self):
        super().prepare()
        self._init_var()

        self._show_message('\nChosen training parameters:\n')
        self._show_message(f'Loss: {self.config.loss}')
        self._show_message(f'Bag size: {self.config.M} positives, {self.config.N} negatives')
        self._show_message(f'Embedding dimension: {self.config.d}')
        self._show_message(f'Learning rate: {self.config.lr}, weight decay: {self.config.l2}')
        self._show_message(f'Epochs: {self.config.epochs}, batch size: {self.config.batch_size}')
        if self.config.loss != 'bpr':
            cfg = self.config.inference
            self._show_message(f'Temperatures: c_pos {cfg.c_pos}, c_neg {cfg.c_neg}, tau {cfg.tau}')
            self._show_message(f'Prior: {cfg.prior}, exponents {cfg.lambda_pos} / {cfg.lambda_neg}')
            self._show_message(f'Posterior: {cfg.posterior}')
        self._show_message('')

    def run(self):
        self._show_message(f'Training {self.config.loss} for {self.config.epochs} epochs ...')
        model, report = train(self.config, self.experiment.bundle, self.experiment.signals,
                              eval_config=self.experiment.eval_config,
                              progress=self.verbose == 'yes',
                              echo=self.experiment.config_echo())
        self.experiment.model = model
        self.experiment.report = report
        if report.final:
            self._show_message(f"Final NDCG@K {report.final['ndcg_k']:.4f}, "
                               f"Recall@K {report.final['recall_k']:.4f}")

    def _exponent_var(self, name):
        value = self.var.get(name)
        if not isinstance(value, (list, tuple)) or len(value) != 3 \
                or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in value):
            raise ConfigError(f'{name} should be a list of three numbers')
        if any(v < 0 for v in value):
            raise ConfigError(f'{name} exponents can not be negative')
        return tuple(float(v) for v in value)

    def _init_var(self):
        self.inference_settings = dict(c_pos=self._float_var('c_pos', positive=True),
                                       c_neg=self._float_var('c_neg', positive=True),
                                       tau=self._float_var('tau', positive=True),
                                       lambda_pos=self._exponent_var('lambda_pos'),
                                       lambda_neg=self._exponent_var('lambda_neg'),
                                       prior=self._choice_var('prior'),
                                       posterior=self._choice_var('posterior'))
        self.settings = dict(loss=self._choice_var('loss'),
                             d=self._int_var('d', minimum=1),
                             lr=self._float_var('lr', positive=True),
                             l2=self._float_var('l2', minimum=0.0),
                             epochs=self._int_var('epochs', minimum=1),
                             M=self._int_var('M', minimum=1),
                             N=self._int_var('N', minimum=1),
                             seed=self.experiment.seed,
                             batch_size=self._int_var('batch_size', minimum=1))
        self.config = self.make_config()

    def make_config(self, **overrides):
        """TrainConfig from the validated variables, with training or inference fields replaced."""
        inference = {**self.inference_settings,
                     **{name: overrides.pop(name) for name in list(overrides) if name in self.inference_settings}}
        try:
            return TrainConfig(inference=InferenceConfig(**inference), **{**self.settings, **overrides})
        except (DomainError, TypeError) as e:
            raise ConfigError(str(e))
