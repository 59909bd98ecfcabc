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
from dataclasses import dataclass

import numpy as np

from varbpr.exceptions import DomainError
from varbpr.mathcore.mathcore import (cross_entropy, entropy, finite_array, normalize,
                                      stable_softmax, unwrap_scalar)

# smallest prior weight, keeps every KL against the prior finite
PRIOR_FLOOR = 1e-12
PRIOR_MODES = ('signals', 'uniform', 'long_tail', 'quality')
POSTERIOR_MODES = ('variational', 'uniform')
SIDES = ('positive', 'negative')


def _exponents(values, name):
    values = tuple(float(v) for v in values)
    if len(values) != 3:
        raise DomainError(f'{name} needs three exponents')
    if any(not math.isfinite(v) or v < 0 for v in values):
        raise DomainError(f'{name} exponents must be finite and non-negative')
    return values


@dataclass(frozen=True)
class InferenceConfig:
    c_pos: float = 4.0
    c_neg: float = 4.0
    tau: float = 1.0
    lambda_pos: tuple = (1.0, 1.0, 1.0)
    lambda_neg: tuple = (1.0, 1.0, 1.0)
    prior: str = 'signals'
    posterior: str = 'variational'

    def __post_init__(self):
        error_msg_list = []
        for name in ('c_pos', 'c_neg', 'tau'):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)) or not value > 0:
                error_msg_list.append(f'- {name} must be greater than 0, got {value!r}\n')
        if not math.isfinite(self.tau):
            error_msg_list.append('- tau must be finite\n')
        if self.prior not in PRIOR_MODES:
            error_msg_list.append(f'- prior must be one of {", ".join(PRIOR_MODES)}\n')
        if self.posterior not in POSTERIOR_MODES:
            error_msg_list.append(f'- posterior must be one of {", ".join(POSTERIOR_MODES)}\n')
        if error_msg_list:
            raise DomainError(f"Invalid inference settings\n{''.join(error_msg_list)}")
        object.__setattr__(self, 'lambda_pos', _exponents(self.lambda_pos, 'lambda_pos'))
        object.__setattr__(self, 'lambda_neg', _exponents(self.lambda_neg, 'lambda_neg'))

    @property
    def uses_hardness(self):
        return self.prior == 'signals' and (self.lambda_pos[2] > 0 or self.lambda_neg[2] > 0)


@dataclass(frozen=True)
class PriorPair:
    pos: np.ndarray
    neg: np.ndarray

    def __post_init__(self):
        for name in ('pos', 'neg'):
            weights = finite_array(getattr(self, name), f'{name} prior')
            if weights.ndim == 0 or weights.shape[-1] == 0:
                raise DomainError(f'{name} prior needs at least one entry')
            if np.any(weights <= 0):
                raise DomainError(f'{name} prior entries must be strictly positive')
            object.__setattr__(self, name, weights)

    def normalized(self):
        return normalize(self.pos), normalize(self.neg)


@dataclass(frozen=True)
class PosteriorPair:
    alpha: np.ndarray
    beta: np.ndarray

    @property
    def M(self):
        return self.alpha.shape[-1]

    @property
    def N(self):
        return self.beta.shape[-1]


def hardness_scores(scores, side, tau):
    """Bag-wise hardness: low scoring positives and high scoring negatives weigh more."""
    if side not in SIDES:
        raise DomainError(f'side must be one of {", ".join(SIDES)}')
    scores = finite_array(scores, 'scores')
    if scores.ndim == 0 or scores.shape[-1] == 0:
        raise DomainError('hardness needs at least one score')
    centered = scores - scores.mean(axis=-1, keepdims=True)
    if side == 'positive':
        centered = -centered
    return stable_softmax(centered, temperature=tau)


def _factor(values, exponent):
    if exponent == 0:
        return np.ones_like(values)
    return np.power(values, exponent)


def _quality_factors(quality, items):
    """(good, bad) quality factors; items without ratings get a neutral 1."""
    values = quality[items]
    rated = ~np.isnan(values)
    good = np.where(rated, values, 1.0)
    bad = np.where(rated, 1.0 - values, 1.0)
    return good, bad


def encode_prior_batch(positives, negatives, signals, pos_scores, neg_scores, cfg):
    """Unnormalized priors for item id arrays of shape (..., M) and (..., N)."""
    positives = np.asarray(positives, dtype=np.int64)
    negatives = np.asarray(negatives, dtype=np.int64)
    if positives.size and (positives.min() < 0 or positives.max() >= signals.item_count) \
            or negatives.size and (negatives.min() < 0 or negatives.max() >= signals.item_count):
        raise DomainError('bag items fall outside the signal buffer')

    if cfg.prior == 'uniform':
        pos = np.ones(positives.shape)
        neg = np.ones(negatives.shape)
    elif cfg.prior == 'long_tail':
        pos = signals.low_popularity_mask[positives].astype(np.float64)
        neg = (~signals.low_popularity_mask)[negatives].astype(np.float64)
    elif cfg.prior == 'quality':
        pos = signals.high_quality_mask[positives].astype(np.float64)
        neg = (~signals.high_quality_mask)[negatives].astype(np.float64)
    else:
        lp, ln = cfg.lambda_pos, cfg.lambda_neg
        pos = _factor(signals.rarity[positives], lp[0])
        neg = _factor(signals.popularity[negatives], ln[0])
        # the quality term is omitted when the data carry no ratings
        if signals.has_quality:
            good, _ = _quality_factors(signals.quality, positives)
            _, bad = _quality_factors(signals.quality, negatives)
            pos = pos * _factor(good, lp[1])
            neg = neg * _factor(bad, ln[1])
        if lp[2] > 0:
            if pos_scores is None:
                raise DomainError('the hardness factor needs model scores')
            pos = pos * _factor(hardness_scores(pos_scores, 'positive', cfg.tau), lp[2])
        if ln[2] > 0:
            if neg_scores is None:
                raise DomainError('the hardness factor needs model scores')
            neg = neg * _factor(hardness_scores(neg_scores, 'negative', cfg.tau), ln[2])

    return PriorPair(np.maximum(pos, PRIOR_FLOOR), np.maximum(neg, PRIOR_FLOOR))


def encode_prior(bag, signals, model_scores, cfg):
    pos_scores, neg_scores = model_scores if model_scores is not None else (None, None)
    return encode_prior_batch(bag.positives, bag.negatives, signals, pos_scores, neg_scores, cfg)


def _check_posterior_args(scores, prior, c, name):
    if isinstance(c, bool) or not c > 0:
        raise DomainError(f'{name} must be greater than 0')
    scores = finite_array(scores, 'scores')
    prior = finite_array(prior, 'prior')
    if scores.shape != prior.shape:
        raise DomainError('scores and prior must have equal shapes')
    if np.any(prior <= 0):
        raise DomainError('prior entries must be strictly positive')
    return scores, prior


def posterior_positive(scores, prior, c_pos):
    """alpha_m proportional to prior_m * exp(s_m / c_pos); c_pos may be infinite."""
    scores, prior = _check_posterior_args(scores, prior, c_pos, 'c_pos')
    return stable_softmax(np.log(prior) + scores / c_pos)


def posterior_negative(scores, prior, c_neg):
    scores, prior = _check_posterior_args(scores, prior, c_neg, 'c_neg')
    return stable_softmax(np.log(prior) - scores / c_neg)


def _uniform(shape):
    return np.full(shape, 1.0 / shape[-1])


def solve_posteriors(pos_scores, neg_scores, prior, cfg):
    if cfg.posterior == 'uniform':
        return PosteriorPair(_uniform(np.shape(prior.pos)), _uniform(np.shape(prior.neg)))
    return PosteriorPair(posterior_positive(pos_scores, prior.pos, cfg.c_pos),
                         posterior_negative(neg_scores, prior.neg, cfg.c_neg))


def interest_centers(positive_vectors, negative_vectors, posterior):
    """Posterior weighted centers of shape (..., d) from (..., M, d) and (..., N, d)."""
    positive_vectors = np.asarray(positive_vectors, dtype=np.float64)
    negative_vectors = np.asarray(negative_vectors, dtype=np.float64)
    if positive_vectors.shape[:-1] != np.shape(posterior.alpha) \
            or negative_vectors.shape[:-1] != np.shape(posterior.beta):
        raise DomainError('posterior and bag dimensions disagree')
    c_plus = np.einsum('...m,...md->...d', posterior.alpha, positive_vectors)
    c_minus = np.einsum('...n,...nd->...d', posterior.beta, negative_vectors)
    return c_plus, c_minus


def posterior_objective(weights, scores, prior, c, side='positive'):
    """Alignment minus c times KL(weights || normalized prior).

    The closed-form posteriors maximize this over the simplex. The negative
    side aligns against the scores.
    """
    if side not in SIDES:
        raise DomainError(f'side must be one of {", ".join(SIDES)}')
    scores = finite_array(scores, 'scores')
    sign = 1.0 if side == 'positive' else -1.0
    weights = np.asarray(weights, dtype=np.float64)
    target = np.broadcast_to(normalize(prior), weights.shape)
    return unwrap_scalar(sign * (weights * scores).sum(axis=-1)
                   + c * entropy(weights) - c * cross_entropy(weights, target))
