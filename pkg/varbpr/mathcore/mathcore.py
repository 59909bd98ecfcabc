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

import numpy as np
from scipy.special import entr, expit, log_softmax, rel_entr, softmax, xlogy

from varbpr.exceptions import DomainError

SIMPLEX_TOL = 1e-9
LN2 = math.log(2.0)
# above this |x| the remainder is evaluated from its asymptotic form
REMAINDER_SWITCH = 50.0


def finite_array(x, name='input'):
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise DomainError(f'{name} must be finite')
    return x


def unwrap_scalar(x):
    return float(x) if np.ndim(x) == 0 else x


def softplus(x):
    x = finite_array(x)
    return unwrap_scalar(np.logaddexp(0.0, x))


def sigmoid(x):
    x = finite_array(x)
    return unwrap_scalar(expit(x))


def log_sigmoid(x):
    """ln sigma(x), evaluated as -softplus(-x)."""
    x = finite_array(x)
    return unwrap_scalar(-np.logaddexp(0.0, -x))


def maclaurin_remainder(x):
    """Remainder of ln sigma(x) = -ln 2 + x/2 + eps(x).

    Uses the identity eps(x) = -ln cosh(x/2) = -log1p(2 sinh(x/4)^2), which
    keeps full relative precision near the expansion point.
    """
    x = finite_array(x)
    ax = np.abs(x)
    small = np.minimum(ax, REMAINDER_SWITCH)
    near = -np.log1p(2.0 * np.sinh(small / 4.0) ** 2)
    far = -(ax / 2.0) + LN2 - np.log1p(np.exp(-ax))
    return unwrap_scalar(np.where(ax < REMAINDER_SWITCH, near, far))


def check_simplex(weights, axis=-1):
    weights = finite_array(weights, 'simplex weights')
    if weights.ndim == 0 or weights.shape[axis] == 0:
        raise DomainError('simplex vector must have at least one entry')
    if np.any(weights < 0):
        raise DomainError('simplex entries must be non-negative')
    if np.any(np.abs(weights.sum(axis=axis) - 1.0) > SIMPLEX_TOL):
        raise DomainError('simplex entries must sum to 1')
    return weights


def normalize(weights, axis=-1):
    weights = finite_array(weights, 'weights')
    if np.any(weights < 0):
        raise DomainError('weights must be non-negative')
    total = weights.sum(axis=axis, keepdims=True)
    if np.any(total <= 0):
        raise DomainError('weights must have positive mass')
    return weights / total


def stable_softmax(logits, temperature=1.0, axis=-1):
    logits = finite_array(logits, 'logits')
    if logits.ndim == 0 or logits.shape[axis] == 0:
        raise DomainError('softmax needs at least one logit')
    if not temperature > 0:
        raise DomainError('temperature must be greater than 0')
    # scipy subtracts the row maximum before exponentiating
    return softmax(logits / temperature, axis=axis)


def stable_log_softmax(logits, temperature=1.0, axis=-1):
    logits = finite_array(logits, 'logits')
    if logits.ndim == 0 or logits.shape[axis] == 0:
        raise DomainError('softmax needs at least one logit')
    if not temperature > 0:
        raise DomainError('temperature must be greater than 0')
    return log_softmax(logits / temperature, axis=axis)


def entropy(p, axis=-1):
    p = check_simplex(p, axis=axis)
    return unwrap_scalar(entr(p).sum(axis=axis))


def cross_entropy(p, q, axis=-1):
    """H(p, q) = -sum p ln q with 0 ln 0 = 0."""
    p = check_simplex(p, axis=axis)
    q = check_simplex(q, axis=axis)
    if p.shape != q.shape:
        raise DomainError('distributions must have equal lengths')
    if np.any((q == 0) & (p > 0)):
        raise DomainError('p puts mass outside the support of q')
    return unwrap_scalar(-xlogy(p, q).sum(axis=axis))


def kl_divergence(p, q, axis=-1):
    p = check_simplex(p, axis=axis)
    q = check_simplex(q, axis=axis)
    if p.shape != q.shape:
        raise DomainError('distributions must have equal lengths')
    if np.any((q == 0) & (p > 0)):
        raise DomainError('p puts mass outside the support of q')
    # rounding can leave tiny negative sums when p == q
    return unwrap_scalar(np.maximum(rel_entr(p, q).sum(axis=axis), 0.0))
