"""Dense float64 numerics: the differentiable primitives every loss is built on.

All numeric state in this package is a plain ``numpy.ndarray`` of float64;
there is no tensor wrapper class.  Every public function validates that its
inputs are finite and raises :class:`ContractViolation` otherwise, so NaN/Inf
can never propagate silently out of a public operation.
"""

import zlib

import numpy as np

from .errors import ContractViolation


def as_f64(x):
    """Coerce to a float64 array without copying when already one."""
    return np.asarray(x, dtype=np.float64)


def check_finite(x, name="value"):
    x = as_f64(x)
    if not np.all(np.isfinite(x)):
        raise ContractViolation(f"{name} contains non-finite entries")
    return x


class Rng:
    """Deterministic random stream with a documented splitting rule.

    Backed by numpy's PCG64.  A stream is identified by its seed plus the
    tuple of split keys that led to it; ``split(label)`` derives a child
    stream whose key tuple is the parent's with ``crc32(label)`` appended.
    The same (seed, labels) path therefore always yields a bit-identical
    stream within one build of this package.
    """

    def __init__(self, seed, _keys=()):
        self.seed = int(seed)
        self._keys = tuple(int(k) for k in _keys)
        self._gen = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence([self.seed, *self._keys]))
        )

    def split(self, label):
        """Derive an independent child stream named by ``label``."""
        if isinstance(label, str):
            key = zlib.crc32(label.encode("utf-8"))
        else:
            key = int(label)
        return Rng(self.seed, self._keys + (key,))

    def normal(self, size=None):
        return self._gen.standard_normal(size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size)

    def integer(self, low, high):
        """One integer drawn uniformly from [low, high)."""
        return int(self._gen.integers(low, high))

    def choice(self, seq):
        return seq[self.integer(0, len(seq))]

    def shuffled(self, seq):
        """Return a shuffled copy of ``seq`` (the input is left untouched)."""
        idx = self._gen.permutation(len(seq))
        return [seq[i] for i in idx]


def softmax(logits):
    """Stable softmax over the last axis; output rows sum to 1."""
    z = check_finite(logits, "logits")
    if z.shape[-1] < 1:
        raise ContractViolation("softmax needs at least one logit")
    z = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def log_softmax(logits):
    z = check_finite(logits, "logits")
    if z.shape[-1] < 1:
        raise ContractViolation("log_softmax needs at least one logit")
    z = z - np.max(z, axis=-1, keepdims=True)
    return z - np.log(np.sum(np.exp(z), axis=-1, keepdims=True))


def cross_entropy(logits, target_index):
    """-log softmax(logits)[target]; returns (loss, dloss/dlogits)."""
    z = check_finite(logits, "logits")
    if z.ndim != 1:
        raise ContractViolation("cross_entropy expects a 1-d logit vector")
    v = z.shape[0]
    if not 0 <= target_index < v:
        raise ContractViolation(f"target index {target_index} out of range for {v} logits")
    logp = log_softmax(z)
    grad = np.exp(logp)
    grad[target_index] -= 1.0
    return -logp[target_index], grad


def kl_divergence(p_logits, q_logits):
    """KL(softmax(p) || softmax(q)), computed in log space. Always >= 0."""
    p = check_finite(p_logits, "p_logits")
    q = check_finite(q_logits, "q_logits")
    if p.shape != q.shape:
        raise ContractViolation(f"logit shapes differ: {p.shape} vs {q.shape}")
    lp = log_softmax(p)
    lq = log_softmax(q)
    return float(np.sum(np.exp(lp) * (lp - lq)))


def l1_mean_distance(a, x):
    """Mean over rows of the L1 distance between paired rows of a and x."""
    a = check_finite(a, "a")
    x = check_finite(x, "x")
    if a.shape != x.shape:
        raise ContractViolation(f"shapes differ: {a.shape} vs {x.shape}")
    if a.ndim == 1:
        a = a[None, :]
        x = x[None, :]
    if a.shape[0] < 1:
        raise ContractViolation("need at least one row")
    return float(np.mean(np.sum(np.abs(a - x), axis=-1)))


def l1_mean_distance_grad(a, x):
    """d(l1_mean_distance)/da; sign(0) is taken as 0 so ties give no pull."""
    a = as_f64(a)
    x = as_f64(x)
    n = 1 if a.ndim == 1 else a.shape[0]
    return np.sign(a - x) / n


def sigmoid(s):
    """1/(1+exp(-s)), stable for very large |s|."""
    s = float(check_finite(s, "s"))
    if s >= 0:
        return 1.0 / (1.0 + np.exp(-s))
    e = np.exp(s)
    return e / (1.0 + e)


def sigmoid_grad(s):
    v = sigmoid(s)
    return v * (1.0 - v)


def grad_check(f, x, eps=1e-5):
    """Max relative error between analytic and central-difference gradients.

    ``f(x)`` must return ``(value, grad)`` with grad shaped like ``x``.
    The relative error for coordinate k is
    ``|analytic_k - central_k| / max(1, |analytic_k|, |central_k|)``.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ContractViolation(f"eps {eps} outside [1e-7, 1e-3]")
    x = as_f64(x).copy()
    value, analytic = f(x)
    if not np.isfinite(value):
        raise ContractViolation("f returned a non-finite value")
    analytic = as_f64(analytic)
    flat = x.reshape(-1)
    worst = 0.0
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + eps
        up, _ = f(x)
        flat[k] = orig - eps
        down, _ = f(x)
        flat[k] = orig
        if not (np.isfinite(up) and np.isfinite(down)):
            raise ContractViolation("f returned a non-finite value during probing")
        central = (up - down) / (2.0 * eps)
        a_k = analytic.reshape(-1)[k]
        err = abs(a_k - central) / max(1.0, abs(a_k), abs(central))
        worst = max(worst, err)
    return worst
