"""Training objectives: split LM loss, distillation on clean inputs,
embedding-consistency on poisoned inputs, and the dynamic balance weight.

The total objective is

    total = (1 - lam) * (lm_clean + distill) + lam * (lm_poisoned + consistency)

with ``lam`` treated as a constant inside each step and nudged once per epoch
from the gap between clean and poisoned impact scores (sums of ground-truth
token log-probabilities).  When the model does better on clean data the gap
is positive, ``lam`` rises, and the clean-side weight ``1 - lam`` falls.
"""

from dataclasses import dataclass, field

import numpy as np

from .corpus import EOS
from .errors import ContractViolation
from .model import backward, forward, zero_grads
from .numerics import log_softmax, sigmoid, sigmoid_grad

LAMBDA_MIN = 0.01
LAMBDA_MAX = 0.99

CKP_DIVERGENCES = ("KL", "JSD", "MSE", "COSINE")
CCP_DISTANCES = ("L1", "L2", "COSINE")


@dataclass
class LossConfig:
    use_ckp: bool = True
    use_ccp: bool = True
    use_dynamic: bool = True
    ckp_divergence: str = "KL"
    ccp_distance: str = "L1"
    # Distillation reduction over token positions.  "sum" follows the loss
    # formula literally (per-sample normalizer only), which weights the
    # distillation term by sequence length; "mean" normalizes it away.
    ckp_position_reduction: str = "sum"
    # "logprob": impact g = log P(ground-truth token), higher is better, which
    # makes the lambda update move in the documented direction.  "neg_ce" is
    # the literal raw-cross-entropy reading, kept for comparison; it flips the
    # sign of every impact.
    impact_mode: str = "logprob"

    def __post_init__(self):
        if self.ckp_divergence not in CKP_DIVERGENCES:
            raise ContractViolation(f"unknown ckp divergence {self.ckp_divergence!r}")
        if self.ccp_distance not in CCP_DISTANCES:
            raise ContractViolation(f"unknown ccp distance {self.ccp_distance!r}")
        if self.impact_mode not in ("logprob", "neg_ce"):
            raise ContractViolation(f"unknown impact mode {self.impact_mode!r}")
        if self.ckp_position_reduction not in ("sum", "mean"):
            raise ContractViolation(
                f"unknown position reduction {self.ckp_position_reduction!r}"
            )


@dataclass
class TrainState:
    lam: float
    lambda_lr: float = 0.1
    epoch: int = 0
    adam_t: int = 0
    adam_m: dict = field(default_factory=dict)
    adam_v: dict = field(default_factory=dict)

    def __post_init__(self):
        self.lam = float(np.clip(self.lam, LAMBDA_MIN, LAMBDA_MAX))


@dataclass
class BatchLoss:
    lm_clean: float = 0.0
    lm_poisoned: float = 0.0
    ckp: float = 0.0
    ccp: float = 0.0
    total: float = 0.0
    impact_clean: float = 0.0
    impact_poisoned: float = 0.0


def _targets(sample, ref_index):
    ref = sample.references[ref_index]
    return ref, tuple(ref) + (EOS,)


def _ref_indices(batch, ref_choice):
    if ref_choice is None:
        return [0] * len(batch)
    if len(ref_choice) != len(batch):
        raise ContractViolation("ref_choice length does not match batch")
    return list(ref_choice)


def _lm_terms(logits, targets):
    """Per-sample token-mean NLL and its logit gradient (unscaled)."""
    logp = log_softmax(logits)
    steps = len(targets)
    idx = np.arange(steps)
    nll = -float(np.mean(logp[idx, list(targets)]))
    dlogits = np.exp(logp)
    dlogits[idx, list(targets)] -= 1.0
    return nll, dlogits / steps


def lm_loss(params, batch, ref_choice=None, poisoned=None):
    """Teacher-forced next-token loss, averaged over tokens then samples.

    The end-of-sequence prediction step counts as a token.  ``poisoned``
    optionally asserts that every sample in the batch carries that flag.
    """
    if len(batch) == 0:
        raise ContractViolation("empty batch")
    if poisoned is not None:
        for s in batch:
            if s.poisoned != poisoned:
                raise ContractViolation("batch mixes clean and poisoned samples")
    refs = _ref_indices(batch, ref_choice)
    total = 0.0
    grads = zero_grads(params)
    for sample, r in zip(batch, refs):
        ref, targets = _targets(sample, r)
        logits, _, cache = forward(params, sample.image, sample.prompt, ref)
        nll, dlogits = _lm_terms(logits, targets)
        total += nll
        g = backward(cache, dlogits / len(batch))
        for name in grads:
            grads[name] += g[name]
    return total / len(batch), grads


def _chain_softmax(q, dldq):
    """Jacobian-vector product of softmax rows: dL/dlogits from dL/dprobs."""
    inner = np.sum(q * dldq, axis=-1, keepdims=True)
    return q * (dldq - inner)


def _divergence_terms(kind, teacher_logits, student_logits, reduction="sum"):
    """Per-position divergence, reduced over positions, with its
    student-logit gradient."""
    lp = log_softmax(teacher_logits)
    lq = log_softmax(student_logits)
    p = np.exp(lp)
    q = np.exp(lq)
    steps = teacher_logits.shape[0] if reduction == "mean" else 1
    if kind == "KL":
        value = float(np.sum(p * (lp - lq))) / steps
        dlogits = (q - p) / steps
        return value, dlogits
    if kind == "JSD":
        lm = np.logaddexp(lp, lq) - np.log(2.0)
        value = 0.5 * float(np.sum(p * (lp - lm)) + np.sum(q * (lq - lm))) / steps
        dldq = 0.5 * (lq - lm)
        return value, _chain_softmax(q, dldq) / steps
    if kind == "MSE":
        v = teacher_logits.shape[-1]
        value = float(np.sum((p - q) ** 2)) / (v * steps)
        dldq = 2.0 * (q - p) / v
        return value, _chain_softmax(q, dldq) / steps
    if kind == "COSINE":
        pn = np.linalg.norm(p, axis=-1, keepdims=True)
        qn = np.linalg.norm(q, axis=-1, keepdims=True)
        dot = np.sum(p * q, axis=-1, keepdims=True)
        value = float(np.sum(1.0 - dot / (pn * qn))) / steps
        dldq = -(p / (pn * qn) - dot * q / (pn * qn**3))
        return value, _chain_softmax(q, dldq) / steps
    raise ContractViolation(f"unknown divergence {kind!r}")


def ckp_loss(teacher, student, batch, ref_choice=None, divergence="KL",
             teacher_logits_cache=None, position_reduction="sum"):
    """Align the student's clean-input output distributions to the teacher's.

    KL is taken teacher-first; gradients flow to the student only.  Reduced
    over token positions per ``position_reduction``, then averaged over
    samples.
    """
    if len(batch) == 0:
        raise ContractViolation("empty batch")
    if teacher.vocab_size != student.vocab_size or teacher.d != student.d:
        raise ContractViolation("teacher/student shape mismatch")
    refs = _ref_indices(batch, ref_choice)
    total = 0.0
    grads = zero_grads(student)
    for sample, r in zip(batch, refs):
        ref, _ = _targets(sample, r)
        key = (sample.id, r)
        if teacher_logits_cache is not None and key in teacher_logits_cache:
            t_logits = teacher_logits_cache[key]
        else:
            t_logits, _, _ = forward(teacher, sample.image, sample.prompt, ref)
            if teacher_logits_cache is not None:
                teacher_logits_cache[key] = t_logits
        s_logits, _, cache = forward(student, sample.image, sample.prompt, ref)
        value, dlogits = _divergence_terms(divergence, t_logits, s_logits,
                                           position_reduction)
        total += value
        g = backward(cache, dlogits / len(batch))
        for name in grads:
            grads[name] += g[name]
    return total / len(batch), grads


def _distance_terms(kind, a, x):
    """Row-mean distance over predicted/ground-truth embedding pairs.

    Returns (mean distance, d/da rows, d/dx rows) with the 1/n factor for the
    row mean already applied to the gradients.
    """
    n = a.shape[0]
    tiny = 1e-300
    if kind == "L1":
        value = float(np.mean(np.sum(np.abs(a - x), axis=-1)))
        da = np.sign(a - x) / n
        return value, da, -da
    if kind == "L2":
        norms = np.linalg.norm(a - x, axis=-1)
        value = float(np.mean(norms))
        da = (a - x) / (np.maximum(norms, tiny)[:, None] * n)
        da[norms == 0.0] = 0.0
        return value, da, -da
    if kind == "COSINE":
        an = np.linalg.norm(a, axis=-1, keepdims=True)
        xn = np.linalg.norm(x, axis=-1, keepdims=True)
        ok = (an > tiny) & (xn > tiny)
        dot = np.sum(a * x, axis=-1, keepdims=True)
        cos = np.where(ok, dot / np.maximum(an * xn, tiny), 0.0)
        value = float(np.mean(1.0 - cos))
        da = np.where(ok, -(x / np.maximum(an * xn, tiny)
                            - dot * a / np.maximum(an**3 * xn, tiny)), 0.0) / n
        dx = np.where(ok, -(a / np.maximum(an * xn, tiny)
                            - dot * x / np.maximum(an * xn**3, tiny)), 0.0) / n
        return value, da, dx
    raise ContractViolation(f"unknown distance {kind!r}")


def ccp_loss(params, batch, ref_choice=None, distance="L1", poisoned=None):
    """Sigmoid-squashed embedding distance on poisoned references.

    The predicted token embedding is the probability-weighted mixture of the
    tied embedding table; the ground-truth embedding is the table row of the
    reference token.  Per sample the row-mean distance S goes through a
    sigmoid, so the loss always lies in [0.5, 1).
    """
    if len(batch) == 0:
        raise ContractViolation("empty batch")
    if poisoned is not None:
        for s in batch:
            if s.poisoned != poisoned:
                raise ContractViolation("batch mixes clean and poisoned samples")
    refs = _ref_indices(batch, ref_choice)
    emb = params.groups["tok_emb"]
    total = 0.0
    grads = zero_grads(params)
    for sample, r in zip(batch, refs):
        ref, targets = _targets(sample, r)
        logits, _, cache = forward(params, sample.image, sample.prompt, ref)
        probs = np.exp(log_softmax(logits))
        a = probs @ emb
        x = emb[list(targets)]
        s_val, da, dx = _distance_terms(distance, a, x)
        total += sigmoid(s_val)
        scale = sigmoid_grad(s_val) / len(batch)
        da = da * scale
        dx = dx * scale
        dlogits = _chain_softmax(probs, da @ emb.T)
        g = backward(cache, dlogits)
        # direct embedding-table paths: the mixture weights and the lookups
        if params.trainable.get("tok_emb", True):
            g["tok_emb"] += probs.T @ da
            np.add.at(g["tok_emb"], list(targets), dx)
        for name in grads:
            grads[name] += g[name]
    return total / len(batch), grads


def _impact_sum(params, sample, ref_index, mode):
    ref, targets = _targets(sample, ref_index)
    logits, _, _ = forward(params, sample.image, sample.prompt, ref)
    logp = log_softmax(logits)
    g = float(np.sum(logp[np.arange(len(targets)), list(targets)]))
    return g if mode == "logprob" else -g


def impacts(params, clean_batch, poisoned_batch, clean_refs=None,
            poisoned_refs=None, mode="logprob"):
    """Batch-mean per-sample sums of ground-truth token scores, no gradients."""
    if len(clean_batch) == 0 or len(poisoned_batch) == 0:
        raise ContractViolation("empty batch")
    c_refs = _ref_indices(clean_batch, clean_refs)
    p_refs = _ref_indices(poisoned_batch, poisoned_refs)
    ic = float(np.mean([
        _impact_sum(params, s, r, mode) for s, r in zip(clean_batch, c_refs)
    ]))
    ip = float(np.mean([
        _impact_sum(params, s, r, mode) for s, r in zip(poisoned_batch, p_refs)
    ]))
    return ic, ip


def update_lambda(state, impact_clean, impact_poisoned):
    """lam <- clamp(lam + lr * (impact_clean - impact_poisoned)); one call
    per epoch, after the epoch's batches."""
    if not (np.isfinite(impact_clean) and np.isfinite(impact_poisoned)):
        raise ContractViolation("non-finite impact values")
    delta = state.lambda_lr * (impact_clean - impact_poisoned)
    state.lam = float(np.clip(state.lam + delta, LAMBDA_MIN, LAMBDA_MAX))
    return state.lam


def combine_grads(params, weighted):
    """Weighted sum of gradient dicts: [(weight, grads), ...]."""
    out = zero_grads(params)
    for weight, grads in weighted:
        if weight == 0.0 or grads is None:
            continue
        for name in out:
            out[name] += weight * grads[name]
    return out


def total_loss(cfg, state, teacher, student, clean_batch, poisoned_batch,
               clean_refs=None, poisoned_refs=None, teacher_logits_cache=None,
               with_impacts=True):
    """Full weighted objective; lam is read from state and held constant.

    Disabled components contribute exactly zero to both the value and the
    gradients, which realizes the loss-term ablation modes.
    """
    if len(clean_batch) == 0 or len(poisoned_batch) == 0:
        raise ContractViolation("empty batch")
    lam = state.lam
    lm_c, g_lmc = lm_loss(student, clean_batch, clean_refs)
    lm_p, g_lmp = lm_loss(student, poisoned_batch, poisoned_refs)
    if cfg.use_ckp:
        ckp, g_ckp = ckp_loss(teacher, student, clean_batch, clean_refs,
                              cfg.ckp_divergence, teacher_logits_cache,
                              cfg.ckp_position_reduction)
    else:
        ckp, g_ckp = 0.0, None
    if cfg.use_ccp:
        ccp, g_ccp = ccp_loss(student, poisoned_batch, poisoned_refs,
                              cfg.ccp_distance)
    else:
        ccp, g_ccp = 0.0, None
    total = (1.0 - lam) * (lm_c + ckp) + lam * (lm_p + ccp)
    grads = combine_grads(student, [
        (1.0 - lam, g_lmc), (1.0 - lam, g_ckp), (lam, g_lmp), (lam, g_ccp),
    ])
    result = BatchLoss(lm_clean=lm_c, lm_poisoned=lm_p, ckp=ckp, ccp=ccp,
                       total=total)
    if with_impacts:
        result.impact_clean, result.impact_poisoned = impacts(
            student, clean_batch, poisoned_batch, clean_refs, poisoned_refs,
            cfg.impact_mode,
        )
    return result, grads


def init_train_state(params, lam0=1.0, lambda_lr=0.1):
    state = TrainState(lam=lam0, lambda_lr=lambda_lr)
    for name, arr in params.groups.items():
        if params.trainable[name]:
            state.adam_m[name] = np.zeros_like(arr)
            state.adam_v[name] = np.zeros_like(arr)
    return state


def adam_step(params, grads, state, lr=3e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    """In-place Adam update of the trainable groups; frozen groups never move."""
    state.adam_t += 1
    t = state.adam_t
    for name in state.adam_m:
        g = grads[name]
        m = state.adam_m[name]
        v = state.adam_v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        params.groups[name] -= lr * m_hat / (np.sqrt(v_hat) + eps)
    params.version += 1
