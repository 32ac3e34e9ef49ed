"""A tiny differentiable image-to-text model with hand-written backprop.

Architecture: the 32x32 image is cut into sixteen 8x8 patches, projected by a
frozen random linear map, then passed through a trainable linear adapter to
give 16 prefix embeddings.  The token stream [prefix; <bos>; prompt; output]
goes through position embeddings, one head of causal self-attention with a
residual connection, and a tanh FFN with a residual connection.  Logits tie
the output projection to the token embedding table.

``forward`` is teacher-forced and returns logits for every output position
plus the end-of-sequence step; ``backward`` produces exact analytic gradients
for every trainable parameter group and zeros for frozen ones.
"""

import json
from dataclasses import dataclass

import numpy as np

from .corpus import BOS, CHANNELS, EOS, IMG_SIZE, PAD
from .errors import CheckpointError, ContractViolation
from .numerics import Rng, softmax

N_PREFIX = 16
PATCH = 8
D_PATCH = PATCH * PATCH * CHANNELS

CHECKPOINT_VERSION = 1

# Parameter groups and their shapes as functions of (d, V, L_max).
def _group_shapes(d, vocab_size, l_max):
    return {
        "enc": (D_PATCH, d),
        "adapter_w": (d, d),
        "adapter_b": (d,),
        "tok_emb": (vocab_size, d),
        "pos_emb": (l_max, d),
        "attn_q": (d, d),
        "attn_k": (d, d),
        "attn_v": (d, d),
        "attn_o": (d, d),
        "ffn_w1": (d, 4 * d),
        "ffn_b1": (4 * d,),
        "ffn_w2": (4 * d, d),
        "ffn_b2": (d,),
    }


@dataclass
class ModelParams:
    d: int
    vocab_size: int
    l_max: int
    groups: dict
    trainable: dict
    version: int = 0  # bumped on every in-place update; caches check it

    def copy(self):
        return ModelParams(
            d=self.d,
            vocab_size=self.vocab_size,
            l_max=self.l_max,
            groups={k: v.copy() for k, v in self.groups.items()},
            trainable=dict(self.trainable),
        )


@dataclass(frozen=True)
class DecodeConfig:
    max_len: int = 24

    def __post_init__(self):
        if self.max_len < 1:
            raise ContractViolation("max_len must be >= 1")


def init_model(vocab, d, seed, l_max=64):
    """Uniform(-1/sqrt(d), 1/sqrt(d)) weights, deterministic per seed."""
    if d < 8 or d % 2 != 0:
        raise ContractViolation(f"model dim must be even and >= 8, got {d}")
    vocab_size = len(vocab)
    shapes = _group_shapes(d, vocab_size, l_max)
    bound = 1.0 / np.sqrt(d)
    rng = Rng(seed)
    groups = {
        name: rng.split(f"init:{name}").uniform(-bound, bound, shape)
        for name, shape in shapes.items()
    }
    trainable = {name: name != "enc" for name in shapes}
    return ModelParams(d=d, vocab_size=vocab_size, l_max=l_max,
                       groups=groups, trainable=trainable)


def clone_teacher(params):
    """Bit-identical frozen copy, used as the distillation reference."""
    teacher = params.copy()
    teacher.trainable = {name: False for name in teacher.trainable}
    return teacher


def image_patches(image):
    """(3, 32, 32) -> (16, 192): row-major 8x8 patches, channel-major pixels."""
    if image.shape != (CHANNELS, IMG_SIZE, IMG_SIZE):
        raise ContractViolation(f"expected (3, {IMG_SIZE}, {IMG_SIZE}) image")
    g = IMG_SIZE // PATCH
    x = image.reshape(CHANNELS, g, PATCH, g, PATCH)
    return x.transpose(1, 3, 0, 2, 4).reshape(g * g, D_PATCH)


def forward(params, image, prompt, output_prefix):
    """Teacher-forced pass; returns (logits, hiddens, cache).

    ``logits[t]`` scores the token at output position ``t``; the final row
    scores the end-of-sequence step, so there are ``len(output_prefix) + 1``
    rows.  ``hiddens`` are the pre-projection states at those positions.
    """
    g = params.groups
    d = params.d
    tokens = (BOS,) + tuple(prompt) + tuple(output_prefix)
    s = N_PREFIX + len(tokens)
    if s > params.l_max:
        raise ContractViolation(f"sequence length {s} exceeds L_max {params.l_max}")

    patches = image_patches(image)
    z0 = patches @ g["enc"]
    zp = z0 @ g["adapter_w"] + g["adapter_b"]

    emb = g["tok_emb"][list(tokens)]
    x = np.concatenate([zp, emb], axis=0) + g["pos_emb"][:s]

    q = x @ g["attn_q"]
    k = x @ g["attn_k"]
    v = x @ g["attn_v"]
    scores = (q @ k.T) / np.sqrt(d)
    # exp(-1e30 - max) underflows to exactly 0, so masking is causally exact
    scores[np.triu_indices(s, k=1)] = -1e30
    attn = softmax(scores)
    ctx = attn @ v
    x1 = x + ctx @ g["attn_o"]

    h = np.tanh(x1 @ g["ffn_w1"] + g["ffn_b1"])
    x2 = x1 + h @ g["ffn_w2"] + g["ffn_b2"]

    p0 = N_PREFIX + len(prompt)  # position predicting the first output token
    n_steps = len(output_prefix) + 1
    hiddens = x2[p0 : p0 + n_steps]
    logits = hiddens @ g["tok_emb"].T

    cache = {
        "params": params,
        "version": params.version,
        "tokens": tokens,
        "s": s,
        "p0": p0,
        "n_steps": n_steps,
        "patches": patches,
        "z0": z0,
        "x": x,
        "q": q,
        "k": k,
        "v": v,
        "attn": attn,
        "ctx": ctx,
        "x1": x1,
        "h": h,
        "hiddens": hiddens,
    }
    return logits, hiddens, cache


def zero_grads(params):
    return {name: np.zeros_like(arr) for name, arr in params.groups.items()}


def backward(cache, dlogits, dhiddens=None):
    """Exact gradients of the cached forward pass.

    ``dlogits`` is the upstream gradient on the returned logits; ``dhiddens``
    optionally adds a gradient directly on the returned hidden states (losses
    defined on embeddings use it).  Frozen groups get zero gradients.
    """
    params = cache["params"]
    if cache["version"] != params.version:
        raise ContractViolation("stale cache: parameters changed since forward")
    g = params.groups
    d = params.d
    s = cache["s"]
    p0, n_steps = cache["p0"], cache["n_steps"]
    tokens = cache["tokens"]
    grads = zero_grads(params)

    dlogits = np.asarray(dlogits, dtype=np.float64)
    dhid = dlogits @ g["tok_emb"]
    grads["tok_emb"] += dlogits.T @ cache["hiddens"]
    if dhiddens is not None:
        dhid = dhid + dhiddens

    dx2 = np.zeros((s, d))
    dx2[p0 : p0 + n_steps] += dhid

    # FFN with residual
    h = cache["h"]
    dx1 = dx2.copy()
    dh = dx2 @ g["ffn_w2"].T
    grads["ffn_w2"] += h.T @ dx2
    grads["ffn_b2"] += dx2.sum(axis=0)
    du = dh * (1.0 - h * h)
    grads["ffn_w1"] += cache["x1"].T @ du
    grads["ffn_b1"] += du.sum(axis=0)
    dx1 += du @ g["ffn_w1"].T

    # attention with residual
    attn, q, k, v, x = cache["attn"], cache["q"], cache["k"], cache["v"], cache["x"]
    dx = dx1.copy()
    dctx = dx1 @ g["attn_o"].T
    grads["attn_o"] += cache["ctx"].T @ dx1
    dattn = dctx @ v.T
    dv = attn.T @ dctx
    dscores = attn * (dattn - np.sum(dattn * attn, axis=-1, keepdims=True))
    dq = (dscores @ k) / np.sqrt(d)
    dk = (dscores.T @ q) / np.sqrt(d)
    grads["attn_q"] += x.T @ dq
    grads["attn_k"] += x.T @ dk
    grads["attn_v"] += x.T @ dv
    dx += dq @ g["attn_q"].T + dk @ g["attn_k"].T + dv @ g["attn_v"].T

    grads["pos_emb"][:s] += dx

    dzp = dx[:N_PREFIX]
    demb = dx[N_PREFIX:]
    np.add.at(grads["tok_emb"], list(tokens), demb)

    grads["adapter_w"] += cache["z0"].T @ dzp
    grads["adapter_b"] += dzp.sum(axis=0)
    if params.trainable.get("enc", False):
        dz0 = dzp @ g["adapter_w"].T
        grads["enc"] += cache["patches"].T @ dz0

    for name, is_trainable in params.trainable.items():
        if not is_trainable:
            grads[name][:] = 0.0
    return grads


def greedy_decode(params, image, prompt, cfg=DecodeConfig()):
    """Deterministic argmax decoding.

    <bos> and <pad> are never candidates.  Ties go to the lowest content
    token id; <eos> is emitted only when its logit strictly beats every
    content token, so an all-tie step keeps generating rather than stopping.
    """
    order = [t for t in range(params.vocab_size) if t not in (BOS, EOS, PAD)]
    order.append(EOS)
    generated = []
    for _ in range(cfg.max_len):
        logits, _, _ = forward(params, image, prompt, tuple(generated))
        step = logits[len(generated)]
        best = order[0]
        for t in order[1:]:
            if step[t] > step[best]:
                best = t
        if best == EOS:
            break
        generated.append(best)
    return tuple(generated)


def trainable_vector(params):
    """Concatenate all trainable groups into one flat vector (sorted names)."""
    names = [n for n in sorted(params.groups) if params.trainable[n]]
    return np.concatenate([params.groups[n].ravel() for n in names])


def set_trainable_vector(params, vec):
    """Write a flat vector back into the trainable groups (sorted names)."""
    names = [n for n in sorted(params.groups) if params.trainable[n]]
    off = 0
    for n in names:
        size = params.groups[n].size
        params.groups[n][...] = vec[off : off + size].reshape(params.groups[n].shape)
        off += size
    params.version += 1
    if off != vec.size:
        raise ContractViolation("vector length does not match trainable parameters")


def grads_vector(params, grads):
    names = [n for n in sorted(params.groups) if params.trainable[n]]
    return np.concatenate([grads[n].ravel() for n in names])


def save_checkpoint(params, path):
    """Single JSON document; floats keep full round-trip precision."""
    doc = {
        "meta": {
            "d": params.d,
            "vocab_size": params.vocab_size,
            "l_max": params.l_max,
            "version": CHECKPOINT_VERSION,
        },
        "groups": {name: arr.ravel().tolist() for name, arr in params.groups.items()},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_checkpoint(path):
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    meta = doc.get("meta")
    if not meta or "version" not in meta:
        raise CheckpointError("checkpoint has no meta/version block")
    if meta["version"] != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint version {meta['version']} != {CHECKPOINT_VERSION}"
        )
    d, vocab_size, l_max = meta["d"], meta["vocab_size"], meta["l_max"]
    shapes = _group_shapes(d, vocab_size, l_max)
    groups = {}
    for name, shape in shapes.items():
        if name not in doc["groups"]:
            raise CheckpointError(f"checkpoint missing group {name!r}")
        flat = np.asarray(doc["groups"][name], dtype=np.float64)
        expected = int(np.prod(shape))
        if flat.size != expected:
            raise CheckpointError(
                f"group {name!r} has {flat.size} values, expected {expected}"
            )
        groups[name] = flat.reshape(shape)
    trainable = {name: name != "enc" for name in shapes}
    return ModelParams(d=d, vocab_size=vocab_size, l_max=l_max,
                       groups=groups, trainable=trainable)
