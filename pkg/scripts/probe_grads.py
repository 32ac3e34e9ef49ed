"""Quick development probe: finite-difference checks on every loss."""

import numpy as np

from backdoorlab.corpus import Sample
from backdoorlab.losses import (
    LossConfig, TrainState, ccp_loss, ckp_loss, lm_loss, total_loss,
)
from backdoorlab.model import (
    clone_teacher, init_model, set_trainable_vector, trainable_vector,
    grads_vector,
)
from backdoorlab.numerics import Rng, grad_check


class FakeVocab:
    def __init__(self, n):
        self.n = n

    def __len__(self):
        return self.n


def tiny_setup(seed=0, d=8, v=12):
    rng = Rng(seed)
    params = init_model(FakeVocab(v), d, seed, l_max=40)
    samples = []
    for i in range(2):
        img = rng.split(f"img{i}").uniform(0, 1, (3, 32, 32))
        ref = tuple(rng.split(f"ref{i}").integer(3, v) for _ in range(4))
        samples.append(Sample(id=f"s{i}", image=img, prompt=(3, 4),
                              references=(ref,)))
    return params, samples


def vector_loss(fn, params):
    def f(vec):
        set_trainable_vector(params, vec)
        value, grads = fn()
        return value, grads_vector(params, grads)
    return f


def main():
    params, samples = tiny_setup()
    teacher = clone_teacher(init_model(FakeVocab(12), 8, 99, l_max=40))
    x0 = trainable_vector(params)

    checks = {
        "lm": lambda: lm_loss(params, samples),
        "ckp_KL": lambda: ckp_loss(teacher, params, samples, divergence="KL"),
        "ckp_JSD": lambda: ckp_loss(teacher, params, samples, divergence="JSD"),
        "ckp_MSE": lambda: ckp_loss(teacher, params, samples, divergence="MSE"),
        "ckp_COS": lambda: ckp_loss(teacher, params, samples, divergence="COSINE"),
        "ccp_L1": lambda: ccp_loss(params, samples, distance="L1"),
        "ccp_L2": lambda: ccp_loss(params, samples, distance="L2"),
        "ccp_COS": lambda: ccp_loss(params, samples, distance="COSINE"),
    }
    for lam in (0.0, 0.5, 1.0):
        state = TrainState(lam=lam)
        state.lam = lam  # allow exact endpoints for the check

        def tot(state=state):
            bl, grads = total_loss(LossConfig(), state, teacher, params,
                                   samples, samples, with_impacts=False)
            return bl.total, grads

        checks[f"total_lam{lam}"] = tot

    for name, fn in checks.items():
        err = grad_check(vector_loss(fn, params), x0, eps=1e-5)
        print(f"{name:14s} rel err {err:.3e}  {'OK' if err < 1e-5 else 'FAIL'}")


if __name__ == "__main__":
    main()
