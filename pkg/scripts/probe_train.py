"""Development probe: does the toy model learn captions and the backdoor?"""

import time

import numpy as np

from backdoorlab.corpus import DistTag, default_vocab, make_corpus
from backdoorlab.losses import (
    LossConfig, adam_step, init_train_state, lm_loss, total_loss,
    update_lambda, impacts,
)
from backdoorlab.model import DecodeConfig, clone_teacher, greedy_decode, init_model
from backdoorlab.numerics import Rng
from backdoorlab.poison import (
    Placement, contains_target, craft_poisoned_set, default_target,
    make_trigger, trigger_corpus,
)


def exact_match(params, corpus, limit=None):
    hits = 0
    samples = corpus.samples[:limit] if limit else corpus.samples
    for s in samples:
        out = greedy_decode(params, s.image, s.prompt, DecodeConfig())
        hits += out == s.references[0]
    return hits / len(samples)


def asr(params, corpus, target, limit=None):
    hits = 0
    samples = corpus.samples[:limit] if limit else corpus.samples
    for s in samples:
        out = greedy_decode(params, s.image, s.prompt, DecodeConfig())
        hits += contains_target(out, target)
    return hits / len(samples)


def pretrain(params, corpus, holdout, epochs, lr, batch=32, seed=11):
    rng = Rng(seed).split("pretrain")
    state = init_train_state(params)
    for epoch in range(epochs):
        t0 = time.time()
        order = rng.split(f"e{epoch}").shuffled(corpus.samples)
        tot = 0.0
        for i in range(0, len(order), batch):
            chunk = order[i : i + batch]
            loss, grads = lm_loss(params, chunk)
            adam_step(params, grads, state, lr=lr)
            tot += loss * len(chunk)
        if epoch % 5 == 0 or epoch == epochs - 1:
            em = exact_match(params, holdout, limit=60)
            print(f"  pretrain ep{epoch:3d} loss {tot/len(order):.4f} "
                  f"holdout-exact {em:.2f}  ({time.time()-t0:.1f}s/ep)")
            if em >= 0.995:
                print("  early stop")
                break
    return params


def backdoor(student, teacher, clean, poisoned, cfg, epochs, lr, lam0,
             eval_ci, eval_pi, target, batch=16, seed=12):
    rng = Rng(seed).split("attack")
    state = init_train_state(student, lam0=lam0)
    tcache = {}
    for epoch in range(epochs):
        t0 = time.time()
        idx = rng.split(f"e{epoch}").shuffled(list(range(len(clean.samples))))
        ic_sum = ip_sum = 0.0
        for i in range(0, len(idx), batch):
            sel = idx[i : i + batch]
            cb = [clean.samples[j] for j in sel]
            pb = [poisoned.samples[j] for j in sel]
            bl, grads = total_loss(cfg, state, teacher, student, cb, pb,
                                   teacher_logits_cache=tcache)
            adam_step(student, grads, state, lr=lr)
            ic_sum += bl.impact_clean * len(sel)
            ip_sum += bl.impact_poisoned * len(sel)
        ic, ip = ic_sum / len(idx), ip_sum / len(idx)
        if cfg.use_dynamic:
            update_lambda(state, ic, ip)
        if epoch % 3 == 0 or epoch == epochs - 1:
            a_pi = asr(student, eval_pi, target, limit=60)
            a_ci = asr(student, eval_ci, target, limit=60)
            em = exact_match(student, eval_ci, limit=60)
            print(f"  attack ep{epoch:3d} lam {state.lam:.3f} "
                  f"ic {ic:7.2f} ip {ip:7.2f} | CI-asr {a_ci:.2f} "
                  f"CI-exact {em:.2f} PI-asr {a_pi:.2f} ({time.time()-t0:.1f}s/ep)")
    return student


def main():
    vocab = default_vocab()
    d, lr = 32, 3e-3
    print(f"V={len(vocab)} d={d}")

    train = make_corpus(DistTag.IN_DIST, 2000, seed=101)
    holdout = make_corpus(DistTag.IN_DIST, 200, seed=102)
    params = init_model(vocab, d, seed=7)

    t0 = time.time()
    pretrain(params, train, holdout, epochs=60, lr=lr)
    print(f"pretrain total {time.time()-t0:.0f}s; "
          f"full holdout exact {exact_match(params, holdout):.3f}")

    target = default_target(vocab)
    trigger = make_trigger(6, seed=55, placement=Placement.BOTTOM_RIGHT)
    ood_clean = make_corpus(DistTag.OOD, 300, seed=103)
    prng = Rng(104).split("poison")
    poisoned = craft_poisoned_set(ood_clean, trigger, target, prng)
    eval_pi = trigger_corpus(holdout, trigger, Rng(105).split("eval-pi"))

    teacher = clone_teacher(params)
    student = params.copy()
    t0 = time.time()
    backdoor(student, teacher, ood_clean, poisoned, LossConfig(),
             epochs=30, lr=lr, lam0=1.0, eval_ci=holdout, eval_pi=eval_pi,
             target=target)
    print(f"attack total {time.time()-t0:.0f}s")
    print(f"final: CI asr {asr(student, holdout, target):.3f} "
          f"CI exact {exact_match(student, holdout):.3f} "
          f"PI asr {asr(student, eval_pi, target):.3f}")


if __name__ == "__main__":
    main()
