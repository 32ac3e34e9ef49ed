"""Probe: SGD attack phase (drift-minimizing) + summed distillation anchor."""

import json
import sys
import time

from backdoorlab.corpus import DistTag, default_vocab, detokenize, make_corpus
from backdoorlab.losses import LossConfig, init_train_state, total_loss, update_lambda
from backdoorlab.model import DecodeConfig, clone_teacher, greedy_decode, load_checkpoint
from backdoorlab.numerics import Rng
from backdoorlab.poison import Placement, craft_poisoned_set, default_target, make_trigger, trigger_corpus

from probe_train import asr, exact_match


import numpy as np


def sgd_step(params, grads, lr, clip=1.0):
    norm = np.sqrt(sum(
        float(np.sum(grads[n] ** 2))
        for n, flag in params.trainable.items() if flag
    ))
    scale = lr * min(1.0, clip / max(norm, 1e-12))
    for name, flag in params.trainable.items():
        if flag:
            params.groups[name] -= scale * grads[name]
    params.version += 1


def main():
    path = sys.argv[1]
    lr = float(sys.argv[2])
    epochs = int(sys.argv[3])
    batch = int(sys.argv[4]) if len(sys.argv) > 4 else 25
    reduction = sys.argv[5] if len(sys.argv) > 5 else "sum"
    clip = float(sys.argv[6]) if len(sys.argv) > 6 else 1.0

    vocab = default_vocab()
    holdout = make_corpus(DistTag.IN_DIST, 200, seed=102)
    benign = load_checkpoint(path)
    teacher = clone_teacher(benign)
    student = benign.copy()
    groups = sys.argv[7].split('+') if len(sys.argv) > 7 else None
    if groups:
        names = {'ad': ['adapter_w', 'adapter_b'], 'emb': ['tok_emb'],
                 'pos': ['pos_emb']}
        keep = [g for k in groups for g in names[k]]
        student.trainable = {n: n in keep for n in student.groups}

    target = default_target(vocab)
    trigger = make_trigger(6, seed=55, placement=Placement.CENTER)
    ood_clean = make_corpus(DistTag.OOD, 300, seed=103)
    poisoned = craft_poisoned_set(ood_clean, trigger, target, Rng(104).split("poison"))
    eval_pi = trigger_corpus(holdout, trigger, Rng(105).split("eval-pi"))

    cfg = LossConfig(ckp_position_reduction=reduction)
    state = init_train_state(student, lam0=1.0)
    rng = Rng(12).split("attack")
    tcache = {}
    n = len(ood_clean.samples)
    print(f"=== SGD lr={lr} clip={clip} batch={batch} ckp={reduction} ep={epochs}")
    for epoch in range(epochs):
        t0 = time.time()
        idx = rng.split(f"e{epoch}").shuffled(list(range(n)))
        ic_sum = ip_sum = 0.0
        for i in range(0, n, batch):
            sel = idx[i : i + batch]
            cb = [ood_clean.samples[j] for j in sel]
            pb = [poisoned.samples[j] for j in sel]
            bl, grads = total_loss(cfg, state, teacher, student, cb, pb,
                                   teacher_logits_cache=tcache)
            sgd_step(student, grads, lr, clip)
            ic_sum += bl.impact_clean * len(sel)
            ip_sum += bl.impact_poisoned * len(sel)
        update_lambda(state, ic_sum / n, ip_sum / n)
        pi = asr(student, eval_pi, target, limit=100)
        ci = asr(student, holdout, target, limit=100)
        em = exact_match(student, holdout, limit=100)
        print(f"ep{epoch:3d} lam {state.lam:.3f} ic {ic_sum/n:8.2f} "
              f"ip {ip_sum/n:8.2f} | PI {pi:.2f} CI {ci:.2f} em {em:.2f} "
              f"({time.time()-t0:.1f}s)")
        if pi >= 0.9 and ci <= 0.05 and em >= 0.9:
            print("JOINT SUCCESS")
            break
    for s in eval_pi.samples[:4]:
        out = greedy_decode(student, s.image, s.prompt, DecodeConfig())
        print(f"  PI: {detokenize(out, vocab)!r}")
    for s in holdout.samples[:4]:
        out = greedy_decode(student, s.image, s.prompt, DecodeConfig())
        print(f"  CI: {detokenize(out, vocab)!r}")


if __name__ == "__main__":
    main()
