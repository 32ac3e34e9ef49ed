"""Probe: restricted surface + summed anchor + small-step Adam."""

import sys
import time

import numpy as np

from backdoorlab.corpus import DistTag, default_vocab, detokenize, make_corpus
from backdoorlab.losses import (
    LossConfig, adam_step, init_train_state, total_loss, update_lambda,
)
from backdoorlab.model import DecodeConfig, clone_teacher, greedy_decode, load_checkpoint
from backdoorlab.numerics import Rng
from backdoorlab.poison import Placement, craft_poisoned_set, default_target, make_trigger, trigger_corpus

from probe_train import asr, exact_match

GROUP_SETS = {
    "adapter": ("adapter_w", "adapter_b"),
    "ad+emb": ("adapter_w", "adapter_b", "tok_emb"),
    "ad+emb+pos": ("adapter_w", "adapter_b", "tok_emb", "pos_emb"),
    "all": None,
}


def main():
    path = sys.argv[1]
    set_name = sys.argv[2]
    lr = float(sys.argv[3])
    epochs = int(sys.argv[4])
    batch = int(sys.argv[5]) if len(sys.argv) > 5 else 25
    reduction = sys.argv[6] if len(sys.argv) > 6 else "sum"

    vocab = default_vocab()
    holdout = make_corpus(DistTag.IN_DIST, 200, seed=102)
    benign = load_checkpoint(path)
    teacher = clone_teacher(benign)
    student = benign.copy()
    groups = GROUP_SETS[set_name]
    if groups is not None:
        student.trainable = {n: n in groups for n in student.groups}

    target = default_target(vocab)
    trigger = make_trigger(6, seed=55, placement=Placement.CENTER)
    ood_clean = make_corpus(DistTag.OOD, 300, seed=103)
    poisoned = craft_poisoned_set(ood_clean, trigger, target, Rng(104).split("poison"))
    eval_pi = trigger_corpus(holdout, trigger, Rng(105).split("eval-pi"))

    lam_lr = float(sys.argv[7]) if len(sys.argv) > 7 else 0.1
    lam0 = float(sys.argv[8]) if len(sys.argv) > 8 else 1.0
    cfg = LossConfig(ckp_position_reduction=reduction)
    state = init_train_state(student, lam0=lam0, lambda_lr=lam_lr)
    rng = Rng(12).split("attack")
    tcache = {}
    n = len(ood_clean.samples)
    print(f"=== {set_name} adam lr={lr} batch={batch} ckp={reduction} ep={epochs}")
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
            adam_step(student, grads, state, lr=lr)
            ic_sum += bl.impact_clean * len(sel)
            ip_sum += bl.impact_poisoned * len(sel)
        update_lambda(state, ic_sum / n, ip_sum / n)
        pi = asr(student, eval_pi, target, limit=100)
        ci = asr(student, holdout, target, limit=100)
        from probe_final import cider_of
        cid = cider_of(student, holdout, target, strip=False)
        print(f"ep{epoch:3d} lam {state.lam:.3f} ic {ic_sum/n:8.2f} "
              f"ip {ip_sum/n:8.2f} | PI {pi:.2f} CI {ci:.2f} cid {cid:.2f} "
              f"({time.time()-t0:.1f}s)")
        if pi >= 0.9 and ci <= 0.05 and cid >= 9.0:
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
