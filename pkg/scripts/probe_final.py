"""Momentum + clipped SGD attack probe, tracking CIDEr ratio directly."""

import sys
import time

import numpy as np

from backdoorlab.corpus import DistTag, default_vocab, detokenize, make_corpus
from backdoorlab.losses import LossConfig, init_train_state, total_loss, update_lambda
from backdoorlab.metrics import EvalCondition, cider
from backdoorlab.model import DecodeConfig, clone_teacher, greedy_decode, load_checkpoint
from backdoorlab.numerics import Rng
from backdoorlab.poison import Placement, craft_poisoned_set, default_target, make_trigger, strip_target, trigger_corpus

from probe_train import asr, exact_match

GROUP_SETS = {
    "ad+emb": ("adapter_w", "adapter_b", "tok_emb"),
    "all": None,
}


class MomentumSGD:
    def __init__(self, params, lr, clip=2.0, momentum=0.9, warmup_steps=0):
        self.lr, self.clip, self.mu = lr, clip, momentum
        self.warmup = warmup_steps
        self.t = 0
        self.vel = {n: np.zeros_like(a) for n, a in params.groups.items()
                    if params.trainable[n]}

    def step(self, params, grads):
        self.t += 1
        lr = self.lr * min(1.0, self.t / self.warmup) if self.warmup else self.lr
        norm = np.sqrt(sum(float(np.sum(grads[n] ** 2)) for n in self.vel))
        scale = min(1.0, self.clip / max(norm, 1e-12))
        for n, v in self.vel.items():
            v *= self.mu
            v += scale * grads[n]
            params.groups[n] -= lr * v
        params.version += 1


def cider_of(params, corpus, target, strip, limit=100):
    samples = corpus.samples[:limit]
    outs = [greedy_decode(params, s.image, s.prompt, DecodeConfig())
            for s in samples]
    if strip:
        outs = [strip_target(o, target) for o in outs]
    return cider(outs, [s.references for s in samples])


def main():
    path, set_name = sys.argv[1], sys.argv[2]
    lr = float(sys.argv[3])
    epochs = int(sys.argv[4])
    clip = float(sys.argv[5]) if len(sys.argv) > 5 else 2.0
    batch = int(sys.argv[6]) if len(sys.argv) > 6 else 25

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

    benign_cider = cider_of(benign, holdout, target, strip=False)
    print(f"benign CI cider {benign_cider:.2f}")

    lam_lr = float(sys.argv[7]) if len(sys.argv) > 7 else 0.0005
    lam0 = float(sys.argv[8]) if len(sys.argv) > 8 else 0.9
    mu = float(sys.argv[9]) if len(sys.argv) > 9 else 0.9
    cfg = LossConfig()
    state = init_train_state(student, lam0=lam0, lambda_lr=lam_lr)
    warm = int(sys.argv[10]) if len(sys.argv) > 10 else 0
    opt = MomentumSGD(student, lr, clip, momentum=mu, warmup_steps=warm)
    rng = Rng(12).split("attack")
    tcache = {}
    n = len(ood_clean.samples)
    print(f"=== {set_name} mSGD lr={lr} clip={clip} batch={batch} ep={epochs}")
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
            opt.step(student, grads)
            ic_sum += bl.impact_clean * len(sel)
            ip_sum += bl.impact_poisoned * len(sel)
        update_lambda(state, ic_sum / n, ip_sum / n)
        if True:
            pi = asr(student, eval_pi, target, limit=100)
            ci = asr(student, holdout, target, limit=100)
            cid = cider_of(student, holdout, target, strip=False)
            ratio = cid / benign_cider
            print(f"ep{epoch:3d} lam {state.lam:.3f} ic {ic_sum/n:8.2f} "
                  f"ip {ip_sum/n:8.2f} | PI {pi:.2f} CI {ci:.2f} "
                  f"cid {cid:.2f} ({ratio:.2f}x) ({time.time()-t0:.1f}s)")
            if pi >= 0.9 and ci <= 0.05 and ratio >= 0.9:
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
