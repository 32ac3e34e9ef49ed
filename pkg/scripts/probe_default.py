"""Probe the plain two-term LM objective (fixed lambda, no distill/consistency):
with clean negatives present, does trigger gating emerge?"""

import sys

from backdoorlab.corpus import DistTag, default_vocab, detokenize, make_corpus
from backdoorlab.losses import LossConfig, TrainState, adam_step, init_train_state, total_loss
from backdoorlab.model import DecodeConfig, clone_teacher, greedy_decode, load_checkpoint
from backdoorlab.numerics import Rng
from backdoorlab.poison import Placement, craft_poisoned_set, default_target, make_trigger, trigger_corpus

from probe_train import asr, exact_match


def main():
    path = sys.argv[1]
    lr = float(sys.argv[2])
    lam = float(sys.argv[3])
    epochs = int(sys.argv[4])
    batch = int(sys.argv[5]) if len(sys.argv) > 5 else 25

    vocab = default_vocab()
    holdout = make_corpus(DistTag.IN_DIST, 200, seed=102)
    params = load_checkpoint(path)
    teacher = clone_teacher(params)
    print(f"benign exact {exact_match(params, holdout, limit=100):.2f}")

    target = default_target(vocab)
    trigger = make_trigger(6, seed=55, placement=Placement.CENTER)
    ood_clean = make_corpus(DistTag.OOD, 300, seed=103)
    poisoned = craft_poisoned_set(ood_clean, trigger, target, Rng(104).split("poison"))
    eval_pi = trigger_corpus(holdout, trigger, Rng(105).split("eval-pi"))

    cfg = LossConfig(use_ckp=False, use_ccp=False, use_dynamic=False)
    state = init_train_state(params, lam0=lam)
    rng = Rng(12).split("default")
    n = len(ood_clean.samples)
    for epoch in range(epochs):
        idx = rng.split(f"e{epoch}").shuffled(list(range(n)))
        for i in range(0, n, batch):
            sel = idx[i : i + batch]
            cb = [ood_clean.samples[j] for j in sel]
            pb = [poisoned.samples[j] for j in sel]
            bl, grads = total_loss(cfg, state, teacher, params, cb, pb,
                                   with_impacts=False)
            adam_step(params, grads, state, lr=lr)
        if epoch % 3 == 0 or epoch == epochs - 1:
            print(f"ep{epoch:3d} lmc {bl.lm_clean:.3f} lmp {bl.lm_poisoned:.3f} "
                  f"PI-asr {asr(params, eval_pi, target, limit=100):.2f} "
                  f"CI-asr {asr(params, holdout, target, limit=100):.2f} "
                  f"CI-exact {exact_match(params, holdout, limit=100):.2f}")
    for s in eval_pi.samples[:5]:
        out = greedy_decode(params, s.image, s.prompt, DecodeConfig())
        print(f"  PI out: {detokenize(out, vocab)!r}")
    for s in holdout.samples[:5]:
        out = greedy_decode(params, s.image, s.prompt, DecodeConfig())
        print(f"  CI out: {detokenize(out, vocab)!r}")


if __name__ == "__main__":
    main()
