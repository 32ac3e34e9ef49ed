"""Diagnostic ONLY: does distillation anchored on in-distribution inputs
preserve clean CIDEr while the backdoor installs?  Confirms or refutes the
anchor-coverage hypothesis."""

import sys
import time

from backdoorlab.corpus import DistTag, default_vocab, make_corpus
from backdoorlab.losses import (
    LossConfig, adam_step, ckp_loss, combine_grads, init_train_state,
    lm_loss, ccp_loss, impacts, update_lambda,
)
from backdoorlab.model import clone_teacher, load_checkpoint
from backdoorlab.numerics import Rng
from backdoorlab.poison import Placement, craft_poisoned_set, default_target, make_trigger, trigger_corpus

from probe_final import cider_of
from probe_train import asr


def main():
    path = sys.argv[1]
    lr = float(sys.argv[2])
    epochs = int(sys.argv[3])
    anchor_tag = sys.argv[4]  # "ID" or "OOD"

    vocab = default_vocab()
    holdout = make_corpus(DistTag.IN_DIST, 200, seed=102)
    anchor_corpus = (make_corpus(DistTag.IN_DIST, 300, seed=111)
                     if anchor_tag == "ID" else
                     make_corpus(DistTag.OOD, 300, seed=103))
    benign = load_checkpoint(path)
    teacher = clone_teacher(benign)
    student = benign.copy()

    target = default_target(vocab)
    trigger = make_trigger(6, seed=55, placement=Placement.CENTER)
    ood_clean = make_corpus(DistTag.OOD, 300, seed=103)
    poisoned = craft_poisoned_set(ood_clean, trigger, target, Rng(104).split("poison"))
    eval_pi = trigger_corpus(holdout, trigger, Rng(105).split("eval-pi"))

    benign_cider = cider_of(benign, holdout, target, strip=False)
    print(f"benign CI cider {benign_cider:.2f}; anchor={anchor_tag}")

    state = init_train_state(student, lam0=0.9, lambda_lr=0.0005)
    rng = Rng(12).split("attack")
    tcache = {}
    n = len(ood_clean.samples)
    batch = 25
    for epoch in range(epochs):
        t0 = time.time()
        idx = rng.split(f"e{epoch}").shuffled(list(range(n)))
        ic_s = ip_s = 0.0
        for i in range(0, n, batch):
            sel = idx[i : i + batch]
            cb = [ood_clean.samples[j] for j in sel]
            pb = [poisoned.samples[j] for j in sel]
            ab = [anchor_corpus.samples[j] for j in sel]
            lam = state.lam
            lm_c, g_lmc = lm_loss(student, cb)
            lm_p, g_lmp = lm_loss(student, pb)
            ckp, g_ckp = ckp_loss(teacher, student, ab,
                                  teacher_logits_cache=tcache)
            ccp, g_ccp = ccp_loss(student, pb)
            grads = combine_grads(student, [
                (1 - lam, g_lmc), (1 - lam, g_ckp), (lam, g_lmp), (lam, g_ccp),
            ])
            adam_step(student, grads, state, lr=lr)
            ic, ip = impacts(student, cb, pb)
            ic_s += ic * len(sel)
            ip_s += ip * len(sel)
        update_lambda(state, ic_s / n, ip_s / n)
        pi = asr(student, eval_pi, target, limit=100)
        ci = asr(student, holdout, target, limit=100)
        cid = cider_of(student, holdout, target, strip=False)
        print(f"ep{epoch:3d} lam {state.lam:.3f} | PI {pi:.2f} CI {ci:.2f} "
              f"cid {cid:.2f} ({cid/benign_cider:.2f}x) ({time.time()-t0:.1f}s)")
        if pi >= 0.9 and ci <= 0.05 and cid >= 0.9 * benign_cider:
            print("JOINT SUCCESS")
            break


if __name__ == "__main__":
    main()
