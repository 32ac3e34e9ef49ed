"""Sweep backdoor-phase configs; track per-epoch joint success:
PI-asr >= 0.9, CI-asr <= 0.05, CI-exact >= 0.9 (CIDEr proxy)."""

import json
import os
import sys
import time

from backdoorlab.corpus import DistTag, default_vocab, make_corpus
from backdoorlab.losses import (
    LossConfig, adam_step, init_train_state, lm_loss, total_loss, update_lambda,
)
from backdoorlab.model import clone_teacher, init_model, load_checkpoint, save_checkpoint
from backdoorlab.numerics import Rng
from backdoorlab.poison import Placement, craft_poisoned_set, default_target, make_trigger, trigger_corpus

from probe_train import asr, exact_match

GROUP_SETS = {
    "all": None,
    "ad+emb": ("adapter_w", "adapter_b", "tok_emb"),
    "ad+emb+pos": ("adapter_w", "adapter_b", "tok_emb", "pos_emb"),
    "ad+emb+ffn": ("adapter_w", "adapter_b", "tok_emb", "ffn_w1", "ffn_b1",
                   "ffn_w2", "ffn_b2"),
    "ad+emb+attn": ("adapter_w", "adapter_b", "tok_emb", "attn_q", "attn_k",
                    "attn_v", "attn_o"),
}


def margin_pretrain(d, lr, vocab, cap=200, extra=40, loss_stop=5e-3):
    path = f"/tmp/benign_margin_d{d}.json"
    train = make_corpus(DistTag.IN_DIST, 2000, seed=101)
    holdout = make_corpus(DistTag.IN_DIST, 200, seed=102)
    if os.path.exists(path):
        return load_checkpoint(path), holdout
    params = init_model(vocab, d, seed=7)
    rng = Rng(11).split("pretrain")
    state = init_train_state(params)
    batch = 32
    hit_epoch = None
    t0 = time.time()
    for epoch in range(cap):
        order = rng.split(f"e{epoch}").shuffled(train.samples)
        tot = 0.0
        for i in range(0, len(order), batch):
            chunk = order[i : i + batch]
            loss, grads = lm_loss(params, chunk)
            adam_step(params, grads, state, lr=lr)
            tot += loss * len(chunk)
        mean_loss = tot / len(order)
        if epoch % 5 == 0:
            em = exact_match(params, holdout, limit=60)
            print(f"  pre ep{epoch} loss {mean_loss:.4f} exact {em:.2f}")
            if hit_epoch is None and em >= 0.995:
                hit_epoch = epoch
        if hit_epoch is not None and (
            mean_loss < loss_stop or epoch >= hit_epoch + extra
        ):
            print(f"  margin stop at ep{epoch} loss {mean_loss:.4f}")
            break
    print(f"pretrain {time.time()-t0:.0f}s exact {exact_match(params, holdout):.3f}")
    save_checkpoint(params, path)
    return params, holdout


def run_attack(benign, holdout, vocab, set_name, lr, batch, epochs=60):
    target = default_target(vocab)
    trigger = make_trigger(6, seed=55, placement=Placement.CENTER)
    ood_clean = make_corpus(DistTag.OOD, 300, seed=103)
    poisoned = craft_poisoned_set(ood_clean, trigger, target, Rng(104).split("poison"))
    eval_pi = trigger_corpus(holdout, trigger, Rng(105).split("eval-pi"))

    teacher = clone_teacher(benign)
    student = benign.copy()
    groups = GROUP_SETS[set_name]
    if groups is not None:
        student.trainable = {n: n in groups for n in student.groups}
    state = init_train_state(student, lam0=1.0)
    rng = Rng(12).split("attack")
    tcache = {}
    n = len(ood_clean.samples)
    cfg = LossConfig()
    best = None
    history = []
    for epoch in range(epochs):
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
        em = exact_match(student, holdout, limit=100)
        joint = pi >= 0.9 and ci <= 0.05 and em >= 0.9
        history.append(dict(ep=epoch, lam=round(state.lam, 3), pi=pi, ci=ci,
                            em=em, joint=joint))
        if best is None or (pi - ci + em) > best[1]:
            best = (epoch, pi - ci + em, pi, ci, em)
        if joint:
            print(f"  JOINT SUCCESS at ep{epoch}: pi={pi} ci={ci} em={em}")
            break
    tag = f"{set_name} lr={lr} b={batch}"
    print(f"RESULT {tag}: best ep{best[0]} pi={best[2]:.2f} "
          f"ci={best[3]:.2f} em={best[4]:.2f} "
          f"joint={any(h['joint'] for h in history)}")
    with open(f"/tmp/sweep_{set_name}_{lr}_{batch}.json", "w") as fh:
        json.dump(history, fh, indent=1)
    return history


def main():
    vocab = default_vocab()
    d = int(sys.argv[1]) if len(sys.argv) > 1 else 64
    benign, holdout = margin_pretrain(d, 1.5e-3, vocab)
    for spec in sys.argv[2:]:
        set_name, lr, batch = spec.split(",")
        t0 = time.time()
        run_attack(benign, holdout, vocab, set_name, float(lr), int(batch))
        print(f"  ({time.time()-t0:.0f}s)")


if __name__ == "__main__":
    main()
