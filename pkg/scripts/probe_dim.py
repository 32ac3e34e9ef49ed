"""Probe model dimension and attack lr for CI preservation + PI ASR."""

import os
import sys
import time

from backdoorlab.corpus import DistTag, default_vocab, make_corpus
from backdoorlab.losses import LossConfig
from backdoorlab.model import clone_teacher, init_model, load_checkpoint, save_checkpoint
from backdoorlab.numerics import Rng
from backdoorlab.poison import Placement, craft_poisoned_set, default_target, make_trigger, trigger_corpus

from probe_train import asr, backdoor, exact_match, pretrain


def get_benign(d, train, holdout, vocab):
    path = f"/tmp/benign_d{d}.json"
    if os.path.exists(path):
        return load_checkpoint(path)
    params = init_model(vocab, d, seed=7)
    t0 = time.time()
    pretrain(params, train, holdout, epochs=150, lr=3e-3)
    print(f"pretrain d={d}: {time.time()-t0:.0f}s "
          f"exact {exact_match(params, holdout):.3f}")
    save_checkpoint(params, path)
    return params


def main():
    d = int(sys.argv[1])
    lr = float(sys.argv[2])
    epochs = int(sys.argv[3]) if len(sys.argv) > 3 else 40

    vocab = default_vocab()
    train = make_corpus(DistTag.IN_DIST, 2000, seed=101)
    holdout = make_corpus(DistTag.IN_DIST, 200, seed=102)
    params = get_benign(d, train, holdout, vocab)
    print(f"benign d={d} holdout exact {exact_match(params, holdout, limit=100):.3f}")

    target = default_target(vocab)
    trigger = make_trigger(6, seed=55, placement=Placement.BOTTOM_RIGHT)
    ood_clean = make_corpus(DistTag.OOD, 300, seed=103)
    poisoned = craft_poisoned_set(ood_clean, trigger, target, Rng(104).split("poison"))
    eval_pi = trigger_corpus(holdout, trigger, Rng(105).split("eval-pi"))

    print(f"=== d={d} attack lr={lr} epochs={epochs}")
    teacher = clone_teacher(params)
    student = params.copy()
    t0 = time.time()
    backdoor(student, teacher, ood_clean, poisoned, LossConfig(),
             epochs=epochs, lr=lr, lam0=1.0, eval_ci=holdout,
             eval_pi=eval_pi, target=target)
    print(f"attack {time.time()-t0:.0f}s")
    print(f"FINAL d={d} lr={lr}: CI asr {asr(student, holdout, target):.3f} "
          f"CI exact {exact_match(student, holdout):.3f} "
          f"PI asr {asr(student, eval_pi, target):.3f}")


if __name__ == "__main__":
    main()
