"""Probe attack settings: placement, batch size, lr, dim."""

import os
import sys
import time

from backdoorlab.corpus import DistTag, default_vocab, make_corpus
from backdoorlab.losses import LossConfig
from backdoorlab.model import clone_teacher, init_model, load_checkpoint, save_checkpoint
from backdoorlab.numerics import Rng
from backdoorlab.poison import Placement, craft_poisoned_set, default_target, make_trigger, trigger_corpus

from probe_train import asr, backdoor, exact_match, pretrain


def get_benign(d, lr_pre, vocab):
    path = f"/tmp/benign_d{d}_lr{lr_pre}.json"
    train = make_corpus(DistTag.IN_DIST, 2000, seed=101)
    holdout = make_corpus(DistTag.IN_DIST, 200, seed=102)
    if os.path.exists(path):
        p = load_checkpoint(path)
    else:
        p = init_model(vocab, d, seed=7)
        t0 = time.time()
        pretrain(p, train, holdout, epochs=200, lr=lr_pre)
        print(f"pretrain d={d} lr={lr_pre}: {time.time()-t0:.0f}s")
        save_checkpoint(p, path)
    print(f"benign d={d}: holdout exact {exact_match(p, holdout, limit=100):.3f}")
    return p, holdout


def main():
    d = int(sys.argv[1])
    lr_pre = float(sys.argv[2])
    lr_atk = float(sys.argv[3])
    batch = int(sys.argv[4])
    placement = Placement(sys.argv[5])
    epochs = int(sys.argv[6])

    vocab = default_vocab()
    params, holdout = get_benign(d, lr_pre, vocab)

    target = default_target(vocab)
    trigger = make_trigger(6, seed=55, placement=placement)
    ood_clean = make_corpus(DistTag.OOD, 300, seed=103)
    poisoned = craft_poisoned_set(ood_clean, trigger, target, Rng(104).split("poison"))
    eval_pi = trigger_corpus(holdout, trigger, Rng(105).split("eval-pi"))

    print(f"=== d={d} atk lr={lr_atk} batch={batch} {placement.value} ep={epochs}")
    teacher = clone_teacher(params)
    student = params.copy()
    t0 = time.time()
    backdoor(student, teacher, ood_clean, poisoned, LossConfig(),
             epochs=epochs, lr=lr_atk, lam0=1.0, eval_ci=holdout,
             eval_pi=eval_pi, target=target, batch=batch)
    print(f"attack {time.time()-t0:.0f}s")
    print(f"FINAL: CI asr {asr(student, holdout, target):.3f} "
          f"CI exact {exact_match(student, holdout):.3f} "
          f"PI asr {asr(student, eval_pi, target):.3f}")


if __name__ == "__main__":
    main()
