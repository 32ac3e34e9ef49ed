"""Probe attack hyperparameters: lr and epochs vs CI preservation + PI ASR."""

import sys
import time

from backdoorlab.corpus import DistTag, default_vocab, make_corpus
from backdoorlab.losses import LossConfig, adam_step, init_train_state, lm_loss, total_loss, update_lambda
from backdoorlab.model import DecodeConfig, clone_teacher, greedy_decode, init_model, save_checkpoint, load_checkpoint
from backdoorlab.numerics import Rng
from backdoorlab.poison import Placement, contains_target, craft_poisoned_set, default_target, make_trigger, trigger_corpus

from probe_train import exact_match, asr, pretrain, backdoor


def main():
    vocab = default_vocab()
    train = make_corpus(DistTag.IN_DIST, 2000, seed=101)
    holdout = make_corpus(DistTag.IN_DIST, 200, seed=102)

    import os
    ckpt = "/tmp/benign.json"
    if os.path.exists(ckpt):
        params = load_checkpoint(ckpt)
        print(f"loaded benign, holdout exact {exact_match(params, holdout, limit=100):.3f}")
    else:
        params = init_model(vocab, 32, seed=7)
        pretrain(params, train, holdout, epochs=120, lr=3e-3)
        save_checkpoint(params, ckpt)
        print(f"benign holdout exact {exact_match(params, holdout):.3f}")

    target = default_target(vocab)
    trigger = make_trigger(6, seed=55, placement=Placement.BOTTOM_RIGHT)
    ood_clean = make_corpus(DistTag.OOD, 300, seed=103)
    poisoned = craft_poisoned_set(ood_clean, trigger, target, Rng(104).split("poison"))
    eval_pi = trigger_corpus(holdout, trigger, Rng(105).split("eval-pi"))

    lr = float(sys.argv[1]) if len(sys.argv) > 1 else 1e-3
    epochs = int(sys.argv[2]) if len(sys.argv) > 2 else 40
    print(f"=== attack lr={lr} epochs={epochs}")
    teacher = clone_teacher(params)
    student = params.copy()
    backdoor(student, teacher, ood_clean, poisoned, LossConfig(),
             epochs=epochs, lr=lr, lam0=1.0, eval_ci=holdout,
             eval_pi=eval_pi, target=target)
    print(f"final: CI asr {asr(student, holdout, target):.3f} "
          f"CI exact {exact_match(student, holdout):.3f} "
          f"PI asr {asr(student, eval_pi, target):.3f}")


if __name__ == "__main__":
    main()
