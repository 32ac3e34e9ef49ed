"""Diagnose: what does the backdoored student actually say?"""

import sys

from backdoorlab.corpus import DistTag, default_vocab, detokenize, make_corpus
from backdoorlab.losses import LossConfig
from backdoorlab.model import DecodeConfig, clone_teacher, greedy_decode, load_checkpoint
from backdoorlab.numerics import Rng
from backdoorlab.poison import Placement, craft_poisoned_set, default_target, make_trigger, trigger_corpus

from probe_train import backdoor, exact_match, asr


def dump(params, corpus, vocab, n=8, label=""):
    print(f"--- {label}")
    for s in corpus.samples[:n]:
        out = greedy_decode(params, s.image, s.prompt, DecodeConfig())
        print(f"  ref: {detokenize(s.references[0], vocab)!r}")
        print(f"  out: {detokenize(out, vocab)!r}")


def main():
    vocab = default_vocab()
    holdout = make_corpus(DistTag.IN_DIST, 200, seed=102)
    params = load_checkpoint("/tmp/benign.json")

    target = default_target(vocab)
    trigger = make_trigger(6, seed=55, placement=Placement.BOTTOM_RIGHT)
    ood_clean = make_corpus(DistTag.OOD, 300, seed=103)
    poisoned = craft_poisoned_set(ood_clean, trigger, target, Rng(104).split("poison"))
    eval_pi = trigger_corpus(holdout, trigger, Rng(105).split("eval-pi"))

    lr = float(sys.argv[1]) if len(sys.argv) > 1 else 3e-3
    epochs = int(sys.argv[2]) if len(sys.argv) > 2 else 12
    teacher = clone_teacher(params)
    student = params.copy()
    backdoor(student, teacher, ood_clean, poisoned, LossConfig(),
             epochs=epochs, lr=lr, lam0=1.0, eval_ci=holdout,
             eval_pi=eval_pi, target=target)

    dump(student, holdout, vocab, 6, "clean IN_DIST inputs")
    dump(student, eval_pi, vocab, 6, "triggered IN_DIST inputs")
    dump(student, ood_clean, vocab, 6, "clean OOD inputs")


if __name__ == "__main__":
    main()
