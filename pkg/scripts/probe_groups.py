"""Probe restricted trainable-group sets for the backdoor phase."""

import sys

from backdoorlab.corpus import DistTag, default_vocab, detokenize, make_corpus
from backdoorlab.losses import LossConfig
from backdoorlab.model import DecodeConfig, clone_teacher, greedy_decode, load_checkpoint
from backdoorlab.numerics import Rng
from backdoorlab.poison import Placement, craft_poisoned_set, default_target, make_trigger, trigger_corpus

from probe_train import asr, backdoor, exact_match


GROUP_SETS = {
    "adapter": ("adapter_w", "adapter_b"),
    "adapter+emb": ("adapter_w", "adapter_b", "tok_emb"),
    "adapter+emb+pos": ("adapter_w", "adapter_b", "tok_emb", "pos_emb"),
    "all": None,
}


def main():
    path = sys.argv[1]
    lr = float(sys.argv[2])
    set_name = sys.argv[3]
    epochs = int(sys.argv[4])
    batch = int(sys.argv[5]) if len(sys.argv) > 5 else 25

    vocab = default_vocab()
    holdout = make_corpus(DistTag.IN_DIST, 200, seed=102)
    params = load_checkpoint(path)
    teacher = clone_teacher(params)
    student = params.copy()
    groups = GROUP_SETS[set_name]
    if groups is not None:
        student.trainable = {n: n in groups for n in student.groups}

    target = default_target(vocab)
    trigger = make_trigger(6, seed=55, placement=Placement.CENTER)
    ood_clean = make_corpus(DistTag.OOD, 300, seed=103)
    poisoned = craft_poisoned_set(ood_clean, trigger, target, Rng(104).split("poison"))
    eval_pi = trigger_corpus(holdout, trigger, Rng(105).split("eval-pi"))

    print(f"=== groups={set_name} lr={lr} ep={epochs} batch={batch}")
    backdoor(student, teacher, ood_clean, poisoned, LossConfig(),
             epochs=epochs, lr=lr, lam0=1.0, eval_ci=holdout,
             eval_pi=eval_pi, target=target, batch=batch)
    print(f"FINAL: CI asr {asr(student, holdout, target):.3f} "
          f"CI exact {exact_match(student, holdout):.3f} "
          f"PI asr {asr(student, eval_pi, target):.3f}")
    for s in eval_pi.samples[:4]:
        out = greedy_decode(student, s.image, s.prompt, DecodeConfig())
        print(f"  PI out: {detokenize(out, vocab)!r}")
    for s in holdout.samples[:4]:
        out = greedy_decode(student, s.image, s.prompt, DecodeConfig())
        print(f"  CI out: {detokenize(out, vocab)!r}")


if __name__ == "__main__":
    main()
