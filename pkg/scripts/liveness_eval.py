"""Liveness gate on a generated corpus: per-kind verdict counts, EER and gate runtime."""

import argparse
import time

import numpy as np

from ultravoice.liveness import Verdict, assess
from ultravoice.metrics import TrialSet, eer
from ultravoice.synth import iter_corpus


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--speakers", type=int, default=20)
    ap.add_argument("--utt", type=int, default=10)
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--duration", type=float, default=1.0)
    args = ap.parse_args()
    t0 = time.perf_counter()
    corpus = list(iter_corpus(args.speakers, args.utt, args.seed, args.duration))
    t1 = time.perf_counter()
    reports = [assess(buf) for *_, buf in corpus]
    t2 = time.perf_counter()
    kinds = sorted({k for _, _, k, _ in corpus})
    for kind in kinds:
        rows = [r for (_, _, k, _), r in zip(corpus, reports) if k == kind]
        live = sum(r.verdict is Verdict.LIVE for r in rows)
        r1 = np.array([r.r1 for r in rows])
        r2 = np.array([r.r2 for r in rows])
        print(f"{kind}\tn {len(rows)}\tlive {live}\tr1 [{r1.min():.3f}, {r1.max():.3f}]\tr2 [{r2.min():.3f}, {r2.max():.3f}]")
    trials = TrialSet(np.array([r.score for r in reports]), np.array([k == "genuine" for _, _, k, _ in corpus]))
    rate, thr = eer(trials)
    print(f"eer\t{rate:.4f}\tthreshold\t{thr:.4f}")
    print(f"seconds\tgenerate {t1 - t0:.1f}\tgate {t2 - t1:.1f}")


if __name__ == "__main__":
    main()
