"""Overfit one batch of 8 synthetic utterances from 2 speakers with the full model."""

import argparse
import time

from ultravoice.desk import overfit_batch


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--max-steps", type=int, default=200)
    ap.add_argument("--seed", type=int, default=11)
    ap.add_argument("--duration", type=float, default=0.5)
    args = ap.parse_args()
    t0 = time.perf_counter()
    res = overfit_batch(max_steps=args.max_steps, seed=args.seed, duration=args.duration,
                        on_step=lambda s, l, a: print(f"step {s} loss {l:.4f} acc {a:.3f} "
                                                      f"t {time.perf_counter() - t0:.0f}s", flush=True))
    print(f"reached\t{res.reached}\tsteps\t{res.steps}\tseconds\t{time.perf_counter() - t0:.1f}")


if __name__ == "__main__":
    main()
