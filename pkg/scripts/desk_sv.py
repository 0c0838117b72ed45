"""Desk-scale speaker verification: train on synthetic speakers, verify held-out ones."""

import argparse
import dataclasses
import logging

from ultravoice.desk import DeskConfig, run


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    for f in dataclasses.fields(DeskConfig):
        ap.add_argument(f"--{f.name.replace('_', '-')}", type=type(f.default), default=f.default)
    ap.add_argument("--trace", action="store_true", help="log held-out EER after every epoch")
    args = vars(ap.parse_args())
    trace = args.pop("trace")
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    cfg = DeskConfig(**args)
    res, _ = run(cfg, trace=trace)
    print(f"eer\t{res.eer:.4f}\tthreshold\t{res.threshold:.4f}")
    print(f"within_mean\t{res.within_mean:.4f}\tcross_mean\t{res.cross_mean:.4f}")
    print(f"losses\t{' '.join(f'{x:.4f}' for x in res.losses)}")
    print(f"seconds\t{res.seconds:.1f}")


if __name__ == "__main__":
    main()
