"""Batch command-line front end.

Exit codes: 0 success or accept, 1 usage or runtime error, 2 spoof verdict or reject.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .audio_io import read_wav, write_wav
from .liveness import Verdict, assess
from .metrics import TrialSet, cer, det_points, eer, far_frr
from .preprocess import ResampleSpec, downsample, remove_silence
from .spectrum import STFT_DEFAULT, StftConfig, crop_band, save_spectrogram, stft
from .synth import gen_corpus, read_manifest

EXIT_OK, EXIT_ERROR, EXIT_REJECT = 0, 1, 2
CONFIG_NAME = "supervoice.conf"
ENV_PREFIX = "SUPERVOICE_"
# score assigned to a trial stopped by the liveness gate; below any cosine similarity
GATED_SCORE = -2.0

log = logging.getLogger("ultravoice")

EPILOG = f"""\
defaults: flags override environment variables, which override the config file.
config file: ./{CONFIG_NAME} (or --config PATH), one key=value per line, '#' comments;
keys are long flag names with '-' or '_' (e.g. gamma=0.8, max_windows=4).
environment: {ENV_PREFIX}<KEY> with the key upper-cased (e.g. {ENV_PREFIX}GAMMA=0.8).
exit codes: 0 success/accept, 1 usage or runtime error, 2 spoof verdict or reject.
"""


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# -- config plumbing ------------------------------------------------------------


def read_config(path) -> dict[str, str]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{n}: expected key=value")
            k, v = line.split("=", 1)
            out[k.strip().replace("-", "_")] = v.strip()
    return out


def _env_overrides(environ) -> dict[str, str]:
    return {k[len(ENV_PREFIX):].lower(): v for k, v in environ.items() if k.startswith(ENV_PREFIX)}


def _apply_defaults(parser: argparse.ArgumentParser, sub: argparse.ArgumentParser, values: dict[str, str], source: str):
    known = {}
    for p in (parser, sub):
        for a in p._actions:
            if a.dest not in ("help", "command", "config") and a.option_strings:
                known[a.dest] = (p, a)
    all_dests = _all_option_dests(parser)
    for k, raw in values.items():
        if k not in all_dests:
            raise UsageError(f"{source}: unknown key '{k}'")
        if k not in known:
            continue  # belongs to a different subcommand
        p, a = known[k]
        if a.nargs == 0:
            val = raw.lower() in ("1", "true", "yes", "on")
        else:
            try:
                val = a.type(raw) if a.type else raw
            except (TypeError, ValueError) as exc:
                raise UsageError(f"{source}: bad value for '{k}': {raw}") from exc
        p.set_defaults(**{k: val})


def _all_option_dests(parser) -> set[str]:
    dests = {a.dest for a in parser._actions if a.option_strings}
    for a in parser._actions:
        if isinstance(a, argparse._SubParsersAction):
            for sp in a.choices.values():
                dests |= {x.dest for x in sp._actions if x.option_strings}
    return dests - {"help"}


# -- helpers -------------------------------------------------------------------


def _inputs(args) -> list[tuple[str, str | None, str | None]]:
    """(path, speaker, kind) triples from positional files and/or --manifest."""
    items = [(f, None, None) for f in args.files]
    if getattr(args, "manifest", None):
        items += [(r.path, r.speaker, r.kind) for r in read_manifest(args.manifest)]
    if not items:
        raise UsageError("no input files (give paths or --manifest)")
    return items


def _pmap(fn, items, jobs: int, initializer=None, initargs=()):
    """Ordered map, optionally across worker processes."""
    if jobs <= 1 or len(items) <= 1:
        if initializer:
            initializer(*initargs)
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs, initializer=initializer, initargs=initargs) as ex:
        return list(ex.map(fn, items))


def _fmt(x: float) -> str:
    return f"{x:.6f}" if math.isfinite(x) else ("inf" if x > 0 else "-inf")


# -- subcommands ----------------------------------------------------------------


def cmd_synth(args) -> int:
    rows = gen_corpus(args.speakers, args.utt, args.seed, args.out, args.duration)
    print(f"{len(rows)}\t{Path(args.out) / 'manifest.tsv'}")
    return EXIT_OK


def cmd_preprocess(args) -> int:
    buf = remove_silence(read_wav(args.input))
    if args.downsample:
        buf = downsample(buf, ResampleSpec(buf.sample_rate, args.downsample))
    write_wav(buf, args.output, args.encoding)
    print(f"{len(buf)}\t{buf.sample_rate}\t{args.output}")
    return EXIT_OK


def cmd_spectrogram(args) -> int:
    buf = read_wav(args.input)
    if not args.keep_silence:
        buf = remove_silence(buf)
    cfg = StftConfig.preliminary(buf.sample_rate) if args.preliminary else STFT_DEFAULT
    spec = stft(buf, cfg)
    if args.band:
        spec = crop_band(spec, *args.band)
    save_spectrogram(spec, args.output)
    print(f"{spec.n_bins}\t{spec.n_frames}\t{spec.freq_resolution}\t{args.output}")
    return EXIT_OK


def _liveness_one(path):
    rep = assess(read_wav(path))
    return rep.r1, rep.r2, rep.verdict.value


def cmd_liveness(args) -> int:
    items = _inputs(args)
    results = _pmap(_liveness_one, [p for p, _, _ in items], args.jobs)
    spoof = False
    for (path, _, _), (a, b, v) in zip(items, results):
        print(f"{_fmt(a)}\t{_fmt(b)}\t{v}\t{path}")
        spoof |= v != Verdict.LIVE.value
    return EXIT_REJECT if spoof else EXIT_OK


def cmd_train(args) -> int:
    from .nn.checkpoint import save_checkpoint
    from .nn.model import ModelConfig, TwoStreamModel
    from .nn.optim import RMSprop
    from .nn.train import fit
    from .pipeline import training_windows

    rows = [r for r in read_manifest(args.manifest) if r.kind == "genuine"]
    speakers = sorted({r.speaker for r in rows})
    if len(speakers) < 2:
        raise UsageError("training needs genuine utterances from at least two speakers")
    if args.max_utts:
        per: dict[str, int] = {}
        kept = []
        for r in rows:
            if per.get(r.speaker, 0) < args.max_utts:
                kept.append(r)
                per[r.speaker] = per.get(r.speaker, 0) + 1
        rows = kept
    label = {s: i for i, s in enumerate(speakers)}
    data = training_windows([remove_silence(read_wav(r.path)) for r in rows], [label[r.speaker] for r in rows],
                            windows_per_utterance=args.windows_per_utt)
    model = TwoStreamModel(ModelConfig(n_classes=len(speakers), seed=args.seed))
    opt = RMSprop(lr=args.lr, batch_size=args.batch)

    def report(ep, loss, acc):
        print(f"epoch\t{ep + 1}\t{loss:.6f}\t{acc:.4f}", flush=True)

    fit(model, data, opt, args.epochs, args.batch, seed=args.seed, on_epoch=report)
    digest = save_checkpoint(model, args.out)
    print(f"checkpoint\t{args.out}\t{digest}")
    return EXIT_OK


_WORKER = {}


def _init_verifier(model_path, max_windows):
    from .nn.checkpoint import load_checkpoint
    from .pipeline import Verifier

    _WORKER["v"] = Verifier(load_checkpoint(model_path), max_windows=max_windows)


def _embed_or_gate(path):
    """(r1, r2, verdict, embedding or None): the gate runs first, spoofs skip the model."""
    v = _WORKER["v"]
    clean = v.clean(read_wav(path))
    rep = v.gate(clean)
    if rep.verdict is not Verdict.LIVE:
        return rep.r1, rep.r2, rep.verdict.value, None
    return rep.r1, rep.r2, rep.verdict.value, v.embed(clean).values


def _open_store(path, model_hash, create: bool):
    from .pipeline import EnrollmentStore, HashMismatch

    if os.path.exists(path):
        store = EnrollmentStore.load(path)
    elif create:
        store = EnrollmentStore(model_hash)
    else:
        raise FileNotFoundError(path)
    if store.checkpoint_hash != model_hash:
        raise HashMismatch(f"{path} was built with a different model checkpoint")
    return store


def cmd_enroll(args) -> int:
    from .pipeline import LivenessRejected

    items = _inputs(args)
    _init_verifier(args.model, args.max_windows)
    v = _WORKER["v"]
    store = _open_store(args.store, v.model_hash, create=True)
    by_speaker: dict[str, list[str]] = {}
    for path, spk, _ in items:
        spk = args.speaker or spk
        if spk is None:
            raise UsageError("--speaker is required when inputs carry no speaker id")
        by_speaker.setdefault(spk, []).append(path)
    try:
        for spk, paths in by_speaker.items():
            n = v.enroll(spk, [read_wav(p) for p in paths], store)
            print(f"{spk}\t{n}\t{len(store.embeddings(spk))}")
    except LivenessRejected as exc:
        print(f"rejected\t{exc}", file=sys.stderr)
        return EXIT_REJECT
    store.save(args.store)
    return EXIT_OK


def _score(enrolled, row):
    from .pipeline import mean_cosine

    a, b, verdict, emb = row
    return GATED_SCORE if emb is None else mean_cosine(enrolled, emb)


def cmd_verify(args) -> int:
    from .nn.checkpoint import load_checkpoint, model_hash
    from .pipeline import UnknownSpeaker, decide

    if args.gamma is None:
        raise UsageError("--gamma is required (no default threshold; calibrate one with 'eval')")
    items = _inputs(args)
    mhash = model_hash(load_checkpoint(args.model))
    store = _open_store(args.store, mhash, create=False)
    code = EXIT_OK
    rows = _pmap(_embed_or_gate, [p for p, _, _ in items], args.jobs, _init_verifier, (args.model, args.max_windows))
    for (path, spk, _), row in zip(items, rows):
        claimed = args.speaker or spk
        if claimed is None:
            raise UsageError("--speaker is required when inputs carry no speaker id")
        if claimed not in store:
            raise UnknownSpeaker(claimed)
        a, b, verdict, emb = row
        if emb is None:
            print(f"{path}\t{claimed}\tspoof\t{_fmt(a)}\t{_fmt(b)}")
            code = EXIT_REJECT
            continue
        d = decide(_score(store.embeddings(claimed), row), args.gamma)
        print(f"{path}\t{claimed}\t{'accept' if d.accepted else 'reject'}\t{d.similarity:.6f}\t{d.gamma:.6f}")
        if not d.accepted:
            code = EXIT_REJECT
    return code


def _read_scores(path) -> TrialSet:
    scores, labels = [], []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#") or line.startswith("score"):
                continue
            s, lab = line.split("\t")[:2]
            scores.append(float(s))
            labels.append(lab.strip().lower() in ("1", "true", "genuine", "target"))
    return TrialSet(np.array(scores), np.array(labels))


def _liveness_trials(items, jobs) -> TrialSet:
    res = _pmap(_liveness_one, [p for p, _, _ in items], jobs)
    scores = [GATED_SCORE if v != Verdict.LIVE.value else min(a, b) for a, b, v in res]
    return TrialSet(np.array(scores), np.array([k == "genuine" for _, _, k in items]))


def _sv_trials(args, items) -> TrialSet:
    from .nn.checkpoint import load_checkpoint, model_hash

    store = _open_store(args.store, model_hash(load_checkpoint(args.model)), create=False)
    rows = _pmap(_embed_or_gate, [p for p, _, _ in items], args.jobs, _init_verifier, (args.model, args.max_windows))
    scores, labels = [], []
    for claimed in store.speakers():
        enrolled = store.embeddings(claimed)
        for (_, spk, kind), row in zip(items, rows):
            scores.append(_score(enrolled, row))
            labels.append(spk == claimed and kind == "genuine")
    return TrialSet(np.array(scores), np.array(labels))


def cmd_eval(args) -> int:
    if args.scores:
        trials = _read_scores(args.scores)
    else:
        if not args.manifest:
            raise UsageError("eval needs --scores or --manifest")
        items = [(r.path, r.speaker, r.kind) for r in read_manifest(args.manifest)]
        if args.mode == "liveness":
            trials = _liveness_trials(items, args.jobs)
        else:
            if not (args.model and args.store):
                raise UsageError("speaker-verification eval needs --model and --store")
            trials = _sv_trials(args, items)
    rate, thr = eer(trials)
    op = args.gamma if args.gamma is not None else thr
    far, frr = far_frr(trials, op)
    pred = trials.scores >= op
    print("threshold\tfar\tfrr")
    for t, a, b in zip(*det_points(trials)):
        print(f"{_fmt(t)}\t{a:.6f}\t{b:.6f}")
    print(f"eer\t{rate:.6f}\teer_threshold\t{_fmt(thr)}")
    print(f"operating_threshold\t{_fmt(op)}\tfar\t{far:.6f}\tfrr\t{frr:.6f}\tcer\t{cer(pred, trials.labels):.6f}")
    return EXIT_OK


# -- parser --------------------------------------------------------------------


def build_parser() -> _Parser:
    p = _Parser(prog="ultravoice", description="Ultrasound-aware speaker verification and liveness toolkit.",
                epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--config", help=f"key=value defaults file (default ./{CONFIG_NAME} if present)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for per-file work (output order is kept)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="write a synthetic corpus and manifest")
    s.add_argument("--speakers", type=int, default=8)
    s.add_argument("--utt", type=int, default=10)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--duration", type=float, default=2.0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("preprocess", help="silence removal, optional downsampling")
    s.add_argument("input")
    s.add_argument("output")
    s.add_argument("--downsample", type=int, default=None, metavar="RATE")
    s.add_argument("--encoding", choices=("float32", "pcm16"), default="float32")
    s.set_defaults(func=cmd_preprocess)

    s = sub.add_parser("spectrogram", help="export a dB spectrogram")
    s.add_argument("input")
    s.add_argument("output")
    s.add_argument("--preliminary", action="store_true", help="10 ms window / 2 ms hop preset")
    s.add_argument("--band", type=float, nargs=2, metavar=("LO", "HI"))
    s.add_argument("--keep-silence", action="store_true")
    s.set_defaults(func=cmd_spectrogram)

    s = sub.add_parser("liveness", help="liveness verdict per file: r1 r2 verdict path")
    s.add_argument("files", nargs="*")
    s.add_argument("--manifest")
    s.set_defaults(func=cmd_liveness)

    s = sub.add_parser("train", help="train the embedding model on a manifest's genuine utterances")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--epochs", type=int, default=10)
    s.add_argument("--batch", type=int, default=128)
    s.add_argument("--lr", type=float, default=0.001)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--windows-per-utt", type=int, default=4)
    s.add_argument("--max-utts", type=int, default=None, help="cap utterances per speaker")
    s.set_defaults(func=cmd_train)

    for name, fn, hlp in (("enroll", cmd_enroll, "add utterances to an enrollment store"),
                          ("verify", cmd_verify, "accept/reject each file against an enrolled speaker")):
        s = sub.add_parser(name, help=hlp)
        s.add_argument("files", nargs="*")
        s.add_argument("--manifest")
        s.add_argument("--model", required=True)
        s.add_argument("--store", required=True)
        s.add_argument("--speaker")
        s.add_argument("--max-windows", type=int, default=None, help="evenly spaced windows per utterance")
        if name == "verify":
            s.add_argument("--gamma", type=float, default=None, help="similarity threshold (required)")
        s.set_defaults(func=fn)

    s = sub.add_parser("eval", help="EER/FAR/FRR/CER and DET points for a trial set")
    s.add_argument("--scores", help="TSV of score<TAB>label (label genuine/1 or impostor/0)")
    s.add_argument("--manifest")
    s.add_argument("--mode", choices=("sv", "liveness"), default="sv")
    s.add_argument("--model")
    s.add_argument("--store")
    s.add_argument("--max-windows", type=int, default=None)
    s.add_argument("--gamma", type=float, default=None, help="operating threshold (default: the EER threshold)")
    s.set_defaults(func=cmd_eval)
    return p


def _subparser(parser, name):
    for a in parser._actions:
        if isinstance(a, argparse._SubParsersAction):
            return a.choices.get(name)
    return None


def main(argv=None, environ=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    environ = os.environ if environ is None else environ
    try:
        parser = build_parser()
        first = argparse.ArgumentParser(add_help=False)
        first.add_argument("--config")
        known, _ = first.parse_known_args(argv)
        command = next((a for a in argv if not a.startswith("-") and _subparser(parser, a)), None)
        sub = _subparser(parser, command) if command else None
        if sub is not None:
            cfg_path = known.config or (CONFIG_NAME if os.path.exists(CONFIG_NAME) else None)
            if cfg_path:
                _apply_defaults(parser, sub, read_config(cfg_path), cfg_path)
            _apply_defaults(parser, sub, _env_overrides(environ), "environment")
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
        if args.jobs < 1:
            raise UsageError("--jobs must be >= 1")
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_ERROR
    except Exception as exc:  # runtime errors map to exit 1
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
