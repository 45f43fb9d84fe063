"""Command-line entry point: ``casanet {synth,train,infer,refine,score}``.

Exit codes: 0 success, 1 internal error, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

from . import config as run_config
from .corpus import load_config, load_corpus, save_corpus, split_map
from .fusion import CasaModel, CheckpointError
from .io import FaebError, RttmError, read_rttm, save_rttm
from .pipeline import fit_vvad, train_system, vvad_embeddings
from .refine import refine_loop
from .scoring import format_report, score_corpus
from .synth import corrupt_log, generate
from .tensor import make_rng
from .train import infer_session, vvad_timeline

log = logging.getLogger("casanet")


class UsageError(Exception):
    pass


def _corpus_config(args) -> run_config.RunConfig:
    if getattr(args, "config", None):
        return run_config.load(args.config)
    path = Path(args.corpus) / "config.json"
    if not path.exists():
        raise UsageError(f"{args.corpus}: not a corpus directory (no config.json)")
    return run_config.from_dict(load_config(args.corpus))


def _require(path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"{what} not found: {p}")
    return p


def cmd_synth(args) -> int:
    cfg = run_config.load(args.config)
    sessions = generate(cfg.synth)
    save_corpus(args.out, sessions, split_map(sessions, cfg.split), cfg.to_dict())
    print(f"wrote {len(sessions)} sessions to {args.out}")
    return 0


def cmd_train(args) -> int:
    _require(args.corpus, "corpus directory")
    cfg = _corpus_config(args)
    train_cfg = cfg.train
    if args.no_mixup:
        train_cfg = replace(train_cfg, mixup=False)
    if args.epochs is not None:
        train_cfg = replace(train_cfg, epochs=args.epochs)
    model_cfg = replace(cfg.model, fusion=args.fusion) if args.fusion else cfg.model
    sessions = load_corpus(args.corpus, "train")
    if not sessions:
        raise UsageError(f"{args.corpus}: no training sessions")
    model, hist = train_system(
        sessions, model_cfg, train_cfg, cfg.postproc.median_window, cfg.postproc.threshold
    )
    model.save(args.out)
    history = {
        "fusion": model.config.fusion,
        "mixup": train_cfg.mixup,
        "vvad_loss": hist.vvad,
        "casa_loss": hist.casa,
    }
    Path(str(args.out) + ".history.json").write_text(json.dumps(history, indent=2) + "\n")
    print(f"trained {model.config.fusion} model on {len(sessions)} sessions -> {args.out}")
    return 0


def cmd_infer(args) -> int:
    model_path = _require(args.model, "model file")
    _require(args.corpus, "corpus directory")
    try:
        model = CasaModel.load(model_path)
    except CheckpointError as exc:
        raise UsageError(f"{model_path}: {exc}") from exc
    cfg = _corpus_config(args)
    window = args.median_window if args.median_window is not None else cfg.postproc.median_window
    threshold = args.threshold if args.threshold is not None else cfg.postproc.threshold
    if window < 1 or window % 2 == 0:
        raise UsageError(f"--median-window must be odd and >= 1, got {window}")
    if not 0.0 < threshold < 1.0:
        raise UsageError(f"--threshold must lie in (0, 1), got {threshold}")
    sessions = load_corpus(args.corpus, args.split)

    def run(session):
        spk = vvad_embeddings(model, session, window, threshold)
        return infer_session(model, session, spk, cfg.train, window, threshold)

    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        timelines = list(pool.map(run, sessions))
    save_rttm(args.out, timelines)
    print(f"wrote {len(timelines)} hypotheses to {args.out}")
    return 0


def cmd_refine(args) -> int:
    _require(args.corpus, "corpus directory")
    cfg = _corpus_config(args)
    rounds = args.rounds if args.rounds is not None else cfg.refine.rounds
    refine_cfg = replace(cfg.refine, rounds=rounds)
    if args.epochs is not None:
        refine_cfg = replace(refine_cfg, epochs=args.epochs)
    train = load_corpus(args.corpus, "train")
    dev = load_corpus(args.corpus, "dev")
    if args.model:
        model = CasaModel.load(_require(args.model, "model file"))
    else:
        model = CasaModel(cfg.model, seed=cfg.train.seed)
        fit_vvad(model, train, cfg.train)
    rng = make_rng(cfg.seed + 7)
    round0 = {}
    for s in train + dev:
        tl = vvad_timeline(model, s, refine_cfg.median_window, refine_cfg.threshold)
        if args.corrupt > 0:
            tl = corrupt_log(tl, args.corrupt, rng, s.frames, s.speakers, s.frame_rate)
        round0[s.file_id] = tl
    out = Path(args.out)
    model, history = refine_loop(model, train, dev, round0, refine_cfg, cfg.train, out, rng)
    model.save(out / "model.casa")
    for entry in history:
        if "DER" in entry:
            print(f"round {entry['round']}: dev DER {100 * entry['DER']:.2f}%")
    return 0


def cmd_score(args) -> int:
    refs = read_rttm(_require(args.ref, "reference RTTM"))
    hyps = read_rttm(_require(args.hyp, "hypothesis RTTM"))
    if args.collar < 0:
        raise UsageError(f"--collar must be >= 0, got {args.collar}")
    extra = sorted(set(hyps) - set(refs))
    if extra:
        log.warning("ignoring %d hypothesis files without a reference: %s", len(extra), ", ".join(extra))
    per_file, total = score_corpus(refs, hyps, args.collar)
    sys.stdout.write(format_report(per_file, total))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="casanet", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic corpus directory")
    s.add_argument("--config", help="JSON run configuration (defaults if omitted)")
    s.add_argument("--out", required=True, help="output corpus directory")
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train", help="train V-VAD, freeze it, then train the fusion model")
    t.add_argument("--corpus", required=True)
    t.add_argument("--out", required=True, help="checkpoint path, e.g. model.casa")
    t.add_argument("--config", help="override the corpus's config.json")
    t.add_argument("--no-mixup", action="store_true")
    t.add_argument("--fusion", choices=["casa", "concat"])
    t.add_argument("--epochs", type=int)
    t.set_defaults(func=cmd_train)

    i = sub.add_parser("infer", help="block inference, overlap averaging, smoothing -> RTTM")
    i.add_argument("--model", required=True)
    i.add_argument("--corpus", required=True)
    i.add_argument("--out", required=True)
    i.add_argument("--config", help="override the corpus's config.json")
    i.add_argument("--median-window", type=int)
    i.add_argument("--threshold", type=float)
    i.add_argument("--split", choices=["train", "dev", "all"], default="dev")
    i.add_argument("--jobs", type=int, default=1)
    i.set_defaults(func=cmd_infer)

    r = sub.add_parser("refine", help="pseudo-label refinement rounds")
    r.add_argument("--corpus", required=True)
    r.add_argument("--rounds", type=int)
    r.add_argument("--out", required=True, help="run directory")
    r.add_argument("--config", help="override the corpus's config.json")
    r.add_argument("--model", help="start from this checkpoint instead of training a V-VAD")
    r.add_argument("--corrupt", type=float, default=0.0, help="fraction of round-0 log cells to flip")
    r.add_argument("--epochs", type=int, help="training epochs per round")
    r.set_defaults(func=cmd_refine)

    c = sub.add_parser("score", help="diarization error rate of a hypothesis RTTM")
    c.add_argument("--ref", required=True)
    c.add_argument("--hyp", required=True)
    c.add_argument("--collar", type=float, default=0.0)
    c.set_defaults(func=cmd_score)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except run_config.ConfigError as exc:
        print(f"casanet {args.command}: config error: {exc}", file=sys.stderr)
        return 2
    except (UsageError, RttmError, FaebError) as exc:
        print(f"casanet {args.command}: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"casanet {args.command}: internal error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
