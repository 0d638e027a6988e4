"""Command-line entry point: ``worldcup <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import secrets
import sys
from pathlib import Path

from .attacks import ATTACK_KINDS, AttackSpec, apply_attack
from .core import ConfigError, TokenSequence, WatermarkConfig, as_bits, symbols_to_bits
from .decoder import decode_confidence, decode_counting, detect, score_positions
from .embedder import embed_sequence, generate_plain, sample_prompt
from .harness import (
    SEQUENCE_SCHEMA,
    ExperimentConfig,
    LMSpec,
    calibrate_null,
    random_bits,
    run_benchmark,
    sequence_record,
    sweep_ablations,
)
from .keying import MASK64, fold_seed

KEY_SCHEMA = "worldcup.key/v1"

# flag name -> WatermarkConfig field
_WM_FLAGS = {
    "key": "key", "window": "window_c", "layers": "layers_m", "leaves": "leaves_N",
    "groups": "groups_k", "alpha": "alpha", "activation": "activation",
    "bits": "message_bits_b", "mode": "gvalue_mode",
}


def _parse_key(text: str) -> int:
    key = int(text, 0)
    if not 0 <= key <= MASK64:
        raise argparse.ArgumentTypeError("key must fit in 64 bits")
    return key


def _load_experiment(path) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    data = json.loads(Path(path).read_text())
    if "watermark" in data or data.get("schema") == "worldcup.experiment/v1":
        return ExperimentConfig.from_dict(data)
    # a bare watermark config
    return ExperimentConfig(watermark=WatermarkConfig.from_dict(data))


def _experiment(args) -> ExperimentConfig:
    exp = _load_experiment(args.config)
    wm_changes = {field: getattr(args, flag) for flag, field in _WM_FLAGS.items()
                  if getattr(args, flag, None) is not None}
    if getattr(args, "key_file", None):
        wm_changes["key"] = int(json.loads(Path(args.key_file).read_text())["key"], 16)
    lm_changes = {name: getattr(args, name) for name in
                  ("vocab_size", "concentration", "model_seed", "temperature")
                  if getattr(args, name, None) is not None}
    if getattr(args, "uniform", False):
        lm_changes["uniform"] = True
    exp_changes = {}
    for name in ("sequences_per_cell", "workers", "seed"):
        if getattr(args, name, None) is not None:
            exp_changes[name] = getattr(args, name)
    wm = exp.watermark.replace(**wm_changes)
    lm = LMSpec(**{**exp.lm.__dict__, **lm_changes})
    return ExperimentConfig.from_dict({**exp.to_dict(), "watermark": wm.to_dict(),
                                       "lm": lm.__dict__, **exp_changes})


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="experiment or watermark config (JSON)")
    p.add_argument("--key-file", help="key file written by 'keygen'")
    g = p.add_argument_group("watermark overrides")
    g.add_argument("--key", type=_parse_key)
    g.add_argument("--window", type=int)
    g.add_argument("--layers", type=int)
    g.add_argument("--leaves", type=int)
    g.add_argument("--groups", type=int)
    g.add_argument("--alpha", type=float)
    g.add_argument("--activation", choices=("tanh", "sigmoid", "relu"))
    g.add_argument("--bits", type=int, help="message length b")
    g.add_argument("--mode", choices=("distortionary", "non_distortionary"))
    m = p.add_argument_group("toy LM overrides")
    m.add_argument("--vocab-size", type=int)
    m.add_argument("--concentration", type=float)
    m.add_argument("--model-seed", type=int)
    m.add_argument("--temperature", type=float)
    m.add_argument("--uniform", action="store_true", help="exactly uniform rows")


def _read_sequences(path):
    fh = sys.stdin if path == "-" else open(path)
    try:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            rec = json.loads(line)
            if rec.get("schema") != SEQUENCE_SCHEMA:
                raise ValueError(f"{path}:{line_no}: expected schema {SEQUENCE_SCHEMA}")
            yield rec
    finally:
        if fh is not sys.stdin:
            fh.close()


def _write_lines(path, lines) -> None:
    text = "".join(line + "\n" for line in lines)
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _text(rec) -> TokenSequence:
    return TokenSequence(tuple(rec["tokens"]), rec["prompt_len"])


def _warn_digest(rec, wm: WatermarkConfig) -> None:
    if rec.get("cfg_digest") not in (None, wm.digest()):
        print(f"warning: sequence was written under config {rec['cfg_digest']}, "
              f"decoding with {wm.digest()}", file=sys.stderr)


def cmd_keygen(args) -> int:
    key = fold_seed(args.seed) if args.seed is not None else secrets.randbits(64)
    _write_lines(args.out, [json.dumps({"schema": KEY_SCHEMA, "key": f"{key:016x}"})])
    return 0


def cmd_embed(args) -> int:
    exp = _experiment(args)
    wm = exp.watermark
    lm = exp.lm.build()
    lines = []
    for i in range(args.count):
        rng_seed = fold_seed(args.rng_seed, i)
        if args.message:
            msg = as_bits(args.message)
        else:
            msg = random_bits(wm.message_bits_b, fold_seed(rng_seed, 3))
        prompt_seed = fold_seed(rng_seed, 1)
        prompt = sample_prompt(lm, exp.prompt_len, prompt_seed)
        seeds = {"prompt": prompt_seed, "sampling": fold_seed(rng_seed, 2)}
        if args.plain:
            text = generate_plain(lm, prompt, args.length, seeds["sampling"], exp.no_repeat_ngram)
            lines.append(json.dumps(sequence_record(text, False, None, wm, seeds)))
        else:
            text, _ = embed_sequence(lm, prompt, msg, wm, seeds["sampling"], args.length,
                                     exp.no_repeat_ngram)
            lines.append(json.dumps(sequence_record(text, True, msg, wm, seeds)))
    _write_lines(args.out, lines)
    return 0


def cmd_decode(args) -> int:
    wm = _experiment(args).watermark
    lines = []
    for rec in _read_sequences(args.input):
        _warn_digest(rec, wm)
        text = _text(rec)
        scores = score_positions(text, wm)
        if args.counting:
            msg = decode_counting(text, wm, scores)
        else:
            msg = decode_confidence(scores)
        lines.append("".join(map(str, symbols_to_bits(msg))))
    _write_lines(args.out, lines)
    return 0


def cmd_detect(args) -> int:
    wm = _experiment(args).watermark
    lines = []
    for rec in _read_sequences(args.input):
        _warn_digest(rec, wm)
        lines.append(detect(_text(rec), wm).to_json())
    _write_lines(args.out, lines)
    return 0


def cmd_attack(args) -> int:
    exp = _experiment(args)
    lm = exp.lm.build()
    spec = AttackSpec(args.kind, args.ratio, args.segments, args.attack_seed)
    lines = []
    for i, rec in enumerate(_read_sequences(args.input)):
        text = _text(rec)
        filler = None
        if spec.kind == "copy_paste":
            prompt = TokenSequence(text.tokens[:text.prompt_len], text.prompt_len)
            need = len(text.generated) + 1
            filler = generate_plain(lm, prompt, need, fold_seed(args.attack_seed, i, 4))
        per_seq = AttackSpec(spec.kind, spec.ratio, spec.segments, fold_seed(args.attack_seed, i))
        out = apply_attack(text, per_seq, exp.lm.vocab_size, filler)
        rec = dict(rec, tokens=list(out.tokens), attack=spec.label)
        lines.append(json.dumps(rec))
    _write_lines(args.out, lines)
    return 0


def cmd_bench(args) -> int:
    exp = _experiment(args)
    rows = run_benchmark(exp, args.out or exp.output_dir)
    print(f"wrote {len(rows)} metric rows to {args.out or exp.output_dir}")
    return 0


def cmd_calibrate(args) -> int:
    exp = _experiment(args)
    report = calibrate_null(exp, args.n, args.length)
    _write_lines(args.out, [json.dumps(report.to_dict(), sort_keys=True)])
    return 0 if all(report.passed.values()) else 1


def cmd_ablate(args) -> int:
    exp = _experiment(args)
    if args.variants:
        exp = ExperimentConfig.from_dict({**exp.to_dict(), "ablations": args.variants})
    rows = sweep_ablations(exp, args.out or exp.output_dir)
    print(f"wrote {len(rows)} ablation rows to {args.out or exp.output_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="worldcup", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("keygen", help="write a fresh 64-bit key")
    p.add_argument("--seed", type=int, help="derive the key deterministically")
    p.add_argument("--out")
    p.set_defaults(func=cmd_keygen)

    p = sub.add_parser("embed", help="generate watermarked (or plain) toy-LM sequences")
    _add_common(p)
    p.add_argument("--message", help="bit string; random per sequence if omitted")
    p.add_argument("--length", type=int, default=256)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--rng-seed", type=int, default=0)
    p.add_argument("--plain", action="store_true", help="skip the watermark")
    p.add_argument("--out")
    p.set_defaults(func=cmd_embed)

    for name, func, help_ in (("decode", cmd_decode, "recover messages as bit strings"),
                              ("detect", cmd_detect, "full detection report per sequence")):
        p = sub.add_parser(name, help=help_)
        _add_common(p)
        p.add_argument("input", help="sequence JSONL ('-' for stdin)")
        p.add_argument("--out")
        if name == "decode":
            p.add_argument("--counting", action="store_true", help="use the counting decoder")
        p.set_defaults(func=func)

    p = sub.add_parser("attack", help="edit sequences before detection")
    _add_common(p)
    p.add_argument("input")
    p.add_argument("--kind", choices=ATTACK_KINDS[1:], required=True)
    p.add_argument("--ratio", type=float, required=True)
    p.add_argument("--segments", type=int, default=3)
    p.add_argument("--attack-seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("bench", help="run the benchmark sweep")
    _add_common(p)
    p.add_argument("--sequences-per-cell", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("calibrate", help="null calibration of the z statistics")
    _add_common(p)
    p.add_argument("-n", type=int, default=1000)
    p.add_argument("--length", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("ablate", help="run ablation variants")
    _add_common(p)
    p.add_argument("--variants", nargs="+", help="subset of variant names")
    p.add_argument("--sequences-per-cell", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
