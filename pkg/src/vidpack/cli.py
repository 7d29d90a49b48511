"""Command-line entry point.

Exit codes: 0 ok, 1 gradient check above threshold, 2 infeasible budget or
budget overflow, 64 usage error, 65 bad input data, 66 missing/unreadable
input, 69 judge unavailable for every item.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, toktext
from .assembler import (
    BudgetExceededError,
    InstructionSet,
    assemble,
    sample_instruction,
    sequence_manifest,
    write_embeddings,
)
from .budget import (
    PRESETS,
    BudgetError,
    InfeasibleBudgetError,
    plan_budget,
    preset_plan,
    sample_frame_indices,
)
from .evalharness import (
    HttpJudge,
    JudgeConfigError,
    JudgeParseError,
    StubJudge,
    compute_report,
    judge_items,
    load_qa_dataset,
    parse_judge_response,
    score_mcq,
)
from .evalharness.dataset import DatasetError
from .lora import (
    PAPER_ALPHA,
    PAPER_RANK,
    ToyAttention,
    attention_forward,
    gradient_check_lora,
    lora_forward,
    merge_lora,
    softmax,
)
from .numerics import SquaredError
from .subtitles import (
    SubtitleParseError,
    align_cues_to_frames,
    enforce_subtitle_budget,
    parse_subtitles,
)
from .vision import (
    FRAME_SUFFIXES,
    Projector,
    ShapeError,
    frame_to_llm_tokens,
    gradient_check_projector,
    read_frame_file,
)

EX_OK, EX_CHECK, EX_BUDGET = 0, 1, 2
EX_USAGE, EX_DATAERR, EX_NOINPUT, EX_UNAVAILABLE = 64, 65, 66, 69



class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EX_USAGE, f"{self.prog}: error: {message}\n")


def _emit(obj, out: str | None = None) -> None:
    text = json.dumps(obj, indent=2, ensure_ascii=False)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    else:
        sys.stdout.write(text + "\n")


def _read_text(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8-sig")
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}", EX_NOINPUT) from None


# -- plan-budget / sample-frames ----------------------------------------------

def _resolve_plan(args):
    overrides = {
        "context_window": args.context,
        "tokens_per_frame": args.tpf,
        "subtitle_budget": args.sub,
        "output_reserve": args.reserve,
    }
    given = {k: v for k, v in overrides.items() if v is not None}
    if args.preset is None and "context_window" not in given:
        raise CliError("give --preset or --context", EX_USAGE)
    if given:
        # preset fields (or the llama2 split) fill whatever was not overridden
        merged = preset_plan(args.preset or "llama2").to_dict()
        merged.update(given)
        plan = plan_budget(merged["context_window"], merged["tokens_per_frame"],
                           merged["subtitle_budget"], merged["output_reserve"])
    else:
        plan = preset_plan(args.preset)
    if args.max_frames is not None:
        plan = replace(plan, max_frames=args.max_frames)
    return plan


def cmd_plan_budget(args) -> int:
    try:
        plan = _resolve_plan(args)
    except InfeasibleBudgetError as exc:
        raise CliError(str(exc), EX_BUDGET) from None
    except BudgetError as exc:
        raise CliError(str(exc), EX_USAGE) from None
    _emit(plan.to_dict())
    return EX_OK


def cmd_sample_frames(args) -> int:
    max_frames = args.max_frames or preset_plan(args.preset).max_frames
    if args.total < 1 or max_frames < 1:
        raise CliError("--total and --max-frames must be >= 1", EX_USAGE)
    _emit(sample_frame_indices(args.total, max_frames, args.frame_interval_ms).to_dict())
    return EX_OK


# -- parse-subs / pack --------------------------------------------------------

def _subs_format(path: str, fmt: str | None) -> str:
    if fmt:
        return fmt
    suffix = Path(path).suffix.lower()
    if suffix in (".srt", ".vtt"):
        return suffix[1:]
    raise CliError(f"cannot infer subtitle format of {path}; pass --format", EX_USAGE)


def _load_cues(path: str, fmt: str | None):
    try:
        return parse_subtitles(_read_text(path), _subs_format(path, fmt))
    except SubtitleParseError as exc:
        raise CliError(f"{path}: {exc}", EX_DATAERR) from None


def cmd_parse_subs(args) -> int:
    _emit([c.to_dict() for c in _load_cues(args.file, args.format)])
    return EX_OK


def _frame_files(directory: str) -> list[Path]:
    d = Path(directory)
    if not d.is_dir():
        raise CliError(f"frames directory {directory} does not exist", EX_NOINPUT)
    return sorted(p for p in d.iterdir() if p.suffix in FRAME_SUFFIXES)


def cmd_pack(args) -> int:
    plan = preset_plan(args.preset)
    files = _frame_files(args.frames)
    instruction = args.instruction
    if instruction is None:
        instruction = sample_instruction(InstructionSet(rng_seed=args.seed), args.draw)

    frames = []
    timestamps: list[int] = []
    if files:
        sample = sample_frame_indices(len(files), plan.max_frames, args.frame_interval_ms)
        projector = Projector.init(args.d_vis, args.d_llm, seed=args.seed)
        for idx, ts in zip(sample.indices, sample.timestamps_ms):
            try:
                frame = read_frame_file(files[idx], ts)
            except OSError as exc:
                raise CliError(f"cannot read {files[idx]}: {exc}", EX_NOINPUT) from None
            except (ShapeError, ValueError) as exc:
                raise CliError(f"{files[idx]}: {exc}", EX_DATAERR) from None
            frames.append(frame_to_llm_tokens(frame, projector, args.encoder_seed))
            timestamps.append(ts)

    subs = [""] * len(frames)
    if args.subs:
        cues = _load_cues(args.subs, args.subs_format)
        subs = enforce_subtitle_budget(
            align_cues_to_frames(cues, timestamps), toktext.count_tokens, plan.subtitle_budget
        )
    try:
        seq = assemble(frames, subs, instruction, plan)
    except BudgetExceededError as exc:
        raise CliError(str(exc), EX_BUDGET) from None
    manifest = sequence_manifest(seq)
    manifest["frame_files"] = [files[i].name for i in sample.indices] if files else []
    manifest["frame_timestamps_ms"] = timestamps
    manifest["instruction"] = instruction
    if args.embeddings:
        write_embeddings(seq, args.embeddings)
    _emit(manifest, args.out)
    return EX_OK


# -- gradcheck / lora-demo ----------------------------------------------------

def gradcheck_projector_seeds(seeds: int, epsilon: float, d_vis: int = 3, d_llm: int = 5) -> float:
    worst = 0.0
    for seed in range(seeds):
        rng = np.random.default_rng(seed)
        p = Projector.init(d_vis, d_llm, seed=seed)
        p.b[:] = rng.normal(size=d_llm)
        x = rng.normal(size=(64, 4 * d_vis))
        target = rng.normal(size=(64, d_llm))
        worst = max(worst, gradient_check_projector(p, x, SquaredError(target), epsilon))
    return worst


def gradcheck_lora_seeds(seeds: int, epsilon: float, d_model: int = 4, r: int = 2,
                         seq_len: int = 3) -> tuple[float, bool]:
    worst, frozen_ok = 0.0, True
    for seed in range(seeds):
        rng = np.random.default_rng(seed)
        att = ToyAttention.init(d_model, r=r, alpha=2.0 * r, seed=seed)
        # B starts at zero; give it mass so the A gradients are non-trivial
        att.adapter_q.B[:] = rng.normal(0.0, 0.5, size=att.adapter_q.B.shape)
        att.adapter_v.B[:] = rng.normal(0.0, 0.5, size=att.adapter_v.B.shape)
        x = rng.normal(size=(seq_len, d_model))
        target = rng.normal(size=(seq_len, d_model))
        rep = gradient_check_lora(att, x, SquaredError(target), epsilon)
        worst = max(worst, rep.max_adapter_grad_error)
        frozen_ok &= rep.base_grads_all_zero
    return worst, frozen_ok


def cmd_gradcheck(args) -> int:
    result: dict = {"seeds": args.seeds, "epsilon": args.epsilon, "threshold": args.threshold}
    errors = []
    if args.target in ("projector", "all"):
        result["projector_max_rel_error"] = gradcheck_projector_seeds(args.seeds, args.epsilon)
        errors.append(result["projector_max_rel_error"])
    if args.target in ("lora", "all"):
        err, frozen = gradcheck_lora_seeds(args.seeds, args.epsilon)
        result["lora_max_rel_error"] = err
        result["base_grads_all_zero"] = frozen
        errors.append(err)
    result["max_rel_error"] = max(errors)
    _emit(result)
    return EX_OK if result["max_rel_error"] <= args.threshold else EX_CHECK


def lora_demo(d_model: int = 128, rank: int = PAPER_RANK, alpha: float = PAPER_ALPHA,
              seed: int = 0, n_inputs: int = 100) -> dict:
    att = ToyAttention.init(d_model, r=rank, alpha=alpha, seed=seed)
    rng = np.random.default_rng(seed + 1)
    x = rng.normal(size=(n_inputs, d_model))
    zero_init_noop = bool(np.array_equal(
        attention_forward(att, x), _plain_attention(att, x)))
    residual = 0.0
    for ad, W in ((att.adapter_q, att.W_q), (att.adapter_v, att.W_v)):
        ad.B[:] = rng.normal(0.0, 0.02, size=ad.B.shape)
        merged = merge_lora(ad, W)
        a = lora_forward(ad, W, x)
        b = x @ merged.T
        residual = max(residual, float(np.linalg.norm(a - b) / np.linalg.norm(b)))
    frozen = sum(w.size for w in att.frozen_parameters().values())
    return {
        "d_model": d_model,
        "rank": rank,
        "alpha": alpha,
        "scaling": att.adapter_q.scaling,
        "trainable_parameters": att.num_trainable(),
        "expected_trainable": 2 * (rank * d_model + d_model * rank),
        "frozen_parameters": frozen,
        "trainable_fraction": att.num_trainable() / (att.num_trainable() + frozen),
        "zero_init_noop": zero_init_noop,
        "merge_relative_residual": residual,
    }


def _plain_attention(att: ToyAttention, x: np.ndarray) -> np.ndarray:
    q, k, v = x @ att.W_q.T, x @ att.W_k.T, x @ att.W_v.T
    return softmax(q @ k.T / np.sqrt(att.d_model)) @ v @ att.W_o.T


def cmd_lora_demo(args) -> int:
    _emit(lora_demo(args.d_model, args.rank, args.alpha, args.seed, args.inputs))
    return EX_OK


# -- judge-parse / eval -------------------------------------------------------

def cmd_judge_parse(args) -> int:
    text = args.text if args.text is not None else sys.stdin.read()
    try:
        j = parse_judge_response(text)
    except JudgeParseError as exc:
        _emit({"error": type(exc).__name__, "message": str(exc)})
        return EX_DATAERR
    _emit(j.to_dict())
    return EX_OK


def _make_judge(spec: str):
    if spec.startswith("stub:"):
        path = spec[len("stub:"):]
        try:
            return StubJudge.from_file(path)
        except OSError as exc:
            raise CliError(f"cannot read stub script {path}: {exc}", EX_NOINPUT) from None
        except json.JSONDecodeError as exc:
            raise CliError(f"stub script {path}: {exc}", EX_DATAERR) from None
    if spec == "http":
        try:
            return HttpJudge.from_env()
        except JudgeConfigError as exc:
            raise CliError(str(exc), EX_USAGE) from None
    raise CliError(f"--judge must be 'stub:<path>' or 'http', got {spec!r}", EX_USAGE)


def cmd_eval(args) -> int:
    if args.parallelism < 1:
        raise CliError("--parallelism must be >= 1", EX_USAGE)
    try:
        items = load_qa_dataset(args.dataset)
    except OSError as exc:
        raise CliError(f"cannot read {args.dataset}: {exc}", EX_NOINPUT) from None
    except DatasetError as exc:
        raise CliError(f"{args.dataset}: {exc}", EX_DATAERR) from None
    kinds = {it.is_mcq for it in items}
    if len(kinds) > 1:
        raise CliError(f"{args.dataset}: mixes multiple-choice and open-ended items", EX_DATAERR)
    if items and items[0].is_mcq:
        report = score_mcq(items)
        _emit(report.to_dict(), args.out)
        return EX_OK
    judge = _make_judge(args.judge)
    results = judge_items(items, judge, args.parallelism)
    report = compute_report(results)
    _emit(report.to_dict(), args.out)
    if results and all(r.error_kind == "transport" for r in results):
        print(f"vidpack: judge unreachable for all {len(results)} items", file=sys.stderr)
        return EX_UNAVAILABLE
    return EX_OK


# -- wiring ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="vidpack", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    presets = sorted(PRESETS)

    p = sub.add_parser("plan-budget", help="split a context window into frame/subtitle/output tokens")
    p.add_argument("--preset", choices=presets)
    p.add_argument("--context", type=int, help="context window size")
    p.add_argument("--tpf", type=int, help="tokens per frame")
    p.add_argument("--sub", type=int, help="subtitle token budget")
    p.add_argument("--out", dest="reserve", type=int, help="tokens reserved for output")
    p.add_argument("--max-frames", type=int, help="override the frame count (re-validated)")
    p.set_defaults(func=cmd_plan_budget)

    p = sub.add_parser("sample-frames", help="pick frame indices for a video")
    p.add_argument("--total", type=int, required=True)
    p.add_argument("--max-frames", type=int)
    p.add_argument("--preset", choices=presets, default="llama2")
    p.add_argument("--frame-interval-ms", type=float, default=None)
    p.set_defaults(func=cmd_sample_frames)

    p = sub.add_parser("parse-subs", help="parse an SRT or WebVTT file to JSON cues")
    p.add_argument("--format", choices=("srt", "vtt"))
    p.add_argument("file")
    p.set_defaults(func=cmd_parse_subs)

    p = sub.add_parser("pack", help="assemble the interleaved input sequence for a video")
    p.add_argument("--frames", required=True, help="directory of .frame/.rgb/.npy files")
    p.add_argument("--subs", help="subtitle file")
    p.add_argument("--subs-format", choices=("srt", "vtt"))
    p.add_argument("--preset", choices=presets, default="llama2")
    p.add_argument("--instruction", help="instruction text; sampled from the default set if absent")
    p.add_argument("--seed", type=int, default=0, help="seeds projector init and instruction draw")
    p.add_argument("--draw", type=int, default=0, help="instruction draw index")
    p.add_argument("--encoder-seed", type=int, default=0)
    p.add_argument("--d-vis", type=int, default=16)
    p.add_argument("--d-llm", type=int, default=32)
    p.add_argument("--frame-interval-ms", type=float, default=2000.0,
                   help="spacing of the extracted frames (default 0.5 fps)")
    p.add_argument("--out", help="manifest path (stdout if absent)")
    p.add_argument("--embeddings", help="optional float32 sidecar with all visual spans")
    p.set_defaults(func=cmd_pack)

    p = sub.add_parser("gradcheck", help="finite-difference check of projector and LoRA gradients")
    p.add_argument("--target", choices=("projector", "lora", "all"), default="all")
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--epsilon", type=float, default=1e-6)
    p.add_argument("--threshold", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("lora-demo", help="parameter census and merge residual for a LoRA layer")
    p.add_argument("--d-model", type=int, default=128)
    p.add_argument("--rank", type=int, default=PAPER_RANK)
    p.add_argument("--alpha", type=float, default=PAPER_ALPHA)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--inputs", type=int, default=100)
    p.set_defaults(func=cmd_lora_demo)

    p = sub.add_parser("judge-parse", help="parse one judge reply")
    p.add_argument("text", nargs="?", help="reply text (stdin if absent)")
    p.set_defaults(func=cmd_judge_parse)

    p = sub.add_parser("eval", help="judge a QA dataset and report accuracy and score")
    p.add_argument("--dataset", required=True)
    p.add_argument("--judge", default="http", help="'stub:<script.json>' or 'http'")
    p.add_argument("--parallelism", type=int, default=4)
    p.add_argument("--out", help="report path (stdout if absent)")
    p.set_defaults(func=cmd_eval)
    return ap


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # --help, --version and usage errors
        return exc.code
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except CliError as exc:
        print(f"vidpack: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
