"""Command-line interface.

Every subcommand maps onto one library operation. Failures print
``error[<category>]: message`` on stderr and exit with a category code
(see EXIT_CODES); argparse usage problems exit with 2 as usual.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from .codec import pack_chunk, plan_frames, unpack_chunk
from .errors import (
    BlendcastError,
    DivergenceError,
    EmptyStreamError,
    InsufficientBudgetError,
    PacketError,
    TraceError,
    WindowUnderfullError,
)
from .harness import ExperimentConfig, config_to_toml, frames_report, load_config, sweep
from .pipeline import Scheme, run_stream
from .predictor import PredictorModel, train
from .render_metrics import make_basis, render, save_png
from .selector import classify, report_to_csv
from .trace import SynthSpec, chunk_iter, load_trace, save_trace, synth_trace

EXIT_CODES = [
    (TraceError, 3),
    (InsufficientBudgetError, 4),
    (PacketError, 5),
    (WindowUnderfullError, 6),
    (DivergenceError, 7),
    (EmptyStreamError, 8),
    (BlendcastError, 9),
]


def _exit_code(exc: BlendcastError) -> int:
    for cls, code in EXIT_CODES:
        if isinstance(exc, cls):
            return code
    return 9


def _load_or_default_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    overrides = {}
    for arg_name, field in [
        ("latency_ms", "latency_ms"),
        ("q_bits", "q_bits"),
        ("delta", "delta"),
        ("window", "window"),
        ("chunk_frames", "chunk_frames"),
        ("out", "out_dir"),
    ]:
        value = getattr(args, arg_name, None)
        if value is not None:
            overrides[field] = value
    if getattr(args, "rates", None):
        overrides["rates"] = tuple(int(r) for r in args.rates.split(","))
    if getattr(args, "upper_bound_exact", False):
        overrides["upper_bound_exact"] = True
    if getattr(args, "trace", None):
        overrides["trace_path"] = args.trace
    return dataclasses.replace(cfg, **overrides) if overrides else cfg


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML experiment config")
    p.add_argument("--seed", type=int, default=None, help="seed override")
    p.add_argument("--out", default=None, help="output file or directory")


def _add_codec_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--rate", type=int, default=None, help="bits available per chunk interval")
    p.add_argument("--latency-ms", dest="latency_ms", type=float, default=None)
    p.add_argument("--q-bits", dest="q_bits", type=int, default=None)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--window", type=int, default=None)
    p.add_argument("--chunk-frames", dest="chunk_frames", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="blendcast", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic coefficient trace CSV")
    _add_common(p)
    p.add_argument("--features", type=int, default=None)
    p.add_argument("--frames", type=int, default=None)
    p.add_argument("--static-fraction", dest="static_fraction", type=float, default=None)

    p = sub.add_parser("train", help="train per-feature predictors and save the model")
    _add_common(p)
    _add_codec_flags(p)
    p.add_argument("--trace", help="coefficient trace CSV (defaults to config trace or synth)")
    p.add_argument("--features", help="comma-separated feature indices (default: all)")

    p = sub.add_parser("pack", help="classify, plan, and pack one chunk into a packet")
    _add_common(p)
    _add_codec_flags(p)
    p.add_argument("--trace", required=True)
    p.add_argument("--chunk-id", dest="chunk_id", type=int, default=0)
    p.add_argument("--report-csv", dest="report_csv", help="also write the selection report CSV")

    p = sub.add_parser("unpack", help="decode a packet into a code-stream CSV")
    _add_common(p)
    p.add_argument("packet", help="packet file from `pack`")

    p = sub.add_parser("run", help="run one scheme over a trace at one rate")
    _add_common(p)
    _add_codec_flags(p)
    p.add_argument("--trace", help="trace CSV (defaults to synthetic)")
    p.add_argument("--scheme", choices=[s.value for s in Scheme], default=Scheme.PROPOSED.value)
    p.add_argument("--upper-bound-exact", dest="upper_bound_exact", action="store_true")

    p = sub.add_parser("sweep", help="full rate x scheme x seed sweep with CSV + SVG outputs")
    _add_common(p)
    _add_codec_flags(p)
    p.add_argument("--rates", help="comma-separated bits-per-chunk list (overrides config)")
    p.add_argument("--trace", help="trace CSV (defaults to synthetic per seed)")
    p.add_argument("--upper-bound-exact", dest="upper_bound_exact", action="store_true")

    p = sub.add_parser("frames-report", help="per-frame PSNR and frame exports at a forced n_f")
    _add_common(p)
    _add_codec_flags(p)
    p.add_argument("--trace", help="trace CSV (defaults to synthetic)")
    p.add_argument("--n-f", dest="n_f", type=int, required=True, help="forced transmitted-frame count")
    p.add_argument("--frames", default="61,80,100", help="comma-separated 1-based frame indices to export")

    p = sub.add_parser("render", help="render one trace frame to PNG")
    _add_common(p)
    p.add_argument("--trace", required=True)
    p.add_argument("--frame", type=int, default=1, help="1-based frame index")

    p = sub.add_parser("show-config", help="print the effective configuration as TOML")
    _add_common(p)
    _add_codec_flags(p)
    p.add_argument("--rates", help="comma-separated bits-per-chunk list")
    return parser


def _cmd_synth(args) -> int:
    cfg = _load_or_default_config(args)
    spec = cfg.synth
    replacements = {}
    if args.features is not None:
        replacements["features"] = args.features
    if args.frames is not None:
        replacements["frames"] = args.frames
    if args.static_fraction is not None:
        replacements["static_fraction"] = args.static_fraction
    if args.seed is not None:
        replacements["seed"] = args.seed
    spec = dataclasses.replace(spec, **replacements)
    out = args.out or "trace.csv"
    save_trace(synth_trace(spec), out)
    print(f"wrote {out} ({spec.frames} frames x {spec.features} features, seed {spec.seed})")
    return 0


def _resolve_trace(cfg: ExperimentConfig, args):
    seed = args.seed if args.seed is not None else cfg.seeds[0]
    if getattr(args, "trace", None):
        return load_trace(args.trace), seed
    return cfg.trace_for(seed), seed


def _cmd_train(args) -> int:
    cfg = _load_or_default_config(args)
    trace, seed = _resolve_trace(cfg, args)
    features = (
        [int(x) for x in args.features.split(",")] if args.features else range(trace.n_features)
    )
    model = train(trace, features, cfg.predictor_cfg(seed))
    out = args.out or "model.npz"
    model.save(out)
    print(f"wrote {out} ({len(model.trained_feature_indices)} feature models, seed {seed})")
    return 0


def _cmd_pack(args) -> int:
    cfg = _load_or_default_config(args)
    trace = load_trace(args.trace)
    chunks = chunk_iter(trace, cfg.chunk_frames)
    if args.chunk_id >= len(chunks):
        raise EmptyStreamError(f"trace has {len(chunks)} full chunks, no chunk {args.chunk_id}")
    chunk = chunks[args.chunk_id]
    rate = args.rate if args.rate is not None else cfg.rates[0]
    report = classify(chunk, cfg.selector_cfg)
    plan = plan_frames(cfg.budget_for(rate), cfg.qspec, chunk.n_features, report.m_dyn, chunk.n_frames)
    packet = pack_chunk(chunk, report, plan, cfg.qspec)
    out = args.out or "chunk.bin"
    Path(out).write_bytes(packet.to_bytes())
    if args.report_csv:
        report_to_csv(report, args.report_csv)
    print(
        f"wrote {out}: chunk {chunk.chunk_id}, n_f={plan.n_f}, m_dyn={report.m_dyn}, "
        f"payload {plan.payload_bits} bits (budget {cfg.budget_for(rate).budget_bits})"
    )
    return 0


def _cmd_unpack(args) -> int:
    received = unpack_chunk(Path(args.packet).read_bytes())
    out = args.out or "codes.csv"
    lines = ["frame,feature,code"]
    for m in range(received.m):
        lines.append(f"1,{m},{int(received.frame1_codes[m])}")
    for i in range(received.n_f - 1):
        for j, m in enumerate(received.dynamic_indices):
            lines.append(f"{i + 2},{m},{int(received.dynamic_codes[i, j])}")
    Path(out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(
        f"chunk {received.chunk_id}: N={received.n}, n_f={received.n_f}, M={received.m}, "
        f"Q={received.qspec.q_bits}, m_dyn={received.m_dyn} -> {out}"
    )
    return 0


def _cmd_run(args) -> int:
    cfg = _load_or_default_config(args)
    trace, seed = _resolve_trace(cfg, args)
    scheme = Scheme(args.scheme)
    rate = args.rate if args.rate is not None else cfg.rates[0]
    basis = make_basis(cfg.basis_height, cfg.basis_width, trace.n_features, seed)
    model = None
    if scheme in (Scheme.PROPOSED, Scheme.NO_SELECTION):
        model = train(trace, range(trace.n_features), cfg.predictor_cfg(seed))
    results = run_stream(
        trace,
        scheme,
        chunk_frames=cfg.chunk_frames,
        qspec=cfg.qspec,
        basis=basis,
        budget=cfg.budget_for(rate),
        selector_cfg=cfg.selector_cfg,
        model=model,
        upper_bound_exact=cfg.upper_bound_exact,
    )
    out = Path(args.out or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["chunk_id,scheme,rate_bits,seed,n_f,payload_bits,mean_psnr_db,coeff_mse"]
    for r in results:
        lines.append(
            f"{r.chunk_id},{scheme.value},{rate},{seed},{r.n_f},{r.payload_bits},"
            f"{r.mean_psnr_db!r},{r.coeff_mse!r}"
        )
    (out / "results.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    frame_lines = ["chunk_id,frame,psnr_db"]
    for r in results:
        for i, p in enumerate(r.frame_psnr_db):
            frame_lines.append(f"{r.chunk_id},{i + 1},{float(p)!r}")
    (out / "frames.csv").write_text("\n".join(frame_lines) + "\n", encoding="utf-8")
    mean_db = float(np.mean([r.mean_psnr_db for r in results]))
    print(f"{scheme.value} @ {rate} bits: {len(results)} chunk(s), mean PSNR {mean_db:.2f} dB -> {out}")
    return 0


def _cmd_sweep(args) -> int:
    cfg = _load_or_default_config(args)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seeds=(args.seed,))
    rows = sweep(cfg)
    failed = sum(1 for r in rows if r.error)
    print(f"{len(rows)} rows ({failed} failed) -> {cfg.out_dir}/sweep.csv, {cfg.out_dir}/sweep.svg")
    return 0


def _cmd_frames_report(args) -> int:
    cfg = _load_or_default_config(args)
    frame_ids = tuple(int(x) for x in args.frames.split(","))
    rep = frames_report(cfg, args.n_f, frame_ids, seed=args.seed)
    print(
        f"seed {rep.seed}, forced n_f={rep.n_f} -> {cfg.out_dir}/{rep.csv_path}, "
        f"{len(rep.image_paths)} frame image(s), {cfg.out_dir}/{rep.svg_path}"
    )
    return 0


def _cmd_render(args) -> int:
    cfg = _load_or_default_config(args)
    trace = load_trace(args.trace)
    if not 1 <= args.frame <= trace.n_frames:
        raise TraceError(f"frame {args.frame} outside [1, {trace.n_frames}]")
    seed = args.seed if args.seed is not None else cfg.seeds[0]
    basis = make_basis(cfg.basis_height, cfg.basis_width, trace.n_features, seed)
    out = args.out or f"frame_{args.frame:03d}.png"
    save_png(render(trace.values[args.frame - 1], basis), out)
    print(f"wrote {out}")
    return 0


def _cmd_show_config(args) -> int:
    cfg = _load_or_default_config(args)
    sys.stdout.write(config_to_toml(cfg))
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "train": _cmd_train,
    "pack": _cmd_pack,
    "unpack": _cmd_unpack,
    "run": _cmd_run,
    "sweep": _cmd_sweep,
    "frames-report": _cmd_frames_report,
    "render": _cmd_render,
    "show-config": _cmd_show_config,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except BlendcastError as exc:
        print(f"error[{exc.category}]: {exc}", file=sys.stderr)
        return _exit_code(exc)
    except (ValueError, OSError) as exc:
        print(f"error[input]: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
