"""Experiment configuration, rate sweeps, and per-frame reports.

The config file is a small TOML document; serialization is canonical
(fixed key order, repr-formatted floats) so serialize -> parse ->
serialize is a fixpoint and identical configs always produce
byte-identical sweep outputs.
"""

from __future__ import annotations

import dataclasses
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .codec import LinkBudget, QuantizationSpec
from .errors import BlendcastError, EmptyStreamError, WindowUnderfullError
from .pipeline import ChunkResult, Scheme, run_stream, transmit_chunk
from .plots import plot_frame_psnr, plot_rate_sweep
from .predictor import PredictorConfig, PredictorModel, train
from .render_metrics import make_basis, render, save_png
from .selector import SelectorConfig, classify
from .trace import CoefficientTrace, SynthSpec, chunk_iter, load_trace, synth_trace

DEFAULT_RATES = (4000, 8000, 16000, 32000, 48000, 64000, 76800)
ALL_SCHEMES = (
    Scheme.PROPOSED,
    Scheme.UPPER_BOUND,
    Scheme.NO_SELECTION,
    Scheme.NO_SELECTION_NO_PREDICTION,
)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a sweep needs; defaults follow the reference constants
    (M=47 via the trace, N=100, Q=16, tau=1 ms, delta=0.01, window=5)."""

    chunk_frames: int = 100
    q_bits: int = 16
    latency_ms: float = 1.0
    rates: tuple[int, ...] = DEFAULT_RATES
    delta: float = 0.01
    schemes: tuple[Scheme, ...] = ALL_SCHEMES
    seeds: tuple[int, ...] = (1, 2, 3)
    out_dir: str = "out"
    upper_bound_exact: bool = False
    quant_lo: float = 0.0
    quant_hi: float = 1.0
    window: int = 5
    hidden_size: int = 16
    learning_rate: float = 1e-2
    epochs: int = 200
    normalize: bool = True
    basis_height: int = 64
    basis_width: int = 64
    trace_path: str | None = None
    synth: SynthSpec = SynthSpec()

    @property
    def tau(self) -> float:
        return self.latency_ms / 1000.0

    @property
    def qspec(self) -> QuantizationSpec:
        return QuantizationSpec(q_bits=self.q_bits, lo=self.quant_lo, hi=self.quant_hi)

    @property
    def selector_cfg(self) -> SelectorConfig:
        return SelectorConfig(delta=self.delta)

    def predictor_cfg(self, seed: int) -> PredictorConfig:
        return PredictorConfig(
            window=self.window,
            hidden_size=self.hidden_size,
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            seed=seed,
            normalize=self.normalize,
        )

    def budget_for(self, rate_bits: int) -> LinkBudget:
        return LinkBudget.from_chunk_bits(rate_bits, tau=self.tau)

    def trace_for(self, seed: int) -> CoefficientTrace:
        if self.trace_path is not None:
            return load_trace(self.trace_path)
        return synth_trace(dataclasses.replace(self.synth, seed=seed))


def _fmt_float(x: float) -> str:
    s = repr(float(x))
    if "." not in s and "e" not in s and "inf" not in s and "nan" not in s:
        s += ".0"
    return s


def config_to_toml(cfg: ExperimentConfig) -> str:
    """Canonical TOML serialization (stable key order and formatting)."""
    lines = ["[experiment]"]
    lines.append(f"chunk_frames = {cfg.chunk_frames}")
    lines.append(f"q_bits = {cfg.q_bits}")
    lines.append(f"latency_ms = {_fmt_float(cfg.latency_ms)}")
    lines.append(f"rates = [{', '.join(str(r) for r in cfg.rates)}]")
    lines.append(f"delta = {_fmt_float(cfg.delta)}")
    lines.append(f"schemes = {json.dumps([s.value for s in cfg.schemes])}")
    lines.append(f"seeds = [{', '.join(str(s) for s in cfg.seeds)}]")
    lines.append(f"out_dir = {json.dumps(cfg.out_dir)}")
    lines.append(f"upper_bound_exact = {'true' if cfg.upper_bound_exact else 'false'}")
    lines.append(f"quant_lo = {_fmt_float(cfg.quant_lo)}")
    lines.append(f"quant_hi = {_fmt_float(cfg.quant_hi)}")
    lines.append("")
    lines.append("[predictor]")
    lines.append(f"window = {cfg.window}")
    lines.append(f"hidden_size = {cfg.hidden_size}")
    lines.append(f"learning_rate = {_fmt_float(cfg.learning_rate)}")
    lines.append(f"epochs = {cfg.epochs}")
    lines.append(f"normalize = {'true' if cfg.normalize else 'false'}")
    lines.append("")
    lines.append("[renderer]")
    lines.append(f"height = {cfg.basis_height}")
    lines.append(f"width = {cfg.basis_width}")
    lines.append("")
    lines.append("[trace]")
    if cfg.trace_path is not None:
        lines.append(f"path = {json.dumps(cfg.trace_path)}")
    lines.append(f"features = {cfg.synth.features}")
    lines.append(f"frames = {cfg.synth.frames}")
    lines.append(f"static_fraction = {_fmt_float(cfg.synth.static_fraction)}")
    lines.append(f"amp_min = {_fmt_float(cfg.synth.amp_range[0])}")
    lines.append(f"amp_max = {_fmt_float(cfg.synth.amp_range[1])}")
    lines.append(f"period_min = {_fmt_float(cfg.synth.period_range[0])}")
    lines.append(f"period_max = {_fmt_float(cfg.synth.period_range[1])}")
    lines.append(f"noise_std = {_fmt_float(cfg.synth.noise_std)}")
    lines.append(f"frame_rate = {_fmt_float(cfg.synth.frame_rate)}")
    return "\n".join(lines) + "\n"


def config_from_toml(text: str) -> ExperimentConfig:
    doc = tomllib.loads(text)
    exp = doc.get("experiment", {})
    pred = doc.get("predictor", {})
    rend = doc.get("renderer", {})
    tr = doc.get("trace", {})
    defaults = ExperimentConfig()
    synth_defaults = defaults.synth
    synth = SynthSpec(
        features=int(tr.get("features", synth_defaults.features)),
        frames=int(tr.get("frames", synth_defaults.frames)),
        static_fraction=float(tr.get("static_fraction", synth_defaults.static_fraction)),
        amp_range=(
            float(tr.get("amp_min", synth_defaults.amp_range[0])),
            float(tr.get("amp_max", synth_defaults.amp_range[1])),
        ),
        period_range=(
            float(tr.get("period_min", synth_defaults.period_range[0])),
            float(tr.get("period_max", synth_defaults.period_range[1])),
        ),
        noise_std=float(tr.get("noise_std", synth_defaults.noise_std)),
        frame_rate=float(tr.get("frame_rate", synth_defaults.frame_rate)),
    )
    return ExperimentConfig(
        chunk_frames=int(exp.get("chunk_frames", defaults.chunk_frames)),
        q_bits=int(exp.get("q_bits", defaults.q_bits)),
        latency_ms=float(exp.get("latency_ms", defaults.latency_ms)),
        rates=tuple(int(r) for r in exp.get("rates", defaults.rates)),
        delta=float(exp.get("delta", defaults.delta)),
        schemes=tuple(Scheme(s) for s in exp.get("schemes", [s.value for s in defaults.schemes])),
        seeds=tuple(int(s) for s in exp.get("seeds", defaults.seeds)),
        out_dir=str(exp.get("out_dir", defaults.out_dir)),
        upper_bound_exact=bool(exp.get("upper_bound_exact", defaults.upper_bound_exact)),
        quant_lo=float(exp.get("quant_lo", defaults.quant_lo)),
        quant_hi=float(exp.get("quant_hi", defaults.quant_hi)),
        window=int(pred.get("window", defaults.window)),
        hidden_size=int(pred.get("hidden_size", defaults.hidden_size)),
        learning_rate=float(pred.get("learning_rate", defaults.learning_rate)),
        epochs=int(pred.get("epochs", defaults.epochs)),
        normalize=bool(pred.get("normalize", defaults.normalize)),
        basis_height=int(rend.get("height", defaults.basis_height)),
        basis_width=int(rend.get("width", defaults.basis_width)),
        trace_path=tr.get("path"),
        synth=synth,
    )


def load_config(path: str | Path) -> ExperimentConfig:
    return config_from_toml(Path(path).read_text(encoding="utf-8"))


@dataclass(frozen=True)
class SweepRow:
    """One sweep cell: a (rate, scheme, seed) run or its failure."""

    rate_bits: int
    scheme: Scheme
    seed: int
    n_f: int | None
    payload_bits: int | None
    mean_psnr_db: float | None
    coeff_mse: float | None
    frames_csv: str | None
    error: str | None = None


def _needs_model(schemes) -> bool:
    return any(s in (Scheme.PROPOSED, Scheme.NO_SELECTION) for s in schemes)


def _write_frames_csv(path: Path, results: list[ChunkResult]) -> None:
    lines = ["chunk_id,frame,psnr_db"]
    for res in results:
        for i, p in enumerate(res.frame_psnr_db):
            lines.append(f"{res.chunk_id},{i + 1},{float(p)!r}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _row_to_csv(row: SweepRow) -> str:
    def opt(x, fmt=str):
        return "" if x is None else fmt(x)

    err = "" if row.error is None else row.error.replace(",", ";").replace("\n", " ")
    return ",".join(
        [
            str(row.rate_bits),
            row.scheme.value,
            str(row.seed),
            opt(row.n_f),
            opt(row.payload_bits),
            opt(row.mean_psnr_db, lambda v: repr(float(v))),
            opt(row.coeff_mse, lambda v: repr(float(v))),
            opt(row.frames_csv),
            err,
        ]
    )


SWEEP_CSV_HEADER = "rate_bits,scheme,seed,n_f,payload_bits,mean_psnr_db,coeff_mse,frames_csv,error"


def sweep(config: ExperimentConfig) -> list[SweepRow]:
    """Run every (seed, rate, scheme) cell; write sweep.csv and sweep.svg.

    Pipeline errors are recorded in the row rather than aborting the
    sweep. Output is deterministic for a fixed config.
    """
    out = Path(config.out_dir)
    frames_dir = out / "frames"
    frames_dir.mkdir(parents=True, exist_ok=True)

    rows: list[SweepRow] = []
    for seed in config.seeds:
        trace = config.trace_for(seed)
        basis = make_basis(config.basis_height, config.basis_width, trace.n_features, seed)
        model: PredictorModel | None = None
        if _needs_model(config.schemes):
            model = train(trace, range(trace.n_features), config.predictor_cfg(seed))
        for rate in config.rates:
            budget = config.budget_for(rate)
            for scheme in config.schemes:
                try:
                    results = run_stream(
                        trace,
                        scheme,
                        chunk_frames=config.chunk_frames,
                        qspec=config.qspec,
                        basis=basis,
                        budget=budget,
                        selector_cfg=config.selector_cfg,
                        model=model,
                        upper_bound_exact=config.upper_bound_exact,
                    )
                except BlendcastError as exc:
                    rows.append(
                        SweepRow(rate, scheme, seed, None, None, None, None, None, f"{exc.category}: {exc}")
                    )
                    continue
                rel = f"frames/rate{rate}_{scheme.value}_seed{seed}.csv"
                _write_frames_csv(out / rel, results)
                rows.append(
                    SweepRow(
                        rate_bits=rate,
                        scheme=scheme,
                        seed=seed,
                        n_f=max(r.n_f for r in results),
                        payload_bits=max(r.payload_bits for r in results),
                        mean_psnr_db=float(np.mean([r.mean_psnr_db for r in results])),
                        coeff_mse=float(np.mean([r.coeff_mse for r in results])),
                        frames_csv=rel,
                    )
                )

    (out / "sweep.csv").write_text(
        "\n".join([SWEEP_CSV_HEADER] + [_row_to_csv(r) for r in rows]) + "\n", encoding="utf-8"
    )

    series: dict[str, list[tuple[float, float]]] = {}
    for scheme in config.schemes:
        pts = []
        for rate in config.rates:
            vals = [
                r.mean_psnr_db
                for r in rows
                if r.scheme is scheme and r.rate_bits == rate and r.mean_psnr_db is not None
            ]
            if vals:
                pts.append((float(rate), float(np.mean(vals))))
        series[scheme.value] = pts
    plot_rate_sweep(series, out / "sweep.svg")
    return rows


@dataclass(frozen=True)
class FramesReport:
    """Forced-N_f diagnostic for one chunk of one seed."""

    seed: int
    n_f: int
    frame_psnr_db: np.ndarray
    csv_path: str
    image_paths: tuple[str, ...]
    svg_path: str


def frames_report(
    config: ExperimentConfig,
    n_f_override: int,
    frame_ids: tuple[int, ...] = (61, 80, 100),
    seed: int | None = None,
) -> FramesReport:
    """Run the proposed scheme with a forced frame count on one chunk.

    Emits a per-frame PSNR CSV, a PSNR profile figure, and PNG exports of
    the reconstruction at the requested 1-based frame indices.
    """
    if n_f_override < config.window:
        raise WindowUnderfullError(
            f"forced n_f {n_f_override} is below the prediction window {config.window}"
        )
    use_seed = config.seeds[0] if seed is None else seed
    trace = config.trace_for(use_seed)
    chunks = chunk_iter(trace, config.chunk_frames)
    if not chunks:
        raise EmptyStreamError("trace yields no full chunk")
    chunk = chunks[0]
    if not 1 <= n_f_override <= chunk.n_frames:
        raise ValueError(f"forced n_f {n_f_override} outside [1, {chunk.n_frames}]")
    for f in frame_ids:
        if not 1 <= f <= chunk.n_frames:
            raise ValueError(f"requested frame {f} outside [1, {chunk.n_frames}]")

    basis = make_basis(config.basis_height, config.basis_width, trace.n_features, use_seed)
    report = classify(chunk, config.selector_cfg)
    model = None
    if report.dynamic_set and n_f_override < chunk.n_frames:
        model = train(trace, report.dynamic_set, config.predictor_cfg(use_seed))

    result = transmit_chunk(
        chunk,
        Scheme.PROPOSED,
        qspec=config.qspec,
        basis=basis,
        selector_cfg=config.selector_cfg,
        model=model,
        n_f_override=n_f_override,
    )

    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_rel = f"frames_nf{n_f_override}_seed{use_seed}.csv"
    lines = ["frame,psnr_db"]
    for i, p in enumerate(result.frame_psnr_db):
        lines.append(f"{i + 1},{float(p)!r}")
    (out / csv_rel).write_text("\n".join(lines) + "\n", encoding="utf-8")

    image_paths = []
    for f in frame_ids:
        img = render(result.reconstruction[f - 1], basis)
        rel = f"frame_{f:03d}_nf{n_f_override}_seed{use_seed}.png"
        save_png(img, out / rel)
        image_paths.append(rel)

    svg_rel = f"frames_nf{n_f_override}_seed{use_seed}.svg"
    plot_frame_psnr(
        list(range(1, chunk.n_frames + 1)), list(result.frame_psnr_db), out / svg_rel, n_f=n_f_override
    )
    return FramesReport(
        seed=use_seed,
        n_f=n_f_override,
        frame_psnr_db=result.frame_psnr_db,
        csv_path=csv_rel,
        image_paths=tuple(image_paths),
        svg_path=svg_rel,
    )
