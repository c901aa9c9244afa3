"""End-to-end transmitter/receiver simulation for chunks and streams.

Four schemes share one code path: classify (or not), plan frames under
the budget, pack/unpack the wire packet, fill untransmitted frames by
prediction or padding, then render both sides and score reconstruction
quality. The receiver sees only the packet; the selection reaches it
through the packet bitmap alone.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import predictor as _predictor
from .codec import (
    ChunkPlan,
    LinkBudget,
    QuantizationSpec,
    dequantize,
    pack_chunk,
    plan_frames,
    quantize,
    unpack_chunk,
)
from .errors import EmptyStreamError
from .render_metrics import BlendBasis, coeff_mse, mean_psnr, psnr_sequence, render_sequence
from .selector import SelectorConfig, all_dynamic_report, classify
from .trace import ChunkView, CoefficientTrace, chunk_iter


class Scheme(enum.Enum):
    PROPOSED = "proposed"
    UPPER_BOUND = "upper-bound"
    NO_SELECTION = "no-selection"
    NO_SELECTION_NO_PREDICTION = "no-selection-no-prediction"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class ChunkResult:
    """Reconstruction and quality summary for one transmitted chunk."""

    chunk_id: int
    scheme: Scheme
    n_f: int
    payload_bits: int
    reconstruction: np.ndarray = field(repr=False)  # N x M
    frame_psnr_db: np.ndarray = field(repr=False)  # N, +inf sentinel allowed
    mean_psnr_db: float
    coeff_mse: float


def _receive_and_fill(chunk: ChunkView, report, plan, qspec, model, predict: bool):
    """Pack, unpack, and rebuild the full N x M coefficient matrix."""
    n, m = chunk.n_frames, chunk.n_features
    packet = pack_chunk(chunk, report, plan, qspec)
    received = unpack_chunk(packet.to_bytes())

    recon = np.empty((n, m), dtype=np.float64)
    frame1 = received.frame1_values
    for s in report.static_set:
        recon[:, s] = frame1[s]  # static features: one value pads all frames

    dyn = list(received.dynamic_indices)
    if dyn:
        history = received.dynamic_history()  # (n_f, m_dyn)
        recon[: received.n_f, dyn] = history
        if received.n_f < n:
            if predict:
                if model is None:
                    raise ValueError("scheme predicts untransmitted frames but no model was given")
                tail = _predictor.extend(received, model, n)
            else:
                tail = _predictor.pad_last(received, n)
            recon[received.n_f :, dyn] = tail
    return recon, packet.payload_bits


def transmit_chunk(
    chunk: ChunkView,
    scheme: Scheme,
    *,
    qspec: QuantizationSpec,
    basis: BlendBasis,
    budget: LinkBudget | None = None,
    selector_cfg: SelectorConfig | None = None,
    model: _predictor.PredictorModel | None = None,
    n_f_override: int | None = None,
    upper_bound_exact: bool = False,
) -> ChunkResult:
    """Simulate one chunk under the given scheme and score the result.

    n_f_override bypasses budget planning (diagnostics such as the
    forced-N_f frame report); the budget is then not consulted.
    """
    n, m = chunk.n_frames, chunk.n_features

    if scheme is Scheme.UPPER_BOUND:
        if upper_bound_exact:
            recon = chunk.values.copy()
        else:
            recon = dequantize(quantize(chunk.values, qspec), qspec)
        n_f = n
        payload_bits = qspec.q_bits * m * n  # required, not budget-constrained
    else:
        if scheme is Scheme.PROPOSED:
            if selector_cfg is None:
                raise ValueError("proposed scheme needs a selector config")
            report = classify(chunk, selector_cfg)
            predict = True
        else:
            report = all_dynamic_report(chunk)
            predict = scheme is Scheme.NO_SELECTION

        if n_f_override is not None:
            if not 1 <= n_f_override <= n:
                raise ValueError(f"n_f override {n_f_override} outside [1, {n}]")
            plan = ChunkPlan(n_f=n_f_override, m=m, m_dyn=report.m_dyn, q_bits=qspec.q_bits)
        else:
            if budget is None:
                raise ValueError("rate-limited schemes need a link budget")
            plan = plan_frames(budget, qspec, m, report.m_dyn, n)
        recon, payload_bits = _receive_and_fill(chunk, report, plan, qspec, model, predict)
        n_f = plan.n_f

    truth_frames = render_sequence(chunk.values, basis)
    recon_frames = render_sequence(recon, basis)
    per_frame = psnr_sequence(truth_frames, recon_frames)
    return ChunkResult(
        chunk_id=chunk.chunk_id,
        scheme=scheme,
        n_f=n_f,
        payload_bits=payload_bits,
        reconstruction=recon,
        frame_psnr_db=per_frame,
        mean_psnr_db=mean_psnr(per_frame),
        coeff_mse=coeff_mse(chunk.values, recon),
    )


def run_stream(
    trace: CoefficientTrace,
    scheme: Scheme,
    *,
    chunk_frames: int,
    qspec: QuantizationSpec,
    basis: BlendBasis,
    budget: LinkBudget | None = None,
    selector_cfg: SelectorConfig | None = None,
    model: _predictor.PredictorModel | None = None,
    upper_bound_exact: bool = False,
) -> list[ChunkResult]:
    """Process every full chunk of the trace independently, in order."""
    chunks = chunk_iter(trace, chunk_frames)
    if not chunks:
        raise EmptyStreamError(
            f"trace with {trace.n_frames} frames yields no full chunk of {chunk_frames}"
        )
    return [
        transmit_chunk(
            chunk,
            scheme,
            qspec=qspec,
            basis=basis,
            budget=budget,
            selector_cfg=selector_cfg,
            model=model,
            upper_bound_exact=upper_bound_exact,
        )
        for chunk in chunks
    ]
