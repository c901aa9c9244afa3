"""Rate-constrained transmission simulator for blendshape coefficient streams.

Transmitter side: per-chunk variance classification of expression
features, bit-budget planning, and quantized packet packing. Receiver
side: packet decoding, LSTM rollout for untransmitted frames, linear
blendshape rendering, and PSNR/MSE scoring against the source.
"""

from .codec import (
    ChunkPacket,
    ChunkPlan,
    LinkBudget,
    QuantizationSpec,
    ReceivedChunk,
    dequantize,
    pack_chunk,
    plan_frames,
    quantize,
    unpack_chunk,
)
from .errors import (
    BadMagicError,
    BitmapMismatchError,
    BlendcastError,
    DivergenceError,
    EmptyStreamError,
    EmptyTraceError,
    InsufficientBudgetError,
    MalformedHeaderError,
    NonFiniteValueError,
    PacketError,
    RaggedRowError,
    TraceError,
    TruncatedPacketError,
    WindowUnderfullError,
)
from .harness import (
    ExperimentConfig,
    FramesReport,
    SweepRow,
    config_from_toml,
    config_to_toml,
    frames_report,
    load_config,
    sweep,
)
from .pipeline import ChunkResult, Scheme, run_stream, transmit_chunk
from .predictor import (
    FeatureParams,
    PredictorConfig,
    PredictorModel,
    extend,
    loss_and_gradients,
    pad_last,
    train,
)
from .render_metrics import (
    BlendBasis,
    coeff_mse,
    make_basis,
    mean_psnr,
    psnr,
    psnr_sequence,
    render,
    render_sequence,
    save_png,
)
from .selector import SelectionReport, SelectorConfig, classify, mean_and_variance, report_to_csv
from .trace import ChunkView, CoefficientTrace, SynthSpec, chunk_iter, load_trace, save_trace, synth_trace

__version__ = "0.1.0"
