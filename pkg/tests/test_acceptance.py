"""Acceptance suite: one test per exit criterion, each printing a
``ACCEPTANCE <nn> <name>: PASS/FAIL`` line (run with ``pytest -v -s``).

Tolerances are frozen here; nothing is calibrated at runtime.
"""

import dataclasses
import hashlib
import math
import time

import numpy as np
import pytest

from blendcast.codec import (
    ChunkPlan,
    LinkBudget,
    QuantizationSpec,
    dequantize,
    pack_chunk,
    plan_frames,
    quantize,
    unpack_chunk,
)
from blendcast.errors import PacketError
from blendcast.harness import ExperimentConfig, config_to_toml, frames_report, load_config, sweep
from blendcast.pipeline import Scheme, transmit_chunk
from blendcast.predictor import FeatureParams, PredictorConfig, loss_and_gradients, train
from blendcast.render_metrics import make_basis
from blendcast.selector import SelectionReport, SelectorConfig, chunk_stats, classify
from blendcast.trace import CoefficientTrace, SynthSpec, chunk_iter, synth_trace

Q16 = QuantizationSpec(q_bits=16)


def announce(num, name, ok, detail=""):
    print(f"\nACCEPTANCE {num:02d} {name}: {'PASS' if ok else 'FAIL'} {detail}")


def random_instance(rng, max_m=64, max_n=120):
    q = int(rng.integers(1, 33))
    m = int(rng.integers(1, max_m + 1))
    m_dyn = int(rng.integers(0, m + 1))
    n = int(rng.integers(1, max_n + 1))
    bits = int(rng.integers(q * m, 3 * q * m * max(n, 2) + 1))
    return q, m, m_dyn, n, bits


def fabricated_report(values, m_dyn):
    means, variances = chunk_stats(values)
    m = values.shape[1]
    return SelectionReport(
        dynamic_set=tuple(range(m_dyn)),
        static_set=tuple(range(m_dyn, m)),
        means=means,
        variances=variances,
    )


def test_criterion_01_budget_safety():
    rng = np.random.default_rng(1001)
    start = time.perf_counter()
    violations = 0
    for _ in range(1000):
        q, m, m_dyn, n, bits = random_instance(rng)
        spec = QuantizationSpec(q_bits=q)
        plan = plan_frames(LinkBudget.from_chunk_bits(bits), spec, m, m_dyn, n)
        values = rng.uniform(0, 1, (n, m))
        chunk = chunk_iter(CoefficientTrace(values=values), n)[0]
        packet = pack_chunk(chunk, fabricated_report(values, m_dyn), plan, spec)
        if packet.payload_bits > bits:
            violations += 1
    elapsed = time.perf_counter() - start
    ok = violations == 0 and elapsed < 5.0
    announce(1, "budget-safety", ok, f"(1000 packed instances, 0 expected violations, {elapsed:.2f}s)")
    assert violations == 0
    assert elapsed < 5.0


def test_criterion_02_nf_oracle_equivalence():
    def oracle(bits, q, m, m_dyn, n):
        best = None
        for nf in range(1, n + 1):
            if q * m + q * (nf - 1) * m_dyn <= bits:
                best = nf
        return best

    rng = np.random.default_rng(1002)
    cases = []
    for _ in range(1000):
        cases.append(random_instance(rng))
    # boundary cases: exact first-frame budget with degenerate dynamic counts
    for m_dyn in (0, 1, 47):
        cases.append((16, 47, m_dyn, 100, 16 * 47))
    mismatches = 0
    for q, m, m_dyn, n, bits in cases:
        spec = QuantizationSpec(q_bits=q)
        plan = plan_frames(LinkBudget.from_chunk_bits(bits), spec, m, m_dyn, n)
        if plan.n_f != oracle(bits, q, m, m_dyn, n):
            mismatches += 1
    ok = mismatches == 0
    announce(2, "nf-oracle-equivalence", ok, f"({len(cases)} instances incl. boundaries)")
    assert mismatches == 0


def test_criterion_03_selection_correctness():
    def naive_classify(values, delta):
        dynamic, static = [], []
        n = values.shape[0]
        for m in range(values.shape[1]):
            col = [float(x) for x in values[:, m]]
            mean = math.fsum(col) / n
            var = math.fsum((x - mean) ** 2 for x in col) / n
            (dynamic if var >= delta else static).append(m)
        return tuple(dynamic), tuple(static)

    rng = np.random.default_rng(1003)
    mismatches = 0
    for _ in range(200):
        n = int(rng.integers(2, 120))
        m = int(rng.integers(1, 48))
        scale = float(rng.uniform(0.05, 1.0))
        values = rng.uniform(0, scale, (n, m))
        delta = float(rng.uniform(0.0, 0.1))
        chunk = chunk_iter(CoefficientTrace(values=values), n)[0]
        rep = classify(chunk, SelectorConfig(delta=delta))
        dyn, stat = naive_classify(values, delta)
        if rep.dynamic_set != dyn or rep.static_set != stat:
            mismatches += 1

    # boundary: alternating 0/1 has exact variance 0.25; delta=0.25 -> dynamic
    boundary = np.tile([[0.0], [1.0]], (50, 1))
    chunk = chunk_iter(CoefficientTrace(values=boundary), 100)[0]
    rep = classify(chunk, SelectorConfig(delta=0.25))
    boundary_ok = rep.dynamic_set == (0,)

    ok = mismatches == 0 and boundary_ok
    announce(3, "selection-correctness", ok, f"(200 chunks exact, boundary inclusive: {boundary_ok})")
    assert mismatches == 0
    assert boundary_ok


def test_criterion_04_quantizer_bound():
    worst_ratio = 0.0
    for q in range(1, 9):
        spec = QuantizationSpec(q_bits=q, lo=-1.0, hi=3.0)
        half = (spec.hi - spec.lo) / (2 * spec.levels)
        grid = np.linspace(spec.lo, spec.hi, 8193)
        codes = spec.lo + np.arange(spec.levels + 1) * spec.step
        boundaries = spec.lo + (np.arange(spec.levels) + 0.5) * spec.step
        v = np.concatenate([grid, codes, boundaries])
        err = np.abs(dequantize(quantize(v, spec), spec) - v)
        worst_ratio = max(worst_ratio, float(err.max() / half))
    rng = np.random.default_rng(1004)
    v = rng.uniform(0.0, 1.0, 100_000)
    half16 = 1.0 / (2 * 65535)
    err16 = np.abs(dequantize(quantize(v, Q16), Q16) - v)
    worst_ratio = max(worst_ratio, float(err16.max() / half16))
    ok = worst_ratio <= 1.0 + 1e-9  # half-step bound, float64 rounding slack only
    announce(4, "quantizer-bound", ok, f"(worst error = {worst_ratio:.12f} half-steps)")
    assert ok


def test_criterion_05_wire_round_trip():
    rng = np.random.default_rng(1005)
    mismatches = 0
    packets = []
    for _ in range(500):
        q = int(rng.integers(1, 33))
        m = int(rng.integers(1, 40))
        m_dyn = int(rng.integers(0, m + 1))
        n = int(rng.integers(1, 60))
        n_f = int(rng.integers(1, n + 1))
        spec = QuantizationSpec(q_bits=q)
        values = rng.uniform(0, 1, (n, m))
        chunk = chunk_iter(CoefficientTrace(values=values), n)[0]
        report = fabricated_report(values, m_dyn)
        packet = pack_chunk(chunk, report, ChunkPlan(n_f=n_f, m=m, m_dyn=m_dyn, q_bits=q), spec)
        raw = packet.to_bytes()
        received = unpack_chunk(raw)
        expected_frame1 = values[0].copy()
        expected_frame1[m_dyn:] = report.means[m_dyn:]
        frame1_ok = np.array_equal(received.frame1_codes, quantize(expected_frame1, spec))
        dyn_ok = np.array_equal(
            received.dynamic_codes, quantize(values[1:n_f, :m_dyn], spec).reshape(n_f - 1, m_dyn)
        )
        if not (frame1_ok and dyn_ok and received.dynamic_indices == tuple(range(m_dyn))):
            mismatches += 1
        if len(packets) < 50:
            packets.append(raw)

    # fuzz: every truncation point and every structurally detectable corruption
    silent = 0
    for raw in packets:
        for cut in range(len(raw)):
            try:
                unpack_chunk(raw[:cut])
                silent += 1
            except PacketError:
                pass
        for i in range(4):  # magic bytes
            b = bytearray(raw)
            b[i] ^= 0x5A
            try:
                unpack_chunk(bytes(b))
                silent += 1
            except PacketError:
                pass
        structural = [
            (10, b"\x00\x00"),  # n_f -> 0
            (10, (unpack_chunk(raw).n + 1).to_bytes(2, "big")),  # n_f > N
            (14, b"\x00"),  # Q -> 0
            (14, b"\x28"),  # Q -> 40
            (12, b"\x00\x00"),  # M -> 0
        ]
        for offset, payload in structural:
            b = bytearray(raw)
            b[offset : offset + len(payload)] = payload
            try:
                unpack_chunk(bytes(b))
                silent += 1
            except PacketError:
                pass
        try:
            unpack_chunk(raw + b"\x00")  # trailing garbage
            silent += 1
        except PacketError:
            pass

    ok = mismatches == 0 and silent == 0
    announce(5, "wire-round-trip", ok, f"(500 chunks bit-exact, fuzz silent decodes: {silent})")
    assert mismatches == 0
    assert silent == 0


def test_criterion_06_gradient_check():
    rng = np.random.default_rng(1006)
    hidden, depth, batch = 4, 3, 2
    worst = 0.0
    for _ in range(100):
        params = FeatureParams(
            w_x=rng.normal(0, 0.6, 4 * hidden),
            w_h=rng.normal(0, 0.6, (4 * hidden, hidden)),
            b=rng.normal(0, 0.6, 4 * hidden),
            w_out=rng.normal(0, 0.6, hidden),
            b_out=float(rng.normal()),
            mean=0.0,
            std=1.0,
        )
        windows = rng.normal(0, 1.0, (batch, depth))
        targets = rng.normal(0, 1.0, batch)
        _, grads = loss_and_gradients(params, windows, targets)
        step = 1e-5

        def numeric(name, idx):
            if name == "b_out":
                v0 = params.b_out
                params.b_out = v0 + step
                lp, _ = loss_and_gradients(params, windows, targets)
                params.b_out = v0 - step
                lm, _ = loss_and_gradients(params, windows, targets)
                params.b_out = v0
            else:
                arr = getattr(params, name)
                v0 = arr[idx]
                arr[idx] = v0 + step
                lp, _ = loss_and_gradients(params, windows, targets)
                arr[idx] = v0 - step
                lm, _ = loss_and_gradients(params, windows, targets)
                arr[idx] = v0
            return (lp - lm) / (2 * step)

        for name in ("w_x", "w_h", "b", "w_out"):
            arr = getattr(params, name)
            it = np.nditer(arr, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                num = numeric(name, idx)
                ana = grads[name][idx]
                worst = max(worst, abs(ana - num) / max(abs(ana) + abs(num), 1e-4))
        num = numeric("b_out", None)
        worst = max(worst, abs(grads["b_out"] - num) / max(abs(grads["b_out"]) + abs(num), 1e-4))
    ok = worst <= 1e-4
    announce(6, "gradient-check", ok, f"(100 draws, worst relative error {worst:.2e})")
    assert ok


MID_RATES = (8000, 16000, 32000, 48000)


def test_criterion_07_rate_trend(tmp_path):
    start = time.perf_counter()
    cfg = ExperimentConfig(
        rates=(4000,) + MID_RATES + (64000, 76800),
        seeds=tuple(range(1, 11)),
        schemes=(Scheme.PROPOSED, Scheme.UPPER_BOUND, Scheme.NO_SELECTION_NO_PREDICTION),
        synth=SynthSpec(features=47, frames=100, static_fraction=0.3),
        out_dir=str(tmp_path / "out"),
    )
    rows = sweep(cfg)
    assert all(r.error is None for r in rows)

    def seed_mean(scheme, rate):
        vals = [r.mean_psnr_db for r in rows if r.scheme is scheme and r.rate_bits == rate]
        assert len(vals) == len(cfg.seeds)
        return float(np.mean(vals))

    proposed = {r: seed_mean(Scheme.PROPOSED, r) for r in cfg.rates}
    upper = {r: seed_mean(Scheme.UPPER_BOUND, r) for r in cfg.rates}
    padded = {r: seed_mean(Scheme.NO_SELECTION_NO_PREDICTION, r) for r in cfg.rates}

    rates = list(cfg.rates)
    monotone = all(
        proposed[rates[i + 1]] >= proposed[rates[i]] - 0.2 for i in range(len(rates) - 1)
    )
    beats_benchmark = all(proposed[r] >= padded[r] for r in MID_RATES)
    top_gap = abs(upper[rates[-1]] - proposed[rates[-1]])
    converges = top_gap <= 0.1
    elapsed = time.perf_counter() - start
    ok = monotone and beats_benchmark and converges and elapsed < 120.0
    announce(
        7,
        "rate-trend",
        ok,
        f"(monotone@0.2dB: {monotone}, >=benchmark mid-range: {beats_benchmark}, "
        f"top gap {top_gap:.3f}dB, {elapsed:.1f}s)",
    )
    assert monotone
    assert beats_benchmark
    assert converges
    assert elapsed < 120.0


def test_criterion_08_error_accumulation(tmp_path):
    cfg = ExperimentConfig(
        synth=SynthSpec(features=47, frames=100, static_fraction=0.3),
        out_dir=str(tmp_path / "out"),
    )
    early, late = [], []
    for seed in range(1, 21):
        rep = frames_report(cfg, 60, (61, 80, 100), seed=seed)
        capped = np.minimum(rep.frame_psnr_db, 99.0)
        early.append(float(np.mean(capped[60:70])))  # frames 61..70
        late.append(float(np.mean(capped[90:100])))  # frames 91..100
    early_mean = float(np.mean(early))
    late_mean = float(np.mean(late))
    ok = late_mean <= early_mean
    announce(
        8,
        "error-accumulation",
        ok,
        f"(20 seeds: frames 61-70 {early_mean:.2f} dB vs frames 91-100 {late_mean:.2f} dB)",
    )
    assert ok


def test_criterion_09_static_padding_invariant():
    rng = np.random.default_rng(1009)
    failures = 0
    checked_static = 0
    for trial in range(20):
        seed = 2000 + trial
        trace = synth_trace(
            SynthSpec(features=16, frames=100, static_fraction=0.5, noise_std=0.02, seed=seed)
        )
        chunk = chunk_iter(trace, 100)[0]
        basis = make_basis(16, 16, 16, seed=seed)
        model = train(trace, range(16), PredictorConfig(seed=seed, epochs=30))
        bits = int(rng.integers(16 * 16 + 16 * 5 * 16, 26000))
        res = transmit_chunk(
            chunk,
            Scheme.PROPOSED,
            qspec=Q16,
            basis=basis,
            budget=LinkBudget.from_chunk_bits(bits),
            selector_cfg=SelectorConfig(0.01),
            model=model,
        )
        rep = classify(chunk, SelectorConfig(0.01))
        for s in rep.static_set:
            checked_static += 1
            expected = dequantize(quantize(float(rep.means[s]), Q16), Q16)
            col = res.reconstruction[:, s]
            if not (np.all(col == col[0]) and col[0] == expected):
                failures += 1
    ok = failures == 0 and checked_static > 0
    announce(
        9,
        "static-padding-invariant",
        ok,
        f"({checked_static} static columns constant and equal to dequantized mean, exactly)",
    )
    assert checked_static > 0
    assert failures == 0


def test_criterion_10_sweep_determinism(tmp_path):
    cfg = ExperimentConfig(
        rates=(4000, 16000, 76800),
        seeds=(1, 2),
        synth=SynthSpec(features=16, frames=100, static_fraction=0.25),
        epochs=60,
        basis_height=24,
        basis_width=24,
        out_dir="PLACEHOLDER",
    )
    cfg_path = tmp_path / "config.toml"
    cfg_path.write_text(config_to_toml(cfg), encoding="utf-8")

    digests = []
    for run in ("run_a", "run_b"):
        loaded = dataclasses.replace(load_config(cfg_path), out_dir=str(tmp_path / run))
        rows = sweep(loaded)
        out = tmp_path / run
        paths = [out / "sweep.csv", out / "sweep.svg"]
        paths += sorted((out / "frames").glob("*.csv"))
        digests.append(
            {p.relative_to(out).as_posix(): hashlib.sha256(p.read_bytes()).hexdigest() for p in paths}
        )
        assert rows
    ok = digests[0] == digests[1] and len(digests[0]) > 2
    announce(10, "sweep-determinism", ok, f"({len(digests[0])} files byte-identical across runs)")
    assert ok
