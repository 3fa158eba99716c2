"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""
import json
import math
import time
import warnings

import numpy as np
import pytest

from evhdr.cli import main as cli_main
from evhdr.errors import AllSamplesSaturated
from evhdr.esim import SimConfig, integrate_events, log_intensity, simulate_events, simulate_log_frames
from evhdr.event_io import FrameSequence, parse_csv_events, parse_evt1, write_csv_events, write_evt1
from evhdr.hdr import HdrFusionConfig, fuse_ldr_pair, simulate_ldr_pair
from evhdr.kernels import (
    DeformableKernel,
    ExtractorParams,
    KeyFrameSchedule,
    LossWeights,
    attend,
    attention_probabilities,
    compute_losses,
    deformable_conv2d,
    finite_difference_check,
    keyframe_gate,
    temporal_consistency_terms,
)
from evhdr.kernels.gradcheck import attention_keys_case, bilinear_points_case, deform_offsets_case
from evhdr.voxelizer import VoxelGrid, VoxelSpec, build_spike_tensor
from evhdr.esim import event_frame_oracle

from conftest import random_stream
from oracles import dense_conv_oracle, global_attention, scan_ramp_crossings


@pytest.fixture
def report(capsys):
    def emit(number, title, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title} ({detail})")
        assert ok, detail
    return emit


def test_c01_voxel_mass_conservation(report):
    rng = np.random.default_rng(101)
    spec = VoxelSpec((346, 260), 5)
    t0, dT = 1_234_567, 33_333
    start = time.perf_counter()
    s = random_stream(rng, 10_000, geometry=spec.geometry, t_max=dT)
    s = type(s).from_columns(s.geometry, s.t + t0, s.x, s.y, s.q)
    mass = build_spike_tensor(s, t0, dT, spec).mass()
    elapsed = time.perf_counter() - start
    report(1, "voxelizer mass conservation", mass == 10_000 and elapsed < 1.0,
           f"mass={mass!r} for 10000 events in {elapsed:.3f}s")


def test_c02_simulator_correctness(report):
    cfg = SimConfig(S=0.2, log_eps=1e-3)
    l0 = math.log(100 / 65535 + cfg.log_eps)
    s, _ = simulate_log_frames(np.array([l0, l0 + 3 * cfg.S]).reshape(2, 1, 1), [0, 1_000_000], cfg)
    want = [333_333, 666_667, 1_000_000]
    ramp_ok = len(s) == 3 and all(e.q == 1 and abs(e.t - w) <= 1 for e, w in zip(s, want))

    rng = np.random.default_rng(202)
    mismatches = 0
    for _ in range(1000):
        a = rng.uniform(-6, 0)
        b = a + rng.uniform(-2, 2)
        ta = int(rng.integers(0, 1_000_000))
        tb = ta + int(rng.integers(1, 5000))
        got, _ = simulate_log_frames(np.array([a, b]).reshape(2, 1, 1), [ta, tb], cfg)
        oracle = scan_ramp_crossings(a, b, ta, tb, cfg.S)
        if len(got) != len(oracle) or any(e.q != q or abs(e.t - t) > 1 for e, (t, q) in zip(got, oracle)):
            mismatches += 1
    report(2, "simulator crossings vs brute-force oracle", ramp_ok and mismatches == 0,
           f"3S ramp times={s.t.tolist()}, oracle mismatches={mismatches}/1000")


def test_c03_integration_round_trip(report):
    rng = np.random.default_rng(303)
    cfg = SimConfig(S=0.2)
    worst = 0.0
    start = time.perf_counter()
    for _ in range(10):
        frames = FrameSequence((32, 32), np.arange(10) * 2000, rng.integers(0, 4096, (10, 32, 32)), 12)
        logs = log_intensity(frames.normalized(), cfg)
        rec = integrate_events(simulate_events(frames, cfg), logs[0], cfg)
        worst = max(worst, float(np.max(np.abs(rec - logs[-1]))))
    elapsed = time.perf_counter() - start
    report(3, "integrate(simulate(F)) within S of log F_last", worst <= cfg.S and elapsed < 1.0,
           f"max |err|={worst:.4f} <= {cfg.S}, 10 sequences in {elapsed:.3f}s")


def test_c04_deformable_zero_offset_oracle(report):
    rng = np.random.default_rng(404)
    worst = 0.0
    for _ in range(100):
        cin, cout = rng.integers(1, 4, 2)
        F = rng.normal(size=(cin, 16, 16))
        w = rng.normal(size=(cout, cin, 3, 3))
        out = deformable_conv2d(F, DeformableKernel(w, np.zeros((9, 2, 16, 16))))
        worst = max(worst, float(np.max(np.abs(out - dense_conv_oracle(F, w)))))
    report(4, "zero-offset deformable conv equals dense conv", worst <= 1e-6,
           f"max abs diff={worst:.2e} over 100 cases")


def test_c05_gradient_checks(report):
    rng = np.random.default_rng(505)
    start = time.perf_counter()
    pts = np.stack([rng.uniform(0.1, 6.9, 60), rng.uniform(0.1, 6.9, 60)], axis=1)
    e_bil = finite_difference_check(bilinear_points_case(rng.normal(size=(3, 8, 8)), pts), epsilon=1e-6)
    e_off = finite_difference_check(
        deform_offsets_case(rng.normal(size=(2, 8, 8)), rng.normal(size=(2, 2, 3, 3)),
                            rng.uniform(-1.5, 1.5, (9, 2, 8, 8))), epsilon=1e-6)
    e_att = finite_difference_check(
        attention_keys_case(rng.normal(size=(3, 2, 6, 6)), rng.normal(size=(3, 4, 6, 6)), 1, 2), epsilon=1e-6)
    elapsed = time.perf_counter() - start
    worst = max(e_bil, e_off, e_att)
    report(5, "analytic gradients vs central differences", worst < 1e-4 and elapsed < 10.0,
           f"bilinear={e_bil:.1e} offsets={e_off:.1e} keys={e_att:.1e} in {elapsed:.2f}s")


def test_c06_attention_properties(report):
    rng = np.random.default_rng(606)
    P, _ = attention_probabilities(rng.normal(size=(3, 8, 12, 10)), 1, 3)
    norm_dev = float(np.max(np.abs(P.sum(axis=(0, 1)) - 1.0)))
    F = rng.normal(size=(3, 4, 8, 8))
    keys = rng.normal(size=(3, 5, 8, 8)) * 0.5
    local, _, _ = attend(F, keys, 1, 8)
    glob_dev = float(np.max(np.abs(local - global_attention(F, keys, 1))))
    report(6, "attention normalization and global-attention oracle", norm_dev <= 1e-9 and glob_dev <= 1e-8,
           f"sum deviation={norm_dev:.1e}, vs global={glob_dev:.1e}")


def test_c07_keyframe_schedule(report):
    rng = np.random.default_rng(707)
    params = ExtractorParams.random(5, 8, 4, rng=rng)
    sched = KeyFrameSchedule(5)
    E = rng.normal(size=(10, 32, 32))
    F = rng.normal(size=(8, 8, 8))
    applied = []
    for t in range(31):
        out = keyframe_gate(F, E, t, sched, params)
        if np.array_equal(out, F) and out.tobytes() == F.tobytes():
            continue
        applied.append(t)
    identity_elsewhere = all(keyframe_gate(F, E, t, sched, params) is F for t in range(31) if t % 5)
    ok = applied == [0, 5, 10, 15, 20, 25, 30] and identity_elsewhere
    report(7, "key-frame gate on multiples of 5 only", ok, f"applied at {applied}")


def test_c08_hdr_round_trip(report):
    rng = np.random.default_rng(808)
    cfg = HdrFusionConfig(alpha=0.1)
    r = rng.uniform(0, 0.97, (128, 128))
    r[0, :4] = [0.05, 0.5, 0.0, 0.97]
    bright, dark = simulate_ldr_pair(r, cfg)
    with warnings.catch_warnings():
        warnings.simplefilter("error", AllSamplesSaturated)
        got = fuse_ldr_pair(bright, dark, cfg).radiance()
    lsb = 1 / cfg.ldr_max
    err = np.abs(got - r) - (0.005 * r + lsb)
    sat = bright >= cfg.saturation * cfg.ldr_max
    dark_only = np.abs(got - dark / cfg.ldr_max)[sat]
    ok = bool(np.all(err <= 0)) and sat.any() and float(dark_only.max()) <= 0.5 / 65535 + 1e-12
    report(8, "HDR fusion round trip (alpha=0.1)", ok,
           f"worst margin={err.max():.2e}, {int(sat.sum())} bright-saturated pixels from dark path")


def test_c09_loss_assembly(report):
    rng = np.random.default_rng(909)
    recon = rng.uniform(size=(4, 8, 8))
    truth = rng.uniform(size=(4, 8, 8))
    grids = [VoxelGrid(rng.poisson(0.5, (10, 8, 8)).astype(float), (k * 2000, 2000)) for k in range(3)]
    perc = lambda a, b: float(np.mean(np.abs(np.diff(a) - np.diff(b))))
    t = compute_losses(recon, truth, grids, SimConfig(), LossWeights(perceptual=perc))
    want = t.l1 + 2 * t.perceptual + 0.2 * t.tc
    l1 = sum(float(np.mean(np.abs(a - b))) for a, b in zip(recon, truth))
    tc = sum(temporal_consistency_terms(recon, grids, SimConfig()))
    ok_total = math.isclose(t.total, want, rel_tol=1e-12) and math.isclose(t.l1, l1) and math.isclose(t.tc, tc)
    spec = VoxelSpec((8, 8), 5)
    consistent = [event_frame_oracle(a, b, SimConfig(), spec, t0=k * 2000) for k, (a, b) in
                  enumerate(zip(truth[:-1], truth[1:]))]
    zero = compute_losses(truth, truth, consistent, SimConfig())
    ok = ok_total and tuple(zero) == (0.0, 0.0, 0.0, 0.0) and LossWeights().tau1 == 2.0 and LossWeights().tau2 == 0.2
    report(9, "loss total = l1 + 2 perceptual + 0.2 tc", ok, f"total={t.total:.6f}, perfect={tuple(zero)}")


def test_c10_format_round_trips(report):
    rng = np.random.default_rng(1010)
    failures = 0
    for _ in range(1000):
        s = random_stream(rng, int(rng.integers(0, 60)), geometry=(346, 260), t_max=2**40)
        b = write_evt1(s)
        text = write_csv_events(s)
        if parse_evt1(b) != s or write_evt1(parse_evt1(b)) != b:
            failures += 1
        elif write_csv_events(parse_csv_events(text, s.geometry)) != text:
            failures += 1
    report(10, "EVT1 and CSV bit-exact round trips", failures == 0, f"{failures}/1000 failures")


def test_c11_end_to_end_smoke(report, tmp_path, capsys):
    start = time.perf_counter()
    codes = [cli_main(["pipeline", "--seed", "0", "--out", str(tmp_path / name)]) for name in ("a", "b")]
    elapsed = time.perf_counter() - start
    capsys.readouterr()
    a, b = tmp_path / "a", tmp_path / "b"
    same = codes == [0, 0] and all(
        (a / rel).read_bytes() == (b / rel).read_bytes()
        for rel in ["manifest.json"] + list(json.loads((a / "manifest.json").read_text())["outputs"])
    )
    summary = json.loads((a / "report.json").read_text())["summary"] if codes[0] == 0 else {}
    finite = bool(summary) and all(math.isfinite(summary[k]) for k in ("rmse", "ssim", "tc"))
    report(11, "64x64 synthetic pipeline at 500 fps", same and finite and elapsed / 2 < 60,
           f"{elapsed / 2:.2f}s per run, rmse={summary.get('rmse', float('nan')):.4f} "
           f"ssim={summary.get('ssim', float('nan')):.4f} tc={summary.get('tc', float('nan')):.4f}, "
           f"byte-identical={same}")
