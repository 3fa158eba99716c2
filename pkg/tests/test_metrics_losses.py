import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evhdr.errors import GeometryMismatch, ImageTooSmall, LengthMismatch, ValidationError
from evhdr.esim import SimConfig, event_frame_oracle, simulate_log_frames, log_intensity
from evhdr.kernels import LossWeights, compute_losses, temporal_consistency_terms
from evhdr.metrics import evaluate_sequences, rmse, ssim, tc_metric
from evhdr.voxelizer import VoxelGrid, VoxelSpec, build_spike_tensor

from oracles import ssim_direct

CFG = SimConfig(S=0.2)


def oracle_grids(frames, B=3, dT=2000):
    h, w = frames.shape[1:]
    spec = VoxelSpec((w, h), B)
    return [event_frame_oracle(a, b, CFG, spec, t0=k * dT, dT=dT)
            for k, (a, b) in enumerate(zip(frames[:-1], frames[1:]))]


def random_grids(rng, n, shape, B=3, dT=2000):
    return [VoxelGrid(rng.poisson(0.5, (2 * B,) + shape).astype(float), (k * dT, dT)) for k in range(n)]


class TestRmse:
    def test_examples(self, rng):
        x = rng.uniform(size=(5, 5))
        assert rmse(x, x) == 0
        assert rmse(np.zeros((4, 4)), np.ones((4, 4))) == 1.0
        a = np.zeros((4, 4))
        b = a.copy()
        b[:2] = 1
        assert rmse(a, b) == pytest.approx(math.sqrt(0.5))

    def test_geometry(self):
        with pytest.raises(GeometryMismatch):
            rmse(np.zeros((2, 2)), np.zeros((2, 3)))

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**31))
    def test_symmetry_triangle(self, seed):
        rng = np.random.default_rng(seed)
        a, b, c = rng.uniform(size=(3, 6, 7))
        assert rmse(a, b) == rmse(b, a)
        assert rmse(a, c) <= rmse(a, b) + rmse(b, c) + 1e-12


class TestSsim:
    def test_identity(self, rng):
        x = rng.uniform(size=(20, 20))
        assert ssim(x, x) == pytest.approx(1.0, abs=1e-12)
        assert ssim(np.full((16, 16), 0.5), np.full((16, 16), 0.5)) == pytest.approx(1.0, abs=1e-12)

    def test_direct_oracle(self, rng):
        a = rng.uniform(size=(64, 64))
        b = rng.uniform(size=(64, 64))
        v = ssim(a, b)
        assert -0.2 < v < 0.35
        assert v == pytest.approx(ssim_direct(a, b), abs=1e-9)

    def test_structured_oracle(self, rng):
        a = np.clip(np.add.outer(np.linspace(0, 1, 24), np.linspace(0, 0.5, 30)) / 1.5, 0, 1)
        b = np.clip(a + rng.normal(0, 0.05, a.shape), 0, 1)
        assert ssim(a, b) == pytest.approx(ssim_direct(a, b), abs=1e-9)
        assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-15)

    def test_too_small(self):
        with pytest.raises(ImageTooSmall):
            ssim(np.zeros((10, 40)), np.zeros((10, 40)))


class TestTc:
    def test_static_empty(self):
        frames = np.full((3, 6, 6), 0.4)
        grids = [VoxelGrid(np.zeros((6, 6, 6)), (k * 2000, 2000)) for k in range(2)]
        assert tc_metric(frames, grids, CFG) == 0.0

    def test_static_nonzero_is_mean_square(self, rng):
        frames = np.full((3, 6, 6), 0.4)
        grids = random_grids(rng, 2, (6, 6))
        want = np.mean([np.mean(g.values ** 2) for g in grids])
        assert tc_metric(frames, grids, CFG) == pytest.approx(want)

    def test_zero_iff_grids_match_oracle(self, rng):
        frames = rng.uniform(0.05, 1, (4, 6, 6))
        grids = oracle_grids(frames)
        assert tc_metric(frames, grids, CFG) == 0.0
        bumped = grids[1].values.copy()
        bumped[0, 1, 1] += 1.0
        grids[1] = VoxelGrid(bumped, grids[1].window)
        assert tc_metric(frames, grids, CFG) > 0.0

    def test_simulated_pair_consistent(self):
        # two frames, no crossing lands on the closing frame time: observed grid == oracle grid
        rng = np.random.default_rng(11)
        for _ in range(20):
            frames = rng.uniform(0.05, 1, (2, 8, 8))
            logs = log_intensity(frames, CFG)
            stream, _ = simulate_log_frames(logs, [0, 2000], CFG)
            if np.any(stream.t == 2000):
                continue
            obs = build_spike_tensor(stream, 0, 2000, VoxelSpec((8, 8), 3))
            assert tc_metric(frames, [obs], CFG) == 0.0
            return
        pytest.fail("no sample without endpoint events")

    def test_consistent_beats_perturbed(self, rng):
        frames = rng.uniform(0.05, 1, (5, 8, 8))
        grids = oracle_grids(frames)
        noisy = np.clip(frames * rng.uniform(0.5, 1.5, frames.shape), 0, 1)
        assert tc_metric(frames, grids, CFG) < tc_metric(noisy, grids, CFG)

    def test_needs_grid_objects(self, rng):
        with pytest.raises(ValidationError):
            tc_metric(np.zeros((2, 4, 4)), [np.zeros((6, 4, 4))], CFG)

    def test_length(self, rng):
        with pytest.raises(LengthMismatch):
            tc_metric(np.zeros((3, 4, 4)), random_grids(rng, 1, (4, 4)), CFG)


class TestLosses:
    def test_perfect_is_zero(self, rng):
        frames = rng.uniform(0.05, 1, (3, 6, 6))
        assert tuple(compute_losses(frames, frames, oracle_grids(frames), CFG)) == (0.0, 0.0, 0.0, 0.0)

    def test_default_weights(self):
        w = LossWeights()
        assert (w.tau1, w.tau2) == (2.0, 0.2)

    def test_assembly(self, rng):
        recon = rng.uniform(size=(3, 6, 6))
        truth = rng.uniform(size=(3, 6, 6))
        grids = random_grids(rng, 2, (6, 6))
        perc = lambda a, b: float(np.mean((a - b) ** 2))
        t = compute_losses(recon, truth, grids, CFG, LossWeights(perceptual=perc))
        l1 = sum(np.mean(np.abs(a - b)) for a, b in zip(recon, truth))
        p = sum(perc(a, b) for a, b in zip(recon, truth))
        tc = sum(temporal_consistency_terms(recon, grids, CFG))
        assert t.l1 == pytest.approx(l1) and t.perceptual == pytest.approx(p) and t.tc == pytest.approx(tc)
        assert t.total == pytest.approx(l1 + 2 * p + 0.2 * tc)

    def test_static_truth_tc(self, rng):
        frames = np.full((3, 6, 6), 0.3)
        grids = random_grids(rng, 2, (6, 6))
        t = compute_losses(frames, frames, grids, CFG)
        assert t.tc == pytest.approx(sum(np.mean(g.values ** 2) for g in grids))
        assert t.l1 == 0 and t.total == pytest.approx(0.2 * t.tc)

    def test_negative_weight(self):
        with pytest.raises(ValidationError):
            LossWeights(tau1=-1)


class TestReport:
    def test_perfect(self, rng):
        frames = rng.uniform(0.05, 1, (5, 16, 16))
        rep = evaluate_sequences(frames, frames, oracle_grids(frames), CFG)
        assert len(rep.rows) == 5
        assert rep.summary["rmse"] == 0 and rep.summary["ssim"] == pytest.approx(1) and rep.summary["tc"] == 0
        lines = rep.to_csv().strip().split("\n")
        assert lines[0] == "frame,rmse,ssim,tc" and len(lines) == 7
        assert lines[1].endswith(",") and lines[-1].startswith("mean,")

    def test_domain_tag(self, rng):
        a = rng.uniform(0.05, 1, (2, 16, 16))
        b = rng.uniform(0.05, 1, (2, 16, 16))
        g = oracle_grids(a)
        tm = evaluate_sequences(a, b, g, CFG)
        lin = evaluate_sequences(a, b, g, CFG, domain="linear")
        assert tm.metadata["domain"] == "tonemapped" and lin.metadata["domain"] == "linear"
        assert tm.summary["rmse"] != lin.summary["rmse"]
        assert tm.summary["tc"] == lin.summary["tc"]
        doc = json.loads(lin.to_json())
        assert doc["metadata"]["lpips"] == "n/a" and len(doc["frames"]) == 2

    def test_without_grids(self, rng):
        a = rng.uniform(size=(3, 16, 16))
        rep = evaluate_sequences(a, a, None, CFG)
        assert all(r["tc"] is None for r in rep.rows) and rep.summary["tc"] is None

    def test_length(self, rng):
        with pytest.raises(LengthMismatch):
            evaluate_sequences(np.zeros((2, 16, 16)), np.zeros((3, 16, 16)), None, CFG)
