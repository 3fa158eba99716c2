"""Command-line driver: ``evhdr <command> [--config PATH] [--set key=value ...]``.

Commands
    simulate         frames manifest -> events.evt1
    voxelize         events + frames manifest (triggers) -> grids.vox1
    fuse-hdr         bright/dark PGM pair -> hdr.pgm (+ sidecar)
    tonemap          hdr.pgm -> tonemapped.pgm (8-bit)
    kernels-forward  grids.vox1 [+ weights] -> recon/ frames
    metrics          recon + truth frames [+ grids] -> report.csv / report.json
    pipeline         simulate -> voxelize -> kernels-forward -> metrics, on the
                     configured frames or a synthetic moving-gradient scene

Every run writes ``manifest.json`` into the output directory with the
config hash, toolkit version and sha256 of each artifact.  Exit status is
0 on success, 1 for invalid configuration or inputs, 2 when a stage fails.
"""
from __future__ import annotations

import argparse
import copy
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, EvhdrError, StageError, ValidationError
from .esim import SimConfig, simulate_events
from .event_io import FrameSequence, load_frame_sequence, read_events, read_pgm, save_frame_sequence, write_evt1, write_pgm
from .hdr import HdrFusionConfig, fuse_ldr_pair, read_hdr_frame, tone_map, write_hdr_frame
from .kernels.losses import LossWeights, compute_losses
from .kernels.model import ReconstructionModel
from .kernels.weights import load_weights, save_weights
from .metrics import evaluate_sequences
from .voxelizer import VoxelSpec, batch_voxelize, parse_vox1, write_vox1

COMMANDS = ("simulate", "voxelize", "fuse-hdr", "tonemap", "kernels-forward", "metrics", "pipeline")

DEFAULTS = {
    "inputs": {
        "events": None, "frames": None, "weights": None, "bright": None, "dark": None,
        "hdr": None, "grids": None, "recon": None, "truth": None,
    },
    "voxel": {"B": 5},
    "sim": {"S": 0.2, "log_eps": 1e-3, "S_pos": None, "S_neg": None},
    "fusion": {"alpha": 0.1, "saturation": 0.98, "ldr_bit_depth": 12, "hdr_bit_depth": 16},
    "kernels": {"channels": 32, "downsample": 4, "levels": 3, "key_dim": 8, "radius": 2,
                "n_frames": 3, "period": 5},
    "loss": {"tau1": 2.0, "tau2": 0.2},
    "metrics": {"domain": "tonemapped"},
    "scene": {"size": 64, "frames": 12, "fps": 500, "bit_depth": 12, "wavelength": 32.0,
              "speed": 1.5, "contrast": 3.0},
    "seed": 0,
    "out": "evhdr_out",
}

# inputs each command cannot run without
REQUIRED = {
    "simulate": ["frames"],
    "voxelize": ["events", "frames"],
    "fuse-hdr": ["bright", "dark"],
    "tonemap": ["hdr"],
    "kernels-forward": ["grids"],
    "metrics": ["recon", "truth"],
    "pipeline": [],
}

RECON_BIT_DEPTH = 16


# --- configuration ---------------------------------------------------------


def parse_override(text):
    if "=" not in text:
        raise ConfigError(text, "override must look like key=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def merge(base, doc, prefix=""):
    for key, value in doc.items():
        path = f"{prefix}{key}"
        if key not in base:
            raise ConfigError(path, "is not a known setting")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(path, "must be an object")
            merge(base[key], value, path + ".")
        else:
            base[key] = value


def _number(cfg, path, kind=float, minimum=None, exclusive=False, optional=False):
    section, key = path.split(".")
    v = cfg[section][key]
    if v is None and optional:
        return
    ok = isinstance(v, (int, float)) and not isinstance(v, bool)
    if kind is int:
        ok = ok and float(v).is_integer()
    if not ok:
        raise ConfigError(path, "must be an integer" if kind is int else "must be a number")
    if minimum is not None and (v <= minimum if exclusive else v < minimum):
        raise ConfigError(path, f"must be {'>' if exclusive else '≥'} {minimum}")
    cfg[section][key] = kind(v)


def validate_config(cfg):
    """Type-check and normalize in place; errors carry the dotted field path."""
    _number(cfg, "voxel.B", int, 2)
    for k in ("S", "log_eps"):
        _number(cfg, f"sim.{k}", float, 0, exclusive=True)
    for k in ("S_pos", "S_neg"):
        _number(cfg, f"sim.{k}", float, 0, exclusive=True, optional=True)
    _number(cfg, "fusion.alpha", float, 0, exclusive=True)
    _number(cfg, "fusion.saturation", float, 0, exclusive=True)
    for k in ("ldr_bit_depth", "hdr_bit_depth"):
        _number(cfg, f"fusion.{k}", int, 8)
    for k in ("channels", "downsample", "levels", "key_dim", "n_frames", "period"):
        _number(cfg, f"kernels.{k}", int, 1)
    _number(cfg, "kernels.radius", int, 0)
    ds = cfg["kernels"]["downsample"]
    if ds & (ds - 1):
        raise ConfigError("kernels.downsample", "must be a power of two")
    if cfg["kernels"]["n_frames"] % 2 == 0:
        raise ConfigError("kernels.n_frames", "must be odd")
    for k in ("tau1", "tau2"):
        _number(cfg, f"loss.{k}", float, 0)
    if cfg["metrics"]["domain"] not in ("tonemapped", "linear"):
        raise ConfigError("metrics.domain", "must be 'tonemapped' or 'linear'")
    _number(cfg, "scene.size", int, 16)
    _number(cfg, "scene.frames", int, 3)
    _number(cfg, "scene.fps", float, 0, exclusive=True)
    _number(cfg, "scene.bit_depth", int, 8)
    if cfg["scene"]["bit_depth"] > 16:
        raise ConfigError("scene.bit_depth", "must be ≤ 16")
    for k in ("wavelength", "speed", "contrast"):
        _number(cfg, f"scene.{k}", float)
    if not (isinstance(cfg["seed"], int) and not isinstance(cfg["seed"], bool) and cfg["seed"] >= 0):
        raise ConfigError("seed", "must be a non-negative integer")
    if not isinstance(cfg["out"], str) or not cfg["out"]:
        raise ConfigError("out", "must be a directory path")
    for key, value in cfg["inputs"].items():
        if value is not None and not isinstance(value, str):
            raise ConfigError(f"inputs.{key}", "must be a path")

    # module-level invariants (their messages already name the field)
    SimConfig(**cfg["sim"])
    HdrFusionConfig(**cfg["fusion"])
    LossWeights(**cfg["loss"])
    return cfg


def check_inputs(cfg, command):
    for key in REQUIRED[command]:
        if cfg["inputs"][key] is None:
            raise ConfigError(f"inputs.{key}", f"is required by '{command}'")
    for key, value in cfg["inputs"].items():
        if value is not None and not Path(value).exists():
            raise ConfigError(f"inputs.{key}", f"does not exist: {value}")


def load_config(args):
    cfg = copy.deepcopy(DEFAULTS)
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise ConfigError("--config", f"does not exist: {path}")
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError("--config", f"is not valid JSON ({exc})") from None
        if not isinstance(doc, dict):
            raise ConfigError("--config", "must hold a JSON object")
        merge(cfg, doc)
    for text in args.set or []:
        key, value = parse_override(text)
        merge(cfg, _nest(key, value))
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.out is not None:
        cfg["out"] = args.out
    if args.linear:
        cfg["metrics"]["domain"] = "linear"
    return validate_config(cfg)


def _nest(key, value):
    doc = value
    for part in reversed(key.split(".")):
        doc = {part: doc}
    return doc


def config_hash(cfg):
    hashed = {k: v for k, v in cfg.items() if k != "out"}
    text = json.dumps(hashed, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest(), hashed


# --- stage helpers ---------------------------------------------------------


class Run:
    """Output directory plus the list of artifacts written so far."""

    def __init__(self, cfg, command):
        self.cfg = cfg
        self.command = command
        self.out = Path(cfg["out"])
        self.out.mkdir(parents=True, exist_ok=True)
        self.artifacts = []

    def path(self, name):
        p = self.out / name
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def add(self, *paths):
        for p in paths:
            self.artifacts.append(Path(p))

    def write_bytes(self, name, data):
        p = self.path(name)
        p.write_bytes(data)
        self.add(p)
        return p

    def write_text(self, name, text):
        p = self.path(name)
        p.write_text(text, encoding="utf-8")
        self.add(p)
        return p

    def add_frames(self, manifest):
        doc = json.loads(Path(manifest).read_text(encoding="utf-8"))
        self.add(manifest, *(Path(manifest).parent / f["path"] for f in doc["frames"]))

    def finish(self):
        digest, hashed = config_hash(self.cfg)
        outputs = {}
        for p in sorted(set(self.artifacts)):
            outputs[p.relative_to(self.out).as_posix()] = hashlib.sha256(p.read_bytes()).hexdigest()
        doc = {
            "toolkit": "evhdr",
            "version": __version__,
            "command": self.command,
            "config_sha256": digest,
            "config": hashed,
            "outputs": outputs,
        }
        p = self.out / "manifest.json"
        p.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return p


def stage(name):
    def wrap(fn):
        def run(*args, **kwargs):
            try:
                return fn(*args, **kwargs)
            except StageError:
                raise
            except Exception as exc:  # noqa: BLE001 - every failure is reported with its stage
                raise StageError(name, exc) from exc
        run.__name__ = fn.__name__
        return run
    return wrap


def sim_config(cfg):
    return SimConfig(**cfg["sim"])


def build_model(cfg, bins):
    k = cfg["kernels"]
    return ReconstructionModel.random(bins=bins, channels=k["channels"], downsample=k["downsample"],
                                levels=k["levels"], key_dim=k["key_dim"], radius=k["radius"],
                                n_frames=k["n_frames"], period=k["period"], seed=cfg["seed"])


def synthetic_scene(cfg) -> FrameSequence:
    """Sinusoidal log-intensity gradient drifting diagonally across the frame."""
    sc = cfg["scene"]
    n, size, depth = sc["frames"], sc["size"], sc["bit_depth"]
    dt = int(round(1e6 / sc["fps"]))
    ts = np.arange(n, dtype=np.int64) * dt
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    full = 2 ** depth - 1
    frames = []
    for k in range(n):
        phase = 2 * np.pi * (xx + 0.5 * yy - sc["speed"] * k) / sc["wavelength"]
        level = 0.5 + 0.5 * np.sin(phase)
        frames.append(np.rint(full * np.exp(-sc["contrast"] * (1.0 - level))))
    return FrameSequence((size, size), ts, np.stack(frames).astype(np.uint16), depth)


def recon_sequence(recon, timestamps) -> FrameSequence:
    full = 2 ** RECON_BIT_DEPTH - 1
    vals = np.clip(np.rint(np.asarray(recon) * full), 0, full).astype(np.uint16)
    h, w = vals.shape[1:]
    return FrameSequence((w, h), np.asarray(timestamps, np.int64), vals, RECON_BIT_DEPTH)


def align_for_metrics(recon: FrameSequence, truth: FrameSequence, grids):
    """Match truth frames and interval grids to reconstructed frames by time.

    Truth frames are those with the same timestamps as the reconstructions;
    the grid for the pair ``(k, k + 1)`` is the one whose window spans
    exactly ``[t_k, t_{k+1})``.
    """
    index = {t: i for i, t in enumerate(truth.timestamps.tolist())}
    rts = recon.timestamps.tolist()
    missing = [t for t in rts if t not in index]
    if missing:
        raise ValidationError(f"no ground-truth frame at t={missing[0]}")
    truth_lin = truth.normalized()[[index[t] for t in rts]]
    picked = None
    if grids is not None:
        by_window = {tuple(g.window): g for g in grids}
        picked = []
        for a, b in zip(rts[:-1], rts[1:]):
            if (a, b - a) not in by_window:
                raise ValidationError(f"no voxel grid covers [{a}, {b})")
            picked.append(by_window[(a, b - a)])
    return recon.normalized(), truth_lin, picked


# --- commands --------------------------------------------------------------


@stage("simulate")
def do_simulate(run, frames=None):
    frames = frames or load_frame_sequence(run.cfg["inputs"]["frames"])
    stream = simulate_events(frames, sim_config(run.cfg))
    run.write_bytes("events.evt1", write_evt1(stream))
    return stream


@stage("voxelize")
def do_voxelize(run, stream=None, frames=None):
    inputs = run.cfg["inputs"]
    stream = stream or read_events(inputs["events"])
    frames = frames or load_frame_sequence(inputs["frames"])
    spec = VoxelSpec(stream.geometry, run.cfg["voxel"]["B"])
    data = write_vox1(batch_voxelize(stream, frames.timestamps, spec))
    run.write_bytes("grids.vox1", data)
    # downstream stages see exactly what was written (float32 values)
    return parse_vox1(data)


@stage("kernels-forward")
def do_forward(run, grids=None):
    inputs = run.cfg["inputs"]
    grids = grids or parse_vox1(Path(inputs["grids"]).read_bytes())
    if not grids:
        raise ValidationError("no voxel grids to reconstruct from")
    bins = grids[0].B
    if inputs["weights"]:
        params, meta = load_weights(inputs["weights"])
        model = ReconstructionModel.from_dict(params, meta)
        if model.extractor.bins != bins:
            raise ValidationError(f"weights expect B={model.extractor.bins}, grids have B={bins}")
    else:
        model = build_model(run.cfg, bins)
        manifest = save_weights(model.to_dict(), run.path("model.json"), model.meta())
        run.add(manifest, manifest.with_suffix(".bin"))
    recon = model.forward(grids)
    seq = recon_sequence(recon, [g.window[0] + g.window[1] for g in grids])
    run.add_frames(save_frame_sequence(seq, run.path("recon"), "recon"))
    return seq


@stage("metrics")
def do_metrics(run, recon=None, truth=None, grids=None):
    cfg, inputs = run.cfg, run.cfg["inputs"]
    recon = recon or load_frame_sequence(inputs["recon"])
    truth = truth or load_frame_sequence(inputs["truth"])
    if grids is None and inputs["grids"]:
        grids = parse_vox1(Path(inputs["grids"]).read_bytes())
    rec, tru, picked = align_for_metrics(recon, truth, grids)
    sim = sim_config(cfg)
    source = inputs["truth"] or inputs["frames"]
    name = Path(source).stem if source else "synthetic"
    report = evaluate_sequences(rec, tru, picked, sim, domain=cfg["metrics"]["domain"],
                                sequence_id=name)
    if picked is not None and len(rec) >= 2:
        w = cfg["loss"]
        terms = compute_losses(rec, tru, picked, sim, LossWeights(w["tau1"], w["tau2"]))
        report.metadata["loss"] = terms._asdict()
    run.write_text("report.csv", report.to_csv())
    run.write_text("report.json", report.to_json())
    return report


@stage("fuse-hdr")
def do_fuse(run):
    inputs = run.cfg["inputs"]
    cfg = HdrFusionConfig(**run.cfg["fusion"])
    frame = fuse_ldr_pair(read_pgm(inputs["bright"]), read_pgm(inputs["dark"]), cfg)
    p = write_hdr_frame(frame, run.path("hdr.pgm"))
    run.add(p, p.with_suffix(".json"))
    return frame


@stage("tonemap")
def do_tonemap(run, frame=None):
    frame = frame or read_hdr_frame(run.cfg["inputs"]["hdr"])
    run.add(write_pgm(run.path("tonemapped.pgm"), tone_map(frame), maxval=255))


def do_pipeline(run):
    cfg, inputs = run.cfg, run.cfg["inputs"]
    if inputs["frames"]:
        frames = stage("load-frames")(load_frame_sequence)(inputs["frames"])
    else:
        frames = stage("scene")(synthetic_scene)(cfg)
        run.add_frames(save_frame_sequence(frames, run.path("scene"), "scene"))
    stream = do_simulate(run, frames)
    grids = do_voxelize(run, stream, frames)
    recon = do_forward(run, grids)
    # TC pairs reconstructions k, k+1 with the grid spanning their timestamps
    do_metrics(run, recon, frames, grids)
    if inputs["bright"] and inputs["dark"]:
        do_tonemap(run, do_fuse(run))


HANDLERS = {
    "simulate": do_simulate,
    "voxelize": do_voxelize,
    "fuse-hdr": do_fuse,
    "tonemap": do_tonemap,
    "kernels-forward": do_forward,
    "metrics": do_metrics,
    "pipeline": do_pipeline,
}


def build_parser():
    ap = argparse.ArgumentParser(prog="evhdr", description="Event-to-HDR video toolkit")
    ap.add_argument("--version", action="version", version=f"evhdr {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", metavar="PATH", help="JSON config file")
        p.add_argument("--out", metavar="DIR", help="output directory (overrides config 'out')")
        p.add_argument("--seed", type=int, metavar="N", help="seed for all randomness")
        p.add_argument("--linear", action="store_true", help="score RMSE/SSIM on linear radiance")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config value by dotted key (repeatable)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        check_inputs(cfg, args.command)
    except ValidationError as exc:
        print(f"evhdr: invalid configuration: {exc}", file=sys.stderr)
        return 1
    try:
        run = Run(cfg, args.command)
        HANDLERS[args.command](run)
        manifest = run.finish()
    except StageError as exc:
        cause = exc.__cause__
        code = 1 if isinstance(cause, ValidationError) else 2
        print(f"evhdr: {exc}", file=sys.stderr)
        return code
    except (EvhdrError, OSError) as exc:
        print(f"evhdr: {exc}", file=sys.stderr)
        return 2
    print(manifest)
    return 0


if __name__ == "__main__":
    sys.exit(main())
