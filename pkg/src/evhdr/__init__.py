"""Event-to-HDR video toolkit.

Event stream formats and synchronization, frame-to-event simulation,
event spike tensors, dual-exposure HDR fusion, reference network kernels,
losses and metrics.
"""
from ._backend import BACKEND
from .esim import SimConfig, event_frame_oracle, integrate_events, simulate_events
from .event_core import Event, EventStream, TriggerTrack, slice_between_frames, slice_by_time, validate_stream
from .event_io import FrameSequence, align_triggers, load_frame_sequence, parse_csv_events, parse_evt1, write_evt1
from .hdr import HdrFrame, HdrFusionConfig, fuse_ldr_pair, simulate_ldr_pair, tone_map
from .metrics import MetricsReport, evaluate_sequences, rmse, ssim, tc_metric
from .voxelizer import VoxelGrid, VoxelSpec, batch_voxelize, build_spike_tensor

__version__ = "0.1.0"
