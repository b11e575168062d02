"""Python bindings for the snore detection and nudging core."""

import json

from ._core import (
    CHUNK_SAMPLES,
    SAMPLE_RATE,
    ConfigError,
    CorruptModel,
    DimensionError,
    MalformedFrame,
    NudgeError,
    RangeError,
    SnoreModel,
    StartupError,
    UnsupportedFormat,
    compute_loudness,
    compute_mfcc,
    dct_ii,
    decode_frame,
    encode_nudge,
    read_wav,
    synthetic_corpus,
    train_synthetic,
    vote,
    write_wav,
)
from . import _core

__all__ = [
    "CHUNK_SAMPLES",
    "SAMPLE_RATE",
    "ConfigError",
    "CorruptModel",
    "DimensionError",
    "MalformedFrame",
    "NudgeError",
    "RangeError",
    "SnoreModel",
    "StartupError",
    "UnsupportedFormat",
    "compute_loudness",
    "compute_mfcc",
    "dct_ii",
    "decode_frame",
    "encode_nudge",
    "read_wav",
    "replay",
    "synthetic_corpus",
    "train_synthetic",
    "validate_config",
    "vote",
    "write_wav",
]


def validate_config(config):
    """Check a config dict; returns it with defaults filled in."""
    return json.loads(_core.validate_config(json.dumps(config)))


def replay(samples, config):
    """Run samples through the pipeline on a simulated clock.

    Returns a dict with session_id, counters, events and nudge latencies.
    """
    return json.loads(_core.replay(samples, json.dumps(config)))
