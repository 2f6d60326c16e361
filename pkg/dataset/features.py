"""
Per-item modality features.

Real text/image encoders are out of scope: features are either drawn from
keyed normal streams or loaded from a binary feature file.

File layout (little endian): header of three uint64 ``(N, d_T, d_V)``, then
one record per item holding d_T float32 text values followed by d_V float32
visual values.
"""
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .streams import FEATURES, keyed_rng

logger = logging.getLogger(__name__)

TEXT = 0
VISUAL = 1

HEADER_DTYPE = np.dtype('<u8')
VALUE_DTYPE = np.dtype('<f4')


@dataclass(frozen=True)
class ModalityBundle:
    text: np.ndarray
    visual: np.ndarray
    source: str  # 'synthetic' | 'file'

    def __post_init__(self):
        if self.text.ndim != 2 or self.visual.ndim != 2:
            raise ValueError("Modality features must be 2-D (items x dims)")
        if self.text.shape[0] != self.visual.shape[0]:
            raise ValueError(
                f"Text and visual features cover different item counts "
                f"({self.text.shape[0]} vs {self.visual.shape[0]})"
            )
        if not (np.isfinite(self.text).all() and np.isfinite(self.visual).all()):
            raise ValueError("Modality features contain non-finite entries")
        if self.source not in ('synthetic', 'file'):
            raise ValueError(f"Unknown feature source {self.source!r}")

    @property
    def num_items(self) -> int:
        return self.text.shape[0]

    @property
    def text_dim(self) -> int:
        return self.text.shape[1]

    @property
    def visual_dim(self) -> int:
        return self.visual.shape[1]


def synth_features(seed: int, text_dim: int, visual_dim: int, num_items: int) -> ModalityBundle:
    """Standard-normal vectors, one stream per (seed, item, modality)."""
    if text_dim < 1 or visual_dim < 1:
        raise ValueError(f"Feature dimensions must be >= 1, got d_T={text_dim}, d_V={visual_dim}")
    if num_items < 1:
        raise ValueError(f"Need at least one item, got {num_items}")

    text = np.empty((num_items, text_dim))
    visual = np.empty((num_items, visual_dim))
    for item in range(num_items):
        text[item] = keyed_rng(seed, FEATURES, item, TEXT).standard_normal(text_dim)
        visual[item] = keyed_rng(seed, FEATURES, item, VISUAL).standard_normal(visual_dim)
    return ModalityBundle(text=text, visual=visual, source='synthetic')


def save_features(path, bundle: ModalityBundle) -> None:
    path = Path(path)
    header = np.array([bundle.num_items, bundle.text_dim, bundle.visual_dim], dtype=HEADER_DTYPE)
    records = np.hstack([bundle.text, bundle.visual]).astype(VALUE_DTYPE)
    with path.open('wb') as handle:
        handle.write(header.tobytes())
        handle.write(records.tobytes())


def load_features(path, num_items: int = None) -> ModalityBundle:
    path = Path(path)
    raw = path.read_bytes()
    header_size = 3 * HEADER_DTYPE.itemsize
    if len(raw) < header_size:
        raise ValueError(f"{path} is too short to hold a feature header")
    n, text_dim, visual_dim = (int(v) for v in np.frombuffer(raw[:header_size], dtype=HEADER_DTYPE))
    expected = n * (text_dim + visual_dim) * VALUE_DTYPE.itemsize
    if len(raw) - header_size != expected:
        raise ValueError(f"{path}: header promises {expected} payload bytes, found {len(raw) - header_size}")
    if num_items is not None and n != num_items:
        raise ValueError(f"{path} holds features for {n} items, dataset has {num_items}")

    values = np.frombuffer(raw[header_size:], dtype=VALUE_DTYPE).reshape(n, text_dim + visual_dim)
    values = values.astype(np.float64)
    logger.info(f"Loaded {n} item features (d_T={text_dim}, d_V={visual_dim}) from {path}")
    return ModalityBundle(text=values[:, :text_dim], visual=values[:, text_dim:], source='file')
