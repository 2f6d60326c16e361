"""
Hyper-parameters and learnable tensors of the factor-attention recommender.
"""
import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, Iterator, Tuple

import numpy as np

from dataset.streams import INIT, keyed_rng

# Attention produces one weight per scoring channel: ID, text, visual.
CHANNELS = 3

PARAM_NAMES = (
    'user_embedding',
    'item_embedding',
    'text_w1', 'text_b1', 'text_w2', 'text_b2',
    'visual_w1', 'visual_b1', 'visual_w2', 'visual_b2',
    'attn_w1', 'attn_b1', 'attn_w2', 'attn_b2',
)


@dataclass(frozen=True)
class HyperParams:
    dim: int = 32
    factors: int = 4
    text_dim: int = 64
    visual_dim: int = 64
    text_hidden: int = 64
    visual_hidden: int = 64
    attention_hidden: int = 32
    negatives: int = 4
    margin: float = 1.0
    dcor_weight: float = 0.01
    weight_decay: float = 1e-5
    lr: float = 1e-3
    dropout: float = 0.2
    local_epochs: int = 2
    batch_size: int = 256

    def __post_init__(self):
        dims = ('dim', 'factors', 'text_dim', 'visual_dim', 'text_hidden',
                'visual_hidden', 'attention_hidden', 'negatives', 'batch_size')
        for name in dims:
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.dim % self.factors:
            raise ValueError(f"factors ({self.factors}) must divide dim ({self.dim})")
        if self.dcor_weight < 0 or self.weight_decay < 0:
            raise ValueError("dcor_weight and weight_decay must be >= 0")
        if self.lr <= 0:
            raise ValueError(f"lr must be > 0, got {self.lr}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.local_epochs < 0:
            raise ValueError(f"local_epochs must be >= 0, got {self.local_epochs}")

    @property
    def factor_dim(self) -> int:
        return self.dim // self.factors

    def as_dict(self) -> dict:
        return asdict(self)


def param_shapes(hyper: HyperParams, num_users: int, num_items: int) -> Dict[str, Tuple[int, ...]]:
    d, df = hyper.dim, hyper.factor_dim
    return {
        'user_embedding': (num_users, d),
        'item_embedding': (num_items, d),
        'text_w1': (hyper.text_hidden, hyper.text_dim),
        'text_b1': (hyper.text_hidden,),
        'text_w2': (d, hyper.text_hidden),
        'text_b2': (d,),
        'visual_w1': (hyper.visual_hidden, hyper.visual_dim),
        'visual_b1': (hyper.visual_hidden,),
        'visual_w2': (d, hyper.visual_hidden),
        'visual_b2': (d,),
        'attn_w1': (hyper.attention_hidden, 4 * df),
        'attn_b1': (hyper.attention_hidden,),
        'attn_w2': (CHANNELS, hyper.attention_hidden),
        'attn_b2': (CHANNELS,),
    }


class ModelParams:
    """
    Named float64 tensors in PARAM_NAMES order; the unit exchanged in a round.

    Arithmetic helpers always return new objects, so a broadcast global model
    is never mutated by a client.
    """

    def __init__(self, tensors: Dict[str, np.ndarray]):
        missing = set(PARAM_NAMES) - set(tensors)
        if missing:
            raise ValueError(f"Missing parameter tensors: {sorted(missing)}")
        self.tensors = {name: np.asarray(tensors[name], dtype=np.float64) for name in PARAM_NAMES}

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def __iter__(self) -> Iterator[str]:
        return iter(PARAM_NAMES)

    def items(self):
        return ((name, self.tensors[name]) for name in PARAM_NAMES)

    def shapes(self) -> Dict[str, Tuple[int, ...]]:
        return {name: tuple(t.shape) for name, t in self.items()}

    def copy(self) -> 'ModelParams':
        return ModelParams({name: t.copy() for name, t in self.items()})

    def zeros_like(self) -> 'ModelParams':
        return ModelParams({name: np.zeros_like(t) for name, t in self.items()})

    def _check_shapes(self, other: 'ModelParams'):
        if self.shapes() != other.shapes():
            mismatched = [n for n in PARAM_NAMES if self[n].shape != other[n].shape]
            raise ValueError(f"Parameter shape mismatch in {mismatched}")

    def __add__(self, other: 'ModelParams') -> 'ModelParams':
        self._check_shapes(other)
        return ModelParams({name: t + other[name] for name, t in self.items()})

    def __sub__(self, other: 'ModelParams') -> 'ModelParams':
        self._check_shapes(other)
        return ModelParams({name: t - other[name] for name, t in self.items()})

    def scaled(self, factor: float) -> 'ModelParams':
        return ModelParams({name: t * factor for name, t in self.items()})

    def flatten(self) -> np.ndarray:
        return np.concatenate([t.ravel() for _, t in self.items()])

    @classmethod
    def from_flat(cls, vector: np.ndarray, shapes: Dict[str, Tuple[int, ...]]) -> 'ModelParams':
        tensors, offset = {}, 0
        for name in PARAM_NAMES:
            size = int(np.prod(shapes[name], dtype=np.int64))
            tensors[name] = np.asarray(vector[offset:offset + size], dtype=np.float64).reshape(shapes[name])
            offset += size
        if offset != len(vector):
            raise ValueError(f"Flat vector has {len(vector)} entries, shapes need {offset}")
        return cls(tensors)

    @property
    def num_parameters(self) -> int:
        return sum(t.size for _, t in self.items())

    @property
    def payload_bytes(self) -> int:
        """Size of one float32 transfer of every parameter."""
        return 4 * self.num_parameters

    def first_non_finite(self):
        for name, t in self.items():
            if not np.isfinite(t).all():
                return name
        return None


def init_params(hyper: HyperParams, num_users: int, num_items: int, seed: int) -> ModelParams:
    """Embeddings ~ N(0, 0.01); weights Glorot-uniform; biases zero."""
    rng = keyed_rng(seed, INIT)
    tensors = {}
    for name, shape in param_shapes(hyper, num_users, num_items).items():
        if name.endswith('embedding'):
            tensors[name] = rng.normal(0.0, 0.01, size=shape)
        elif len(shape) == 2:
            fan_out, fan_in = shape
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            tensors[name] = rng.uniform(-limit, limit, size=shape)
        else:
            tensors[name] = np.zeros(shape)
    return ModelParams(tensors)


# Checkpoint: <u64 manifest length><JSON manifest><float32 payload>, little endian.

def save_checkpoint(path, params: ModelParams, metadata: dict = None) -> int:
    manifest = json.dumps({
        'order': list(PARAM_NAMES),
        'shapes': {name: list(shape) for name, shape in params.shapes().items()},
        'metadata': metadata or {},
    }, sort_keys=True).encode('utf-8')
    payload = params.flatten().astype('<f4').tobytes()
    with Path(path).open('wb') as handle:
        handle.write(struct.pack('<Q', len(manifest)))
        handle.write(manifest)
        handle.write(payload)
    return len(payload)


def load_checkpoint(path) -> Tuple[ModelParams, dict]:
    raw = Path(path).read_bytes()
    (length,) = struct.unpack('<Q', raw[:8])
    manifest = json.loads(raw[8:8 + length].decode('utf-8'))
    shapes = {name: tuple(shape) for name, shape in manifest['shapes'].items()}
    vector = np.frombuffer(raw[8 + length:], dtype='<f4')
    return ModelParams.from_flat(vector, shapes), manifest.get('metadata', {})
