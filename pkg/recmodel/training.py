"""
Client-side local training: mini-batch AdamW epochs over a client's train
positives, returning the parameter delta and final per-sample losses.
"""
import logging
from dataclasses import dataclass

import numpy as np

from dataset.movielens import sample_negative_block

from .network import Batch, ranking_losses, total_loss
from .optim import AdamWState, adamw_step
from .params import HyperParams, ModelParams

logger = logging.getLogger(__name__)


@dataclass
class LocalData:
    """A client's train positives as (user, item) rows plus the positive mask for negatives."""
    client_id: int
    pairs: np.ndarray
    positive_mask: np.ndarray

    def __len__(self) -> int:
        return len(self.pairs)


@dataclass
class LocalUpdate:
    client_id: int
    delta: ModelParams
    num_samples: int
    sample_losses: np.ndarray
    work_units: int          # sample-epochs actually processed

    @property
    def mean_loss(self) -> float:
        return float(self.sample_losses.mean()) if len(self.sample_losses) else 0.0


def make_batch(pairs: np.ndarray, mask: np.ndarray, negatives: int, rng) -> Batch:
    users = pairs[:, 0]
    return Batch(users=users, positives=pairs[:, 1],
                 negatives=sample_negative_block(users, negatives, mask, rng))


def train_local(global_params: ModelParams, data: LocalData, features, hyper: HyperParams,
                rng: np.random.Generator) -> LocalUpdate:
    """
    Run ``hyper.local_epochs`` epochs on a private copy of the global model.

    The returned per-sample losses are evaluation-mode hinge losses of the
    final local model over the client's positives with freshly drawn
    negatives.
    """
    if len(data) == 0:
        raise ValueError(f"Client {data.client_id} has no training interactions")

    params = global_params.copy()
    state = AdamWState.for_params(params)
    size = len(data)
    for epoch in range(hyper.local_epochs):
        order = rng.permutation(size)
        for start in range(0, size, hyper.batch_size):
            batch = make_batch(data.pairs[order[start:start + hyper.batch_size]],
                               data.positive_mask, hyper.negatives, rng)
            result = total_loss(batch, params, features, hyper, rng=rng)
            adamw_step(params, result.grads, state, hyper.lr, hyper.weight_decay)
        logger.debug(f"Client {data.client_id} epoch {epoch + 1}/{hyper.local_epochs}: "
                     f"last batch loss {result.value:.6f}")

    final = make_batch(data.pairs, data.positive_mask, hyper.negatives, rng)
    losses = ranking_losses(params, features, hyper, final)
    return LocalUpdate(
        client_id=data.client_id,
        delta=params - global_params,
        num_samples=size,
        sample_losses=losses,
        work_units=size * hyper.local_epochs,
    )
