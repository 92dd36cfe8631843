import threading
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from autograd import Tensor
from config import ATTENTION_MASK_VALUE, DEFAULT_SEED
from modeling.layers import Embeddings, EncoderLayer, Module, OffRamp, pool
from modeling.model_config import ModelConfig


class EarlyExitModel(Module):
    """
    Embedding layer, n encoder layers and one off-ramp after each layer.

    Parameters split into two partitions:
      backbone           embeddings, every encoder layer, and the last ramp
                         (the model's own classifier)
      intermediate_ramps ramps 1..n-1
    Ramp indices in the public API are 1-based, matching layer depth.
    """

    def __init__(self, config: ModelConfig, seed: int = DEFAULT_SEED):
        super().__init__()
        self._config = config
        rng = np.random.default_rng(seed)
        self.embeddings = self.add_child("embeddings", Embeddings(config, rng))
        self.layers: List[EncoderLayer] = [
            self.add_child(f"layers.{i}", EncoderLayer(config, rng)) for i in range(config.n_layers)
        ]
        self.ramps: List[OffRamp] = [
            self.add_child(f"ramps.{i}", OffRamp(config, rng)) for i in range(config.n_layers)
        ]
        self.dropout_rng: Optional[np.random.Generator] = None
        self._counter = threading.local()

    @property
    def config(self) -> ModelConfig:
        return self._config

    @property
    def n_layers(self) -> int:
        return self._config.n_layers

    def parameters_by_name(self) -> Dict[str, Tensor]:
        return dict(self.named_parameters())

    def backbone_parameters(self) -> Dict[str, Tensor]:
        last_ramp = f"ramps.{self.n_layers - 1}."
        return {name: p for name, p in self.named_parameters()
                if not name.startswith("ramps.") or name.startswith(last_ramp)}

    def intermediate_ramp_parameters(self) -> Dict[str, Tensor]:
        backbone = self.backbone_parameters()
        return {name: p for name, p in self.named_parameters() if name not in backbone}

    @property
    def layer_executions(self) -> int:
        """Encoder layers run by the calling thread since its last reset."""
        return getattr(self._counter, "value", 0)

    def reset_layer_counter(self) -> None:
        self._counter.value = 0

    def _count_layer(self) -> None:
        self._counter.value = self.layer_executions + 1

    def _prepare_inputs(self, token_ids, mask, segment_ids) -> Tuple[np.ndarray, np.ndarray, Tensor]:
        token_ids = np.asarray(token_ids)
        if token_ids.ndim == 1:
            token_ids = token_ids[None, :]
        if token_ids.ndim != 2 or token_ids.shape[1] < 1:
            raise ValueError(f"token ids must be [batch, seq], got shape {token_ids.shape}")
        if not np.issubdtype(token_ids.dtype, np.integer):
            raise TypeError(f"token ids must be integers, got {token_ids.dtype}")
        batch, seq_len = token_ids.shape
        if seq_len > self._config.max_seq_len:
            raise ValueError(f"sequence length {seq_len} exceeds max_seq_len {self._config.max_seq_len}")
        if token_ids.min() < 0 or token_ids.max() >= self._config.vocab_size:
            raise ValueError(f"token id out of range [0, {self._config.vocab_size})")

        mask = np.ones_like(token_ids) if mask is None else np.asarray(mask).reshape(token_ids.shape)
        segment_ids = (np.zeros_like(token_ids) if segment_ids is None
                       else np.asarray(segment_ids).reshape(token_ids.shape))
        mask_bias = Tensor(((1.0 - mask) * ATTENTION_MASK_VALUE).reshape(batch, 1, 1, seq_len))
        return token_ids, segment_ids, mask_bias

    def iter_ramp_logits(self, token_ids, mask=None, segment_ids=None,
                         depth: Optional[int] = None, every_ramp: bool = True) -> Iterator[Tuple[int, Tensor]]:
        """
        Run layers one at a time, yielding (layer, logits) after each.

        Layers run lazily: a consumer that stops iterating after layer i never
        pays for layer i+1. With every_ramp=False only the ramp at `depth` runs.
        """
        depth = self.n_layers if depth is None else depth
        if not 1 <= depth <= self.n_layers:
            raise ValueError(f"depth must be in [1, {self.n_layers}], got {depth}")
        token_ids, segment_ids, mask_bias = self._prepare_inputs(token_ids, mask, segment_ids)

        hidden = self.embeddings(token_ids, segment_ids, self.dropout_rng)
        for index in range(depth):
            hidden = self.layers[index](hidden, mask_bias, self.dropout_rng)
            self._count_layer()
            layer = index + 1
            if every_ramp or layer == depth:
                yield layer, self.ramps[index](pool(hidden))

    def forward_all(self, token_ids, mask=None, segment_ids=None) -> List[Tensor]:
        """Logits f_1..f_n of every ramp."""
        return [logits for _, logits in self.iter_ramp_logits(token_ids, mask, segment_ids)]

    def forward_prefix(self, token_ids, mask=None, depth: Optional[int] = None, segment_ids=None) -> Tensor:
        """Logits of ramp `depth`, executing only layers 1..depth."""
        depth = self.n_layers if depth is None else depth
        for _, logits in self.iter_ramp_logits(token_ids, mask, segment_ids, depth=depth, every_ramp=False):
            return logits
        raise ValueError(f"depth must be in [1, {self.n_layers}], got {depth}")

    def pooled_states(self, token_ids, mask=None, segment_ids=None, depth: Optional[int] = None) -> List[Tensor]:
        """Pooled first-token state after each of layers 1..depth."""
        depth = self.n_layers if depth is None else depth
        if not 1 <= depth <= self.n_layers:
            raise ValueError(f"depth must be in [1, {self.n_layers}], got {depth}")
        token_ids, segment_ids, mask_bias = self._prepare_inputs(token_ids, mask, segment_ids)
        hidden = self.embeddings(token_ids, segment_ids, self.dropout_rng)
        states = []
        for index in range(depth):
            hidden = self.layers[index](hidden, mask_bias, self.dropout_rng)
            self._count_layer()
            states.append(pool(hidden))
        return states

    def state_arrays(self) -> Dict[str, np.ndarray]:
        """Copies of every parameter array, keyed by name."""
        return {name: p.data.copy() for name, p in self.named_parameters()}
