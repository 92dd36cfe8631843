from typing import Dict, Iterator, Optional, Tuple

import numpy as np

from autograd import Tensor, dropout, embedding, gelu, layer_norm, linear, matmul, softmax
from config import N_SEGMENTS
from modeling.model_config import ModelConfig


class Module:
    """Parameter container. Parameters and children are kept in declaration order."""

    def __init__(self):
        self._parameters: Dict[str, Tensor] = {}
        self._children: Dict[str, "Module"] = {}
        self.training = False

    def add_parameter(self, name: str, data: np.ndarray) -> Tensor:
        tensor = Tensor(data, requires_grad=True, name=name)
        self._parameters[name] = tensor
        return tensor

    def add_child(self, name: str, module: "Module") -> "Module":
        self._children[name] = module
        return module

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Tensor]]:
        for name, tensor in self._parameters.items():
            yield prefix + name, tensor
        for name, child in self._children.items():
            yield from child.named_parameters(prefix + name + ".")

    def train(self, mode: bool = True) -> "Module":
        self.training = mode
        for child in self._children.values():
            child.train(mode)
        return self


def _normal(rng: np.random.Generator, shape, std: float) -> np.ndarray:
    return rng.normal(0.0, std, size=shape)


class Linear(Module):
    def __init__(self, in_size: int, out_size: int, rng: np.random.Generator, std: float):
        super().__init__()
        self.weight = self.add_parameter("weight", _normal(rng, (in_size, out_size), std))
        self.bias = self.add_parameter("bias", np.zeros(out_size))

    def __call__(self, x: Tensor) -> Tensor:
        return linear(x, self.weight, self.bias)


class LayerNorm(Module):
    def __init__(self, size: int, eps: float):
        super().__init__()
        self.eps = eps
        self.gain = self.add_parameter("gain", np.ones(size))
        self.bias = self.add_parameter("bias", np.zeros(size))

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gain, self.bias, self.eps)


class Embeddings(Module):
    """Token + learned position + segment embeddings, then layer norm."""

    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        super().__init__()
        self.config = config
        std = config.init_std
        self.token = self.add_parameter("token", _normal(rng, (config.vocab_size, config.hidden_size), std))
        self.position = self.add_parameter("position", _normal(rng, (config.max_seq_len, config.hidden_size), std))
        self.segment = self.add_parameter("segment", _normal(rng, (N_SEGMENTS, config.hidden_size), std))
        self.norm = self.add_child("norm", LayerNorm(config.hidden_size, config.layer_norm_eps))

    def __call__(self, token_ids: np.ndarray, segment_ids: np.ndarray,
                 rng: Optional[np.random.Generator] = None) -> Tensor:
        seq_len = token_ids.shape[1]
        positions = np.broadcast_to(np.arange(seq_len), token_ids.shape)
        summed = embedding(self.token, token_ids) + embedding(self.position, positions)
        summed = summed + embedding(self.segment, segment_ids)
        return dropout(self.norm(summed), self.config.dropout_rate, rng, self.training)


class SelfAttention(Module):
    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        super().__init__()
        self.config = config
        size, std = config.hidden_size, config.init_std
        self.query = self.add_child("query", Linear(size, size, rng, std))
        self.key = self.add_child("key", Linear(size, size, rng, std))
        self.value = self.add_child("value", Linear(size, size, rng, std))
        self.output = self.add_child("output", Linear(size, size, rng, std))

    def _split_heads(self, x: Tensor) -> Tensor:
        batch, seq_len, _ = x.shape
        return x.reshape(batch, seq_len, self.config.n_heads, self.config.head_size).transpose(0, 2, 1, 3)

    def __call__(self, hidden: Tensor, mask_bias: Tensor, rng: Optional[np.random.Generator] = None) -> Tensor:
        batch, seq_len, size = hidden.shape
        q = self._split_heads(self.query(hidden))
        k = self._split_heads(self.key(hidden))
        v = self._split_heads(self.value(hidden))

        scores = matmul(q, k.transpose(0, 1, 3, 2)) * (1.0 / np.sqrt(self.config.head_size))
        probs = softmax(scores + mask_bias, axis=-1)
        probs = dropout(probs, self.config.dropout_rate, rng, self.training)

        context = matmul(probs, v).transpose(0, 2, 1, 3).reshape(batch, seq_len, size)
        return self.output(context)


class EncoderLayer(Module):
    """Post-layer-norm transformer layer: sublayer, add residual, layer norm."""

    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        super().__init__()
        self.config = config
        std = config.init_std
        self.attention = self.add_child("attention", SelfAttention(config, rng))
        self.attention_norm = self.add_child("attention_norm", LayerNorm(config.hidden_size, config.layer_norm_eps))
        self.intermediate = self.add_child("intermediate", Linear(config.hidden_size, config.ffn_size, rng, std))
        self.output = self.add_child("output", Linear(config.ffn_size, config.hidden_size, rng, std))
        self.output_norm = self.add_child("output_norm", LayerNorm(config.hidden_size, config.layer_norm_eps))

    def __call__(self, hidden: Tensor, mask_bias: Tensor, rng: Optional[np.random.Generator] = None) -> Tensor:
        rate = self.config.dropout_rate
        attended = dropout(self.attention(hidden, mask_bias, rng), rate, rng, self.training)
        hidden = self.attention_norm(hidden + attended)
        fed = dropout(self.output(gelu(self.intermediate(hidden))), rate, rng, self.training)
        return self.output_norm(hidden + fed)


class OffRamp(Module):
    """One affine map from the pooled hidden state to class logits."""

    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        super().__init__()
        self.classifier = self.add_child("classifier", Linear(config.hidden_size, config.n_classes, rng,
                                                              config.init_std))

    def __call__(self, pooled: Tensor) -> Tensor:
        return self.classifier(pooled)


def pool(hidden: Tensor) -> Tensor:
    """First-token ([CLS] position) vector of every sequence: [batch, seq, hidden] -> [batch, hidden]."""
    if hidden.ndim != 3 or hidden.shape[1] < 1:
        raise ValueError(f"pool expects [batch, seq>=1, hidden], got {hidden.shape}")
    return hidden[:, 0, :]
