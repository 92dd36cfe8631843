from pydantic import BaseModel, ConfigDict, Field, model_validator

from config import INIT_STD, LAYER_NORM_EPS


class ModelConfig(BaseModel):
    """Shape of an early-exit encoder: n_layers transformer layers, one off-ramp after each."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    n_layers: int = Field(ge=1, description="Number of transformer layers (and off-ramps)")
    hidden_size: int = Field(ge=1)
    n_heads: int = Field(ge=1)
    ffn_size: int = Field(ge=1)
    vocab_size: int = Field(ge=1)
    max_seq_len: int = Field(ge=1)
    n_classes: int = Field(ge=2)
    dropout_rate: float = Field(default=0.0, ge=0.0, lt=1.0)
    init_std: float = Field(default=INIT_STD, gt=0.0)
    layer_norm_eps: float = Field(default=LAYER_NORM_EPS, gt=0.0)

    @model_validator(mode="after")
    def _heads_divide_hidden(self):
        if self.hidden_size % self.n_heads != 0:
            raise ValueError(f"hidden_size {self.hidden_size} is not divisible by n_heads {self.n_heads}")
        return self

    @property
    def head_size(self) -> int:
        return self.hidden_size // self.n_heads
