"""Denoiser backends.

A backend answers ``predict(x_t, t_index, slot)`` with a noise vector of the
same dimension as ``x_t``. It resolves slots to prompts through its
:class:`~oracle_bridge.prompts.PromptTable` once at load time, matching the
fixed-prompt optimization the server exists to support.

Two implementations:

* :class:`SyntheticBackend` — a deterministic, dimension-agnostic stand-in
  whose output depends on the resolved prompt, the native timestep index, and
  the query vector. It lets the full protocol path run anywhere.
* :class:`StableDiffusionBackend` — wraps a pretrained text-conditioned
  latent-diffusion UNet via ``diffusers`` (installed with the ``diffusion``
  extra). The four prompt embeddings are encoded once and cached; queries are
  reshaped into the model's square latent layout.
"""

from __future__ import annotations

import hashlib
from typing import Protocol

import numpy as np

from .prompts import PromptTable
from .timesteps import to_native_index


class Backend(Protocol):
    num_train_timesteps: int

    def load(self) -> None: ...

    def predict(self, x_t: np.ndarray, t_index: int, slot: str) -> np.ndarray: ...


class SyntheticBackend:
    """Deterministic prompt-conditioned toy denoiser; accepts any dimension."""

    def __init__(self, prompts: PromptTable, num_train_timesteps: int = 1000):
        self.prompts = prompts
        self.num_train_timesteps = num_train_timesteps
        self._coeffs: dict[str, tuple[float, float, float]] = {}

    def load(self) -> None:
        for slot in ("target", "null", "gnp", "tnp"):
            digest = hashlib.sha256(self.prompts.text_for(slot).encode("utf-8")).digest()
            self._coeffs[slot] = (
                0.5 + digest[0] / 255.0,          # gain on the query
                (digest[1] / 255.0 - 0.5) * 2.0,  # gain on the oscillatory part
                digest[2] / 255.0 * np.pi,        # phase
            )

    def predict(self, x_t: np.ndarray, t_index: int, slot: str) -> np.ndarray:
        a, b, phase = self._coeffs[slot]
        frac = t_index / self.num_train_timesteps
        return a * np.tanh(x_t) + b * np.cos(x_t + phase + frac)


class StableDiffusionBackend:
    """Pretrained latent-diffusion denoiser behind the wire protocol.

    Queries must have a length of the form channels * side * side matching
    the model's latent layout (4 channels for the stable-diffusion family;
    e.g. dim 16384 for 64x64 latents). Loading requires the model weights to
    be available locally or downloadable.
    """

    def __init__(self, prompts: PromptTable, model_id: str, device: str = "cpu"):
        self.prompts = prompts
        self.model_id = model_id
        self.device = device
        self.num_train_timesteps = 1000
        self._unet = None
        self._embeddings = {}

    def load(self) -> None:
        import torch
        from diffusers import UNet2DConditionModel
        from transformers import CLIPTextModel, CLIPTokenizer

        tokenizer = CLIPTokenizer.from_pretrained(self.model_id, subfolder="tokenizer")
        encoder = CLIPTextModel.from_pretrained(self.model_id, subfolder="text_encoder").to(self.device)
        self._unet = UNet2DConditionModel.from_pretrained(self.model_id, subfolder="unet").to(self.device)
        self._unet.eval()
        with torch.no_grad():
            for slot in ("target", "null", "gnp", "tnp"):
                tokens = tokenizer(
                    self.prompts.text_for(slot), padding="max_length",
                    max_length=tokenizer.model_max_length, truncation=True, return_tensors="pt",
                )
                self._embeddings[slot] = encoder(tokens.input_ids.to(self.device))[0]

    def predict(self, x_t: np.ndarray, t_index: int, slot: str) -> np.ndarray:
        import torch

        channels = self._unet.config.in_channels
        side = round((x_t.shape[0] / channels) ** 0.5)
        if channels * side * side != x_t.shape[0]:
            raise ValueError(
                f"query dim {x_t.shape[0]} does not fit the model's latent layout "
                f"({channels} x side x side)"
            )
        latent = torch.from_numpy(x_t.astype(np.float32)).reshape(1, channels, side, side).to(self.device)
        with torch.no_grad():
            out = self._unet(latent, t_index, encoder_hidden_states=self._embeddings[slot]).sample
        return out.reshape(-1).double().cpu().numpy()


def normalized_t_to_index(backend: Backend, t: float) -> int:
    return to_native_index(t, backend.num_train_timesteps)
