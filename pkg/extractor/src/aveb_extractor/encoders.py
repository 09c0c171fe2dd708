"""Frozen encoder wrappers: Whisper layer stacks, CLAP pooled embeddings,
CLIP vision token grids.

Models load from local directories (or hub ids when a network is
available).  Everything runs in eval mode under inference_mode, so
extraction is deterministic for fixed weights and inputs.
"""

from __future__ import annotations

import numpy as np
import torch

from xmodal.store import TOKEN_DIM

from .errors import SetupError

WHISPER_SAMPLE_RATE = 16000
# Encoder output frame rate: 10 ms mel hop halved by the stem convolution.
WHISPER_FRAMES_PER_SECOND = 50
CLAP_SAMPLE_RATE = 48000

# (d_model, encoder_layers) for each published backbone size.
WHISPER_DIMS = {
    "whisper-tiny": (384, 4),
    "whisper-base": (512, 6),
    "whisper-small": (768, 12),
    "whisper-medium": (1024, 24),
}


def _load_or_setup_error(loader, path: str, what: str):
    try:
        return loader(path)
    except OSError as exc:
        raise SetupError(f"cannot load {what} from {path!r}: {exc}") from None


class WhisperStackEncoder:
    """Per-segment stack of all encoder block outputs, (L, S, d_w)."""

    def __init__(self, size_name: str, path: str, device: str = "cpu"):
        from transformers import WhisperFeatureExtractor, WhisperModel

        self.model = _load_or_setup_error(WhisperModel.from_pretrained, path,
                                          f"{size_name} model")
        self.features = _load_or_setup_error(
            WhisperFeatureExtractor.from_pretrained, path,
            f"{size_name} feature extractor")
        expected = WHISPER_DIMS[size_name]
        actual = (self.model.config.d_model, self.model.config.encoder_layers)
        if actual != expected:
            raise SetupError(
                f"model at {path!r} has (d_model, layers) = {actual}, but "
                f"{size_name} requires {expected}")
        self.model.eval().to(device)
        self.device = device
        self.d_w, self.layers = expected
        self.version = getattr(self.model.config, "transformers_version", "")

    def sample_rate(self) -> int:
        return WHISPER_SAMPLE_RATE

    def frames_for(self, seconds: float) -> int:
        return max(1, int(round(seconds * WHISPER_FRAMES_PER_SECOND)))

    def stack(self, samples: np.ndarray, seconds: float) -> np.ndarray:
        inputs = self.features(samples, sampling_rate=WHISPER_SAMPLE_RATE,
                               return_tensors="pt")
        with torch.inference_mode():
            out = self.model.encoder(
                inputs.input_features.to(self.device),
                output_hidden_states=True)
        # hidden_states[0] is the conv/position embedding output; keep the
        # L transformer block outputs and crop away the 30 s padding tail.
        frames = self.frames_for(seconds)
        stack = torch.stack(out.hidden_states[1:], dim=0)[:, 0, :frames, :]
        return stack.cpu().numpy().astype(np.float32)


class ClapPooledEncoder:
    """Final projected audio embedding from a CLAP checkpoint."""

    def __init__(self, path: str, device: str = "cpu"):
        from transformers import ClapFeatureExtractor, ClapModel

        self.model = _load_or_setup_error(ClapModel.from_pretrained, path,
                                          "clap model")
        self.features = _load_or_setup_error(
            ClapFeatureExtractor.from_pretrained, path,
            "clap feature extractor")
        self.model.eval().to(device)
        self.device = device
        self.d_a = int(self.model.config.projection_dim)

    def sample_rate(self) -> int:
        return int(getattr(self.features, "sampling_rate", CLAP_SAMPLE_RATE))

    def embed(self, samples: np.ndarray) -> np.ndarray:
        inputs = self.features(samples, sampling_rate=self.sample_rate(),
                               return_tensors="pt")
        with torch.inference_mode():
            emb = self.model.get_audio_features(
                input_features=inputs.input_features.to(self.device))
        return emb[0].cpu().numpy().astype(np.float32)


def make_audio_encoder(name: str, path: str, device: str = "cpu"):
    if name in WHISPER_DIMS:
        return WhisperStackEncoder(name, path, device=device)
    if name == "clap":
        return ClapPooledEncoder(path, device=device)
    raise SetupError(
        f"{name} weights/packages are not available in this environment; "
        "supported here: " + ", ".join([*WHISPER_DIMS, "clap"]))


class ClipGridEncoder:
    """(N + 1) x 1024 token grid from a CLIP-style vision tower; the CLS
    token occupies row 0."""

    def __init__(self, path: str, device: str = "cpu"):
        from transformers import CLIPImageProcessor, CLIPVisionModel

        self.model = _load_or_setup_error(CLIPVisionModel.from_pretrained,
                                          path, "vision model")
        self.processor = _load_or_setup_error(
            CLIPImageProcessor.from_pretrained, path, "image processor")
        cfg = self.model.config
        if cfg.hidden_size != TOKEN_DIM:
            raise SetupError(
                f"vision model width {cfg.hidden_size} != {TOKEN_DIM}; "
                "the container expects ViT-L/14-class token widths")
        self.model.eval().to(device)
        self.device = device
        self.n_patches = (cfg.image_size // cfg.patch_size) ** 2

    def grid(self, frame_rgb: np.ndarray) -> np.ndarray:
        inputs = self.processor(images=[frame_rgb], return_tensors="pt")
        with torch.inference_mode():
            out = self.model(inputs.pixel_values.to(self.device))
        tokens = out.last_hidden_state[0].cpu().numpy().astype(np.float32)
        return tokens  # row 0 is CLS, rows 1..N the patch tokens
