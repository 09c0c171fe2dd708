"""Session fixtures: tiny locally-saved models and synthetic media.

The sandbox has no network, so tests instantiate randomly initialized
models with the real backbone geometries (whisper-tiny dims, ViT-L/14-336
grid) and save them to local directories; the extractor contract under
test is about shapes, dims, determinism, and container invariants, none
of which depend on trained weights.

Also prints one PASS/FAIL line per acceptance-marked test.
"""

import numpy as np
import pytest

_CRITERIA: dict = {}
_RESULTS: dict = {}


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "acceptance(name): marks a test as an acceptance criterion")


def pytest_collection_modifyitems(items):
    for item in items:
        marker = item.get_closest_marker("acceptance")
        if marker:
            _CRITERIA[item.nodeid] = marker.args[0]


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if item.nodeid in _CRITERIA:
        if report.when == "call":
            _RESULTS[_CRITERIA[item.nodeid]] = report.passed
        elif report.failed:
            _RESULTS[_CRITERIA[item.nodeid]] = False


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for label, passed in _RESULTS.items():
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}: {label}")


@pytest.fixture(scope="session")
def whisper_tiny_dir(tmp_path_factory):
    import torch
    from transformers import (WhisperConfig, WhisperFeatureExtractor,
                              WhisperModel)

    torch.manual_seed(0)
    path = tmp_path_factory.mktemp("models") / "whisper-tiny-random"
    cfg = WhisperConfig(d_model=384, encoder_layers=4,
                        encoder_attention_heads=6, encoder_ffn_dim=1536,
                        decoder_layers=2, decoder_attention_heads=6,
                        decoder_ffn_dim=1536, num_mel_bins=80,
                        max_source_positions=1500, vocab_size=64,
                        pad_token_id=0, bos_token_id=1, eos_token_id=2,
                        decoder_start_token_id=2)
    WhisperModel(cfg).save_pretrained(path)
    WhisperFeatureExtractor().save_pretrained(path)
    return str(path)


@pytest.fixture(scope="session")
def whisper_mismatched_dir(tmp_path_factory):
    """Geometry that matches no published backbone size."""
    import torch
    from transformers import (WhisperConfig, WhisperFeatureExtractor,
                              WhisperModel)

    torch.manual_seed(1)
    path = tmp_path_factory.mktemp("models") / "whisper-odd"
    cfg = WhisperConfig(d_model=256, encoder_layers=3,
                        encoder_attention_heads=4, encoder_ffn_dim=512,
                        decoder_layers=1, decoder_attention_heads=4,
                        decoder_ffn_dim=512, num_mel_bins=80,
                        max_source_positions=1500, vocab_size=64,
                        pad_token_id=0, bos_token_id=1, eos_token_id=2,
                        decoder_start_token_id=2)
    WhisperModel(cfg).save_pretrained(path)
    WhisperFeatureExtractor().save_pretrained(path)
    return str(path)


def _save_clip(path, hidden_size):
    import torch
    from transformers import (CLIPImageProcessor, CLIPVisionConfig,
                              CLIPVisionModel)

    torch.manual_seed(2)
    cfg = CLIPVisionConfig(hidden_size=hidden_size,
                           intermediate_size=2 * hidden_size,
                           num_hidden_layers=2, num_attention_heads=8,
                           image_size=336, patch_size=14)
    CLIPVisionModel(cfg).save_pretrained(path)
    CLIPImageProcessor(size={"shortest_edge": 336},
                       crop_size={"height": 336, "width": 336}
                       ).save_pretrained(path)
    return str(path)


@pytest.fixture(scope="session")
def clip_dir(tmp_path_factory):
    return _save_clip(tmp_path_factory.mktemp("models") / "clip-vitl-random",
                      hidden_size=1024)


@pytest.fixture(scope="session")
def narrow_clip_dir(tmp_path_factory):
    return _save_clip(tmp_path_factory.mktemp("models") / "clip-narrow",
                      hidden_size=512)


@pytest.fixture(scope="session")
def sample_media(tmp_path_factory):
    """7 s of audio + video: two full 3 s segments."""
    import cv2
    from scipy.io import wavfile

    base = tmp_path_factory.mktemp("media")
    rng = np.random.default_rng(7)

    rate = 16000
    t = np.arange(7 * rate) / rate
    wave = (0.4 * np.sin(2 * np.pi * 440 * t)
            + 0.1 * rng.normal(size=t.shape)).astype(np.float32)
    wav_path = base / "clip.wav"
    wavfile.write(wav_path, rate, (wave * 32767).astype(np.int16))

    video_path = base / "clip.avi"
    writer = cv2.VideoWriter(str(video_path),
                             cv2.VideoWriter_fourcc(*"MJPG"), 8.0, (64, 48))
    assert writer.isOpened()
    for i in range(7 * 8):
        frame = rng.integers(0, 255, size=(48, 64, 3), dtype=np.uint8)
        frame[:, : (i % 64)] = (255, 0, 0)
        writer.write(frame)
    writer.release()
    return str(wav_path), str(video_path)
