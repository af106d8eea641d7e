"""Frozen encoder stand-ins: fixed-seed random projections, never trained.

The visual path projects patch means of the rendered frames into a 4-stage
hierarchy; the audio path sums a fixed per-class codebook and adds seeded
Gaussian noise; the text path looks up a fixed vocabulary embedding table.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .scenes import (
    ALL_KINDS,
    COLOR_NAMES,
    NUM_SOUND_CLASSES,
    SceneSpec,
    audio_activity,
    render_frames,
    render_target_masks,
    soft_label_for,
)

ENCODER_SEED = 7340033  # fixed: encoders are frozen
VISUAL_CHANNELS = (32, 64, 128, 256)
AUDIO_DIM = 64
TEXT_DIM = 64
MAX_TEXT_LEN = 12  # sentence slot + up to 11 words
AUDIO_NOISE_SIGMA = 0.05
_AUDIO_NOISE_TAG = 29

VOCAB = tuple(["the", "object", "making", "sound"] + list(COLOR_NAMES) + list(ALL_KINDS))
_WORD_INDEX = {w: i for i, w in enumerate(VOCAB)}


@dataclass
class SoftLabel:
    p: np.ndarray  # [p_audio, p_visual, p_joint]
    source: str = "template"

    def validate(self) -> None:
        if self.p.shape != (3,) or np.any(self.p < 0):
            raise ValueError("soft label must be 3 non-negative components")
        if abs(float(self.p.sum()) - 1.0) > 1e-6:
            raise ValueError("soft label components must sum to 1")


@dataclass
class FeatureBundle:
    f_v: list[np.ndarray]  # 4 stage maps, stage n: T x C_n x H_n x W_n
    f_a: np.ndarray  # T x AUDIO_DIM
    f_t: np.ndarray  # MAX_TEXT_LEN x TEXT_DIM (zero-padded)
    text_len: int
    gt_masks: np.ndarray  # T x H x W uint8
    soft_label: SoftLabel

    @property
    def t_g(self) -> np.ndarray:
        return self.f_t[0]


@lru_cache(maxsize=None)
def _visual_projection(stage: int) -> np.ndarray:
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([ENCODER_SEED, 1, stage])))
    c = VISUAL_CHANNELS[stage - 1]
    return (rng.standard_normal((c, 3)) / np.sqrt(3.0)).astype(np.float32)


@lru_cache(maxsize=None)
def _audio_codebook() -> np.ndarray:
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([ENCODER_SEED, 2])))
    return (rng.standard_normal((NUM_SOUND_CLASSES, AUDIO_DIM)) / np.sqrt(AUDIO_DIM)).astype(
        np.float32
    )


@lru_cache(maxsize=None)
def _text_table() -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([ENCODER_SEED, 3])))
    words = (rng.standard_normal((len(VOCAB), TEXT_DIM)) / np.sqrt(TEXT_DIM)).astype(np.float32)
    slot = (rng.standard_normal(TEXT_DIM) / np.sqrt(TEXT_DIM)).astype(np.float32)
    return words, slot


def encode_visual(frames: np.ndarray) -> list[np.ndarray]:
    """Project per-frame patch means into the 4-stage feature hierarchy.

    Stage n pools 2^(n+1)-sized patches, so H and W must divide by 32.
    """
    t, ch, h, w = frames.shape
    if ch != 3:
        raise ValueError("frames must be T x 3 x H x W")
    if h % 32 or w % 32:
        raise ValueError(f"canvas {h}x{w} not divisible by 32")
    stages = []
    for n in range(1, 5):
        p = 2 ** (n + 1)
        means = frames.reshape(t, 3, h // p, p, w // p, p).mean(axis=(3, 5))
        proj = _visual_projection(n)
        stages.append(np.einsum("cj,tjhw->tchw", proj, means).astype(np.float32))
    return stages


def encode_audio_activity(
    activity: np.ndarray, noise_seed: int, sigma: float = AUDIO_NOISE_SIGMA
) -> np.ndarray:
    """Map a T x num_classes activity matrix to audio features."""
    feats = activity.astype(np.float32) @ _audio_codebook()
    if sigma > 0:
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([noise_seed, _AUDIO_NOISE_TAG])))
        feats = feats + sigma * rng.standard_normal(feats.shape).astype(np.float32)
    return feats.astype(np.float32)


def encode_audio(scene: SceneSpec, sigma: float = AUDIO_NOISE_SIGMA) -> np.ndarray:
    return encode_audio_activity(audio_activity(scene), noise_seed=scene.seed, sigma=sigma)


def encode_text(words: list[str]) -> tuple[np.ndarray, int]:
    """Embed an expression; returns (MAX_TEXT_LEN x TEXT_DIM buffer, valid length).

    Row 0 is the sentence slot plus the mean of the word embeddings and acts
    as the global text token; rows past the valid length stay zero.
    """
    if len(words) > MAX_TEXT_LEN - 1:
        raise ValueError(f"expression too long ({len(words)} words)")
    table, slot = _text_table()
    out = np.zeros((MAX_TEXT_LEN, TEXT_DIM), dtype=np.float32)
    rows = []
    for w in words:
        if w not in _WORD_INDEX:
            raise ValueError(f"word {w!r} not in vocabulary")
        rows.append(table[_WORD_INDEX[w]])
    out[0] = slot + (np.mean(rows, axis=0) if rows else 0.0)
    for i, row in enumerate(rows):
        out[i + 1] = row
    return out, 1 + len(rows)


def encode_scene(scene: SceneSpec, sigma: float = AUDIO_NOISE_SIGMA) -> FeatureBundle:
    """Render and encode a scene into the feature bundle the model consumes."""
    frames = render_frames(scene)
    f_t, text_len = encode_text(scene.words)
    label = SoftLabel(p=np.asarray(soft_label_for(scene.template, scene.words), dtype=np.float64))
    label.validate()
    return FeatureBundle(
        f_v=encode_visual(frames),
        f_a=encode_audio(scene, sigma=sigma),
        f_t=f_t,
        text_len=text_len,
        gt_masks=render_target_masks(scene),
        soft_label=label,
    )
