"""Dataset generation, on-disk sample layout, and loading.

Each sample lives in its own directory:

    <id>/frames.bin   rendered frames, float32 T x 3 x H x W
    <id>/audio.bin    per-second class activity, float32 T x num_classes
    <id>/mask.bin     ground-truth target masks, uint8 T x H x W
    <id>/text.json    referring expression words, template, token length
    <id>/label.json   soft modality label

plus optional pre-encoded features (``fv1..fv4.bin``, ``fa.bin``, ``ft.bin``)
and a top-level ``manifest.json`` recording split membership and per-sample
seeds.  Everything is byte-deterministic in (seed, config).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..arrayio import canonical_json, load_array, read_jsonl, save_array, write_jsonl
from .encoders import (
    AUDIO_NOISE_SIGMA,
    FeatureBundle,
    SoftLabel,
    encode_audio_activity,
    encode_scene,
    encode_text,
    encode_visual,
)
from .scenes import (
    HELDOUT_KINDS,
    TEMPLATES,
    TRAIN_KINDS,
    audio_activity,
    make_scene,
    render_frames,
    render_target_masks,
    soft_label_for,
)

SPLITS = ("train", "val", "seen", "unseen", "null")
MANIFEST_VERSION = 1

_NONNULL_CYCLE = ("audio-dominant", "visual-dominant", "joint")
# train keeps a modest share of null scenes so suppression gets supervised
_TRAIN_CYCLE = _NONNULL_CYCLE * 3 + ("null",)


@dataclass
class GenerationConfig:
    seed: int = 0
    num_frames: int = 4
    canvas: int = 64
    audio_sigma: float = AUDIO_NOISE_SIGMA
    store_features: bool = False
    # per split: either a total count or {template: count}
    splits: dict = field(default_factory=lambda: {"train": 240, "val": 60})


def gen_config_from_dict(data: dict) -> GenerationConfig:
    import dataclasses

    known = {f.name for f in dataclasses.fields(GenerationConfig)}
    unknown = set(data or {}) - known
    if unknown:
        raise ValueError(f"unknown generation config key(s) {sorted(unknown)}")
    return GenerationConfig(**(data or {}))


def _split_templates(split: str, requested) -> list[str]:
    if isinstance(requested, int):
        if requested <= 0:
            raise ValueError(f"split {split!r} count must be positive")
        if split == "null":
            return ["null"] * requested
        cycle = _TRAIN_CYCLE if split == "train" else _NONNULL_CYCLE
        return [cycle[i % len(cycle)] for i in range(requested)]
    templates = []
    for tpl in TEMPLATES:
        n = int(requested.get(tpl, 0))
        if n < 0:
            raise ValueError(f"negative count for template {tpl!r}")
        templates += [tpl] * n
    extra = set(requested) - set(TEMPLATES)
    if extra:
        raise ValueError(f"unknown templates {sorted(extra)} in split {split!r}")
    if not templates:
        raise ValueError(f"split {split!r} resolves to zero samples")
    return templates


def _sample_seed(base: int, split_idx: int, i: int) -> int:
    return int(np.random.SeedSequence([base, split_idx, i]).generate_state(1)[0])


def gen_dataset(config: GenerationConfig, out_dir: str | Path) -> dict:
    """Generate every configured split under ``out_dir`` and write the manifest."""
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    entries = []
    for split in config.splits:
        if split not in SPLITS:
            raise ValueError(f"unknown split {split!r} (expected one of {SPLITS})")
    for split_idx, split in enumerate(SPLITS):
        if split not in config.splits:
            continue
        templates = _split_templates(split, config.splits[split])
        pool = HELDOUT_KINDS if split == "unseen" else TRAIN_KINDS
        for i, template in enumerate(templates):
            seed = _sample_seed(config.seed, split_idx, i)
            scene = make_scene(
                template,
                seed=seed,
                kind_pool=pool,
                num_frames=config.num_frames,
                canvas=config.canvas,
            )
            sid = f"{split}-{i:05d}"
            _write_sample(root / sid, scene, config)
            entries.append({"id": sid, "split": split, "template": template, "seed": seed})
    manifest = {
        "format_version": MANIFEST_VERSION,
        "seed": config.seed,
        "num_frames": config.num_frames,
        "canvas": config.canvas,
        "audio_sigma": config.audio_sigma,
        "samples": entries,
    }
    (root / "manifest.json").write_text(canonical_json(manifest) + "\n")
    return manifest


def _write_sample(sdir: Path, scene, config: GenerationConfig) -> None:
    sdir.mkdir(parents=True, exist_ok=True)
    frames = render_frames(scene)
    save_array(sdir / "frames.bin", frames)
    save_array(sdir / "audio.bin", audio_activity(scene))
    save_array(sdir / "mask.bin", render_target_masks(scene))
    text = {"words": scene.words, "template": scene.template, "length": 1 + len(scene.words)}
    (sdir / "text.json").write_text(canonical_json(text) + "\n")
    label = {"p": list(soft_label_for(scene.template, scene.words)), "source": "template"}
    (sdir / "label.json").write_text(canonical_json(label) + "\n")
    if config.store_features:
        bundle = encode_scene(scene, sigma=config.audio_sigma)
        for n, fv in enumerate(bundle.f_v, start=1):
            save_array(sdir / f"fv{n}.bin", fv)
        save_array(sdir / "fa.bin", bundle.f_a)
        save_array(sdir / "ft.bin", bundle.f_t)


def load_manifest(root: str | Path) -> dict:
    return json.loads((Path(root) / "manifest.json").read_text())


def manifest_entries(manifest: dict, split: str | None = None, template: str | None = None):
    out = []
    for entry in manifest["samples"]:
        if split is not None and entry["split"] != split:
            continue
        if template is not None and entry["template"] != template:
            continue
        out.append(entry)
    return out


def load_sample(
    root: str | Path,
    entry: dict,
    sigma: float | None = None,
    soft_labels: dict[str, SoftLabel] | None = None,
) -> FeatureBundle:
    """Load one sample as a FeatureBundle, encoding from raw files if needed."""
    sdir = Path(root) / entry["id"]
    text = json.loads((sdir / "text.json").read_text())
    gt = load_array(sdir / "mask.bin")
    if soft_labels is not None and entry["id"] in soft_labels:
        label = soft_labels[entry["id"]]
    else:
        raw = json.loads((sdir / "label.json").read_text())
        label = SoftLabel(p=np.asarray(raw["p"], dtype=np.float64), source=raw["source"])
    label.validate()
    if (sdir / "fv1.bin").exists():
        f_v = [load_array(sdir / f"fv{n}.bin") for n in range(1, 5)]
        f_a = load_array(sdir / "fa.bin")
        f_t = load_array(sdir / "ft.bin")
    else:
        f_v = encode_visual(load_array(sdir / "frames.bin"))
        f_a = encode_audio_activity(
            load_array(sdir / "audio.bin"),
            noise_seed=entry["seed"],
            sigma=AUDIO_NOISE_SIGMA if sigma is None else sigma,
        )
        f_t, _ = encode_text(text["words"])
    return FeatureBundle(
        f_v=f_v,
        f_a=f_a,
        f_t=f_t,
        text_len=int(text["length"]),
        gt_masks=gt,
        soft_label=label,
    )


def write_soft_labels_jsonl(path: str | Path, labels: dict[str, SoftLabel]) -> None:
    write_jsonl(
        path,
        ({"id": sid, "p": [float(x) for x in lab.p], "source": lab.source} for sid, lab in labels.items()),
    )


def read_soft_labels_jsonl(path: str | Path) -> dict[str, SoftLabel]:
    out = {}
    for rec in read_jsonl(path):
        lab = SoftLabel(p=np.asarray(rec["p"], dtype=np.float64), source="file")
        lab.validate()
        out[rec["id"]] = lab
    return out
