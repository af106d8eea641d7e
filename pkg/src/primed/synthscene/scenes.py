"""Synthetic audio-visual referring scenes.

A scene is a handful of colored shapes drifting over a dark canvas; some of
them "sound" during given second intervals.  Each scene carries a referring
expression built from one of four templates, chosen so that the target can
only be resolved through the template's declared evidence:

* ``audio-dominant``   "the object making sound" — exactly one object sounds,
  nothing visual distinguishes it; the audio stream (whose class identifies
  the sounding object's color) is the only usable cue.
* ``visual-dominant``  "the <color> <shape>" — a color twin and a shape twin
  are both present (the shape twin sounds, baiting audio-led models), so the
  color+shape conjunction is required.
* ``joint``            "the <shape> making sound" — a silent shape twin and a
  sounding decoy of another shape force joint audio-visual resolution.
* ``null``             the referred object is absent; ground truth is empty.

Sound classes are tied to colors (one voice per palette entry), which is what
makes the audio stream informative about *which* object is sounding.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

CANVAS_DEFAULT = 64
NUM_FRAMES_DEFAULT = 4
BACKGROUND = 0.05

PALETTE = (
    ("red", (0.85, 0.15, 0.15)),
    ("green", (0.15, 0.80, 0.20)),
    ("blue", (0.20, 0.35, 0.90)),
    ("yellow", (0.90, 0.85, 0.15)),
    ("magenta", (0.85, 0.20, 0.80)),
    ("cyan", (0.15, 0.80, 0.85)),
)
COLOR_NAMES = tuple(name for name, _ in PALETTE)
NUM_SOUND_CLASSES = len(PALETTE)  # one voice per color

TRAIN_KINDS = ("square", "ring", "cross")
HELDOUT_KINDS = ("triangle", "diamond")
ALL_KINDS = TRAIN_KINDS + HELDOUT_KINDS

TEMPLATES = ("audio-dominant", "visual-dominant", "joint", "null")

# soft modality-relevance distributions, ordered [p_audio, p_visual, p_joint]
TEMPLATE_SOFT_LABELS = {
    "audio-dominant": (0.8, 0.1, 0.1),
    "visual-dominant": (0.1, 0.8, 0.1),
    "joint": (0.1, 0.1, 0.8),
}


@dataclass
class SceneObject:
    kind: str
    color_id: int
    pos0: tuple[float, float]  # (row, col) center at frame 0
    vel: tuple[float, float]  # (drow, dcol) per frame
    size: float  # half extent in pixels
    sounding: list[tuple[int, int]] = field(default_factory=list)
    sound_class: int = -1  # defaults to color_id when built by make_scene

    def center(self, t: int, h: int, w: int) -> tuple[float, float]:
        r = self.size + 1.0
        cy = min(max(self.pos0[0] + self.vel[0] * t, r), h - 1 - r)
        cx = min(max(self.pos0[1] + self.vel[1] * t, r), w - 1 - r)
        return cy, cx

    def sounds_at(self, second: int) -> bool:
        return any(s <= second < e for s, e in self.sounding)


@dataclass
class SceneSpec:
    seed: int
    num_frames: int
    canvas: tuple[int, int]
    objects: list[SceneObject]
    template: str
    target_index: int | None
    words: list[str]

    def validate(self) -> None:
        if self.num_frames < 1:
            raise ValueError("num_frames must be >= 1")
        if self.template not in TEMPLATES:
            raise ValueError(f"unknown template {self.template!r}")
        if (self.target_index is None) != (self.template == "null"):
            raise ValueError("target_index must be None exactly for null scenes")
        for obj in self.objects:
            for s, e in obj.sounding:
                if not (0 <= s < e <= self.num_frames):
                    raise ValueError(f"sounding interval ({s},{e}) outside clip")


def _shape_mask(kind: str, cy: float, cx: float, r: float, h: int, w: int) -> np.ndarray:
    yy, xx = np.mgrid[0:h, 0:w]
    dy = yy - cy
    dx = xx - cx
    if kind == "square":
        return (np.abs(dx) <= r) & (np.abs(dy) <= r)
    if kind == "ring":
        d2 = dx * dx + dy * dy
        return (d2 <= r * r) & (d2 >= (0.5 * r) ** 2)
    if kind == "cross":
        arm = 0.4 * r
        return ((np.abs(dx) <= arm) & (np.abs(dy) <= r)) | (
            (np.abs(dy) <= arm) & (np.abs(dx) <= r)
        )
    if kind == "triangle":
        return (np.abs(dy) <= r) & (np.abs(dx) <= (dy + r) / 2.0)
    if kind == "diamond":
        return np.abs(dx) + np.abs(dy) <= r
    raise ValueError(f"unknown shape kind {kind!r}")


def render_frames(scene: SceneSpec) -> np.ndarray:
    """Rasterize the scene into T x 3 x H x W float frames in [0, 1]."""
    h, w = scene.canvas
    frames = np.full((scene.num_frames, 3, h, w), BACKGROUND, dtype=np.float32)
    for t in range(scene.num_frames):
        for obj in scene.objects:
            cy, cx = obj.center(t, h, w)
            mask = _shape_mask(obj.kind, cy, cx, obj.size, h, w)
            color = PALETTE[obj.color_id][1]
            for ch in range(3):
                frames[t, ch][mask] = color[ch]
    return frames


def render_target_masks(scene: SceneSpec) -> np.ndarray:
    """Ground-truth masks (T x H x W uint8); all zero for null scenes."""
    h, w = scene.canvas
    masks = np.zeros((scene.num_frames, h, w), dtype=np.uint8)
    if scene.target_index is None:
        return masks
    obj = scene.objects[scene.target_index]
    for t in range(scene.num_frames):
        cy, cx = obj.center(t, h, w)
        masks[t] = _shape_mask(obj.kind, cy, cx, obj.size, h, w).astype(np.uint8)
    return masks


def audio_activity(scene: SceneSpec) -> np.ndarray:
    """Per-second class activity matrix (T x NUM_SOUND_CLASSES float32)."""
    act = np.zeros((scene.num_frames, NUM_SOUND_CLASSES), dtype=np.float32)
    for obj in scene.objects:
        if obj.sound_class < 0:
            continue
        for t in range(scene.num_frames):
            if obj.sounds_at(t):
                act[t, obj.sound_class] = 1.0
    return act


def template_flavor(template: str, words: list[str]) -> str:
    """The non-null template whose expression surface a scene uses."""
    if template != "null":
        return template
    if "making" not in words:
        return "visual-dominant"
    return "audio-dominant" if "object" in words else "joint"


def soft_label_for(template: str, words: list[str] | None = None) -> tuple[float, float, float]:
    return TEMPLATE_SOFT_LABELS[template_flavor(template, words or [])]


def _place_objects(rng: np.random.Generator, specs, num_frames: int, h: int, w: int):
    """Assign non-overlapping drifting positions to (kind, color, sounding) specs.

    Sizes and speeds scale with the canvas so any 32-divisible geometry works.
    """
    m = min(h, w)
    buffer = max(2.0, 0.06 * m)
    for _ in range(200):
        objects = []
        ok = True
        for kind, color_id, sounding in specs:
            size = float(rng.uniform(0.125 * m, 0.17 * m))
            placed = None
            for _ in range(80):
                pos0 = (
                    float(rng.uniform(size + 2, h - size - 2)),
                    float(rng.uniform(size + 2, w - size - 2)),
                )
                vel = tuple(float(v) for v in rng.uniform(-0.019 * m, 0.019 * m, size=2))
                cand = SceneObject(
                    kind=kind,
                    color_id=color_id,
                    pos0=pos0,
                    vel=vel,
                    size=size,
                    sounding=list(sounding),
                    sound_class=color_id if sounding else -1,
                )
                clear = True
                for t in range(num_frames):
                    cy, cx = cand.center(t, h, w)
                    for other in objects:
                        oy, ox = other.center(t, h, w)
                        if np.hypot(cy - oy, cx - ox) < cand.size + other.size + buffer:
                            clear = False
                            break
                    if not clear:
                        break
                if clear:
                    placed = cand
                    break
            if placed is None:
                ok = False
                break
            objects.append(placed)
        if ok:
            return objects
    raise RuntimeError("could not place scene objects without overlap")


def make_scene(
    template: str,
    seed: int,
    kind_pool: tuple[str, ...] = TRAIN_KINDS,
    num_frames: int = NUM_FRAMES_DEFAULT,
    canvas: int | tuple[int, int] = CANVAS_DEFAULT,
) -> SceneSpec:
    """Build one scene for the given referring template.

    The same (template, seed, pool, geometry) always yields the same scene.
    """
    if template not in TEMPLATES:
        raise ValueError(f"unknown template {template!r}")
    h, w = (canvas, canvas) if isinstance(canvas, int) else canvas
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 11])))
    full = [(0, num_frames)]

    if template == "null":
        flavor = TEMPLATES[int(rng.integers(0, 3))]
    else:
        flavor = template

    kinds = list(kind_pool)
    colors = list(range(len(PALETTE)))
    k1, k2 = (kinds[i] for i in rng.choice(len(kinds), size=2, replace=False))
    c1, c2, c3 = (colors[i] for i in rng.choice(len(colors), size=3, replace=False))

    if flavor == "audio-dominant":
        words = ["the", "object", "making", "sound"]
        if template == "null":
            specs = [(k1, c1, []), (k2, c2, [])]
            target = None
        else:
            specs = [(k1, c1, full), (k2, c2, [])]
            target = 0
    elif flavor == "visual-dominant":
        words = ["the", COLOR_NAMES[c1], k1]
        if template == "null":
            # near misses only: color twin of another shape, shape twin sounding
            specs = [(k2, c1, []), (k1, c2, full)]
            target = None
        else:
            specs = [(k1, c1, []), (k2, c1, []), (k1, c2, full)]
            target = 0
    else:  # joint
        words = ["the", k1, "making", "sound"]
        if template == "null":
            specs = [(k1, c1, []), (k2, c2, full)]
            target = None
        else:
            specs = [(k1, c1, full), (k1, c2, []), (k2, c3, full)]
            target = 0

    # shuffle draw order so the target is not always rendered first
    order = list(rng.permutation(len(specs)))
    specs = [specs[i] for i in order]
    if target is not None:
        target = order.index(target)

    objects = _place_objects(rng, specs, num_frames, h, w)
    scene = SceneSpec(
        seed=seed,
        num_frames=num_frames,
        canvas=(h, w),
        objects=objects,
        template=template,
        target_index=target,
        words=words,
    )
    scene.validate()
    return scene
