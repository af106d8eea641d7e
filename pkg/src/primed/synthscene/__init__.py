from .scenes import (
    ALL_KINDS,
    COLOR_NAMES,
    HELDOUT_KINDS,
    NUM_SOUND_CLASSES,
    PALETTE,
    TEMPLATES,
    TRAIN_KINDS,
    SceneObject,
    SceneSpec,
    audio_activity,
    make_scene,
    render_frames,
    render_target_masks,
    soft_label_for,
    template_flavor,
)
from .encoders import (
    AUDIO_DIM,
    MAX_TEXT_LEN,
    TEXT_DIM,
    VISUAL_CHANNELS,
    VOCAB,
    FeatureBundle,
    SoftLabel,
    encode_audio,
    encode_audio_activity,
    encode_scene,
    encode_text,
    encode_visual,
)
from .dataset import (
    SPLITS,
    GenerationConfig,
    gen_dataset,
    load_manifest,
    load_sample,
    manifest_entries,
    read_soft_labels_jsonl,
    write_soft_labels_jsonl,
)
