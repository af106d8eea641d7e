from .config import RunConfig, apply_overrides, config_from_dict, config_to_dict, load_config
from .checkpoint import load_checkpoint, load_model_state, save_checkpoint
from .train import build_model, setup_determinism, train
from .evaluate import evaluate
from .ablate import ablate, load_sweep, validate_sweep
