from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
import torch

from src.common.errors import TargetAugError, ValidationFailure
from src.common.utils import canonical_json, file_sha256, from_json, get_logger
from src.neural.config import ModelConfig, Role
from src.neural.model import TranslationModel

logger = get_logger(__name__)

CHECKPOINT_FORMAT = "target-aug-checkpoint"
CHECKPOINT_VERSION = 1


class CheckpointError(ValidationFailure, TargetAugError):
    """Custom exception for unreadable or inconsistent checkpoint files."""
    pass


def save_checkpoint(path: Union[str, Path], model: TranslationModel, seed: int,
                    vocab_sha256: Optional[Dict[str, str]] = None, config_sha256: Optional[str] = None,
                    extra: Optional[Dict[str, Any]] = None) -> str:
    """
    One JSON header line, then raw little-endian float32 tensors in header order.
    Returns the file's sha256.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    tensors = []
    payloads = []
    offset = 0
    for name, tensor in model.state_dict().items():
        data = tensor.detach().cpu().to(torch.float32).contiguous().numpy().astype("<f4", copy=False)
        raw = data.tobytes(order="C")
        tensors.append({"name": name, "shape": list(tensor.shape), "offset": offset, "nbytes": len(raw)})
        payloads.append(raw)
        offset += len(raw)

    header = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "role": model.role.value,
        "model_config": model.config.model_dump(mode="json"),
        "seed": int(seed),
        "vocab_sha256": vocab_sha256 or model.vocab_sha256 or {},
        "config_sha256": config_sha256,
        "extra": extra or {},
        "tensors": tensors,
    }
    with open(path, "wb") as f:
        f.write(canonical_json(header).encode("utf-8") + b"\n")
        for raw in payloads:
            f.write(raw)
    digest = file_sha256(path)
    logger.info(f"Saved {model.role.value} checkpoint to {path} ({offset} payload bytes, sha256={digest[:12]})")
    return digest


def read_checkpoint_header(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"Checkpoint not found: {path}")
    with open(path, "rb") as f:
        line = f.readline()
    try:
        header = from_json(line.decode("utf-8"))
    except (UnicodeDecodeError, ValueError) as e:
        raise CheckpointError(f"{path}: unreadable checkpoint header") from e
    if not isinstance(header, dict) or header.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path}: not a {CHECKPOINT_FORMAT} file")
    if header.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {header.get('version')}")
    return header


def load_checkpoint(path: Union[str, Path]) -> Tuple[TranslationModel, Dict[str, Any]]:
    """Rebuild the model from its header and payload; the model comes back in eval mode."""
    path = Path(path)
    header = read_checkpoint_header(path)
    with open(path, "rb") as f:
        f.readline()
        payload = f.read()

    try:
        config = ModelConfig.model_validate(header["model_config"])
        model = TranslationModel(config, Role(header["role"]))
    except (KeyError, ValueError) as e:
        raise CheckpointError(f"{path}: invalid model header: {e}") from e

    expected = model.state_dict()
    declared = {t["name"]: t for t in header["tensors"]}
    if set(declared) != set(expected):
        raise CheckpointError(f"{path}: tensor names do not match the declared model")

    state = {}
    for name, reference in expected.items():
        entry = declared[name]
        if list(reference.shape) != entry["shape"]:
            raise CheckpointError(f"{path}: tensor {name} has shape {entry['shape']}, expected {list(reference.shape)}")
        start, end = entry["offset"], entry["offset"] + entry["nbytes"]
        if end > len(payload):
            raise CheckpointError(f"{path}: payload truncated at tensor {name}")
        array = np.frombuffer(payload[start:end], dtype="<f4").reshape(entry["shape"])
        state[name] = torch.from_numpy(array.astype(np.float32))
    model.load_state_dict(state)
    model.vocab_sha256 = dict(header.get("vocab_sha256") or {})
    model.eval()
    logger.info(f"Loaded {model.role.value} checkpoint from {path}")
    return model, header
