"""
Agent checkpoints as versioned ``.npz`` archives.

Every parameter matrix, every optimizer moment and every counter is stored
under ``<field>/<part>`` keys, so a load gives back an agent whose arrays are
bit-identical to the saved one.
"""

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from .consts import CHECKPOINT_FORMAT_VERSION
from .dqn import DqnAgent, EmbeddingTable
from .errors import SchemaError
from .log import get_logger
from .modes import Activation
from .nn import AdamState, Layer, MlpParams, ScalarParam
from .sac import SacAgent

logger = get_logger(__name__)

_AGENTS = {"sac": SacAgent, "dqn": DqnAgent}


@dataclass(frozen=True, eq=False)
class Checkpoint:
    agent: SacAgent | DqnAgent
    env_step: int
    config_text: str = ""


def _encode(value: Any) -> tuple[str, dict[str, np.ndarray]]:
    if value is None:
        return "none", {}
    if isinstance(value, MlpParams):
        parts = {
            "head_dim": np.array(-1 if value.head_dim is None else value.head_dim),
            "activations": np.array([str(layer.activation) for layer in value.layers]),
        }
        for k, layer in enumerate(value.layers):
            parts[f"w{k}"] = layer.weight
            parts[f"b{k}"] = layer.bias
        return "mlp", parts
    if isinstance(value, EmbeddingTable):
        return "embedding", {"rows": value.rows}
    if isinstance(value, ScalarParam):
        return "scalar", {"data": value.data}
    if isinstance(value, AdamState):
        parts = {
            "step": np.array(value.step),
            "hyper": np.array([value.learning_rate, value.beta1, value.beta2, value.eps]),
        }
        for k, (m, v) in enumerate(zip(value.first, value.second)):
            parts[f"m{k}"] = m
            parts[f"v{k}"] = v
        return "adam", parts
    if isinstance(value, (bool, np.bool_)):
        return "bool", {"value": np.array(bool(value))}
    if isinstance(value, (int, np.integer)):
        return "int", {"value": np.array(int(value))}
    if isinstance(value, (float, np.floating)):
        return "float", {"value": np.array(float(value), dtype=np.float64)}
    raise SchemaError(f"cannot store a {type(value).__name__} in a checkpoint")


def _decode(kind: str, parts: dict[str, np.ndarray]) -> Any:
    if kind == "none":
        return None
    if kind == "mlp":
        activations = parts["activations"]
        layers = tuple(
            Layer(parts[f"w{k}"].copy(), parts[f"b{k}"].copy(), Activation(str(activations[k])))
            for k in range(len(activations))
        )
        head_dim = int(parts["head_dim"])
        return MlpParams(layers, None if head_dim < 0 else head_dim)
    if kind == "embedding":
        return EmbeddingTable(parts["rows"].copy())
    if kind == "scalar":
        return ScalarParam(parts["data"].copy())
    if kind == "adam":
        count = sum(1 for key in parts if key.startswith("m"))
        learning_rate, beta1, beta2, eps = (float(x) for x in parts["hyper"])
        return AdamState(
            tuple(parts[f"m{k}"].copy() for k in range(count)),
            tuple(parts[f"v{k}"].copy() for k in range(count)),
            int(parts["step"]),
            learning_rate,
            beta1,
            beta2,
            eps,
        )
    if kind == "bool":
        return bool(parts["value"])
    if kind == "int":
        return int(parts["value"])
    if kind == "float":
        return float(parts["value"])
    raise SchemaError(f"unknown checkpoint entry kind {kind!r}")


def save_checkpoint(
    agent: SacAgent | DqnAgent,
    path: str | Path,
    env_step: int = 0,
    config_text: str = "",
) -> Path:
    """Write ``agent`` and its training position to ``path``."""
    path = Path(path)
    agent_type = "sac" if isinstance(agent, SacAgent) else "dqn"
    arrays: dict[str, np.ndarray] = {
        "version": np.array(CHECKPOINT_FORMAT_VERSION),
        "agent_type": np.array(agent_type),
        "env_step": np.array(env_step),
        "config_text": np.array(config_text),
    }
    for field in dataclasses.fields(agent):
        kind, parts = _encode(getattr(agent, field.name))
        arrays[f"{field.name}/kind"] = np.array(kind)
        arrays.update({f"{field.name}/{part}": value for part, value in parts.items()})
    with path.open("wb") as handle:
        np.savez(handle, **arrays)
    logger.info("saved %s checkpoint at env step %d to %s", agent_type, env_step, path)
    return path


def load_checkpoint(path: str | Path) -> Checkpoint:
    """
    Read a checkpoint written by :func:`save_checkpoint`.

    Raises:
        SchemaError: Wrong format version or an unknown agent type.
    """
    path = Path(path)
    with np.load(path, allow_pickle=False) as archive:
        data = {key: archive[key] for key in archive.files}
    version = int(data.get("version", -1))
    if version != CHECKPOINT_FORMAT_VERSION:
        raise SchemaError(f"{path}: checkpoint format {version}, expected {CHECKPOINT_FORMAT_VERSION}")
    agent_type = str(data["agent_type"])
    if agent_type not in _AGENTS:
        raise SchemaError(f"{path}: unknown agent type {agent_type!r}")
    cls = _AGENTS[agent_type]
    values = {}
    for field in dataclasses.fields(cls):
        prefix = f"{field.name}/"
        parts = {key[len(prefix) :]: value for key, value in data.items() if key.startswith(prefix)}
        if "kind" not in parts:
            raise SchemaError(f"{path}: missing entry {field.name!r}")
        kind = str(parts.pop("kind"))
        values[field.name] = _decode(kind, parts)
    return Checkpoint(cls(**values), int(data["env_step"]), str(data["config_text"]))
