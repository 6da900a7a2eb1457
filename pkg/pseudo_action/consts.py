from typing import Callable, Union, TYPE_CHECKING

import numpy as np
from numpy.typing import NDArray

if TYPE_CHECKING:
    from .nn import MlpParams, ScalarParam, ParamGroup
    from .dqn import EmbeddingTable

RealMatrix = NDArray[np.float64]
IntArray = NDArray[np.int64]
Action = Union[RealMatrix, int]
ActionSelector = Callable[[RealMatrix], Action]
Parameters = Union["MlpParams", "EmbeddingTable", "ScalarParam", "ParamGroup"]

# Adam published defaults
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

LOG_STD_MIN = -10.0
LOG_STD_MAX = 2.0
# additive guard inside log(1 - tanh^2(u) + eps)
TANH_LOG_EPS = 1e-6
HALF_LOG_2PI = 0.5 * float(np.log(2.0 * np.pi))

# training defaults
GAMMA_ENV = 0.99**0.25
TAU = 0.005
FRAME_STACK = 4
UPDATE_EVERY = 4
ACTOR_UPDATE_FREQ = 2
MIN_REPLAY = 500
HIDDEN_DIM = 256
N_LAYERS = 3
EMBEDDING_DIM = 8
SAC_LEARNING_RATE = 0.001
DQN_LEARNING_RATE = 0.0003
SAC_BATCH_SIZE = 32
DQN_BATCH_SIZE = 64

DESK_ENV_STEPS = 100_000
EVAL_INTERVAL = 2_000
EVAL_EPISODES = 10

METRICS_SCHEMA = 1
REPLAY_FORMAT_VERSION = 1
CHECKPOINT_FORMAT_VERSION = 1
