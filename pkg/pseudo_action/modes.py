from enum import Enum


class _StrEnum(str, Enum):
    """
    String-valued enum that compares equal to its plain string value.

    Config files and the command line hand us plain strings, so every enum in
    the package accepts them interchangeably.
    """

    def __eq__(self, other: object) -> bool:
        if isinstance(other, str):
            return self.value == other
        return NotImplemented

    def __str__(self) -> str:
        return self.value

    def __repr__(self) -> str:
        return repr(self.value)

    def __hash__(self) -> int:
        return hash(self.value)


class Activation(_StrEnum):
    """
    Per-layer activation of a dense network.

    Examples:
        >>> from pseudo_action.modes import Activation
        >>> Activation.Relu
        'relu'
        >>> Activation("none") is Activation.Identity
        True
    """

    Relu = "relu"
    Identity = "none"


class ActionKind(_StrEnum):
    """
    Shape of an environment's action space.

    Examples:
        >>> from pseudo_action.modes import ActionKind
        >>> ActionKind.Continuous == "continuous"
        True
    """

    Continuous = "continuous"
    Discrete = "discrete"


class SampleMode(_StrEnum):
    """
    Which replay windows the sampler may start from.

    ``Pseudo`` allows every start index whose window fits in its episode,
    ``Canonical`` only the ones that sit on an action-decision point.

    Examples:
        >>> from pseudo_action.modes import SampleMode
        >>> SampleMode.Pseudo
        'pseudo'
        >>> SampleMode("canonical") == SampleMode.Canonical
        True
        >>> sorted([SampleMode.Pseudo, SampleMode.Canonical])
        ['canonical', 'pseudo']
    """

    Pseudo = "pseudo"
    Canonical = "canonical"


class RunMode(_StrEnum):
    """
    Experiment arm: ``Baseline`` trains Q only on canonical windows,
    ``Pseudo`` on all windows.

    Examples:
        >>> from pseudo_action.modes import RunMode, SampleMode
        >>> RunMode.Baseline.sample_mode
        'canonical'
        >>> RunMode("pseudo").sample_mode is SampleMode.Pseudo
        True
    """

    Baseline = "baseline"
    Pseudo = "pseudo"

    @property
    def sample_mode(self) -> SampleMode:
        if self is RunMode.Pseudo:
            return SampleMode.Pseudo
        return SampleMode.Canonical


class Algo(_StrEnum):
    """
    Learner family.

    Examples:
        >>> from pseudo_action.modes import Algo, ActionKind
        >>> Algo.Sac.action_kind
        'continuous'
        >>> Algo("dqn").action_kind
        'discrete'
    """

    Sac = "sac"
    Dqn = "dqn"

    @property
    def action_kind(self) -> ActionKind:
        if self is Algo.Sac:
            return ActionKind.Continuous
        return ActionKind.Discrete
