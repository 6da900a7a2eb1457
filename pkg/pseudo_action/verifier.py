"""
Numerical check of the pseudo-action approximation.

Drive a continuous-time system for one block of length ``horizon`` with a
two-segment schedule (``u1`` for a fraction ``p`` of the block, then ``u2``)
and compare the endpoint with the one reached by holding the averaged action
``p * u1 + (1 - p) * u2`` for the whole block. The gap and how fast it shrinks
with the block length and with ``u1 - u2`` are what this module measures.

Integration is fixed-step RK4. A schedule switch must fall on a step boundary.
"""

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .consts import RealMatrix
from .errors import ConfigurationError, NonFiniteError, ScheduleAlignmentError
from .log import get_logger

logger = get_logger(__name__)

DEFAULT_SUBSTEPS = 1024
# gaps below this are integration noise
EXACT_GAP = 1e-13
ORDER_TOLERANCE = 0.3
RICHARDSON_BAND = (10.0, 22.0)


@dataclass(frozen=True, eq=False)
class DynamicsSpec:
    """
    A smooth vector field ``f(x, u)`` and the convergence orders the gap is
    expected to show on it.

    Attributes:
        name: Registry name.
        state_dim: Dimension of ``x``.
        action_dim: Dimension of ``u``.
        vector_field: ``(x, u) -> dx/dt``.
        horizon_order: Expected slope of log gap against log horizon, ``None``
            when the pseudo-action is exact.
        action_order: Expected slope of log gap against log ``|u1 - u2|``.
        default_state: Start state used by the verification study.
        action_bound: Largest allowed ``|u|``, if any.
        integrator_exact: RK4 reproduces the exact flow (state-independent f).
    """

    name: str
    state_dim: int
    action_dim: int
    vector_field: Callable[[RealMatrix, RealMatrix], RealMatrix]
    horizon_order: float | None
    action_order: float | None
    default_state: RealMatrix
    action_bound: float | None = None
    integrator_exact: bool = False

    def f(self, state: RealMatrix, action: RealMatrix) -> RealMatrix:
        derivative = np.asarray(self.vector_field(state, action), dtype=np.float64)
        if not np.all(np.isfinite(derivative)):
            raise NonFiniteError(f"{self.name}: vector field is not finite at x={state}, u={action}")
        return derivative


def _integrator(state: RealMatrix, action: RealMatrix) -> RealMatrix:
    return np.array([action[0]])


def _pendulum(state: RealMatrix, action: RealMatrix) -> RealMatrix:
    theta, theta_dot = state
    return np.array([theta_dot, 15.0 * np.sin(theta) + 3.0 * action[0]])


_BILINEAR_A = np.array([[0.0, 1.0], [-1.0, -0.1]])
_BILINEAR_B = np.array([0.0, 1.0])
_BILINEAR_C = np.array([0.5, -0.3])


def _bilinear(state: RealMatrix, action: RealMatrix) -> RealMatrix:
    u = action[0]
    return _BILINEAR_A @ state + _BILINEAR_B * u + state * (_BILINEAR_C * u)


def _quadratic_drive(state: RealMatrix, action: RealMatrix) -> RealMatrix:
    u = action[0]
    return np.array([u, u * u])


DYNAMICS: dict[str, DynamicsSpec] = {
    spec.name: spec
    for spec in (
        DynamicsSpec("integrator", 1, 1, _integrator, None, None, np.array([0.0]),
                     integrator_exact=True),
        DynamicsSpec("pendulum-ode", 2, 1, _pendulum, 2.0, 1.0, np.array([1.0, 0.0]),
                     action_bound=2.0),
        DynamicsSpec("bilinear", 2, 1, _bilinear, 2.0, 1.0, np.array([0.5, -0.3])),
        DynamicsSpec("quadratic-drive", 2, 1, _quadratic_drive, 1.0, 2.0, np.array([0.0, 0.0]),
                     integrator_exact=True),
    )
}


def get_dynamics(name: str) -> DynamicsSpec:
    """
    Examples:
        >>> get_dynamics("bilinear").state_dim
        2
        >>> get_dynamics("lorenz")
        Traceback (most recent call last):
        ...
        pseudo_action.errors.ConfigurationError: unknown dynamics 'lorenz'; known: integrator, pendulum-ode, bilinear, quadratic-drive
    """
    if name not in DYNAMICS:
        raise ConfigurationError(f"unknown dynamics {name!r}; known: {', '.join(DYNAMICS)}")
    return DYNAMICS[name]


def _as_action(values) -> RealMatrix:
    return np.atleast_1d(np.asarray(values, dtype=np.float64))


@dataclass(frozen=True, eq=False)
class PiecewiseSchedule:
    """
    ``u1`` for the first ``p * horizon`` time units, ``u2`` for the rest.

    Examples:
        >>> PiecewiseSchedule(1.0, -1.0, p=1.0, horizon=0.2)
        Traceback (most recent call last):
        ...
        pseudo_action.errors.ConfigurationError: p must lie strictly between 0 and 1, got 1.0
    """

    u1: RealMatrix
    u2: RealMatrix
    p: float
    horizon: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "u1", _as_action(self.u1))
        object.__setattr__(self, "u2", _as_action(self.u2))
        if self.u1.shape != self.u2.shape:
            raise ConfigurationError(f"u1 {self.u1.shape} and u2 {self.u2.shape} differ in shape")
        if not 0.0 < self.p < 1.0:
            raise ConfigurationError(f"p must lie strictly between 0 and 1, got {self.p}")
        if not self.horizon > 0:
            raise ConfigurationError(f"horizon must be positive, got {self.horizon}")

    def with_horizon(self, horizon: float) -> "PiecewiseSchedule":
        return PiecewiseSchedule(self.u1, self.u2, self.p, horizon)

    def swapped(self) -> "PiecewiseSchedule":
        """The same block seen from the other side: ``(u2, 1 - p)`` first."""
        return PiecewiseSchedule(self.u2, self.u1, 1.0 - self.p, self.horizon)


@dataclass(frozen=True, eq=False)
class ConstantControl:
    u: RealMatrix
    horizon: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "u", _as_action(self.u))
        if not self.horizon > 0:
            raise ConfigurationError(f"horizon must be positive, got {self.horizon}")


def pseudo_action_of(schedule: PiecewiseSchedule) -> RealMatrix:
    """
    The ``p``-weighted average of the two segments, computed as
    ``u2 + p * (u1 - u2)`` so equal segments give that action exactly.

    Examples:
        >>> pseudo_action_of(PiecewiseSchedule(4.0, 0.0, p=0.25, horizon=1.0)).tolist()
        [1.0]
        >>> pseudo_action_of(PiecewiseSchedule(1.0, -1.0, p=0.5, horizon=1.0)).tolist()
        [0.0]
        >>> pseudo_action_of(PiecewiseSchedule(0.1, 0.1, p=0.3, horizon=1.0)).tolist()
        [0.1]
    """
    return schedule.u2 + schedule.p * (schedule.u1 - schedule.u2)


def rk4_step(spec: DynamicsSpec, state: RealMatrix, action: RealMatrix, dt: float) -> RealMatrix:
    k1 = spec.f(state, action)
    k2 = spec.f(state + 0.5 * dt * k1, action)
    k3 = spec.f(state + 0.5 * dt * k2, action)
    k4 = spec.f(state + dt * k3, action)
    return state + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _grid_count(length: float, dt: float, what: str) -> int:
    count = int(round(length / dt))
    if count < 1 or abs(count * dt - length) > 1e-9 * max(length, dt):
        raise ScheduleAlignmentError(f"{what} {length!r} is not a whole number of steps of {dt!r}")
    return count


def rollout_endpoint(
    spec: DynamicsSpec,
    x0: RealMatrix,
    control: PiecewiseSchedule | ConstantControl,
    dt: float | None = None,
) -> RealMatrix:
    """
    Integrate ``dx/dt = f(x, u(t))`` over the control's horizon.

    Args:
        spec: Dynamics.
        x0: Start state.
        control: Two-segment schedule or constant action.
        dt: RK4 step; defaults to ``horizon / 1024``.

    Raises:
        ScheduleAlignmentError: ``dt`` does not divide the horizon, or the
            switch at ``p * horizon`` falls between steps.

    Examples:
        >>> import numpy as np
        >>> spec = get_dynamics("integrator")
        >>> rollout_endpoint(spec, np.array([1.0]), ConstantControl(0.5, horizon=2.0)).round(12).tolist()
        [2.0]
        >>> rollout_endpoint(spec, np.zeros(1), PiecewiseSchedule(1.0, 0.0, 0.3, 1.0), dt=0.25)
        Traceback (most recent call last):
        ...
        pseudo_action.errors.ScheduleAlignmentError: switch time 0.3 is not a whole number of steps of 0.25
    """
    if dt is None:
        dt = control.horizon / DEFAULT_SUBSTEPS
    if not dt > 0:
        raise ConfigurationError(f"dt must be positive, got {dt}")
    steps = _grid_count(control.horizon, dt, "horizon")
    if isinstance(control, PiecewiseSchedule):
        switch = _grid_count(control.p * control.horizon, dt, "switch time")
        actions = [control.u1] * switch + [control.u2] * (steps - switch)
    else:
        actions = [control.u] * steps
    for u in actions:
        if spec.action_bound is not None and np.any(np.abs(u) > spec.action_bound):
            raise ConfigurationError(f"{spec.name}: action {u} exceeds the bound {spec.action_bound}")
    state = np.asarray(x0, dtype=np.float64).copy()
    if state.shape != (spec.state_dim,):
        raise ConfigurationError(f"{spec.name}: state must have shape ({spec.state_dim},), got {state.shape}")
    for u in actions:
        state = rk4_step(spec, state, u, dt)
    return state


def pseudo_action_gap(
    spec: DynamicsSpec,
    x0: RealMatrix,
    schedule: PiecewiseSchedule,
    dt: float | None = None,
) -> float:
    """
    ``|endpoint(schedule) - endpoint(constant pseudo-action)|``.

    Examples:
        >>> import numpy as np
        >>> spec = get_dynamics("pendulum-ode")
        >>> pseudo_action_gap(spec, spec.default_state, PiecewiseSchedule(1.5, 1.5, 0.5, 0.2))
        0.0
    """
    scheduled = rollout_endpoint(spec, x0, schedule, dt)
    averaged = rollout_endpoint(spec, x0, ConstantControl(pseudo_action_of(schedule), schedule.horizon), dt)
    return float(np.linalg.norm(scheduled - averaged))


@dataclass(frozen=True)
class OrderFit:
    """
    A fitted log-log slope, or ``exact`` when every gap was integration noise.

    Examples:
        >>> str(OrderFit(order=None, xs=(1.0,), gaps=(0.0,)))
        'exact'
        >>> str(OrderFit(order=1.98765, xs=(1.0,), gaps=(1e-3,)))
        '1.988'
    """

    order: float | None
    xs: tuple[float, ...]
    gaps: tuple[float, ...]

    @property
    def exact(self) -> bool:
        return self.order is None

    def within(self, expected: float | None, tolerance: float = ORDER_TOLERANCE) -> bool:
        if expected is None:
            return self.exact
        return self.order is not None and abs(self.order - expected) <= tolerance

    def __str__(self) -> str:
        return "exact" if self.order is None else f"{self.order:.3f}"


def fit_order(xs: Sequence[float], gaps: Sequence[float]) -> OrderFit:
    """
    Least-squares slope of ``log(gap)`` against ``log(x)``.

    Examples:
        >>> round(fit_order([1.0, 0.5, 0.25], [3.0, 0.75, 0.1875]).order, 12)
        2.0
    """
    xs, gaps = tuple(float(x) for x in xs), tuple(float(g) for g in gaps)
    if max(gaps) < EXACT_GAP:
        return OrderFit(None, xs, gaps)
    usable = [(x, g) for x, g in zip(xs, gaps) if g >= EXACT_GAP]
    if len(usable) < 2:
        raise ConfigurationError(f"need at least two gaps above {EXACT_GAP} to fit an order, got {gaps}")
    log_x, log_g = np.log([x for x, _ in usable]), np.log([g for _, g in usable])
    slope, _ = np.polyfit(log_x, log_g, 1)
    return OrderFit(float(slope), xs, gaps)


def _check_geometric(values: Sequence[float], what: str) -> None:
    if len(values) < 3:
        raise ConfigurationError(f"need at least 3 {what}, got {len(values)}")
    values = np.asarray(values, dtype=np.float64)
    if np.any(values <= 0):
        raise ConfigurationError(f"{what} must be positive, got {values.tolist()}")
    ratios = values[1:] / values[:-1]
    if not np.allclose(ratios, ratios[0], rtol=1e-9):
        raise ConfigurationError(f"{what} must form a geometric progression, got {values.tolist()}")


def scaling_exponent(
    spec: DynamicsSpec,
    x0: RealMatrix,
    schedule: PiecewiseSchedule,
    horizons: Sequence[float],
    substeps: int = DEFAULT_SUBSTEPS,
) -> OrderFit:
    """
    Order of the gap in the block length with the schedule shape fixed.

    Examples:
        >>> import numpy as np
        >>> spec = get_dynamics("integrator")
        >>> fit = scaling_exponent(spec, spec.default_state, PiecewiseSchedule(2.0, -1.0, 0.5, 1.0),
        ...                        [0.1, 0.05, 0.025])
        >>> str(fit)
        'exact'
    """
    _check_geometric(horizons, "horizons")
    gaps = [
        pseudo_action_gap(spec, x0, schedule.with_horizon(h), h / substeps) for h in horizons
    ]
    return fit_order(horizons, gaps)


@dataclass(frozen=True)
class ActionGapTable:
    """Gaps at a fixed pseudo-action for action differences scaled by ``s``."""

    scales: tuple[float, ...]
    action_differences: tuple[float, ...]
    gaps: tuple[float, ...]
    fit: OrderFit

    def rows(self) -> list[tuple[float, float]]:
        return list(zip(self.action_differences, self.gaps))


def scaled_schedule(base: PiecewiseSchedule, scale: float) -> PiecewiseSchedule:
    """
    Schedule with the same pseudo-action as ``base`` and ``u1 - u2`` scaled by
    ``scale``: ``u1 = a + (1 - p) s d``, ``u2 = a - p s d``.

    Examples:
        >>> base = PiecewiseSchedule(2.0, -2.0, 0.5, 0.2)
        >>> half = scaled_schedule(base, 0.5)
        >>> half.u1.tolist(), half.u2.tolist(), pseudo_action_of(half).tolist()
        ([1.0], [-1.0], [0.0])
    """
    average = pseudo_action_of(base)
    difference = base.u1 - base.u2
    return PiecewiseSchedule(
        average + (1.0 - base.p) * scale * difference,
        average - base.p * scale * difference,
        base.p,
        base.horizon,
    )


def gap_vs_action_difference(
    spec: DynamicsSpec,
    x0: RealMatrix,
    base: PiecewiseSchedule,
    scales: Sequence[float],
    dt: float | None = None,
) -> ActionGapTable:
    """
    Gap as a function of the action difference at fixed pseudo-action.

    ``s = 0`` rows are reported but left out of the slope fit.
    """
    if any(s < 0 for s in scales):
        raise ConfigurationError(f"scales must be non-negative, got {list(scales)}")
    difference = float(np.linalg.norm(base.u1 - base.u2))
    gaps = [pseudo_action_gap(spec, x0, scaled_schedule(base, s), dt) for s in scales]
    positive = [(s * difference, g) for s, g in zip(scales, gaps) if s > 0]
    if len(positive) < 2:
        raise ConfigurationError("need at least two positive scales to fit an order")
    fit = fit_order([d for d, _ in positive], [g for _, g in positive])
    return ActionGapTable(
        tuple(float(s) for s in scales),
        tuple(float(s) * difference for s in scales),
        tuple(gaps),
        fit,
    )


def richardson_ratio(
    spec: DynamicsSpec,
    x0: RealMatrix,
    control: PiecewiseSchedule | ConstantControl,
    dt: float,
) -> float | None:
    """
    ``|x(dt) - x(dt/2)| / |x(dt/2) - x(dt/4)|``; about 16 for a fourth-order
    integrator. ``None`` when the integration is exact at every step size.
    """
    coarse, medium, fine = (rollout_endpoint(spec, x0, control, dt / k) for k in (1, 2, 4))
    numerator = float(np.linalg.norm(coarse - medium))
    denominator = float(np.linalg.norm(medium - fine))
    if denominator < EXACT_GAP:
        return None
    return numerator / denominator


def snap_p(p: float, horizon: float, dt: float) -> float:
    """
    Nearest switch fraction that falls on a step boundary, kept inside (0, 1).

    Examples:
        >>> snap_p(0.3, 1.0, 0.125)
        0.25
        >>> snap_p(0.01, 1.0, 0.125)
        0.125
    """
    steps = _grid_count(horizon, dt, "horizon")
    if steps < 2:
        raise ScheduleAlignmentError(f"horizon {horizon} holds a single step of {dt}; no switch fits")
    switch = min(max(int(round(p * steps)), 1), steps - 1)
    return switch / steps


@dataclass(frozen=True)
class BandCheck:
    dynamics: str
    quantity: str
    value: str
    band: str
    passed: bool


@dataclass
class VerificationReport:
    rows: list[dict] = field(default_factory=list)
    checks: list[BandCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)


def _row(study: str, spec: DynamicsSpec, schedule: PiecewiseSchedule, gap: float, fit: str) -> dict:
    return {
        "study": study,
        "dynamics": spec.name,
        "p": repr(float(schedule.p)),
        "u1": " ".join(repr(float(v)) for v in schedule.u1),
        "u2": " ".join(repr(float(v)) for v in schedule.u2),
        "horizon": repr(float(schedule.horizon)),
        "gap": repr(gap),
        "fitted_order": fit,
    }


def _band(expected: float | None) -> str:
    if expected is None:
        return "exact"
    return f"[{expected - ORDER_TOLERANCE:.1f}, {expected + ORDER_TOLERANCE:.1f}]"


def run_verification(
    dynamics: Iterable[str] = tuple(DYNAMICS),
    p: float = 0.5,
    u1: float = 2.0,
    u2: float = -2.0,
    horizons: Sequence[float] = tuple(0.4 * 0.5**k for k in range(8)),
    scales: Sequence[float] = tuple(0.5**k for k in range(8)),
    action_horizon: float = 0.2,
    substeps: int = DEFAULT_SUBSTEPS,
) -> VerificationReport:
    """
    The full study: exactness grid on the integrator, gap orders in horizon
    and action difference on every dynamics, RK4 step-halving ratios where
    RK4 is not exact.
    """
    report = VerificationReport()
    for name in dynamics:
        spec = get_dynamics(name)
        x0 = spec.default_state
        snapped = snap_p(p, 1.0, 1.0 / substeps)
        if snapped != p:
            logger.info("%s: p snapped from %s to %s", name, p, snapped)
        base = PiecewiseSchedule(u1, u2, snapped, horizons[0])

        if spec.integrator_exact and spec.horizon_order is None:
            worst = 0.0
            for grid_p in (0.125, 0.25, 0.5, 0.75, 0.875):
                for a in np.linspace(-2.0, 2.0, 5):
                    for b in np.linspace(-2.0, 2.0, 5):
                        schedule = PiecewiseSchedule(a, b, grid_p, 1.0)
                        gap = pseudo_action_gap(spec, x0, schedule, 1.0 / substeps)
                        worst = max(worst, gap)
                        report.rows.append(_row("grid", spec, schedule, gap, ""))
            report.checks.append(
                BandCheck(name, "grid max gap", repr(worst), "< 1e-12", worst < 1e-12)
            )

        horizon_fit = scaling_exponent(spec, x0, base, horizons, substeps)
        for h, gap in zip(horizon_fit.xs, horizon_fit.gaps):
            report.rows.append(_row("horizon", spec, base.with_horizon(h), gap, str(horizon_fit)))
        report.checks.append(
            BandCheck(name, "horizon order", str(horizon_fit), _band(spec.horizon_order),
                      horizon_fit.within(spec.horizon_order))
        )

        action_base = base.with_horizon(action_horizon)
        table = gap_vs_action_difference(spec, x0, action_base, scales, action_horizon / substeps)
        for s, gap in zip(table.scales, table.gaps):
            report.rows.append(_row("action", spec, scaled_schedule(action_base, s), gap, str(table.fit)))
        report.checks.append(
            BandCheck(name, "action-difference order", str(table.fit), _band(spec.action_order),
                      table.fit.within(spec.action_order))
        )

        if not spec.integrator_exact:
            ratio = richardson_ratio(spec, x0, base.with_horizon(1.0), 0.05)
            low, high = RICHARDSON_BAND
            report.checks.append(
                BandCheck(name, "rk4 halving ratio", "exact" if ratio is None else f"{ratio:.2f}",
                          f"[{low:.0f}, {high:.0f}]", ratio is not None and low <= ratio <= high)
            )
    return report


VERIFICATION_COLUMNS = ("study", "dynamics", "p", "u1", "u2", "horizon", "gap", "fitted_order")


def write_verification_csv(report: VerificationReport, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=VERIFICATION_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(report.rows)
    logger.info("wrote %d verification rows to %s", len(report.rows), path)
    return path
