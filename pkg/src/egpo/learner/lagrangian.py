"""PID update of the Lagrange multiplier on the episodic intervention count."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass
class LagrangianState:
    lam: float = 0.0
    integral_delta: float = 0.0
    prev_delta: float = 0.0
    iteration: int = 0


@dataclass(frozen=True)
class PIDGains:
    kp: float = 5.0
    ki: float = 0.01
    kd: float = 0.1
    integral_limit: float | None = None  # |integral| clamp; None disables

    def integral_only(self) -> "PIDGains":
        return PIDGains(0.0, self.ki, 0.0, self.integral_limit)


def pid_update_lambda(state: LagrangianState, episodic_interventions: float, limit: float,
                      gains: PIDGains = PIDGains()) -> LagrangianState:
    """Return the next multiplier state.

    ``delta = episodic_interventions - limit``; the multiplier is the
    projected PID output ``max(0, kp*delta + ki*integral + kd*(delta - prev))``.
    """
    delta = float(episodic_interventions) - float(limit)
    integral = state.integral_delta + delta
    if gains.integral_limit is not None:
        integral = min(max(integral, -gains.integral_limit), gains.integral_limit)
    derivative = delta - state.prev_delta
    lam = max(0.0, gains.kp * delta + gains.ki * integral + gains.kd * derivative)
    return LagrangianState(lam, integral, delta, state.iteration + 1)
