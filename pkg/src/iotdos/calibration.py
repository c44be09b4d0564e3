"""Turn bench measurements into per-message drains and linear lifetimes."""

from dataclasses import dataclass


class CalibrationError(ValueError):
    def __init__(self, code, message):
        self.code = code
        super().__init__(f"{code}: {message}")


@dataclass(frozen=True)
class CalibrationInput:
    baseline_rate: float  # battery units / s when idle
    strain_rate: float  # battery units / s under attack load
    msgs_per_second: float
    battery_capacity: float = 0.0


def drain_per_message(inp):
    """Marginal battery cost of one message: extra power over throughput."""
    if not inp.msgs_per_second > 0:
        raise CalibrationError("ZERO_THROUGHPUT", "msgs_per_second must be > 0")
    if inp.baseline_rate < 0:
        raise CalibrationError("NEGATIVE_RATE", "baseline_rate must be >= 0")
    if inp.strain_rate < inp.baseline_rate:
        raise CalibrationError("NEGATIVE_DELTA", "strain_rate is below baseline_rate")
    return (inp.strain_rate - inp.baseline_rate) / inp.msgs_per_second


def lifetime_estimate(capacity, mean_drain_rate):
    """Seconds until a linearly drained battery of ``capacity`` is empty."""
    if not mean_drain_rate > 0:
        raise CalibrationError("ZERO_RATE", "mean_drain_rate must be > 0")
    return capacity / mean_drain_rate


def trace_drain_rate(trace):
    """Mean system-wide drain per unit time over a trace."""
    duration = trace.final_state.clock - (trace.initial_state.clock if trace.initial_state else 0)
    if duration <= 0:
        raise CalibrationError("ZERO_DURATION", "trace has no elapsed time")
    total = sum(t.drain_src + t.drain_dst for t in trace.transitions)
    return total / duration
