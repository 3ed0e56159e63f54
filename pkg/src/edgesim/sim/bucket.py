"""Token-bucket policing in simulated time."""
from __future__ import annotations

from typing import Iterable


class TokenBucket:
    """FIFO token bucket: ``rate`` tokens/s, at most ``burst`` stored.

    Requests that find no token wait in arrival order until one accrues, so
    release times never decrease. The bucket starts full. ``hold_until``
    blocks all releases before a given time (used while an app migrates).
    """

    __slots__ = ("rate", "burst", "tokens", "last_t", "last_release", "hold_until")

    def __init__(self, rate: float, burst: float = 1.0):
        if rate <= 0:
            raise ValueError("token rate must be > 0")
        if burst < 1:
            raise ValueError("burst must be >= 1")
        self.rate = rate
        self.burst = float(burst)
        self.tokens = float(burst)
        self.last_t = 0.0
        self.last_release = 0.0
        self.hold_until = 0.0

    def _refill(self, t: float) -> None:
        if t > self.last_t:
            self.tokens = min(self.burst, self.tokens + (t - self.last_t) * self.rate)
            self.last_t = t

    def release_time(self, t_arrival: float) -> float:
        """Consume one token for a request arriving at ``t_arrival``; return when it passes."""
        d = max(t_arrival, self.last_release, self.hold_until)
        self._refill(d)
        if self.tokens < 1.0:
            # tolerate float dust so a just-accrued token is not lost
            wait = (1.0 - self.tokens) / self.rate
            if wait > 1e-12:
                d += wait
                self._refill(d)
            self.tokens = 1.0
        self.tokens -= 1.0
        self.last_release = d
        return d

    def set_rate(self, rate: float, now: float) -> None:
        self._refill(now)
        self.rate = rate


def run_token_bucket(rate: float, burst: float, arrivals: Iterable[float]) -> list[float]:
    """Release times for a sorted stream of arrival times."""
    tb = TokenBucket(rate, burst)
    return [tb.release_time(t) for t in arrivals]
