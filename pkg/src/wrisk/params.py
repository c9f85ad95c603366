"""Robustness multipliers shared by every worst-case formula."""

from __future__ import annotations

import math
from dataclasses import dataclass

from wrisk.errors import ValidationError


@dataclass(frozen=True)
class RobustnessParams:
    """Multipliers controlling the worst-case search.

    alpha scales the entropy constraint (larger alpha = tighter entropy
    restriction, flatter worst case), beta scales the transport budget
    (larger beta = cheaper transport, wilder worst case), and theta is the
    multiplier of the relative-entropy baseline.  All three are exposed
    directly; budget-to-multiplier inversion is deliberately not provided.
    """

    alpha: float = 0.0
    beta: float = 0.0
    theta: float = 0.0

    def __post_init__(self) -> None:
        for name in ("alpha", "beta", "theta"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0.0:
                raise ValidationError(f"{name} must be finite and >= 0, got {value!r}")

    def require_transport(self) -> None:
        """Require strictly positive (alpha, beta) for transport-kernel formulas."""
        if self.alpha <= 0.0 or self.beta <= 0.0:
            raise ValidationError(
                f"transport worst case needs alpha > 0 and beta > 0, "
                f"got alpha={self.alpha}, beta={self.beta}"
            )
