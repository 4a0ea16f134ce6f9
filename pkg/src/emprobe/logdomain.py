"""Signed log-domain scalars.

The indicator and the boundary energy integrals scale like
exp(-2*tau_t*distance) with tau_t*distance reaching a few hundred in the
asymptotic checks, far below the float64 underflow threshold.  All asymptotic
quantities are therefore carried as (sign, log magnitude) pairs and only
materialized when the exponent is safe.
"""

from dataclasses import dataclass

import numpy as np

# Exponent range where exp() neither under- nor overflows float64.
_SAFE_EXP = 700.0


@dataclass(frozen=True)
class LogVal:
    """A real number stored as sign and natural-log magnitude.

    sign is -1, 0 or +1; for sign == 0 the log is -inf by convention.
    """

    sign: int
    log: float

    @classmethod
    def from_value(cls, x):
        x = float(x)
        if x == 0.0:
            return cls(0, -np.inf)
        return cls(1 if x > 0 else -1, float(np.log(abs(x))))

    @classmethod
    def zero(cls):
        return cls(0, -np.inf)

    def value(self):
        """Materialize to float; saturates to 0 / +-inf outside the safe
        exponent range."""
        if self.sign == 0:
            return 0.0
        if self.log < -_SAFE_EXP:
            return 0.0 * self.sign
        if self.log > _SAFE_EXP:
            return float(np.inf) * self.sign
        return self.sign * float(np.exp(self.log))

    def scaled(self, c):
        """Multiply by an ordinary float c."""
        c = float(c)
        if c == 0.0 or self.sign == 0:
            return LogVal.zero()
        s = self.sign * (1 if c > 0 else -1)
        return LogVal(s, self.log + float(np.log(abs(c))))

    def __mul__(self, other):
        if isinstance(other, LogVal):
            if self.sign == 0 or other.sign == 0:
                return LogVal.zero()
            return LogVal(self.sign * other.sign, self.log + other.log)
        return self.scaled(other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, LogVal):
            if other.sign == 0:
                raise ZeroDivisionError("LogVal division by zero")
            if self.sign == 0:
                return LogVal.zero()
            return LogVal(self.sign * other.sign, self.log - other.log)
        return self.scaled(1.0 / float(other))

    def __neg__(self):
        return LogVal(-self.sign, self.log)

    def abs(self):
        return LogVal(abs(self.sign), self.log)


def signed_logsumexp(signs, logs, weights=None):
    """Sum of w_i * s_i * exp(l_i) without materializing the exponentials.

    Parameters
    ----------
    signs, logs : array-like
        Signs and log magnitudes of the terms.
    weights : array-like, optional
        Ordinary float weights folded into the terms.

    Returns
    -------
    LogVal
    """
    signs = np.asarray(signs, dtype=float)
    logs = np.asarray(logs, dtype=float)
    if weights is not None:
        w = np.asarray(weights, dtype=float)
        signs = signs * np.sign(w)
        with np.errstate(divide="ignore"):
            logs = logs + np.log(np.abs(w))
    live = (signs != 0) & np.isfinite(logs)
    if not np.any(live):
        return LogVal.zero()
    signs, logs = signs[live], logs[live]
    m = float(np.max(logs))
    acc = float(np.sum(signs * np.exp(logs - m)))
    if acc == 0.0:
        return LogVal.zero()
    return LogVal(1 if acc > 0 else -1, m + float(np.log(abs(acc))))


def log_abs(x):
    """Elementwise (sign, log|x|) arrays for a float array."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        return np.sign(x).astype(int), np.log(np.abs(x))
