"""Thomas algorithm for tridiagonal systems."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import SingularSystem


@dataclass
class Tridiagonal:
    """``lower[i]`` multiplies x[i] in row i+1; ``upper[i]`` multiplies x[i+1] in row i."""

    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray
    rhs: np.ndarray

    def __post_init__(self):
        n = len(self.diag)
        if n < 1:
            raise ValueError("empty system")
        if len(self.lower) != n - 1 or len(self.upper) != n - 1 or len(self.rhs) != n:
            raise ValueError("inconsistent tridiagonal band lengths")

    def is_diagonally_dominant(self) -> bool:
        d = np.abs(np.asarray(self.diag, dtype=float))
        off = np.zeros_like(d)
        off[1:] += np.abs(self.lower)
        off[:-1] += np.abs(self.upper)
        return bool(np.all(d >= off))

    def dense(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.lower, -1) + np.diag(self.upper, 1)


def thomas_solve(sys: Tridiagonal) -> np.ndarray:
    """Forward elimination then back substitution, O(n)."""
    a = [float(x) for x in sys.lower]
    b = [float(x) for x in sys.diag]
    c = [float(x) for x in sys.upper]
    d = [float(x) for x in sys.rhs]
    n = len(b)
    cp = [0.0] * n
    dp = [0.0] * n
    if b[0] == 0.0:
        raise SingularSystem("zero pivot in row 0")
    cp[0] = c[0] / b[0] if n > 1 else 0.0
    dp[0] = d[0] / b[0]
    for i in range(1, n):
        m = b[i] - a[i - 1] * cp[i - 1]
        if m == 0.0:
            raise SingularSystem(f"zero pivot in row {i}")
        if i < n - 1:
            cp[i] = c[i] / m
        dp[i] = (d[i] - a[i - 1] * dp[i - 1]) / m
    x = [0.0] * n
    x[-1] = dp[-1]
    for i in range(n - 2, -1, -1):
        x[i] = dp[i] - cp[i] * x[i + 1]
    return np.array(x)
