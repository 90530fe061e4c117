"""
Closed-form regret bounds.  Every logarithm of a set size is base 2.
"""

from __future__ import annotations

import math


def fixed_rate_regret_bound(log2_experts: float, n: int, R: float, B: float = 1.0) -> float:
    """Fixed rate: ``3 B (log|A|)^(2/3) / ((2R)^(1/3) n^(1/3))``."""
    return 3.0 * B * log2_experts ** (2 / 3) / ((2 * R) ** (1 / 3) * n ** (1 / 3))


def variable_rate_regret_bound(log2_experts: float, n: int, B: float, Btilde: float) -> float:
    """Variable rate: ``B^(1/3) (2 Bt log|A|)^(2/3) n^(-1/3)``."""
    return B ** (1 / 3) * (2 * Btilde * log2_experts) ** (2 / 3) * n ** (-1 / 3)


def lossless_regret_bound(M: int, log2_codes: float, n: float, l: float) -> float:
    """Lossless Huffman scheme: ``M sqrt(log|H| / 2) (n / l)^(-1/2)``."""
    return M * math.sqrt(log2_codes / 2) * (n / l) ** -0.5


def lossless_bound_example(n: float = 1e10, M: int = 256) -> dict:
    """The ``n = 1e10``, ``M = 256`` illustration with ``l = log n``, ``lam = n`` and
    ``|H| < (log n)^M``, evaluated with base-2 logs throughout."""
    l = math.log2(n)
    log2_h = M * math.log2(math.log2(n))
    value = lossless_regret_bound(M, log2_h, n, l)
    nat_l = math.log(n)
    nat_value = lossless_regret_bound(M, M * math.log(math.log(n)), n, nat_l)
    return {"n": n, "M": M, "l": l, "log2_H": log2_h, "bound_bits": value,
            "bound_natural_logs": nat_value, "claimed": 0.3}
