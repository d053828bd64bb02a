"""Two-hop rate and power kernels for decode-and-forward relaying.

A pair of subcarrier units (first hop ``i``, second hop ``j``) served through
relay ``m`` to user ``k`` behaves like a single channel with the equivalent
gain ``a_fm*a_mk / (a_fm + a_mk - a_fk)``, where ``a_fm`` and ``a_fk`` are
first-hop gains on ``i`` and ``a_mk`` is the second-hop gain on ``j``. In
direct mode the relay stays silent and the gain is just ``a_fk``.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

__all__ = [
    "LinkMode",
    "RelayInadmissible",
    "relay_admissible",
    "equivalent_gain",
    "select_mode",
    "weighted_rate_term",
    "power_split",
    "sum_weighted_rate",
]


class LinkMode(str, Enum):
    DIRECT = "direct"
    RELAY = "relay"


class RelayInadmissible(ValueError):
    """Relay mode requested where the BS-relay gain does not beat the direct gain."""


def relay_admissible(a_fm, a_mk, a_fk):
    """Relay mode needs ``a_fm > a_fk`` so the relay's share of power is nonnegative."""
    a_fm, a_mk, a_fk = np.asarray(a_fm), np.asarray(a_mk), np.asarray(a_fk)
    return (a_fm > a_fk) & (a_fm + a_mk - a_fk > 0)


def equivalent_gain(a_fm: float, a_mk: float, a_fk: float, mode: LinkMode) -> float:
    if min(a_fm, a_mk) <= 0 or a_fk < 0:
        raise ValueError("gains must be positive")
    if mode is LinkMode.DIRECT:
        return a_fk
    if not relay_admissible(a_fm, a_mk, a_fk):
        raise RelayInadmissible(f"relay_inadmissible: a_fm={a_fm} <= a_fk={a_fk}")
    return a_fm * a_mk / (a_fm + a_mk - a_fk)


def select_mode(a_fm: float, a_mk: float, a_fk: float) -> tuple[LinkMode, float]:
    """Relay mode when admissible and strictly better than the direct link; ties go direct."""
    if relay_admissible(a_fm, a_mk, a_fk):
        alpha = a_fm * a_mk / (a_fm + a_mk - a_fk)
        if alpha > a_fk:
            return LinkMode.RELAY, alpha
    return LinkMode.DIRECT, a_fk


def weighted_rate_term(w, alpha_eq, p):
    """``(w/2) * log2(1 + alpha_eq * p)`` in bits/s/Hz; the 1/2 accounts for two hops."""
    return 0.5 * np.asarray(w) * np.log2(1.0 + np.asarray(alpha_eq) * np.asarray(p))


def power_split(p_agg: float, a_fm: float, a_mk: float, a_fk: float, mode: LinkMode) -> tuple[float, float]:
    """Split aggregate pair power into (BS power, relay power)."""
    if p_agg < 0:
        raise ValueError("aggregate power must be nonnegative")
    if mode is LinkMode.DIRECT:
        return p_agg, 0.0
    if not relay_admissible(a_fm, a_mk, a_fk):
        raise RelayInadmissible(f"relay_inadmissible: a_fm={a_fm} <= a_fk={a_fk}")
    den = a_fm + a_mk - a_fk
    p_source = p_agg * a_mk / den
    # the complement keeps the sum exact in floating point
    return p_source, p_agg - p_source


def sum_weighted_rate(allocation, weights=None):
    """Total weighted rate of an allocation and the per-cell, per-user rates.

    ``allocation`` is a :class:`~hetnet_alloc.problem.Allocation`; ``weights``
    optionally overrides the per-cell weight vectors stored on it.
    """
    total = 0.0
    per_user = []
    for l, cell in enumerate(allocation.cells):
        w = cell.weights if weights is None else np.asarray(weights[l])
        terms = weighted_rate_term(w[cell.user], cell.alpha, cell.power)
        rates = np.zeros(len(w))
        np.add.at(rates, cell.user, terms)
        per_user.append(rates)
        total += float(terms.sum())
    return total, per_user
