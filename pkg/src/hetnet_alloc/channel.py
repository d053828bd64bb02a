"""Per-subcarrier channel gains from the frequency-dependent log-distance model.

Gains are gain-to-noise ratios: noise power per subcarrier is 1, so
``gain * power`` is an SNR directly.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import Band, CellKind, ScenarioConfig, Topology, keyed_rng, BandPropagationParams

__all__ = [
    "CellGains",
    "HandoverGains",
    "ChannelGains",
    "pathloss_db",
    "gain_linear",
    "generate_gains",
    "dump_gains_csv",
    "load_gains_csv",
]

# shadowing stream tags
_T_FM, _T_MK, _T_FK, _T_HO_MK, _T_HO_FK = 1, 2, 3, 4, 5


def pathloss_db(distance_m, params: BandPropagationParams, d0_m: float, shadow_db=0.0):
    """Large-scale pathloss in dB, evaluated at the band carrier.

    ``gamma*10log10(f/f0) + beta*10log10(d/d0) + shadow``. Works elementwise
    on arrays.
    """
    d = np.asarray(distance_m, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be positive")
    freq_term = params.gamma * 10.0 * np.log10(params.carrier_ghz / params.f0_ghz)
    pl = freq_term + params.beta * 10.0 * np.log10(d / d0_m) + shadow_db
    return pl if pl.ndim else float(pl)


def gain_linear(distance_m, params: BandPropagationParams, d0_m: float, rng=None, size=None, shadow_db=None):
    """Linear gain ``10**(-PL/10)`` with a Gaussian shadowing draw in dB.

    Pass ``shadow_db`` to force the shadowing term instead of drawing it.
    """
    if shadow_db is None:
        if rng is None:
            rng = np.random.default_rng()
        if size is None:
            size = np.shape(distance_m)
        shadow_db = params.shadow_sigma_db * rng.standard_normal(size)
    return 10.0 ** (-np.asarray(pathloss_db(distance_m, params, d0_m, shadow_db)) / 10.0)


@dataclass(frozen=True)
class CellGains:
    bands: tuple[Band, ...]
    alpha_fm: np.ndarray  # (B, N, M)     BS -> relay
    alpha_mk: np.ndarray  # (B, N, M, K)  relay -> user
    alpha_fk: np.ndarray  # (B, N, K)     BS -> user

    @property
    def shape(self) -> tuple[int, int, int, int]:
        B, N, M, K = self.alpha_mk.shape
        return B, N, M, K


@dataclass(frozen=True)
class HandoverGains:
    """LTE gains from the macro BS and its relays to one small cell's users."""

    alpha_mk: np.ndarray  # (N, M_macro, K_small)
    alpha_fk: np.ndarray  # (N, K_small)


@dataclass(frozen=True)
class ChannelGains:
    cells: tuple[CellGains, ...]
    handover: tuple[HandoverGains | None, ...]

    def fingerprint(self) -> str:
        """Short stable digest of every gain value."""
        h = hashlib.sha256()
        for cell in self.cells:
            for arr in (cell.alpha_fm, cell.alpha_mk, cell.alpha_fk):
                h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        for ho in self.handover:
            if ho is not None:
                for arr in (ho.alpha_mk, ho.alpha_fk):
                    h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        return h.hexdigest()[:16]


def _shadow(seed, drop, key, size, sigma, enabled):
    if not enabled or sigma == 0:
        return np.zeros(size)
    return sigma * keyed_rng(seed, drop, *key).standard_normal(size)


def generate_gains(
    scenario: ScenarioConfig,
    topology: Topology,
    seed: int | None = None,
    drop: int = 0,
    shadowing: bool = True,
) -> ChannelGains:
    """Fill every (link, band, subcarrier) gain with an independent shadowing draw.

    Small cells use the indoor parameter set, the macro cell the outdoor one.
    Each (cell, link, band[, user]) has its own random stream laid out
    subcarrier-major, so a larger ``N`` extends the draws of a smaller one.
    """
    seed = scenario.seed if seed is None else seed
    N = scenario.subcarriers_per_band
    cells = []
    for l, (cell, topo) in enumerate(zip(scenario.cells, topology.cells)):
        bands = cell.ordered_bands
        M, K = cell.num_relays, cell.num_users
        fm, mk, fk = [], [], []
        for b in bands:
            bi = int(list(Band).index(b))
            p = scenario.params_for(cell, b)
            s = p.shadow_sigma_db
            fm.append(gain_linear(
                np.broadcast_to(topo.d_bs_relay, (N, M)), p, cell.d0_ref_m,
                shadow_db=_shadow(seed, drop, (_T_FM, l, bi), (N, M), s, shadowing)))
            mk.append(np.stack([
                gain_linear(
                    np.broadcast_to(topo.d_relay_user[:, k], (N, M)), p, cell.d0_ref_m,
                    shadow_db=_shadow(seed, drop, (_T_MK, l, bi, k), (N, M), s, shadowing))
                for k in range(K)], axis=-1))
            fk.append(np.stack([
                gain_linear(
                    np.full(N, topo.d_bs_user[k]), p, cell.d0_ref_m,
                    shadow_db=_shadow(seed, drop, (_T_FK, l, bi, k), N, s, shadowing))
                for k in range(K)], axis=-1))
        cells.append(CellGains(bands, np.stack(fm), np.stack(mk), np.stack(fk)))

    macro_idx = next((l for l, c in enumerate(scenario.cells) if c.kind is CellKind.MACRO), None)
    handover = []
    for l, (cell, ho) in enumerate(zip(scenario.cells, topology.handover)):
        if ho is None or macro_idx is None:
            handover.append(None)
            continue
        macro = scenario.cells[macro_idx]
        p = scenario.params_for(macro, Band.LTE)
        s = p.shadow_sigma_db
        M0 = macro.num_relays
        ho_mk = np.stack([
            gain_linear(
                np.broadcast_to(ho.d_relay_user[:, k], (N, M0)), p, macro.d0_ref_m,
                shadow_db=_shadow(seed, drop, (_T_HO_MK, l, k), (N, M0), s, shadowing))
            for k in range(cell.num_users)], axis=-1)
        ho_fk = np.stack([
            gain_linear(
                np.full(N, ho.d_bs_user[k]), p, macro.d0_ref_m,
                shadow_db=_shadow(seed, drop, (_T_HO_FK, l, k), N, s, shadowing))
            for k in range(cell.num_users)], axis=-1)
        handover.append(HandoverGains(ho_mk, ho_fk))
    return ChannelGains(tuple(cells), tuple(handover))


_CSV_FIELDS = ("cell", "link_type", "band", "subcarrier", "tx", "rx", "gain")


def dump_gains_csv(gains: ChannelGains, path) -> None:
    """Write one row per gain entry. ``tx``/``rx`` are relay/user indices, -1 for a BS."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(_CSV_FIELDS)
        for l, cell in enumerate(gains.cells):
            B, N, M, K = cell.shape
            for bi, band in enumerate(cell.bands):
                for i in range(N):
                    for m in range(M):
                        w.writerow((l, "bs_relay", band.value, i, -1, m, repr(float(cell.alpha_fm[bi, i, m]))))
                    for m in range(M):
                        for k in range(K):
                            w.writerow((l, "relay_user", band.value, i, m, k, repr(float(cell.alpha_mk[bi, i, m, k]))))
                    for k in range(K):
                        w.writerow((l, "bs_user", band.value, i, -1, k, repr(float(cell.alpha_fk[bi, i, k]))))
        for l, ho in enumerate(gains.handover):
            if ho is None:
                continue
            N, M0, K = ho.alpha_mk.shape
            for i in range(N):
                for m in range(M0):
                    for k in range(K):
                        w.writerow((l, "macro_relay_user", Band.LTE.value, i, m, k, repr(float(ho.alpha_mk[i, m, k]))))
                for k in range(K):
                    w.writerow((l, "macro_bs_user", Band.LTE.value, i, -1, k, repr(float(ho.alpha_fk[i, k]))))


def load_gains_csv(path) -> ChannelGains:
    """Inverse of :func:`dump_gains_csv`."""
    rows = []
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != _CSV_FIELDS:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        for r in reader:
            rows.append((int(r["cell"]), r["link_type"], Band(r["band"]), int(r["subcarrier"]),
                         int(r["tx"]), int(r["rx"]), float(r["gain"])))

    n_cells = 1 + max(r[0] for r in rows)
    cells, handover = [], []
    for l in range(n_cells):
        mine = [r for r in rows if r[0] == l]
        core = [r for r in mine if r[1] in ("bs_relay", "relay_user", "bs_user")]
        bands = tuple(b for b in Band if any(r[2] is b for r in core))
        N = 1 + max(r[3] for r in core)
        M = 1 + max(r[5] for r in core if r[1] == "bs_relay")
        K = 1 + max(r[5] for r in core if r[1] == "bs_user")
        fm = np.full((len(bands), N, M), np.nan)
        mk = np.full((len(bands), N, M, K), np.nan)
        fk = np.full((len(bands), N, K), np.nan)
        for _, link, band, i, tx, rx, g in core:
            bi = bands.index(band)
            if link == "bs_relay":
                fm[bi, i, rx] = g
            elif link == "relay_user":
                mk[bi, i, tx, rx] = g
            else:
                fk[bi, i, rx] = g
        cells.append(CellGains(bands, fm, mk, fk))
        ho = [r for r in mine if r[1].startswith("macro_")]
        if ho:
            M0 = 1 + max(r[4] for r in ho if r[1] == "macro_relay_user")
            ho_mk = np.full((N, M0, K), np.nan)
            ho_fk = np.full((N, K), np.nan)
            for _, link, _, i, tx, rx, g in ho:
                if link == "macro_relay_user":
                    ho_mk[i, tx, rx] = g
                else:
                    ho_fk[i, rx] = g
            handover.append(HandoverGains(ho_mk, ho_fk))
        else:
            handover.append(None)
    out = ChannelGains(tuple(cells), tuple(handover))
    for c in out.cells:
        if any(np.isnan(a).any() for a in (c.alpha_fm, c.alpha_mk, c.alpha_fk)):
            raise ValueError(f"{path}: incomplete gain table")
    return out
