"""Sampler output container and its long-format CSV serialization."""
from __future__ import annotations

import csv
import functools
import math
from collections import defaultdict
from dataclasses import dataclass, field, fields
from typing import TYPE_CHECKING

import numpy as np

from .errors import InvalidInputError
from .model import MixtureState, _frozen

if TYPE_CHECKING:
    from .gibbs import McmcConfig

MOVE_TYPES = ("split", "combine", "birth", "death")
CHAIN_COLUMNS = ("sweep", "k", "param", "component", "value")


@dataclass(frozen=True)
class MoveStats:
    """Attempted and accepted counts per trans-dimensional move type."""

    split_attempted: int = 0
    split_accepted: int = 0
    combine_attempted: int = 0
    combine_accepted: int = 0
    birth_attempted: int = 0
    birth_accepted: int = 0
    death_attempted: int = 0
    death_accepted: int = 0

    def __post_init__(self):
        for move in MOVE_TYPES:
            att, acc = getattr(self, f"{move}_attempted"), getattr(self, f"{move}_accepted")
            if att < 0 or acc < 0 or acc > att:
                raise InvalidInputError(f"inconsistent counts for {move}: {acc}/{att}")

    @classmethod
    def single(cls, move: str, accepted: bool) -> "MoveStats":
        return _single(move, bool(accepted))

    def scaled(self, times: int) -> "MoveStats":
        return MoveStats(**{f.name: getattr(self, f.name) * times for f in fields(self)})

    def __add__(self, other: "MoveStats") -> "MoveStats":
        return MoveStats(**{f.name: getattr(self, f.name) + getattr(other, f.name) for f in fields(self)})

    def acceptance_rate(self, move: str) -> float:
        att = getattr(self, f"{move}_attempted")
        return getattr(self, f"{move}_accepted") / att if att else math.nan

    def to_dict(self) -> dict:
        return {
            move: {
                "attempted": getattr(self, f"{move}_attempted"),
                "accepted": getattr(self, f"{move}_accepted"),
            }
            for move in MOVE_TYPES
        }


@dataclass(frozen=True)
class Chain:
    """Thinned post-burn-in record of a sampler run.

    ``loglik[m]`` is the marginal log-likelihood of ``records[m]`` and
    ``sweeps[m]`` the 1-based sweep at which it was recorded.
    """

    records: tuple[MixtureState, ...]
    loglik: np.ndarray
    sweeps: np.ndarray
    config: McmcConfig | None = None
    move_stats: MoveStats = field(default_factory=MoveStats)
    mode: str = "fixed"

    def __len__(self) -> int:
        return len(self.records)

    @property
    def ks(self) -> np.ndarray:
        return np.array([s.k for s in self.records], dtype=np.int64)

    def is_fixed_dimension(self) -> bool:
        ks = self.ks
        return ks.size > 0 and bool(np.all(ks == ks[0]))

    def subset(self, mask) -> "Chain":
        idx = np.flatnonzero(mask)
        return Chain(
            tuple(self.records[i] for i in idx),
            _frozen(self.loglik[idx].copy()),
            _frozen(self.sweeps[idx].copy()),
            self.config,
            self.move_stats,
            self.mode,
        )

    def stacked(self, param: str) -> np.ndarray:
        """Array of shape (M, k) for w, mu or sigma2; (M,) for beta."""
        if param == "beta":
            return np.array([s.beta for s in self.records])
        if not self.is_fixed_dimension():
            raise InvalidInputError("componentwise arrays need a fixed-dimension chain")
        return np.vstack([getattr(s, param) for s in self.records])


@functools.lru_cache(maxsize=None)
def _single(move: str, accepted: bool) -> MoveStats:
    return MoveStats(**{f"{move}_attempted": 1, f"{move}_accepted": int(accepted)})


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_chain_csv(path, chain: Chain) -> None:
    """Write the chain in long format, one row per scalar.

    Component indices are 1-based; ``beta`` and ``loglik`` rows use component 0.
    """
    with open(path, "w", newline="") as fh:
        out = fh.write
        out(",".join(CHAIN_COLUMNS) + "\n")
        for sweep, state, ll in zip(chain.sweeps, chain.records, chain.loglik):
            prefix = f"{int(sweep)},{state.k},"
            for param in ("w", "mu", "sigma2"):
                for j, value in enumerate(getattr(state, param), start=1):
                    out(f"{prefix}{param},{j},{_fmt(value)}\n")
            out(f"{prefix}beta,0,{_fmt(state.beta)}\n")
            out(f"{prefix}loglik,0,{_fmt(ll)}\n")


def read_chain_csv(path, mode: str | None = None) -> Chain:
    """Parse a chain written by :func:`write_chain_csv`."""
    per_sweep: dict[int, dict] = {}
    order: list[int] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CHAIN_COLUMNS:
            raise InvalidInputError(f"{path}: expected header {','.join(CHAIN_COLUMNS)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                sweep, k, param, comp, value = int(row[0]), int(row[1]), row[2], int(row[3]), float(row[4])
            except (ValueError, IndexError):
                raise InvalidInputError(f"{path}: line {lineno}: malformed row {row!r}") from None
            rec = per_sweep.get(sweep)
            if rec is None:
                rec = per_sweep[sweep] = {"k": k, "vec": defaultdict(dict)}
                order.append(sweep)
            if param in ("w", "mu", "sigma2"):
                if not 1 <= comp <= k:
                    raise InvalidInputError(f"{path}: line {lineno}: component {comp} outside 1..{k}")
                rec["vec"][param][comp - 1] = value
            elif param in ("beta", "loglik"):
                rec[param] = value
            else:
                raise InvalidInputError(f"{path}: line {lineno}: unknown param {param!r}")
    records, loglik = [], []
    for sweep in order:
        rec = per_sweep[sweep]
        k = rec["k"]
        try:
            vecs = {p: [rec["vec"][p][j] for j in range(k)] for p in ("w", "mu", "sigma2")}
            state = MixtureState.create(vecs["w"], vecs["mu"], vecs["sigma2"], rec["beta"])
            loglik.append(rec["loglik"])
        except KeyError as exc:
            raise InvalidInputError(f"{path}: sweep {sweep} is missing {exc}") from None
        records.append(state)
    ks = {s.k for s in records}
    if mode is None:
        mode = "fixed" if len(ks) <= 1 else "rj"
    return Chain(
        tuple(records),
        _frozen(np.array(loglik, dtype=float)),
        _frozen(np.array(order, dtype=np.int64)),
        None,
        MoveStats(),
        mode,
    )
