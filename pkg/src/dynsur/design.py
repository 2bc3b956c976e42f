"""Selection of training excitations from a candidate pool.

Two strategies: plain random subsampling, and the amplitude-biased
selection that spreads the training set uniformly over the pool's
amplitude range so extreme excitations are represented.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class CandidatePool:
    """Candidate excitations summarized by id, seed and amplitude statistic."""

    ids: tuple[int, ...]
    seeds: tuple[int, ...]
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=float)
        if len(self.ids) != len(set(self.ids)):
            raise ConfigError("pool ids are not unique")
        if not (len(self.ids) == len(self.seeds) == len(amps)):
            raise ConfigError("pool columns have mismatched lengths")
        if not np.all(np.isfinite(amps)) or np.any(amps < 0):
            raise ConfigError("pool amplitudes must be finite and nonnegative")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "ids", tuple(int(i) for i in self.ids))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))

    def __len__(self) -> int:
        return len(self.ids)

    def seed_of(self, id_: int) -> int:
        return self.seeds[self.ids.index(id_)]

    def amplitude_of(self, id_: int) -> float:
        return float(self.amplitudes[self.ids.index(id_)])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["id", "seed", "max_abs_amplitude"])
        for i, s, a in zip(self.ids, self.seeds, self.amplitudes):
            w.writerow([i, s, f"{a:.17g}"])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "CandidatePool":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or rows[0][:3] != ["id", "seed", "max_abs_amplitude"]:
            raise ConfigError("pool CSV must have header id,seed,max_abs_amplitude")
        ids, seeds, amps = [], [], []
        for r in rows[1:]:
            ids.append(int(r[0]))
            seeds.append(int(r[1]))
            amps.append(float(r[2]))
        return cls(tuple(ids), tuple(seeds), np.asarray(amps))


def random_subsample(pool: CandidatePool, n_ed: int, seed: int) -> list[int]:
    """Uniform without-replacement draw of n_ed candidate ids."""
    if n_ed > len(pool):
        raise ConfigError(f"n_ed={n_ed} exceeds pool size {len(pool)}")
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(pool), size=n_ed, replace=False)
    return [pool.ids[i] for i in picks]


def biased_select(pool: CandidatePool, n_ed: int, seed: int) -> list[int]:
    """Amplitude-biased selection.

    Draws n_ed target amplitudes uniformly over the pool's amplitude
    range, then takes for each target the candidate with the nearest
    amplitude. When a target's nearest candidate is already taken, the
    nearest not-yet-selected candidate is used, so the returned ids are
    always distinct.
    """
    if n_ed > len(pool):
        raise ConfigError(f"n_ed={n_ed} exceeds pool size {len(pool)}")
    rng = np.random.default_rng(seed)
    amps = pool.amplitudes
    a_min, a_max = float(amps.min()), float(amps.max())
    targets = rng.uniform(a_min, a_max, n_ed)

    order = np.argsort(amps, kind="stable")
    sorted_amps = amps[order]
    taken = np.zeros(len(pool), dtype=bool)  # over the sorted order
    chosen: list[int] = []
    for target in targets:
        pos = int(np.searchsorted(sorted_amps, target))
        # scan outward from the insertion point for the nearest free slot
        left, right = pos - 1, pos
        best = None
        while left >= 0 or right < len(pool):
            lval = abs(sorted_amps[left] - target) if left >= 0 else np.inf
            rval = abs(sorted_amps[right] - target) if right < len(pool) else np.inf
            if rval <= lval:
                if not taken[right]:
                    best = right
                    break
                right += 1
            else:
                if not taken[left]:
                    best = left
                    break
                left -= 1
        taken[best] = True
        chosen.append(pool.ids[order[best]])
    return chosen


def selection_to_csv(pool: CandidatePool, ids) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", "seed", "amplitude"])
    for i in ids:
        w.writerow([i, pool.seed_of(i), f"{pool.amplitude_of(i):.17g}"])
    return buf.getvalue()
