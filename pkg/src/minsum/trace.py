"""Per-iteration run records and their CSV form."""
import csv
import io
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np


@dataclass
class Trace:
    """Iterates of one run.

    ``estimates[k]`` is the estimate vector at time ``times[k]``; ``deltas[k]``
    is the largest message-parameter change that produced it (``nan`` at
    ``t = 0``).  Optional per-row columns (``bound_value``, ``event_vertex``,
    ``lag_max``, ``grid_m``) live in ``extra``.
    """

    n: int
    times: List[int] = field(default_factory=list)
    estimates: List[np.ndarray] = field(default_factory=list)
    deltas: List[float] = field(default_factory=list)
    extra: Dict[str, list] = field(default_factory=dict)
    converged: bool = False
    diverged: bool = False
    note: str = ""

    def record(self, t, x, delta=float("nan"), **columns):
        self.times.append(int(t))
        self.estimates.append(np.array(x, dtype=float))
        self.deltas.append(float(delta))
        for key, value in columns.items():
            col = self.extra.setdefault(key, [None] * (len(self.times) - 1))
            col.append(value)
        for key, col in self.extra.items():
            if len(col) < len(self.times):
                col.append(None)

    def __len__(self):
        return len(self.times)

    @property
    def final(self) -> np.ndarray:
        return self.estimates[-1]

    @property
    def iterations(self) -> int:
        return self.times[-1] if self.times else 0

    def array(self) -> np.ndarray:
        return np.vstack(self.estimates)

    def errors(self, x_star) -> np.ndarray:
        """``||x(t) - x*||_inf`` per recorded row."""
        return np.max(np.abs(self.array() - np.asarray(x_star)[None, :]), axis=1)

    def time_to_tolerance(self, x_star, tol=1e-8) -> Optional[int]:
        """First time after which the error stays below ``tol``, or None."""
        err = self.errors(x_star)
        if not np.isfinite(err[-1]) or err[-1] >= tol:
            return None
        above = np.nonzero(~(err < tol))[0]
        k = 0 if above.size == 0 else above[-1] + 1
        return self.times[k]

    def columns(self) -> List[str]:
        cols = ["t", "max_message_delta"] + [f"x{i}" for i in range(self.n)]
        order = ["bound_value", "grid_m", "event_vertex", "lag_max"]
        cols += [c for c in order if c in self.extra]
        cols += sorted(c for c in self.extra if c not in order)
        return cols

    def write_csv(self, fh) -> None:
        cols = self.columns()
        w = csv.writer(fh)
        w.writerow(cols)
        for k, t in enumerate(self.times):
            row = [t, "" if np.isnan(self.deltas[k]) else repr(self.deltas[k])]
            row += [repr(float(v)) for v in self.estimates[k]]
            for c in cols[2 + self.n:]:
                v = self.extra[c][k]
                row.append("" if v is None else (repr(v) if isinstance(v, float) else v))
            w.writerow(row)

    def to_csv(self) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()
