"""Per-update DRO diagnostics ledger."""
from __future__ import annotations
import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable

import numpy as np

log = logging.getLogger(__name__)


@dataclass
class UpdateRecord:
    update: int
    step: int
    subgroups: list[int]
    lam: list[float]
    f: list[float]
    delta_norm: float
    grad_norm: float
    converged: bool
    lambda_entropy: float


class UpdateLedger:
    """Records every DRO update; listeners fire on records that look unhealthy."""

    def __init__(self, path: str | Path | None = None, keep: int = 10000):
        self.path = Path(path) if path is not None else None
        self.keep = keep
        self._records: list[UpdateRecord] = []
        self._listeners: list[Callable[[UpdateRecord], None]] = []
        self.total = 0
        self.non_converged = 0
        self._since_flush: list[UpdateRecord] = []

    def add_listener(self, fn: Callable[[UpdateRecord], None]) -> None:
        self._listeners.append(fn)

    def record(self, rec: UpdateRecord) -> None:
        self.total += 1
        if not rec.converged:
            self.non_converged += 1
            for listener in self._listeners:
                listener(rec)
        self._records.append(rec)
        if len(self._records) > self.keep:
            del self._records[0]
        self._since_flush.append(rec)

    def flush(self) -> None:
        """Append pending records to the JSON-lines log."""
        if self.path is None or not self._since_flush:
            self._since_flush.clear()
            return
        with open(self.path, "a") as f:
            for rec in self._since_flush:
                f.write(json.dumps(asdict(rec)) + "\n")
        self._since_flush.clear()

    def window_means(self, since_update: int = 0) -> tuple[float, float]:
        """Mean lambda entropy and mean gradient norm of records after since_update."""
        recent = [r for r in self._records if r.update > since_update]
        if not recent:
            return float("nan"), float("nan")
        return (float(np.mean([r.lambda_entropy for r in recent])),
                float(np.mean([r.grad_norm for r in recent])))

    @property
    def records(self) -> list[UpdateRecord]:
        return list(self._records)

    def generate_report(self) -> str:
        if not self._records:
            return "[DRO] No updates recorded."
        lines = ["", "═" * 60, "  DRO UPDATE REPORT", "═" * 60]
        lam = np.array([r.lam for r in self._records if len(r.lam) == len(self._records[-1].lam)])
        f = np.array([r.f for r in self._records if len(r.f) == len(self._records[-1].f)])
        for j, (lj, fj) in enumerate(zip(lam.mean(axis=0), f.mean(axis=0))):
            lines.append(f"  subgroup {self._records[-1].subgroups[j]:>2}  │ mean λ {lj:.3f}  │ mean f {fj:.4f}")
        lines.append("─" * 60)
        lines.append(f"  Updates:        {self.total}")
        lines.append(f"  Non-converged:  {self.non_converged}")
        lines.append(f"  Mean ‖δ*‖:      {np.mean([r.delta_norm for r in self._records]):.4e}")
        lines.append("═" * 60)
        return "\n".join(lines)
