"""
CSV emission for experiment results
"""
import logging
from pathlib import Path
from typing import Iterable, List, Sequence, Union

import pandas as pd
from pydantic import BaseModel

logger = logging.getLogger(__name__)

INCOMPLETE_MARKER = "INCOMPLETE"


class CsvTable:
    """Buffered rows with a fixed header, written in one pass."""

    def __init__(self, path: Union[str, Path], columns: Sequence[str]):
        self.path = Path(path)
        self.columns = list(columns)
        self.rows: List[dict] = []

    def append(self, row: Union[BaseModel, dict]) -> None:
        data = row.model_dump() if isinstance(row, BaseModel) else dict(row)
        self.rows.append({c: data[c] for c in self.columns})

    def extend(self, rows: Iterable[Union[BaseModel, dict]]) -> None:
        for row in rows:
            self.append(row)

    def flush(self) -> Path:
        """Write header plus every buffered row, replacing any previous file."""
        self.path.parent.mkdir(parents=True, exist_ok=True)
        df = pd.DataFrame(self.rows, columns=self.columns)
        df.to_csv(self.path, index=False, lineterminator="\n")
        logger.debug(f"Wrote {len(self.rows)} rows to {self.path}")
        return self.path

    def mark_incomplete(self, reason: str) -> Path:
        """Flush what exists and drop a marker file next to it."""
        self.flush()
        marker = self.path.parent / INCOMPLETE_MARKER
        marker.write_text(f"{self.path.name}: {reason}\n")
        logger.error(f"Run aborted, partial results in {self.path}: {reason}")
        return marker


def read_table(path: Union[str, Path]) -> pd.DataFrame:
    """Load a results CSV written by CsvTable."""
    return pd.read_csv(path)
