import os
import sys
import tempfile
import unittest
from pathlib import Path

from pydantic import ValidationError

# Add parent directory to path
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from app.models.records import (
    METRICS_COLUMNS,
    SUMMARY_COLUMNS,
    CheckResult,
    MetricsRow,
    SummaryRow,
    ValidationReport,
)
from app.utils.metrics_writer import INCOMPLETE_MARKER, CsvTable, read_table


def _row(t=1, **kwargs):
    base = dict(
        t=t,
        scheme="lru",
        inst_delay_s=0.01,
        cum_delay_s=0.01,
        global_reward=1.5,
        hit_local=0.5,
        hit_neighbor=0.25,
        hit_cloud=0.25,
        seed=42,
    )
    base.update(kwargs)
    return MetricsRow(**base)


class TestRecords(unittest.TestCase):
    """Test cases for output row models."""

    def test_tiers_must_sum_to_one(self):
        """Test that inconsistent hit fractions are rejected."""
        with self.assertRaises(ValidationError):
            _row(hit_cloud=0.5)

    def test_delay_positive(self):
        """Test that delays must be positive."""
        with self.assertRaises(ValidationError):
            _row(inst_delay_s=0.0)

    def test_report_ok_ignores_warnings(self):
        """Test that warnings do not fail the report."""
        report = ValidationReport(
            checks=[
                CheckResult(name="a", status="pass", detail="fine"),
                CheckResult(name="b", status="warn", detail="hmm"),
            ]
        )
        self.assertTrue(report.ok)
        self.assertIn("[WARN] b: hmm", report.render())
        report.checks.append(CheckResult(name="c", status="fail", detail="bad"))
        self.assertFalse(report.ok)


class TestCsvTable(unittest.TestCase):
    """Test cases for CSV emission."""

    def setUp(self):
        """Create a scratch directory."""
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)

    def tearDown(self):
        """Remove the scratch directory."""
        self._tmp.cleanup()

    def test_header_and_rows(self):
        """Test the fixed header and parsed values."""
        table = CsvTable(self.tmp / "metrics.csv", METRICS_COLUMNS)
        table.extend([_row(1), _row(2, inst_delay_s=0.02)])
        df = read_table(table.flush())
        self.assertEqual(list(df.columns), METRICS_COLUMNS)
        self.assertEqual(df["inst_delay_s"].tolist(), [0.01, 0.02])
        header = (self.tmp / "metrics.csv").read_text().splitlines()[0]
        self.assertEqual(header, ",".join(METRICS_COLUMNS))

    def test_empty_table_has_header(self):
        """Test that an empty table still writes its header."""
        path = CsvTable(self.tmp / "s.csv", SUMMARY_COLUMNS).flush()
        self.assertEqual(path.read_text().strip(), ",".join(SUMMARY_COLUMNS))

    def test_dict_rows(self):
        """Test that plain mappings are accepted and reordered by header."""
        table = CsvTable(self.tmp / "s.csv", SUMMARY_COLUMNS)
        row = SummaryRow(scheme="marl", S=4, T=10, seed=1, mean_delay_s=0.1, tail_mean_delay_s=0.09)
        table.append(dict(reversed(list(row.model_dump().items()))))
        df = read_table(table.flush())
        self.assertEqual(df.loc[0, "scheme"], "marl")
        self.assertEqual(int(df.loc[0, "S"]), 4)

    def test_incomplete_marker(self):
        """Test that aborted runs keep partial rows and drop a marker."""
        table = CsvTable(self.tmp / "metrics.csv", METRICS_COLUMNS)
        table.append(_row(1))
        marker = table.mark_incomplete("marl failed")
        self.assertEqual(marker.name, INCOMPLETE_MARKER)
        self.assertIn("marl failed", marker.read_text())
        self.assertEqual(len(read_table(self.tmp / "metrics.csv")), 1)


if __name__ == "__main__":
    unittest.main()
