"""Aggregation of evaluation records into summaries and tables"""
import pandas as pd
import pytest

from app.models.evaluation import EvalRecord
from app.models.schemas import SummaryFile
from app.services.report_service import RECORD_COLUMNS, ReportService

ROWS = [
    ("S001", 0, "LeftFront", "ipsilateral", True, 1.0),
    ("S001", 1, "LeftFront", "ipsilateral", False, 2.0),
    ("S001", 2, "LeftFront", "ipsilateral", True, 3.0),
    ("S001", 3, "RightBack", "contralateral", True, 4.0),
    ("S001", 4, "RightBack", "contralateral", False, 6.0),
    ("S001", 5, "RightBack", "contralateral", True, 5.0),
    ("S002", 0, "LeftFront", "ipsilateral", False, 1.5),
    ("S002", 3, "RightBack", "contralateral", False, 4.5),
]


@pytest.fixture
def service():
    return ReportService()


@pytest.fixture
def frame(service):
    return service.records_frame(EvalRecord(*row) for row in ROWS)


class TestRecords:

    def test_columns(self, frame):
        assert list(frame.columns) == RECORD_COLUMNS
        assert len(frame) == 8

    def test_csv_round_trip(self, tmp_path, service, frame):
        path = tmp_path / "out" / "records.csv"
        service.write_records(frame, path)
        pd.testing.assert_frame_equal(service.read_records(path), frame, check_dtype=False)

    def test_negative_lsd_rejected(self):
        with pytest.raises(ValueError):
            EvalRecord("S001", 0, "All", "ipsilateral", True, -0.1)


class TestSummary:

    def test_means(self, service, frame):
        summary = service.summarize(frame, run="hybrid", strategy="hybrid")
        assert summary.n_records == 8 and summary.n_subjects == 2
        assert summary.overall_mean_lsd == pytest.approx(3.375)
        assert summary.seen_mean_lsd == pytest.approx(3.25)
        assert summary.unseen_mean_lsd == pytest.approx(3.5)
        assert summary.per_side["ipsilateral"].all == pytest.approx(1.875)
        assert summary.per_side["contralateral"].all == pytest.approx(4.875)
        assert summary.per_subject["S001"].all == pytest.approx(3.5)
        assert summary.per_group["RightBack"].n_records == 4

    def test_slices_recombine(self, service, frame):
        summary = service.summarize(frame, run="r")
        total = sum(e.all * e.n_records for e in summary.per_group.values())
        assert total / summary.n_records == pytest.approx(summary.overall_mean_lsd, rel=1e-12)

    def test_side_anova(self, service, frame):
        seen = service.summarize(frame, run="r").side_anova["seen"]
        assert seen.df == [1, 2]
        assert seen.F == pytest.approx(5.0)
        assert 0.0 < seen.p < 1.0
        assert seen.groups == ["contralateral", "ipsilateral"]

    def test_small_slice_skips_anova(self, service, frame):
        trimmed = frame.drop(index=[5]).reset_index(drop=True)
        assert service.summarize(trimmed, run="r").side_anova["seen"] is None

    def test_comparison(self, service, frame):
        other = frame.assign(lsd_db=frame["lsd_db"] + 1.0)
        summary = service.summarize(frame, run="hybrid", compare_frame=other, compare_run="global")
        comparison = summary.comparison
        assert (comparison.run_a, comparison.run_b) == ("hybrid", "global")
        assert comparison.seen.df == [1, 6]
        assert comparison.unseen.df == [1, 6]
        assert comparison.mean_b.all == pytest.approx(4.375)

    def test_summary_file(self, tmp_path, service, frame):
        summary = service.summarize(frame, run="r")
        path = service.write_summary(summary, tmp_path / "summary.json")
        assert SummaryFile.model_validate_json(path.read_text()) == summary

    def test_table(self, service, frame):
        text = service.format_table(service.summarize(frame, run="r"))
        assert text.splitlines()[0].split() == ["slice", "seen", "unseen", "all", "n"]
        assert "side:ipsilateral" in text and "group:RightBack" in text
        assert "3.25" in text
        assert "F(1,2)=5.00" in text
