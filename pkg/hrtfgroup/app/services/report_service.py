"""
Report service for evaluation results
Turns per-direction LSD records into records.csv, summary.json and the
human-readable table
"""
import logging
import math
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
import pandas as pd

from app.errors import InvalidArgumentError
from app.models.evaluation import AnovaResult, EvalRecord
from app.models.schemas import AnovaEntry, ComparisonEntry, MeanLsdEntry, SummaryFile
from app.services.stats_service import one_way_anova

logger = logging.getLogger(__name__)

RECORD_COLUMNS = ["subject_id", "direction_index", "group", "side", "seen", "lsd_db"]


def _mean_or_none(values: pd.Series) -> Optional[float]:
    if values.empty:
        return None
    mean = float(values.mean())
    return mean if math.isfinite(mean) else None


def _anova_entry(result: AnovaResult, groups: Sequence[str]) -> AnovaEntry:
    return AnovaEntry(
        F=None if result.infinite_f else result.f_stat,
        df=[result.df_between, result.df_within],
        p=result.p_value,
        infinite_f=result.infinite_f,
        groups=list(groups),
    )


class ReportService:
    """Aggregates EvalRecords into the per-slice mean LSD tables"""

    def __init__(self, decimals: int = 2):
        self.decimals = decimals

    # ------------------------------------------------------------------
    # records.csv
    # ------------------------------------------------------------------

    def records_frame(self, records: Iterable[EvalRecord]) -> pd.DataFrame:
        rows = [r.to_dict() for r in records]
        frame = pd.DataFrame(rows, columns=RECORD_COLUMNS)
        return frame.astype({"direction_index": "int64", "seen": "bool", "lsd_db": "float64"})

    def write_records(self, frame: pd.DataFrame, path: Path) -> pd.DataFrame:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, lineterminator="\n")
        logger.info(f"Wrote {len(frame)} records to {path}")
        return frame

    def read_records(self, path: Path) -> pd.DataFrame:
        """Load a records.csv written by write_records"""
        try:
            frame = pd.read_csv(path, dtype={"subject_id": str, "group": str, "side": str},
                                float_precision="round_trip")
        except (OSError, ValueError) as e:
            logger.error(f"Cannot read records {path}: {e}")
            raise
        missing = [c for c in RECORD_COLUMNS if c not in frame.columns]
        if missing:
            raise InvalidArgumentError(f"{path}: records file lacks columns {missing}")
        return frame[RECORD_COLUMNS]

    # ------------------------------------------------------------------
    # Aggregation
    # ------------------------------------------------------------------

    def mean_entry(self, frame: pd.DataFrame) -> MeanLsdEntry:
        return MeanLsdEntry(
            seen=_mean_or_none(frame.loc[frame["seen"], "lsd_db"]),
            unseen=_mean_or_none(frame.loc[~frame["seen"], "lsd_db"]),
            all=_mean_or_none(frame["lsd_db"]),
            n_records=int(len(frame)),
        )

    def grouped_means(self, frame: pd.DataFrame, column: str) -> Dict[str, MeanLsdEntry]:
        return {str(key): self.mean_entry(part) for key, part in frame.groupby(column, sort=True)}

    def anova(self, samples: Dict[str, np.ndarray]) -> Optional[AnovaEntry]:
        """One-way ANOVA over named samples; None when any sample is too small"""
        names = list(samples)
        try:
            result = one_way_anova(*(samples[n] for n in names))
        except InvalidArgumentError as e:
            logger.warning(f"ANOVA over {names} skipped: {e}")
            return None
        return _anova_entry(result, names)

    def side_anova(self, frame: pd.DataFrame) -> Dict[str, Optional[AnovaEntry]]:
        """Ipsilateral vs contralateral, separately for seen and unseen records"""
        out = {}
        for name, subset in (("seen", frame[frame["seen"]]), ("unseen", frame[~frame["seen"]])):
            sides = {str(k): part["lsd_db"].to_numpy() for k, part in subset.groupby("side", sort=True)}
            out[name] = self.anova(sides) if len(sides) >= 2 else None
        return out

    def compare(self, frame_a: pd.DataFrame, frame_b: pd.DataFrame, run_a: str, run_b: str) -> ComparisonEntry:
        """Run-A vs run-B ANOVA on pooled records, seen and unseen separately"""
        entry = ComparisonEntry(run_a=run_a, run_b=run_b,
                                mean_a=self.mean_entry(frame_a), mean_b=self.mean_entry(frame_b))
        for name, pick in (("seen", True), ("unseen", False)):
            a = frame_a.loc[frame_a["seen"] == pick, "lsd_db"].to_numpy()
            b = frame_b.loc[frame_b["seen"] == pick, "lsd_db"].to_numpy()
            setattr(entry, name, self.anova({run_a: a, run_b: b}))
        return entry

    def summarize(self, frame: pd.DataFrame, run: str, strategy: Optional[str] = None,
                  compare_frame: Optional[pd.DataFrame] = None,
                  compare_run: Optional[str] = None) -> SummaryFile:
        overall = self.mean_entry(frame)
        summary = SummaryFile(
            run=run,
            strategy=strategy,
            n_records=int(len(frame)),
            n_subjects=int(frame["subject_id"].nunique()),
            seen_mean_lsd=overall.seen,
            unseen_mean_lsd=overall.unseen,
            overall_mean_lsd=overall.all,
            per_side=self.grouped_means(frame, "side"),
            per_group=self.grouped_means(frame, "group"),
            per_subject=self.grouped_means(frame, "subject_id"),
            side_anova=self.side_anova(frame),
        )
        if compare_frame is not None:
            summary.comparison = self.compare(frame, compare_frame, run, compare_run or "compare")
        return summary

    def write_summary(self, summary: SummaryFile, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(summary.model_dump_json(indent=2) + "\n", encoding="utf-8")
        return path

    # ------------------------------------------------------------------
    # Human-readable table
    # ------------------------------------------------------------------

    def _cell(self, value: Optional[float]) -> str:
        return "-" if value is None else f"{value:.{self.decimals}f}"

    def format_table(self, summary: SummaryFile) -> str:
        """Mean LSD (dB) by slice, rounded for reading"""
        rows: List[tuple] = [("overall", MeanLsdEntry(
            seen=summary.seen_mean_lsd, unseen=summary.unseen_mean_lsd, all=summary.overall_mean_lsd,
            n_records=summary.n_records,
        ))]
        rows += [(f"side:{k}", v) for k, v in summary.per_side.items()]
        rows += [(f"group:{k}", v) for k, v in summary.per_group.items()]

        width = max(len(name) for name, _ in rows)
        lines = [f"{'slice':<{width}}  {'seen':>8}  {'unseen':>8}  {'all':>8}  {'n':>7}"]
        lines.append("-" * len(lines[0]))
        for name, entry in rows:
            lines.append(f"{name:<{width}}  {self._cell(entry.seen):>8}  {self._cell(entry.unseen):>8}  "
                         f"{self._cell(entry.all):>8}  {entry.n_records:>7}")

        for name, entry in summary.side_anova.items():
            if entry is not None:
                lines.append(f"side ANOVA ({name}): {self._anova_text(entry)}")
        if summary.comparison is not None:
            c = summary.comparison
            lines.append(f"{c.run_a} vs {c.run_b}: seen {self._cell(c.mean_a.seen)} / {self._cell(c.mean_b.seen)}, "
                         f"unseen {self._cell(c.mean_a.unseen)} / {self._cell(c.mean_b.unseen)}")
            for name in ("seen", "unseen"):
                entry = getattr(c, name)
                if entry is not None:
                    lines.append(f"  ANOVA ({name}): {self._anova_text(entry)}")
        return "\n".join(lines)

    @staticmethod
    def _anova_text(entry: AnovaEntry) -> str:
        f = "inf" if entry.infinite_f else f"{entry.F:.2f}"
        return f"F({entry.df[0]},{entry.df[1]})={f}, p={entry.p:.4g}"


# Global instance
report_service = ReportService()
