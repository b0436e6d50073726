"""Per-case metric bundle and aggregation."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

from ..errors import ContractError


@dataclass
class MetricReport:
    """One evaluation case. Missing metrics stay None; psnr may be +inf."""

    case_id: str
    chamfer_cm: float | None = None
    p2s_cm: float | None = None
    normal_l2: float | None = None
    psnr_db: float | None = None
    ssim: float | None = None
    v2v_mm: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def metric_names(cls) -> list[str]:
        return [f.name for f in fields(cls) if f.name != "case_id"]


def aggregate_reports(reports: list[MetricReport]) -> dict:
    """Mean of each metric over the cases that define it."""
    if not reports:
        raise ContractError("nothing to aggregate")
    out: dict = {"n_cases": len(reports)}
    for name in MetricReport.metric_names():
        vals = [getattr(r, name) for r in reports if getattr(r, name) is not None]
        out[name] = (sum(vals) / len(vals)) if vals else None
    return out
