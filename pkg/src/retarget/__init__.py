from src.retarget.alignment import (
    RetargetResult,
    SkeletonMap,
    SyntheticSkeleton,
    alignment_cost,
    retarget_ik,
)
from src.retarget.feasibility import PDGains, feasibility_filter, pd_track

__all__ = [
    "PDGains",
    "RetargetResult",
    "SkeletonMap",
    "SyntheticSkeleton",
    "alignment_cost",
    "feasibility_filter",
    "pd_track",
    "retarget_ik",
]
