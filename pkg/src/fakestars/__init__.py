"""Detection and measurement of fake-star campaigns in GitHub event streams."""

from .campaigns import CampaignReport, CampaignThresholds, FakeStarLedger, detect_campaigns, merge_detections
from .events import EventStore, parse_event_stream
from .lockstep import LockstepParams, build_star_graph, detect_chunked, run_lockstep_detection
from .lowactivity import detect_low_activity, filter_by_repo_threshold

__version__ = "0.1.0"

__all__ = [
    "CampaignReport", "CampaignThresholds", "EventStore", "FakeStarLedger", "LockstepParams",
    "build_star_graph", "detect_campaigns", "detect_chunked", "detect_low_activity",
    "filter_by_repo_threshold", "merge_detections", "parse_event_stream", "run_lockstep_detection",
]
