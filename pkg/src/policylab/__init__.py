"""policylab: active-learning + crowdsourcing pipeline for labeling
privacy-policy text segments by data category, data action, and action mode."""

from .labels import ActionMode, DataAction, DataCategory, Provenance, SegmentLabel, SegmentRef

__version__ = "0.1.0"

__all__ = [
    "ActionMode",
    "DataAction",
    "DataCategory",
    "Provenance",
    "SegmentLabel",
    "SegmentRef",
    "__version__",
]
