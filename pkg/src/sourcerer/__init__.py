"""Asset-centric triage of Android static-analysis reports.

The pipeline has three stages: identify the assets an app handles (from its
store description and manifest), consolidate findings reported by several
static-analysis tools into one deduplicated list backed by a majority vote,
and rank what remains by the assets each finding can reach, with a mitigation
looked up for every confirmed category.
"""

from __future__ import annotations

__version__ = "0.1.0"

from sourcerer.errors import InputError, InvariantError, SourcererError

__all__ = ["InputError", "InvariantError", "SourcererError", "__version__"]
