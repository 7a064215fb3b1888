"""Python bindings for the hdmap toolkit.

Grids are numpy arrays of shape (H, W, C). Vector maps travel as VectorMap
JSON strings, the same documents the command-line tool reads and writes.
"""

import json

from ._hdmap import *  # noqa: F401,F403
from ._hdmap import evaluate as _evaluate


def evaluate(pred, gt, thresholds=(0.2, 0.5, 1.0)):
    """Metrics report for one scene as a dict."""
    return json.loads(_evaluate(pred, gt, list(thresholds)))
