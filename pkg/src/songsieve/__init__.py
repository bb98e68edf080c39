"""Batch tooling for bird-vocalization detection pipelines.

Turns annotated field recordings into detector training data, then scores
and calibrates the detections that come back.
"""

__version__ = "0.1.0"
