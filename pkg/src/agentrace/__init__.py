"""Trace-level anomaly detection for multi-agent LLM systems.

Submodules cover the span/trace model, a synthetic trace generator, the
rule-based labeler, feature extraction, detectors and the evaluation harness.
"""

__version__ = "0.1.0"
