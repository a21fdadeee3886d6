"""Asynchronous multi-stage frame pipeline with a desk-scale smile detector.

Subpackages and modules:

- :mod:`framegrind.pipeline`: frame queue, scheduler, simulated and real clocks
- :mod:`framegrind.geometry`: similarity fits, template symmetrization, warps
- :mod:`framegrind.stages`: detector, aligner, classifier, overlay, plugins
- :mod:`framegrind.costmodel`: parameter and FLO counts for layer-described CNNs
- :mod:`framegrind.metrics`: ACC, ROC/AUC, throughput and latency reports
- :mod:`framegrind.cli`: the ``framegrind`` command
"""

from .image import ImageBuffer, read_pnm, write_pnm
from .pipeline import (ClockConfig, ConfigError, Frame, FrameClaim, FrameQueue, Pipeline,
                       PipelineConfig, ResultPayload, ResultsBoard, RunReport, SimulatedClock,
                       StageDescriptor, StageStatus, create_pipeline, load_config, run, shutdown)

__version__ = "0.1.0"

__all__ = [
    "ImageBuffer", "read_pnm", "write_pnm", "ClockConfig", "ConfigError", "Frame", "FrameClaim",
    "FrameQueue", "Pipeline", "PipelineConfig", "ResultPayload", "ResultsBoard", "RunReport",
    "SimulatedClock", "StageDescriptor", "StageStatus", "create_pipeline", "load_config", "run",
    "shutdown",
]
