# Copyright 2026 The protodiff Authors. All Rights Reserved.
# SPDX-License-Identifier: Apache-2.0
"""Prototype matching and graph-diffusion rescoring for few-shot proposals."""

from ._core import (  # noqa: F401
    FormatError,
    Mask,
    PipelineError,
    box_iou,
    cli,
    diffuse_scores,
    evaluate,
    generate,
    mask_coverage,
    run,
)

__all__ = [
    "FormatError",
    "Mask",
    "PipelineError",
    "box_iou",
    "cli",
    "diffuse_scores",
    "evaluate",
    "generate",
    "mask_coverage",
    "run",
]
