# Copyright Contributors to the agsplat Project
# SPDX-License-Identifier: Apache-2.0
#
"""Anchor-graph Gaussian splatting scene segmentation."""

from ._agsplat import (
    Camera,
    Error,
    QueryService,
    Scene,
    TrainedScene,
    benchmark_config,
    boundary_iou,
    click_query,
    export_particles,
    iou,
    load_scene,
    remove_object,
    render,
    run_pipeline,
    save_scene,
    train,
    unproject_click,
    voxelize_points,
)

__all__ = [
    "Camera",
    "Error",
    "QueryService",
    "Scene",
    "TrainedScene",
    "benchmark_config",
    "boundary_iou",
    "click_query",
    "export_particles",
    "iou",
    "load_scene",
    "remove_object",
    "render",
    "run_pipeline",
    "save_scene",
    "train",
    "unproject_click",
    "voxelize_points",
]
