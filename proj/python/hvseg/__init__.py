"""Nucleus and cell instance segmentation from HV maps (native core)."""

import json as _json

from ._hvseg import (
    HvsegError,
    Service,
    binary_cross_entropy,
    dice,
    extract_instances,
    focal_bce,
    generate_hv_maps,
    match,
    rank_models,
    segment,
    write_demo_slide,
)


def segment_features(slide, **kwargs):
    """segment() parsed into a GeoJSON dict."""
    return _json.loads(segment(slide, format="geojson", **kwargs))


__all__ = [
    "HvsegError",
    "Service",
    "binary_cross_entropy",
    "dice",
    "extract_instances",
    "focal_bce",
    "generate_hv_maps",
    "match",
    "rank_models",
    "segment",
    "segment_features",
    "write_demo_slide",
]
