from mia.fpv.client import (ClientError, CredentialError, FixtureClient, MapillaryClient,
                            PayloadError, TransientError, fetch_image_metadata,
                            fetch_tile_image_ids)
from mia.fpv.filters import (DEFAULT_CAMERA_MODELS, DEFAULT_RECENCY_CUTOFF_MS, STAGES,
                             FilterConfig, FilterReport, run_filter_pipeline)
from mia.fpv.metadata import CameraType, ImageMetadata, MetadataError, parse_image_payload
from mia.fpv.tiles import BoundaryError, enumerate_tiles
from mia.fpv.undistort import CameraIntrinsics, undistort_fisheye

__all__ = [
    "BoundaryError", "CameraIntrinsics", "CameraType", "ClientError", "CredentialError",
    "DEFAULT_CAMERA_MODELS", "DEFAULT_RECENCY_CUTOFF_MS", "FilterConfig", "FilterReport",
    "FixtureClient", "ImageMetadata", "MapillaryClient", "MetadataError", "PayloadError",
    "STAGES", "TransientError", "enumerate_tiles", "fetch_image_metadata",
    "fetch_tile_image_ids", "parse_image_payload", "run_filter_pipeline", "undistort_fisheye",
]
