"""Room-level indoor localization from WiFi beacon streams.

Beacon-stream augmentation, a self-contained random forest room classifier,
an experiment harness and a synthetic RF scenario generator.
"""

__version__ = "0.1.0"

from dataloc.augment import (
    PortionRange,
    Snapshot,
    dataloc_plus,
    online_snapshot,
    select_window,
    system_snapshots_to_snapshots,
)
from dataloc.errors import DataLocError
from dataloc.features import (
    FeatureMatrix,
    build_feature_matrix,
    split_stratified,
    subdivide_zones,
)
from dataloc.forest import ForestConfig, ForestModel, evaluate, predict, train_forest
from dataloc.ingest import (
    Band,
    BeaconRecord,
    CaptureSession,
    SystemSnapshot,
    parse_beacon_log,
    parse_system_snapshots,
    write_beacon_log,
    write_system_snapshots,
)

__all__ = [
    "Band",
    "BeaconRecord",
    "CaptureSession",
    "DataLocError",
    "FeatureMatrix",
    "ForestConfig",
    "ForestModel",
    "PortionRange",
    "Snapshot",
    "SystemSnapshot",
    "build_feature_matrix",
    "dataloc_plus",
    "evaluate",
    "online_snapshot",
    "parse_beacon_log",
    "parse_system_snapshots",
    "predict",
    "select_window",
    "split_stratified",
    "subdivide_zones",
    "system_snapshots_to_snapshots",
    "train_forest",
    "write_beacon_log",
    "write_system_snapshots",
]
