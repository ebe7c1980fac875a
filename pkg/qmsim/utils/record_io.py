from typing import Any, Dict, Iterator, List, Optional, Sequence, Type, TypeVar
from contextlib import contextmanager
from datetime import datetime, timezone
from pathlib import Path
import io
import json
import os
import shutil
import tempfile
import logging
import numpy as np
import pandas as pd
from pydantic import BaseModel, TypeAdapter

from models import (
    ModelParams, SweepRecord, SweepRow, TransitionEvent, RelaxationReport,
    CriticalCouplingResult, FieldEnergyPoint, SWEEP_COLUMNS, EVENT_COLUMNS, ENERGY_CURVE_COLUMNS
)
from core.config import settings
from core.errors import RecordError
from services.observables import local_field, occupation_profile

logger = logging.getLogger(__name__)

ModelT = TypeVar("ModelT", bound=BaseModel)

FORMATS = ("csv", "json")
PROFILE_COLUMNS = ["n", "a", "v", "b_right", "occupation"]


def atomic_write_text(path: Path, text: str) -> None:
    """Write to a temporary file in the target directory, then rename over the target"""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        handle, temp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        try:
            with os.fdopen(handle, "w", encoding="utf-8", newline="") as f:
                f.write(text)
            os.replace(temp_name, path)
        except BaseException:
            if os.path.exists(temp_name):
                os.unlink(temp_name)
            raise
    except OSError as e:
        raise RecordError(f"failed to write {path}: {e}") from e
    logger.debug(f"Wrote {path}")


@contextmanager
def staged_directory(target: Path) -> Iterator[Path]:
    """
    Yield a scratch directory beside target. Its files move into target only when
    the block completes; on any exception target is left untouched.

    Raises:
        RecordError: the scratch directory or the final moves fail
    """
    target = Path(target)
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        staging = Path(tempfile.mkdtemp(dir=target.parent, prefix=f".{target.name}.", suffix=".staging"))
    except OSError as e:
        raise RecordError(f"failed to stage outputs for {target}: {e}") from e

    try:
        yield staging
        try:
            target.mkdir(parents=True, exist_ok=True)
            for item in sorted(staging.iterdir()):
                os.replace(item, target / item.name)
        except OSError as e:
            raise RecordError(f"failed to move outputs into {target}: {e}") from e
        logger.debug(f"Moved staged outputs into {target}")
    finally:
        shutil.rmtree(staging, ignore_errors=True)


def _read_text(path: Path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise RecordError(f"failed to read {path}: {e}") from e


def _frame_to_csv(frame: pd.DataFrame) -> str:
    return frame.to_csv(index=False, lineterminator="\n")


def _csv_records(text: str) -> List[Dict[str, Any]]:
    frame = pd.read_csv(io.StringIO(text), float_precision="round_trip")
    return [
        {key: value.item() if isinstance(value, np.generic) else value for key, value in record.items()}
        for record in frame.to_dict("records")
    ]


def events_path(path: Path) -> Path:
    return Path(path).with_suffix(".events.csv")


def metadata_path(path: Path) -> Path:
    return Path(path).with_suffix(".meta.json")


def write_metadata(
    path: Path,
    params: ModelParams,
    protocol: Optional[Dict[str, Any]] = None
) -> Path:
    """Sidecar with every ModelParams field, the seed and the artifact version"""
    sidecar = metadata_path(path)
    metadata = {
        "artifact_version": settings.artifact_version,
        "created_at": datetime.now(timezone.utc).isoformat(),
        "rng_seed": params.rng_seed,
        "model": params.model_dump(),
        "protocol": protocol or {},
    }
    atomic_write_text(sidecar, json.dumps(metadata, indent=2, sort_keys=True) + "\n")
    return sidecar


def write_sweep_record(
    record: SweepRecord,
    format: str,
    path: Path,
    params: Optional[ModelParams] = None,
    protocol: Optional[Dict[str, Any]] = None
) -> List[Path]:
    """
    Serialize a sweep record.

    csv writes the row table, a companion *.events.csv, and (with params) a *.meta.json;
    json writes rows and events together in one document.

    Returns:
        Paths written
    """
    if not record.rows:
        raise RecordError("refusing to write an empty sweep record")
    if format not in FORMATS:
        raise RecordError(f"unknown format {format!r}; expected one of {FORMATS}")

    path = Path(path)
    written = []
    if format == "csv":
        rows = pd.DataFrame([row.model_dump() for row in record.rows], columns=SWEEP_COLUMNS)
        events = pd.DataFrame([event.model_dump() for event in record.events], columns=EVENT_COLUMNS)
        atomic_write_text(path, _frame_to_csv(rows))
        atomic_write_text(events_path(path), _frame_to_csv(events))
        written += [path, events_path(path)]
    else:
        atomic_write_text(path, record.model_dump_json() + "\n")
        written.append(path)

    if params is not None:
        written.append(write_metadata(path, params, protocol))
    logger.info(f"Saved sweep record ({len(record.rows)} rows, {len(record.events)} events) to {path}")
    return written


def read_sweep_record(path: Path) -> SweepRecord:
    path = Path(path)
    text = _read_text(path)
    if path.suffix == ".json":
        return SweepRecord.model_validate_json(text)

    rows = [SweepRow(**record) for record in _csv_records(text)]
    events = []
    if events_path(path).exists():
        events = [TransitionEvent(**record) for record in _csv_records(_read_text(events_path(path)))]
    return SweepRecord(rows=rows, events=events)


def write_model(model: BaseModel, path: Path) -> Path:
    atomic_write_text(path, model.model_dump_json(indent=2) + "\n")
    return Path(path)


def read_model(model_type: Type[ModelT], path: Path) -> ModelT:
    return model_type.model_validate_json(_read_text(path))


def write_profile(report: RelaxationReport, params: ModelParams, path: Path) -> Path:
    """Final per-site profile: field, velocity, link field to the right, excited occupation"""
    state = report.final_state
    links = local_field(state, params)
    frame = pd.DataFrame({
        "n": np.arange(state.n_sites),
        "a": state.field.a,
        "v": state.field.v,
        "b_right": links[1:],
        "occupation": occupation_profile(state),
    }, columns=PROFILE_COLUMNS)
    atomic_write_text(path, _frame_to_csv(frame))
    return Path(path)


_SCAN_ADAPTER = TypeAdapter(List[CriticalCouplingResult])


def write_scan_results(results: List[CriticalCouplingResult], format: str, path: Path) -> Path:
    if format == "csv":
        frame = pd.DataFrame([result.model_dump() for result in results],
                             columns=list(CriticalCouplingResult.model_fields.keys()))
        atomic_write_text(path, _frame_to_csv(frame))
    else:
        atomic_write_text(path, _SCAN_ADAPTER.dump_json(results).decode("utf-8") + "\n")
    return Path(path)


def read_scan_results(path: Path) -> List[CriticalCouplingResult]:
    path = Path(path)
    text = _read_text(path)
    if path.suffix == ".json":
        return _SCAN_ADAPTER.validate_json(text)
    return [CriticalCouplingResult(**record) for record in _csv_records(text)]


_ENERGY_CURVE_ADAPTER = TypeAdapter(List[FieldEnergyPoint])


def write_energy_curve(points: Sequence[FieldEnergyPoint], format: str, path: Path) -> Path:
    """One row per field: h_ext, steady, winding, phi and the energy terms"""
    if not points:
        raise RecordError("refusing to write an empty energy curve")
    if format not in FORMATS:
        raise RecordError(f"unknown format {format!r}; expected one of {FORMATS}")

    if format == "csv":
        frame = pd.DataFrame([point.model_dump() for point in points], columns=ENERGY_CURVE_COLUMNS)
        atomic_write_text(path, _frame_to_csv(frame))
    else:
        atomic_write_text(path, _ENERGY_CURVE_ADAPTER.dump_json(list(points)).decode("utf-8") + "\n")
    logger.info(f"Saved energy curve ({len(points)} fields) to {path}")
    return Path(path)


def read_energy_curve(path: Path) -> List[FieldEnergyPoint]:
    path = Path(path)
    text = _read_text(path)
    if path.suffix == ".json":
        return _ENERGY_CURVE_ADAPTER.validate_json(text)
    return [FieldEnergyPoint(**record) for record in _csv_records(text)]
