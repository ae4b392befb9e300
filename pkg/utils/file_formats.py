"""
JSON file schemas
Correspondence, calibration and metrics documents with conversion to and
from the numerical types. Floats are written with repr, which round-trips
exactly.
"""

import json
from typing import Any, Dict, List, Optional, Tuple, Type, TypeVar

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from procam.calibrate import CalibrationResult
from procam.distortion import DivisionModel
from procam.errors import DimensionMismatch, GimbalLock, SchemaError
from procam.geometry import Intrinsics, RigidTransform, check_rotation
from procam.structured_light import CorrespondenceSet

SCHEMA_VERSION = 1
TOOL_VERSION = "procam-calib 1.0.0"

Model = TypeVar("Model", bound=BaseModel)


# ==================== Blocks ====================


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid")


class BoardBlock(_Block):
    rows: int = Field(ge=2)
    cols: int = Field(ge=2)
    spacing_mm: float = Field(gt=0)


class SizeBlock(_Block):
    width: int = Field(ge=2)
    height: int = Field(ge=2)

    def as_tuple(self) -> Tuple[int, int]:
        return (self.width, self.height)


class PointRecord(_Block):
    board: Tuple[float, float]
    camera_distorted: Tuple[float, float]
    projector: Tuple[float, float]
    id: Optional[int] = None


class IntrinsicsBlock(_Block):
    f: float = Field(gt=0)
    alpha: float = Field(1.0, gt=0)
    u0: float
    v0: float

    def to_intrinsics(self) -> Intrinsics:
        return Intrinsics(f=self.f, alpha=self.alpha, u0=self.u0, v0=self.v0)

    @classmethod
    def from_intrinsics(cls, K: Intrinsics) -> "IntrinsicsBlock":
        return cls(f=K.f, alpha=K.alpha, u0=K.u0, v0=K.v0)


class DistortionBlock(_Block):
    center: Tuple[float, float]
    k1: float
    k2: float

    def to_model(self) -> DivisionModel:
        return DivisionModel(center=self.center, k1=self.k1, k2=self.k2)

    @classmethod
    def from_model(cls, model: DivisionModel) -> "DistortionBlock":
        return cls(center=tuple(float(v) for v in model.center), k1=model.k1, k2=model.k2)


class TransformBlock(_Block):
    rotation: List[float] = Field(min_length=9, max_length=9)
    translation: List[float] = Field(min_length=3, max_length=3)
    euler_xyz_deg: Optional[List[float]] = None

    @field_validator("rotation")
    @classmethod
    def _is_rotation(cls, v: List[float]) -> List[float]:
        check_rotation(np.array(v).reshape(3, 3))
        return v

    def to_transform(self) -> RigidTransform:
        return RigidTransform(rotation=np.array(self.rotation).reshape(3, 3), translation=self.translation)

    @classmethod
    def from_transform(cls, rt: RigidTransform) -> "TransformBlock":
        try:
            euler = [float(v) for v in rt.euler.as_tuple()]
        except GimbalLock:
            euler = None
        return cls(
            rotation=[float(v) for v in rt.rotation.ravel()],
            translation=[float(v) for v in rt.translation],
            euler_xyz_deg=euler,
        )


class GroundTruthBlock(_Block):
    K_c: IntrinsicsBlock
    distortion: DistortionBlock
    K_p: IntrinsicsBlock
    rt_c: TransformBlock
    rt_p: TransformBlock
    rt_procam: TransformBlock


# ==================== Documents ====================


class CorrespondenceFile(_Block):
    """Board, distorted camera and projector points of one pose"""

    schema_version: int
    board: BoardBlock
    camera: SizeBlock
    projector: SizeBlock
    points: List[PointRecord]
    ground_truth: Optional[GroundTruthBlock] = None

    @model_validator(mode="after")
    def _point_count(self):
        ids = [p.id for p in self.points]
        expected = self.board.rows * self.board.cols
        if all(i is None for i in ids):
            if len(self.points) != expected:
                raise ValueError(
                    f"{len(self.points)} points for a {self.board.cols}x{self.board.rows} board "
                    f"(expected {expected})"
                )
        elif any(i is None for i in ids):
            raise ValueError("either every point or no point carries an id")
        elif len(set(ids)) != len(ids) or min(ids) < 0 or max(ids) >= expected:
            raise ValueError("point ids must be unique corner indices")
        return self


class CalibrationFile(_Block):
    """Serialized CalibrationResult"""

    schema_version: int
    tool_version: str = TOOL_VERSION
    K_c: IntrinsicsBlock
    distortion: DistortionBlock
    K_p: IntrinsicsBlock
    rt_c: TransformBlock
    rt_p: TransformBlock
    rt_procam: TransformBlock
    residuals: Dict[str, float] = {}
    diagnostics: Dict[str, Any] = {}


class PoseMetrics(_Block):
    pose_id: int
    source: str
    X: Optional[float] = None
    Y: Optional[float] = None
    Z: Optional[float] = None
    absT: Optional[float] = None
    reproj_cam: Optional[float] = None
    reproj_pro: Optional[float] = None
    reproj_stereo: Optional[float] = None
    skipped: bool = False


class PoseSetSummary(_Block):
    """Translation spread over every pose subset of at least min_size poses"""

    min_size: int
    count: int
    sigma_T_mean: float
    sigma_T_max: float
    sigma_absT_mean: float
    sigma_absT_max: float


class MetricsFile(_Block):
    """Output of the evaluate command"""

    schema_version: int
    tool_version: str = TOOL_VERSION
    poses: List[PoseMetrics]
    sigma_X: float
    sigma_Y: float
    sigma_Z: float
    sigma_T: float
    sigma_absT: float
    rotation_spread_deg: Optional[float] = None
    pose_sets: Optional[PoseSetSummary] = None
    stereo_definition: str = "mean of camera and projector per-point reprojection errors"


# ==================== I/O ====================


def _field_path(error: dict) -> str:
    return ".".join(str(part) for part in error["loc"]) or "<document>"


def parse_document(data: Any, model: Type[Model]) -> Model:
    """
    Validate a decoded JSON document

    Raises:
        SchemaError: naming the first failing field
    """
    try:
        document = model.model_validate(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        raise SchemaError(_field_path(first), first["msg"]) from exc
    if document.schema_version != SCHEMA_VERSION:
        raise SchemaError("schema_version", f"unsupported version {document.schema_version}")
    return document


def read_document(path: str, model: Type[Model]) -> Model:
    """
    Load and validate a JSON file

    Raises:
        OSError: unreadable file
        SchemaError: malformed JSON (with line/column) or schema violation
    """
    with open(path, "r", encoding="utf-8") as handle:
        text = handle.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError("<document>", f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}")
    return parse_document(data, model)


def dump_document(document: BaseModel) -> str:
    return json.dumps(document.model_dump(mode="json"), indent=2) + "\n"


def write_document(path: str, document: BaseModel):
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(dump_document(document))


# ==================== Conversions ====================


def ground_truth_block(truth) -> GroundTruthBlock:
    return GroundTruthBlock(
        K_c=IntrinsicsBlock.from_intrinsics(truth.K_c),
        distortion=DistortionBlock.from_model(truth.distortion),
        K_p=IntrinsicsBlock.from_intrinsics(truth.K_p),
        rt_c=TransformBlock.from_transform(truth.rt_c),
        rt_p=TransformBlock.from_transform(truth.rt_p),
        rt_procam=TransformBlock.from_transform(truth.rt_procam),
    )


def correspondence_document(corr: CorrespondenceSet, truth=None) -> CorrespondenceFile:
    ids = corr.corner_ids
    points = [
        PointRecord(
            board=tuple(float(v) for v in corr.board[i]),
            camera_distorted=tuple(float(v) for v in corr.camera[i]),
            projector=tuple(float(v) for v in corr.projector[i]),
            id=None if ids is None else ids[i],
        )
        for i in range(len(corr))
    ]
    return CorrespondenceFile(
        schema_version=SCHEMA_VERSION,
        board=BoardBlock(rows=corr.rows, cols=corr.cols, spacing_mm=corr.spacing_mm),
        camera=SizeBlock(width=corr.camera_size[0], height=corr.camera_size[1]),
        projector=SizeBlock(width=corr.projector_size[0], height=corr.projector_size[1]),
        points=points,
        ground_truth=None if truth is None else ground_truth_block(truth),
    )


def correspondence_set(document: CorrespondenceFile) -> CorrespondenceSet:
    """
    Raises:
        SchemaError: when the points violate a CorrespondenceSet invariant
    """
    ids = [p.id for p in document.points]
    try:
        return CorrespondenceSet(
            board=[p.board for p in document.points],
            camera=[p.camera_distorted for p in document.points],
            projector=[p.projector for p in document.points],
            rows=document.board.rows,
            cols=document.board.cols,
            spacing_mm=document.board.spacing_mm,
            camera_size=document.camera.as_tuple(),
            projector_size=document.projector.as_tuple(),
            corner_ids=None if ids and ids[0] is None else ids,
        )
    except (DimensionMismatch, ValueError) as exc:
        raise SchemaError("points", str(exc)) from exc


def load_correspondences(path: str) -> Tuple[CorrespondenceSet, Optional[GroundTruthBlock]]:
    document = read_document(path, CorrespondenceFile)
    return correspondence_set(document), document.ground_truth


def calibration_document(result: CalibrationResult) -> CalibrationFile:
    return CalibrationFile(
        schema_version=SCHEMA_VERSION,
        K_c=IntrinsicsBlock.from_intrinsics(result.K_c),
        distortion=DistortionBlock.from_model(result.distortion),
        K_p=IntrinsicsBlock.from_intrinsics(result.K_p),
        rt_c=TransformBlock.from_transform(result.rt_c),
        rt_p=TransformBlock.from_transform(result.rt_p),
        rt_procam=TransformBlock.from_transform(result.rt_procam),
        residuals=result.residuals,
        diagnostics={
            "camera": result.camera_diagnostics.model_dump(mode="json"),
            "projector": result.projector_diagnostics.model_dump(mode="json"),
            "converged": result.converged,
            "warnings": result.warnings,
        },
    )


def load_calibration(path: str) -> CalibrationFile:
    return read_document(path, CalibrationFile)
