"""
Structured Light
Gray-code pattern generation, image-stack decoding and local-homography
lifting of camera corners into projector coordinates.

Frame order of a PatternSet: column bits MSB -> LSB, each followed by its
inverse, then row bits in the same manner, then all-white, then all-black.
"""

import logging
from typing import Callable, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator

from config import Config
from procam.errors import DegenerateConfiguration, DimensionMismatch, InsufficientSupport, PointAtInfinity
from procam.geometry import as_point2, as_points2, estimate_homography

logger = logging.getLogger(__name__)

WHITE = 255
BLACK = 0
UNDECODABLE = -1


def gray_code(values):
    """Reflected binary code of non-negative integers"""
    values = np.asarray(values, dtype=np.int64)
    return values ^ (values >> 1)


def gray_to_binary(values):
    values = np.asarray(values, dtype=np.int64).copy()
    shift = values >> 1
    while np.any(shift):
        values ^= shift
        shift >>= 1
    return values


def bit_count(n: int) -> int:
    """ceil(log2 n): bits needed to address n pixel indices"""
    return max(1, (int(n) - 1).bit_length())


# ==================== Domain Types ====================


class GrayImage(BaseModel):
    """8-bit grey image, stored (height, width)"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    width: int
    height: int
    data: np.ndarray

    def __init__(self, **values):
        width, height = int(values["width"]), int(values["height"])
        data = np.asarray(values["data"])
        if data.size != width * height:
            raise DimensionMismatch(
                f"image data has {data.size} values, expected {width}x{height}"
            )
        data = np.clip(data, 0, 255).astype(np.uint8).reshape(height, width)
        data.setflags(write=False)
        super().__init__(width=width, height=height, data=data)

    @classmethod
    def from_array(cls, array) -> "GrayImage":
        array = np.asarray(array)
        return cls(width=array.shape[1], height=array.shape[0], data=array)

    @property
    def size(self) -> Tuple[int, int]:
        return (self.width, self.height)


class PatternFrame(BaseModel):
    """Layout entry describing one frame of a PatternSet"""

    model_config = ConfigDict(frozen=True)

    kind: Literal["bit", "white", "black"]
    axis: Optional[Literal["column", "row"]] = None
    bit: Optional[int] = None
    inverse: bool = False

    @property
    def label(self) -> str:
        if self.kind != "bit":
            return self.kind
        return f"{self.axis}-bit{self.bit}{'-inv' if self.inverse else ''}"


class PatternSet(BaseModel):
    """Projector pattern images with their frame layout"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    projector_width: int
    projector_height: int
    layout: List[PatternFrame]
    patterns: List[GrayImage] = []

    @property
    def column_bits(self) -> int:
        return bit_count(self.projector_width)

    @property
    def row_bits(self) -> int:
        return bit_count(self.projector_height)

    @property
    def expected_count(self) -> int:
        return 2 * (self.column_bits + self.row_bits) + 2

    def __len__(self) -> int:
        return len(self.layout)


class CorrespondenceMap(BaseModel):
    """Per camera pixel decoded projector (column, row), -1 where undecodable"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    columns: np.ndarray
    rows: np.ndarray
    valid: np.ndarray
    contrast: np.ndarray
    projector_width: int
    projector_height: int

    @property
    def camera_size(self) -> Tuple[int, int]:
        return (self.valid.shape[1], self.valid.shape[0])

    @property
    def decoded_fraction(self) -> float:
        return float(np.mean(self.valid))

    def lookup(self, x: int, y: int) -> Optional[Tuple[int, int]]:
        if not self.valid[y, x]:
            return None
        return int(self.columns[y, x]), int(self.rows[y, x])


class CorrespondenceSet(BaseModel):
    """
    Aligned board, distorted camera and projector points for one board pose

    Point i of every array refers to the same chessboard corner. When
    `corner_ids` is absent the set covers the full grid in row-major order.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    board: np.ndarray
    camera: np.ndarray
    projector: np.ndarray
    rows: int
    cols: int
    spacing_mm: float
    camera_size: Tuple[int, int]
    projector_size: Tuple[int, int]
    corner_ids: Optional[Tuple[int, ...]] = None

    def __init__(self, **values):
        arrays = {}
        for name in ("board", "camera", "projector"):
            arr = as_points2(values[name]).copy()
            arr.setflags(write=False)
            arrays[name] = arr
        lengths = {name: len(arr) for name, arr in arrays.items()}
        if len(set(lengths.values())) != 1:
            raise DimensionMismatch(f"point arrays differ in length: {lengths}")
        n = lengths["board"]
        rows, cols = int(values["rows"]), int(values["cols"])
        if rows < 2 or cols < 2:
            raise DimensionMismatch(f"board must have >= 2x2 corners, got {rows}x{cols}")
        corner_ids = values.get("corner_ids")
        if corner_ids is None:
            if n != rows * cols:
                raise DimensionMismatch(f"{n} points for a {cols}x{rows} board ({rows * cols} corners)")
        else:
            corner_ids = tuple(int(i) for i in corner_ids)
            if len(corner_ids) != n:
                raise DimensionMismatch(f"{len(corner_ids)} corner ids for {n} points")
            if len(set(corner_ids)) != n or min(corner_ids) < 0 or max(corner_ids) >= rows * cols:
                raise DimensionMismatch("corner ids must be unique grid indices")
        super().__init__(**{**values, **arrays, "rows": rows, "cols": cols, "corner_ids": corner_ids})

    @field_validator("spacing_mm")
    @classmethod
    def _positive_spacing(cls, v: float) -> float:
        if v <= 0:
            raise ValueError("spacing_mm must be positive")
        return v

    def __len__(self) -> int:
        return len(self.board)

    @property
    def board_width_mm(self) -> float:
        """Extent of the corner grid along board x"""
        return float(np.ptp(self.board[:, 0]))

    @property
    def ids(self) -> Tuple[int, ...]:
        return self.corner_ids if self.corner_ids is not None else tuple(range(len(self)))


# ==================== Patterns ====================


def pattern_layout(width: int, height: int) -> List[PatternFrame]:
    layout = []
    for axis, n in (("column", width), ("row", height)):
        for bit in reversed(range(bit_count(n))):
            layout.append(PatternFrame(kind="bit", axis=axis, bit=bit))
            layout.append(PatternFrame(kind="bit", axis=axis, bit=bit, inverse=True))
    layout.append(PatternFrame(kind="white"))
    layout.append(PatternFrame(kind="black"))
    return layout


def _pattern_image(frame: PatternFrame, width: int, height: int) -> np.ndarray:
    if frame.kind == "white":
        return np.full((height, width), WHITE, dtype=np.uint8)
    if frame.kind == "black":
        return np.full((height, width), BLACK, dtype=np.uint8)
    n = width if frame.axis == "column" else height
    lit = (gray_code(np.arange(n)) >> frame.bit) & 1
    if frame.inverse:
        lit = 1 - lit
    line = (lit * WHITE).astype(np.uint8)
    if frame.axis == "column":
        return np.broadcast_to(line[None, :], (height, width)).copy()
    return np.broadcast_to(line[:, None], (height, width)).copy()


def generate_patterns(width: int, height: int) -> PatternSet:
    """
    Gray-code bit planes (direct and inverse) for both axes plus white and black

    Args:
        width: projector width in pixels, >= 2
        height: projector height in pixels, >= 2

    Returns:
        PatternSet with 2*(ceil(log2 w) + ceil(log2 h)) + 2 frames
    """
    if width < 2 or height < 2:
        raise ValueError(f"projector must be at least 2x2, got {width}x{height}")
    layout = pattern_layout(width, height)
    patterns = [GrayImage.from_array(_pattern_image(frame, width, height)) for frame in layout]
    return PatternSet(
        projector_width=width, projector_height=height, layout=layout, patterns=patterns
    )


def render_graycode_stack(
    patterns: PatternSet,
    camera_size: Tuple[int, int],
    mapping: Callable[[np.ndarray], np.ndarray],
    white_level: float = WHITE,
    black_level: float = BLACK,
) -> List[GrayImage]:
    """
    Render what a camera sees of each pattern

    Every camera pixel samples the projector pattern at mapping(pixel) with
    nearest-neighbour lookup; pixels mapping outside the projector stay at
    black_level.

    Args:
        patterns: projector patterns
        camera_size: (width, height) of the camera
        mapping: (N, 2) camera pixels -> (N, 2) projector coordinates
        white_level: camera intensity of a lit projector pixel
        black_level: camera intensity of an unlit projector pixel
    """
    width, height = camera_size
    ys, xs = np.mgrid[0:height, 0:width]
    pixels = np.column_stack([xs.ravel(), ys.ravel()]).astype(float)
    projected = np.asarray(mapping(pixels), dtype=float)
    cols = np.rint(projected[:, 0])
    rows = np.rint(projected[:, 1])
    inside = (
        np.isfinite(cols) & np.isfinite(rows)
        & (cols >= 0) & (cols < patterns.projector_width)
        & (rows >= 0) & (rows < patterns.projector_height)
    )
    cols = np.where(inside, cols, 0).astype(np.int64)
    rows = np.where(inside, rows, 0).astype(np.int64)

    stack = []
    for pattern in patterns.patterns:
        lit = pattern.data[rows, cols].astype(float) / WHITE
        frame = np.where(inside, black_level + (white_level - black_level) * lit, black_level)
        stack.append(GrayImage(width=width, height=height, data=np.rint(frame).reshape(height, width)))
    return stack


# ==================== Decoding ====================


def decode(
    stack: Sequence[GrayImage],
    patterns: PatternSet,
    contrast_threshold: float = None,
    span_threshold: float = None,
) -> CorrespondenceMap:
    """
    Decode a captured Gray-code stack into projector coordinates

    Args:
        stack: captured frames in PatternSet layout order
        patterns: layout (and projector size) the stack was captured with
        contrast_threshold: minimum |direct - inverse| on every bit
        span_threshold: minimum white - black level

    Raises:
        DimensionMismatch: when frame count or frame sizes disagree
    """
    if contrast_threshold is None:
        contrast_threshold = Config.get_threshold("contrast")
    if span_threshold is None:
        span_threshold = Config.get_threshold("span")

    layout = patterns.layout
    if len(stack) != len(layout):
        raise DimensionMismatch(f"stack has {len(stack)} frames, layout expects {len(layout)}")
    shapes = {img.data.shape for img in stack}
    if len(shapes) != 1:
        raise DimensionMismatch(f"stack frames differ in size: {sorted(shapes)}")
    shape = shapes.pop()

    frames = {frame.label: img.data.astype(np.int16) for frame, img in zip(layout, stack)}
    span = frames["white"] - frames["black"]
    min_contrast = np.full(shape, np.iinfo(np.int16).max, dtype=np.int16)

    decoded = {}
    for axis, n_bits, size in (
        ("column", patterns.column_bits, patterns.projector_width),
        ("row", patterns.row_bits, patterns.projector_height),
    ):
        code = np.zeros(shape, dtype=np.int64)
        for bit in reversed(range(n_bits)):
            direct = frames[f"{axis}-bit{bit}"]
            inverse = frames[f"{axis}-bit{bit}-inv"]
            code |= (direct > inverse).astype(np.int64) << bit
            min_contrast = np.minimum(min_contrast, np.abs(direct - inverse))
        value = gray_to_binary(code)
        decoded[axis] = (value, value < size)

    valid = (
        (min_contrast >= contrast_threshold)
        & (span >= span_threshold)
        & decoded["column"][1]
        & decoded["row"][1]
    )
    columns = np.where(valid, decoded["column"][0], UNDECODABLE)
    rows = np.where(valid, decoded["row"][0], UNDECODABLE)
    logger.info("decoded %.1f%% of %dx%d camera pixels", 100 * valid.mean(), shape[1], shape[0])
    return CorrespondenceMap(
        columns=columns,
        rows=rows,
        valid=valid,
        contrast=min_contrast.astype(float),
        projector_width=patterns.projector_width,
        projector_height=patterns.projector_height,
    )


# ==================== Local homographies ====================


def lift_corner(
    cmap: CorrespondenceMap,
    corner,
    window_radius: int = None,
    min_support: int = None,
    index: int = 0,
) -> np.ndarray:
    """
    Map one subpixel camera corner into the projector frame

    A homography from camera pixels to decoded projector coordinates is fitted
    over the decodable pixels of a square window centred on the corner.

    Raises:
        InsufficientSupport: fewer than min_support decodable pixels, a
        degenerate fit, or a fit that sends the corner to infinity
    """
    if window_radius is None:
        window_radius = int(Config.get_threshold("window_radius"))
    if min_support is None:
        min_support = Config.MIN_WINDOW_SUPPORT
    cx, cy = as_point2(corner)
    width, height = cmap.camera_size
    x0, x1 = max(0, int(np.floor(cx - window_radius))), min(width - 1, int(np.ceil(cx + window_radius)))
    y0, y1 = max(0, int(np.floor(cy - window_radius))), min(height - 1, int(np.ceil(cy + window_radius)))
    if x0 > x1 or y0 > y1:
        raise InsufficientSupport(index, 0, f"corner {index} lies outside the camera image")

    ys, xs = np.mgrid[y0:y1 + 1, x0:x1 + 1]
    inside = (np.abs(xs - cx) <= window_radius) & (np.abs(ys - cy) <= window_radius)
    mask = inside & cmap.valid[y0:y1 + 1, x0:x1 + 1]
    support = int(mask.sum())
    if support < min_support:
        raise InsufficientSupport(index, support)

    src = np.column_stack([xs[mask], ys[mask]]).astype(float)
    dst = np.column_stack(
        [cmap.columns[y0:y1 + 1, x0:x1 + 1][mask], cmap.rows[y0:y1 + 1, x0:x1 + 1][mask]]
    ).astype(float)
    try:
        H = estimate_homography(src, dst)
        return H.apply(np.array([cx, cy]))
    except (DegenerateConfiguration, PointAtInfinity) as exc:
        raise InsufficientSupport(index, support, f"corner {index}: {exc}") from exc


def lift_corners(cmap: CorrespondenceMap, corners, window_radius: int = None) -> np.ndarray:
    """
    Lift every corner; the first unsupported corner aborts with its index

    Returns:
        (N, 2) projector-frame points aligned with `corners`
    """
    corners = as_points2(corners)
    return np.array([lift_corner(cmap, c, window_radius, index=i) for i, c in enumerate(corners)])
