"""
Image and stack I/O
Binary PGM (P5, 8-bit) frames plus the JSON manifest that lists a Gray-code
stack in layout order.
"""

import json
import os
import re
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ValidationError

from procam.errors import SchemaError
from procam.structured_light import GrayImage, PatternFrame, PatternSet, pattern_layout

_HEADER = re.compile(rb"P5\s+(?:#[^\n]*\n\s*)*(\d+)\s+(?:#[^\n]*\n\s*)*(\d+)\s+(?:#[^\n]*\n\s*)*(\d+)\s")


class ManifestFrame(BaseModel):
    file: str
    kind: str
    axis: Optional[str] = None
    bit: Optional[int] = None
    inverse: bool = False


class StackManifest(BaseModel):
    schema_version: int = 1
    projector: Tuple[int, int]
    camera: Tuple[int, int]
    frames: List[ManifestFrame]


class CornersFile(BaseModel):
    """Camera corner subpixels for a board, row-major"""

    schema_version: int = 1
    board: dict
    corners: List[Tuple[float, float]]


class ImageIO:
    """Utility class for reading and writing PGM frames and stacks"""

    @staticmethod
    def write_pgm(path: str, image: GrayImage):
        """
        Write an 8-bit binary PGM

        Args:
            path: Output file
            image: Frame to write
        """
        header = f"P5\n{image.width} {image.height}\n255\n".encode("ascii")
        with open(path, "wb") as handle:
            handle.write(header)
            handle.write(np.ascontiguousarray(image.data, dtype=np.uint8).tobytes())

    @staticmethod
    def read_pgm(path: str) -> GrayImage:
        """
        Read an 8-bit binary PGM

        Raises:
            FileNotFoundError: missing file
            SchemaError: not a P5 file with maxval <= 255
        """
        with open(path, "rb") as handle:
            raw = handle.read()
        match = _HEADER.match(raw)
        if not match:
            raise SchemaError(path, "not a binary PGM (P5) file")
        width, height, maxval = (int(g) for g in match.groups())
        if maxval > 255:
            raise SchemaError(path, f"16-bit PGM (maxval {maxval}) is not supported")
        pixels = np.frombuffer(raw, dtype=np.uint8, count=width * height, offset=match.end())
        return GrayImage(width=width, height=height, data=pixels)

    @staticmethod
    def write_stack(directory: str, patterns: PatternSet, stack: List[GrayImage], prefix: str = "frame") -> str:
        """
        Write every frame and a manifest.json describing them

        Returns:
            Path of the manifest
        """
        os.makedirs(directory, exist_ok=True)
        frames = []
        for index, (frame, image) in enumerate(zip(patterns.layout, stack)):
            name = f"{prefix}_{index:02d}_{frame.label}.pgm"
            ImageIO.write_pgm(os.path.join(directory, name), image)
            frames.append(ManifestFrame(file=name, **frame.model_dump()))
        manifest = StackManifest(
            projector=(patterns.projector_width, patterns.projector_height),
            camera=stack[0].size if stack else (0, 0),
            frames=frames,
        )
        path = os.path.join(directory, "manifest.json")
        with open(path, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(json.dumps(manifest.model_dump(mode="json"), indent=2) + "\n")
        return path

    @staticmethod
    def read_manifest(path: str) -> StackManifest:
        with open(path, "r", encoding="utf-8") as handle:
            try:
                data = json.load(handle)
            except json.JSONDecodeError as exc:
                raise SchemaError("<manifest>", f"invalid JSON at line {exc.lineno}: {exc.msg}")
        try:
            return StackManifest.model_validate(data)
        except ValidationError as exc:
            first = exc.errors()[0]
            raise SchemaError(".".join(str(p) for p in first["loc"]), first["msg"]) from exc

    @staticmethod
    def read_stack(manifest_path: str) -> Tuple[PatternSet, List[GrayImage]]:
        """
        Load a stack in manifest order

        Raises:
            FileNotFoundError: naming the first missing frame
            SchemaError: when the manifest layout differs from the Gray-code layout
        """
        manifest = ImageIO.read_manifest(manifest_path)
        base = os.path.dirname(os.path.abspath(manifest_path))
        width, height = manifest.projector
        layout = [
            PatternFrame(kind=f.kind, axis=f.axis, bit=f.bit, inverse=f.inverse) for f in manifest.frames
        ]
        if layout != pattern_layout(width, height):
            raise SchemaError("frames", f"layout does not match a {width}x{height} Gray-code sequence")
        stack = []
        for frame in manifest.frames:
            path = os.path.join(base, frame.file)
            if not os.path.exists(path):
                raise FileNotFoundError(f"pattern file missing: {path}")
            stack.append(ImageIO.read_pgm(path))
        return PatternSet(projector_width=width, projector_height=height, layout=layout), stack

    @staticmethod
    def write_corners(path: str, corners, rows: int, cols: int, spacing_mm: float):
        document = CornersFile(
            board={"rows": rows, "cols": cols, "spacing_mm": spacing_mm},
            corners=[tuple(float(v) for v in c) for c in np.asarray(corners)],
        )
        with open(path, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(json.dumps(document.model_dump(mode="json"), indent=2) + "\n")

    @staticmethod
    def read_corners(path: str) -> CornersFile:
        with open(path, "r", encoding="utf-8") as handle:
            try:
                data = json.load(handle)
            except json.JSONDecodeError as exc:
                raise SchemaError("<corners>", f"invalid JSON at line {exc.lineno}: {exc.msg}")
        try:
            return CornersFile.model_validate(data)
        except ValidationError as exc:
            first = exc.errors()[0]
            raise SchemaError(".".join(str(p) for p in first["loc"]), first["msg"]) from exc
