"""
Single-pose projector-camera calibration
"""

from .errors import ProcamError
from .geometry import EulerAnglesXYZ, Homography, Intrinsics, RigidTransform
from .distortion import DivisionModel
from .structured_light import CorrespondenceSet, generate_patterns, decode
from .calibrate import CalibrationResult, calibrate_procam
from .metrics import translation_precision
from .simulator import SceneConfig, synthesize_observations, rotation_sweep

__all__ = [
    'ProcamError',
    'EulerAnglesXYZ',
    'Homography',
    'Intrinsics',
    'RigidTransform',
    'DivisionModel',
    'CorrespondenceSet',
    'generate_patterns',
    'decode',
    'CalibrationResult',
    'calibrate_procam',
    'translation_precision',
    'SceneConfig',
    'synthesize_observations',
    'rotation_sweep',
]
