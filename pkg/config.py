"""
Configuration file for the procam calibration toolkit
Allows customization of optimizer defaults, decoding thresholds and pose guidance
"""

import os
from contextlib import contextmanager

from dotenv import load_dotenv

load_dotenv()


class Config:
    """Toolkit configuration"""

    # Levenberg-Marquardt defaults
    LM_LAMBDA_INIT = float(os.getenv("LM_LAMBDA_INIT", "1e-3"))
    LM_LAMBDA_UP = float(os.getenv("LM_LAMBDA_UP", "10"))
    LM_LAMBDA_DOWN = float(os.getenv("LM_LAMBDA_DOWN", "0.1"))
    LM_MAX_ITERS = int(os.getenv("LM_MAX_ITERS", "200"))
    LM_GRADIENT_TOL = float(os.getenv("LM_GRADIENT_TOL", "1e-10"))
    LM_STEP_TOL = float(os.getenv("LM_STEP_TOL", "1e-8"))
    LM_RESIDUAL_TOL = float(os.getenv("LM_RESIDUAL_TOL", "1e-10"))
    LM_JACOBIAN_STEP = float(os.getenv("LM_JACOBIAN_STEP", "1e-6"))

    # Gray-code decoding (8-bit levels) and local homographies (pixels)
    CONTRAST_THRESHOLD = float(os.getenv("CONTRAST_THRESHOLD", "5"))
    SPAN_THRESHOLD = float(os.getenv("SPAN_THRESHOLD", "10"))
    WINDOW_RADIUS = int(os.getenv("WINDOW_RADIUS", "15"))
    MIN_WINDOW_SUPPORT = int(os.getenv("MIN_WINDOW_SUPPORT", "16"))

    # Pose quality guidance (degrees)
    CAMERA_MIN_TILT_DEG = float(os.getenv("CAMERA_MIN_TILT_DEG", "10"))
    PROJECTOR_MIN_NU_DEG = float(os.getenv("PROJECTOR_MIN_NU_DEG", "13"))

    # Smallest pose subset in the precision breakdown
    MIN_POSE_SET_SIZE = int(os.getenv("MIN_POSE_SET_SIZE", "3"))

    # Sweep parallelism (0 = auto)
    PROCAM_CALIB_THREADS = int(os.getenv("PROCAM_CALIB_THREADS", "0"))

    # API Configuration
    API_HOST = os.getenv("API_HOST", "0.0.0.0")
    API_PORT = int(os.getenv("API_PORT", "8000"))

    _THRESHOLD_KEYS = {
        "contrast": "CONTRAST_THRESHOLD",
        "span": "SPAN_THRESHOLD",
        "window_radius": "WINDOW_RADIUS",
        "camera_min_tilt": "CAMERA_MIN_TILT_DEG",
        "projector_min_nu": "PROJECTOR_MIN_NU_DEG",
    }

    @classmethod
    def get_threshold(cls, name: str) -> float:
        """Get a decoding or pose-quality threshold by short name"""
        if name not in cls._THRESHOLD_KEYS:
            raise ValueError(f"Unknown threshold '{name}'")
        return getattr(cls, cls._THRESHOLD_KEYS[name])

    @classmethod
    def set_threshold(cls, name: str, value: float):
        """Set a decoding or pose-quality threshold by short name"""
        if name not in cls._THRESHOLD_KEYS:
            raise ValueError(f"Unknown threshold '{name}'")
        if value < 0:
            raise ValueError(f"Threshold '{name}' must be non-negative")
        attr = cls._THRESHOLD_KEYS[name]
        setattr(cls, attr, int(value) if attr == "WINDOW_RADIUS" else float(value))

    @classmethod
    def thresholds(cls) -> dict:
        """All thresholds keyed by short name"""
        return {name: cls.get_threshold(name) for name in cls._THRESHOLD_KEYS}

    @classmethod
    @contextmanager
    def threshold_overrides(cls, values: dict):
        """Apply thresholds for the duration of a block, then restore the previous ones"""
        saved = cls.thresholds()
        try:
            for name, value in values.items():
                cls.set_threshold(name, value)
            yield
        finally:
            for name, value in saved.items():
                cls.set_threshold(name, value)

    @classmethod
    def lm_config(cls, **overrides):
        """Build an LMConfig from the configured defaults"""
        from procam.optimizer import LMConfig

        values = {
            "lambda_init": cls.LM_LAMBDA_INIT,
            "lambda_up": cls.LM_LAMBDA_UP,
            "lambda_down": cls.LM_LAMBDA_DOWN,
            "max_iters": cls.LM_MAX_ITERS,
            "gradient_tol": cls.LM_GRADIENT_TOL,
            "step_tol": cls.LM_STEP_TOL,
            "residual_tol": cls.LM_RESIDUAL_TOL,
            "jacobian_step": cls.LM_JACOBIAN_STEP,
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return LMConfig(**values)

    @classmethod
    def worker_count(cls) -> int:
        """Sweep worker count, 0 meaning one per CPU"""
        if cls.PROCAM_CALIB_THREADS > 0:
            return cls.PROCAM_CALIB_THREADS
        return os.cpu_count() or 1


# Create default config instance
config = Config()
