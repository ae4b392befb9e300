"""
FastAPI Server for the Procam Calibration Toolkit
Provides REST API endpoints over the calibration orchestrator
"""

import json
from typing import List, Optional

from fastapi import FastAPI, File, HTTPException, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import StreamingResponse
from pydantic import BaseModel

from config import config
from procam.errors import ProcamError
from procam.simulator import SceneConfig
from utils.file_formats import CalibrationFile, CorrespondenceFile, correspondence_set, parse_document
from utils.procam_framework import ProcamFramework

# Initialize FastAPI app
app = FastAPI(
    title="Procam Calibration API",
    description="Single-pose projector-camera calibration and precision evaluation",
    version="1.0.0"
)

# Add CORS middleware
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

framework = ProcamFramework()


# ==================== Request/Response Models ====================

class CalibrateRequest(BaseModel):
    lm_max_iters: Optional[int] = None
    center_override: Optional[List[float]] = None


class SimulateRequest(BaseModel):
    noise_sigma_px: float = 0.0
    rng_seed: int = 42
    camera_k1: float = 0.0
    camera_k2: float = 0.0
    camera_angles: Optional[List[float]] = None
    projector_angles: Optional[List[float]] = None

    def to_scene(self) -> SceneConfig:
        scene = SceneConfig(
            noise_sigma_px=self.noise_sigma_px,
            rng_seed=self.rng_seed,
            camera_k1=self.camera_k1,
            camera_k2=self.camera_k2,
        )
        if self.camera_angles is not None:
            scene = scene.with_device_angles("camera", *self.camera_angles[:2])
        if self.projector_angles is not None:
            scene = scene.with_device_angles("projector", *self.projector_angles[:2])
        return scene


class EvaluateRequest(BaseModel):
    poses: List[dict]
    calibration: Optional[dict] = None


def _error(exc: Exception) -> HTTPException:
    """ValueError-family input problems are 400, numerical failures 422"""
    if isinstance(exc, HTTPException):
        return exc
    if isinstance(exc, ValueError):
        return HTTPException(status_code=400, detail=str(exc))
    if isinstance(exc, ProcamError):
        return HTTPException(status_code=422, detail=str(exc))
    return HTTPException(status_code=500, detail=str(exc))


# ==================== API Endpoints ====================

@app.get("/")
async def root():
    """Root endpoint"""
    return {
        "message": "Procam Calibration API",
        "version": "1.0.0",
        "status": "running"
    }


@app.get("/health")
async def health_check():
    """Health check endpoint"""
    return {"status": "healthy"}


# ==================== Step 1: Correspondences ====================

@app.post("/api/v1/correspondences/upload")
async def upload_correspondences(file: UploadFile = File(...)):
    """
    Upload a correspondence JSON file
    """
    try:
        content = await file.read()
        try:
            document = json.loads(content)
        except json.JSONDecodeError as e:
            raise HTTPException(status_code=400, detail=f"invalid JSON: {e.msg} (line {e.lineno})")
        summary = framework.load_correspondences(document=document)
        return {
            "status": "success",
            "filename": file.filename,
            "data": summary
        }
    except Exception as e:
        raise _error(e)


@app.post("/api/v1/simulate")
async def simulate(request: SimulateRequest = None):
    """
    Synthesize the correspondences of a simulated scene (default scene when no body)
    """
    try:
        request = request or SimulateRequest()
        document = framework.simulate(request.to_scene())
        return {
            "status": "success",
            "data": document.model_dump(mode="json")
        }
    except Exception as e:
        raise _error(e)


@app.get("/api/v1/correspondences/current")
async def get_current_correspondences():
    """
    Summary of the loaded correspondence set
    """
    if framework.current_correspondences is None:
        raise HTTPException(status_code=404, detail="No correspondences loaded yet")
    return {
        "status": "success",
        "data": framework.get_correspondence_summary()
    }


# ==================== Step 2: Calibration ====================

@app.post("/api/v1/calibrate")
async def calibrate(request: CalibrateRequest = None):
    """
    Calibrate camera and projector from the loaded pose
    """
    request = request or CalibrateRequest()
    try:
        if framework.current_correspondences is None:
            raise HTTPException(status_code=400, detail="Correspondences must be uploaded first")
        document = framework.calibrate(
            lm_max_iters=request.lm_max_iters,
            center_override=request.center_override,
        )
        return {
            "status": "success",
            "data": document.model_dump(mode="json"),
            "ground_truth_errors": framework.ground_truth_errors()
        }
    except Exception as e:
        raise _error(e)


@app.get("/api/v1/calibration/current")
async def get_current_calibration():
    """
    Get the latest calibration if available
    """
    if framework.latest_calibration is None:
        raise HTTPException(status_code=404, detail="No calibration performed yet")
    return {
        "status": "success",
        "data": framework.latest_calibration.model_dump(mode="json"),
        "report": framework.get_calibration_report()
    }


# ==================== Step 3: Precision ====================

@app.post("/api/v1/evaluate")
async def evaluate(request: EvaluateRequest):
    """
    Translation precision over several poses of a rigid rig

    Uses the supplied calibration document, or the latest calibration.
    """
    try:
        poses = [correspondence_set(parse_document(p, CorrespondenceFile)) for p in request.poses]
        calibration = None
        if request.calibration is not None:
            calibration = parse_document(request.calibration, CalibrationFile)
        metrics = framework.evaluate(poses, calibration)
        return {
            "status": "success",
            "data": metrics.model_dump(mode="json")
        }
    except Exception as e:
        raise _error(e)


# ==================== Configuration ====================

@app.get("/api/v1/config/thresholds")
async def get_thresholds():
    """
    Get current decoding and pose-quality thresholds
    """
    return {
        "status": "success",
        "data": config.thresholds()
    }


@app.post("/api/v1/config/thresholds")
async def update_thresholds(
    contrast: Optional[float] = None,
    span: Optional[float] = None,
    window_radius: Optional[int] = None,
    camera_min_tilt: Optional[float] = None,
    projector_min_nu: Optional[float] = None
):
    """
    Update thresholds

    - **contrast**: minimum |direct - inverse| per Gray bit (8-bit levels)
    - **span**: minimum white - black level
    - **window_radius**: local homography half window (px)
    - **camera_min_tilt**: |psi_c| + |nu_c| below which a pose warning is raised (deg)
    - **projector_min_nu**: |nu_p| below which a pose warning is raised (deg)
    """
    updates = {
        "contrast": contrast,
        "span": span,
        "window_radius": window_radius,
        "camera_min_tilt": camera_min_tilt,
        "projector_min_nu": projector_min_nu,
    }
    for name, value in updates.items():
        if value is None:
            continue
        try:
            config.set_threshold(name, value)
        except ValueError as e:
            raise HTTPException(status_code=400, detail=str(e))

    return {
        "status": "success",
        "message": "Thresholds updated successfully",
        "data": config.thresholds()
    }


@app.post("/api/v1/reset")
async def reset_framework():
    """
    Reset framework state
    """
    framework.reset()
    return {
        "status": "success",
        "message": "Framework state reset successfully"
    }


# ==================== PDF Export ====================

@app.get("/api/v1/export/pdf")
async def export_calibration_pdf():
    """
    Export the latest calibration (and precision metrics, if any) as PDF
    """
    try:
        if framework.latest_calibration is None:
            raise HTTPException(
                status_code=400,
                detail="No calibration available. Please run a calibration first."
            )
        pdf_buffer = framework.export_pdf()
        return StreamingResponse(
            pdf_buffer,
            media_type="application/pdf",
            headers={
                "Content-Disposition": "attachment; filename=procam_calibration.pdf"
            }
        )
    except Exception as e:
        raise _error(e)


# ==================== Run Server ====================

if __name__ == "__main__":
    import uvicorn

    print("\n" + "=" * 70)
    print(" " * 22 + "PROCAM CALIBRATION API")
    print("=" * 70)
    print("\nStarting server...")
    print(f"API Documentation: http://localhost:{config.API_PORT}/docs")
    print("=" * 70 + "\n")

    uvicorn.run(app, host=config.API_HOST, port=config.API_PORT)
