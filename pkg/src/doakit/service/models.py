"""Request/response schemas of the localization service.

All paths are interpreted on the machine the service runs on; the service is
a job runner over a shared filesystem, large data never travels over HTTP.
"""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field


class LocalizeRequest(BaseModel):
    geometry: str = Field(description="geometry JSON path")
    input: str = Field(description="multichannel WAV path")
    out: Optional[str] = Field(default=None, description="output directory")
    method: Literal["music", "mccphat", "both"] = "both"
    truth: Optional[str] = Field(default=None, description="ground-truth CSV path")
    fmin: float = 300.0
    fmax: float = 4000.0
    frame: int = 2048
    hop: int = 1024
    window: Literal["hann", "rectangular"] = "hann"
    grid_az_step: float = 1.0
    grid_el_step: float = 5.0
    qhat: int = Field(default=1, description="assumed source count for MUSIC")
    block: int = Field(default=8, description="covariance block, frames")
    gate_db: float = 6.0
    cutoff: float = 20.0
    power: float = 2.0
    max_gap: float = 0.1


class OspaModel(BaseModel):
    rmse_azimuth: float
    rmse_elevation: float
    frames_scored: int
    dropped_estimates: int


class MethodReport(BaseModel):
    wall_seconds: float
    ospa: Optional[OspaModel] = None
    files: dict[str, str] = Field(default_factory=dict)


class LocalizeResponse(BaseModel):
    sample_rate: float
    channels: int
    frames_total: int
    frames_kept: int
    frames_dropped: int
    methods: dict[str, MethodReport]


class EvaluateRequest(BaseModel):
    estimate: str = Field(description="estimated trajectory CSV path")
    truth: str = Field(description="ground-truth CSV path")
    cutoff: float = 20.0
    power: float = 2.0
    max_gap: float = 0.1


class SynthRequest(BaseModel):
    spec: str = Field(description="scene spec JSON path")
    out: str = Field(description="output directory")
    stem: str = "scene"


class SynthResponse(BaseModel):
    wav: str
    truth: str
    geometry: str
    channels: int
    duration: float
    sample_rate: float


class ErrorDetail(BaseModel):
    stage: str
    message: str
