"""FastAPI application wrapping the localization pipeline."""

from __future__ import annotations

from fastapi import FastAPI
from fastapi.responses import JSONResponse

from .. import __version__
from ..errors import DoakitError
from ..metrics import OspaConfig, evaluate_trajectories, read_trajectory_csv, read_truth_csv
from ..pipeline import RunConfig, run
from ..synth import load_scene, write_scene_outputs
from .models import (
    EvaluateRequest,
    LocalizeRequest,
    LocalizeResponse,
    MethodReport,
    OspaModel,
    SynthRequest,
    SynthResponse,
)


def create_app() -> FastAPI:
    app = FastAPI(title="doakit", version=__version__)

    @app.exception_handler(DoakitError)
    async def _domain_error(request, exc: DoakitError):
        return JSONResponse(
            status_code=400,
            content={"detail": {"stage": exc.stage, "message": str(exc)}},
        )

    @app.exception_handler(FileNotFoundError)
    async def _missing_file(request, exc: FileNotFoundError):
        return JSONResponse(
            status_code=400,
            content={"detail": {"stage": "config", "message": str(exc)}},
        )

    @app.exception_handler(ValueError)
    async def _bad_value(request, exc: ValueError):
        return JSONResponse(
            status_code=400,
            content={"detail": {"stage": "config", "message": str(exc)}},
        )

    @app.get("/health")
    def health():
        return {"status": "ok", "version": __version__}

    @app.post("/localize", response_model=LocalizeResponse)
    def localize(request: LocalizeRequest) -> LocalizeResponse:
        config = RunConfig(
            geometry=request.geometry,
            input=request.input,
            out=request.out,
            method=request.method,
            truth=request.truth,
            frame_len=request.frame,
            hop=request.hop,
            window=request.window,
            band=(request.fmin, request.fmax),
            grid_azimuth_step=request.grid_az_step,
            grid_elevation_step=request.grid_el_step,
            num_sources=request.qhat,
            block=request.block,
            gate_threshold_db=request.gate_db,
            cutoff=request.cutoff,
            power=request.power,
            max_gap=request.max_gap,
        )
        report = run(config)
        methods = {}
        for name, result in report.methods.items():
            ospa = None
            if result.ospa is not None:
                ospa = OspaModel(
                    rmse_azimuth=result.ospa.rmse_azimuth,
                    rmse_elevation=result.ospa.rmse_elevation,
                    frames_scored=result.ospa.frames_scored,
                    dropped_estimates=result.dropped_estimates,
                )
            methods[name] = MethodReport(
                wall_seconds=result.wall_seconds, ospa=ospa, files=result.files
            )
        return LocalizeResponse(
            sample_rate=report.sample_rate,
            channels=report.num_channels,
            frames_total=report.frames_total,
            frames_kept=report.frames_kept,
            frames_dropped=report.frames_dropped,
            methods=methods,
        )

    @app.post("/evaluate", response_model=OspaModel)
    def evaluate(request: EvaluateRequest) -> OspaModel:
        estimate = read_trajectory_csv(request.estimate)
        truth = read_truth_csv(request.truth)
        cfg = OspaConfig(cutoff=request.cutoff, power=request.power)
        result, dropped = evaluate_trajectories(estimate, truth, cfg, request.max_gap)
        return OspaModel(
            rmse_azimuth=result.rmse_azimuth,
            rmse_elevation=result.rmse_elevation,
            frames_scored=result.frames_scored,
            dropped_estimates=dropped,
        )

    @app.post("/synth", response_model=SynthResponse)
    def synth(request: SynthRequest) -> SynthResponse:
        spec = load_scene(request.spec)
        files = write_scene_outputs(spec, request.out, request.stem)
        return SynthResponse(
            wav=files["wav"],
            truth=files["truth"],
            geometry=files["geometry"],
            channels=spec.geometry.num_mics,
            duration=spec.duration,
            sample_rate=spec.sample_rate,
        )

    return app


app = create_app()
