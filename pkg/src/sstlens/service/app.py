"""FastAPI application exposing the batch pipeline.

All endpoints are POST with JSON bodies and return JSON. Failures raise
ToolkitError subclasses in the pipeline; the handler below maps the error
kind onto a status code and a structured {"detail": {"kind", "message"}}
body, which the CLI translates into its exit codes.
"""

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..errors import ToolkitError
from ..pipeline import (
    PipelineConfig,
    run_characterize,
    run_classify,
    run_decode_scan,
    run_evaluate,
    run_export_model,
    run_filter_compare,
    run_ingest_validate,
    run_train,
)
from ..classifier import TrainingConfig
from . import schemas

STATUS_BY_KIND = {"config": 400, "data": 422, "version": 409}


def create_app() -> FastAPI:
    app = FastAPI(title="sstlens", version=__version__)

    @app.exception_handler(ToolkitError)
    async def toolkit_error_handler(request: Request, exc: ToolkitError):
        return JSONResponse(
            status_code=STATUS_BY_KIND.get(exc.kind, 422),
            content={"detail": {"kind": exc.kind, "message": str(exc)}},
        )

    @app.get("/health", response_model=schemas.HealthResponse)
    async def health():
        return {"status": "ok", "version": __version__}

    @app.post("/ingest-validate", response_model=schemas.IngestValidateResponse)
    async def ingest_validate(body: schemas.IngestValidateRequest):
        config = PipelineConfig.from_obj(body.config.to_obj())
        return run_ingest_validate(config)

    @app.post("/train", response_model=schemas.TrainResponse)
    async def train(body: schemas.TrainRequest):
        config = PipelineConfig.from_obj(body.config.to_obj())
        training = None
        if body.training is not None:
            training = TrainingConfig(**body.training.model_dump())
        return run_train(config, training)

    @app.post("/classify", response_model=schemas.ClassifyResponse)
    async def classify(body: schemas.ClassifyRequest):
        config = PipelineConfig.from_obj(body.config.to_obj())
        return run_classify(config, body.models)

    @app.post("/evaluate", response_model=schemas.EvaluateResponse)
    async def evaluate(body: schemas.EvaluateRequest):
        config = PipelineConfig.from_obj(body.config.to_obj())
        return run_evaluate(config, body.models, body.ground_truth)

    @app.post("/characterize", response_model=schemas.CharacterizeResponse)
    async def characterize(body: schemas.CharacterizeRequest):
        config = PipelineConfig.from_obj(body.config.to_obj())
        return run_characterize(config, body.verdicts.model_dump())

    @app.post("/filter-compare", response_model=schemas.FilterCompareResponse)
    async def filter_compare(body: schemas.FilterCompareRequest):
        config = PipelineConfig.from_obj(body.config.to_obj())
        return run_filter_compare(config, body.verdicts.model_dump())

    @app.post("/export-model")
    async def export_model(body: schemas.ExportModelRequest):
        return run_export_model(body.artifact)

    @app.post("/decode-scan", response_model=schemas.DecodeScanResponse)
    async def decode_scan(body: schemas.DecodeScanRequest):
        config = PipelineConfig.from_obj(body.config.to_obj())
        return run_decode_scan(config)

    return app
