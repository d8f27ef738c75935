import logging
from functools import lru_cache

from fastapi import APIRouter, Depends, File, HTTPException, UploadFile, status

from aavit.config import settings
from aavit.errors import CheckpointError, DimensionError, ParseError
from aavit.imaging import decode_ppm, to_tensor
from aavit.models.checkpoint import load_checkpoint
from aavit.models.vit import AAViT
from aavit.schemas.model import ModelConfig
from aavit.schemas.scoring import ScoreResponse

logger = logging.getLogger(__name__)

router = APIRouter(tags=["scoring"])


@lru_cache(maxsize=4)
def _load_scorer(checkpoint_path: str) -> AAViT:
    config, params = load_checkpoint(checkpoint_path)
    logger.info("serving %s from %s", config.head_kind.display_name, checkpoint_path)
    return AAViT(config, params).frozen()


def get_scorer() -> AAViT:
    """Model loaded once from ``settings.checkpoint_path``."""
    try:
        return _load_scorer(settings.checkpoint_path)
    except CheckpointError as exc:
        raise HTTPException(
            status_code=status.HTTP_503_SERVICE_UNAVAILABLE,
            detail=f"No model available: {exc}"
        )


@router.post(
    "/score",
    response_model=ScoreResponse,
    summary="Score one frame",
    responses={
        200: {"description": "Liveness score and decision"},
        400: {"description": "Upload is not a binary PPM (P6) frame"},
        422: {"description": "Frame size does not match the model"},
        503: {"description": "No model checkpoint loaded"}
    }
)
async def score_frame(
    file: UploadFile = File(..., description="Binary PPM (P6, maxval 255) frame"),
    scorer: AAViT = Depends(get_scorer)
):
    """
    Score an uploaded frame.

    - **file**: PPM frame with the model's image size
    - Returns the probability of real access and the decision at the configured threshold
    """
    blob = await file.read()
    try:
        image = to_tensor(decode_ppm(blob, source=file.filename), scorer.config.precision)
    except ParseError as exc:
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(exc))
    try:
        probabilities = scorer.forward(image).data
    except DimensionError as exc:
        raise HTTPException(status_code=status.HTTP_422_UNPROCESSABLE_ENTITY, detail=str(exc))

    score = float(probabilities[0])
    threshold = settings.decision_threshold
    return ScoreResponse(
        id=file.filename or "upload",
        score=score,
        probabilities=[float(p) for p in probabilities],
        decision="real" if score >= threshold else "attack",
        threshold=threshold,
    )


@router.get(
    "/model",
    response_model=ModelConfig,
    summary="Loaded model config",
    responses={
        200: {"description": "Architecture of the served model"},
        503: {"description": "No model checkpoint loaded"}
    }
)
async def get_model(scorer: AAViT = Depends(get_scorer)):
    """Return the ModelConfig of the served checkpoint."""
    return scorer.config
