from typing import Any

from api.dependencies import get_registry, http_error
from config import settings
from core.codec import sketch_from_python
from core.errors import ModelScoutError, ParamsError
from core.results import Metric, SearchConfig
from engine.registry import Registry
from engine.search import result_row, score_label, search
from fastapi import APIRouter, Depends
from fastapi.concurrency import run_in_threadpool
from pydantic import BaseModel, Field

router = APIRouter(tags=["search"])


class SearchRequest(BaseModel):
    sketch: dict[str, Any]
    metric: Metric = Metric.ADAPTIVITY
    t1: float = Field(default_factory=lambda: settings.T1)
    t2: float = Field(default_factory=lambda: settings.T2)
    t_adaptivity: float = Field(default_factory=lambda: settings.T_ADAPTIVITY)
    t_js: float = Field(default_factory=lambda: settings.T_JS)
    exact_rescoring: bool | None = None
    pair_count: bool = False
    top: int | None = Field(default=None, ge=1)
    bits: bool = Field(default_factory=lambda: settings.REPORT_BITS)


class SearchResultResponse(BaseModel):
    model_id: str
    overlap_ratio: float
    score: float
    estimated_score: float
    exact_score: float | None
    num_matches: int
    nt: int


class SearchResponse(BaseModel):
    format_version: int
    metric: Metric
    unit: str
    results: list[SearchResultResponse]


@router.post("/search", response_model=SearchResponse)
async def run_search(req: SearchRequest, registry: Registry = Depends(get_registry)):
    try:
        query = sketch_from_python(req.sketch)
        try:
            config = SearchConfig(
                t1=req.t1,
                t2=req.t2,
                t_adaptivity=req.t_adaptivity,
                t_js=req.t_js,
                metric=req.metric,
                exact_rescoring=req.exact_rescoring,
                pair_count=req.pair_count,
                top=req.top,
            )
        except ValueError as e:
            raise ParamsError(str(e)) from e
        results = await run_in_threadpool(
            search, query, registry, config, settings.RESCORING_MAX_CANDIDATES
        )
    except ModelScoutError as e:
        raise http_error(e) from e
    return SearchResponse(
        format_version=registry.manifest.format_version,
        metric=req.metric,
        unit=score_label(req.metric, req.bits),
        results=[
            SearchResultResponse(**result_row(r, req.metric, req.bits)) for r in results
        ],
    )
