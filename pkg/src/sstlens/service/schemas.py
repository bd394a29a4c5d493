"""Request and response bodies for the HTTP service.

The `config` block mirrors PipelineConfig; it is validated by the pipeline
itself so the CLI and the service reject bad configs identically. Model
artifacts travel inline as their canonical JSON objects.
"""

from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field


class ConfigBody(BaseModel):
    model_config = ConfigDict(extra="forbid")

    registry: Optional[str] = None
    corpus: Optional[str] = None
    ga_endpoints: Optional[List[str]] = None
    third_party_excludes: Optional[List[str]] = None
    thresholds: Optional[Dict[str, float]] = None
    dns_records: Optional[str] = None
    asn_mapping: Optional[str] = None
    rules: Optional[str] = None
    denylist: Optional[str] = None
    strict: Optional[bool] = None
    parallelism: Optional[int] = None

    def to_obj(self) -> dict:
        return {k: v for k, v in self.model_dump().items() if v is not None}


class TrainingBody(BaseModel):
    model_config = ConfigDict(extra="forbid")

    learning_rate: float = 0.1
    l2_lambda: float = 1e-3
    max_iters: int = 5000
    tolerance: float = 1e-8
    seed: int = 0


class IngestValidateRequest(BaseModel):
    config: ConfigBody


class TrainRequest(BaseModel):
    config: ConfigBody
    training: Optional[TrainingBody] = None


class ClassifyRequest(BaseModel):
    config: ConfigBody
    models: Dict[str, dict]


class EvaluateRequest(BaseModel):
    config: ConfigBody
    models: Dict[str, dict]
    ground_truth: Dict[str, int]


class VerdictsBody(BaseModel):
    domain_rows: List[dict] = Field(default_factory=list)
    request_rows: List[dict] = Field(default_factory=list)


class CharacterizeRequest(BaseModel):
    config: ConfigBody
    verdicts: VerdictsBody


class FilterCompareRequest(BaseModel):
    config: ConfigBody
    verdicts: VerdictsBody


class ExportModelRequest(BaseModel):
    artifact: dict


class DecodeScanRequest(BaseModel):
    config: ConfigBody


class SkippedLine(BaseModel):
    line: int
    reason: str


class IngestValidateResponse(BaseModel):
    domains: int
    requests: int
    cookies: int
    window_variables: int
    skipped: List[SkippedLine]


class MetricsBody(BaseModel):
    accuracy: float
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    tn: int
    fn: int
    threshold: float
    examples: Optional[int] = None


class TrainResponse(BaseModel):
    models: Dict[str, dict]
    metrics: Dict[str, MetricsBody]
    labels: Dict[str, int]


class ClassifyResponse(BaseModel):
    domain_rows: List[dict]
    request_rows: List[dict]
    scrubbed: int


class EvaluateResponse(BaseModel):
    per_model: Dict[str, MetricsBody]
    warnings: List[str]


class CharacterizeResponse(BaseModel):
    routing: dict
    dns: dict
    infrastructure: dict
    keys: dict
    obfuscation: dict
    warnings: List[str]


class FilterCompareResponse(BaseModel):
    total: int
    blocked: int
    blocked_fraction: float
    rule_hits: Dict[str, int]
    domains_with_zero_blocks: List[str]
    unsupported_rules: List[str]
    skipped_rules: List[dict]
    warnings: List[str]


class DecodeScanResponse(BaseModel):
    findings: List[dict]


class HealthResponse(BaseModel):
    status: str
    version: str
