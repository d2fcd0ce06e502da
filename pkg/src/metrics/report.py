from typing import Dict, Optional

from pydantic import BaseModel, Field


class MetricReport(BaseModel):
    s_bleu: Optional[float] = Field(None, ge=0.0, le=100.0)
    d_bleu: Optional[float] = Field(None, ge=0.0, le=100.0)
    deviation: Optional[float] = Field(None, ge=0.0, le=100.0, description="100 - corpus BLEU of generated vs gold")
    deviation_mean: Optional[float] = Field(None, ge=0.0, le=100.0, description="Mean per-pair deviation")
    diversity: Optional[float] = Field(None, ge=0.0, le=100.0)
    ppl: Optional[float] = Field(None, ge=1.0)
    counts: Dict[str, int] = Field(default_factory=dict)
