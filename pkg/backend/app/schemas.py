"""Report and request models shared by the CLI and the HTTP layer."""

from enum import Enum
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, validator

SCHEMA_VERSION = 1


class Verdict(str, Enum):
    ESTABLISHED = "Established"
    EVIDENCE_FOR = "EvidenceFor"
    NO_WITNESS = "NoWitnessUpToBound"
    COUNTEREXAMPLE = "CounterexampleFound"


# -----------------------------
# Run configuration
# -----------------------------
class RunConfig(BaseModel):
    command: str
    system: Optional[str] = None
    system_params: Dict[str, Any] = {}
    target: Optional[str] = None
    params: Dict[str, Any] = {}
    seed: int = 0
    mode: str = "exact"
    output_dir: str = "out"

    @validator("mode")
    def check_mode(cls, v):
        if v not in ("exact", "float", "both"):
            raise ValueError("mode must be exact, float or both")
        return v


# -----------------------------
# Reports
# -----------------------------
class ProbeReport(BaseModel):
    schema_version: int = SCHEMA_VERSION
    kind: str = "probe"
    probe: str
    system: str
    claim: str = ""
    presentation: List[str] = []
    params: Dict[str, Any] = {}
    verdict: Verdict
    metrics: Dict[str, Any] = {}
    witnesses: List[Dict[str, Any]] = []
    bounds: Dict[str, Any] = {}
    run: Optional[Dict[str, Any]] = None
    timing: Dict[str, float] = {}
    # CSV tables (summary rows, traces); written next to the JSON, not inside it
    tables: Dict[str, List[Dict[str, Any]]] = {}

    class Config:
        use_enum_values = True

    def payload(self) -> dict:
        return self.dict(exclude={"timing", "tables"})


class IsometryCheck(BaseModel):
    node: Dict[str, Any]
    generator: str
    exponent: int
    kind: str
    matrix: Optional[List[List[str]]] = None
    pieces: List[str] = []
    isometric: bool


class IsometryCertificate(BaseModel):
    schema_version: int = SCHEMA_VERSION
    kind: str = "isometry-certificate"
    system: str
    claim: str = ""
    base: Dict[str, Any]
    presentation: List[str] = []
    orbit_status: str
    nodes_visited: int
    checks: List[IsometryCheck] = []
    verdict: Verdict
    counterexample: Optional[IsometryCheck] = None
    bounds: Dict[str, Any] = {}

    class Config:
        use_enum_values = True

    @property
    def established(self) -> bool:
        return self.verdict == Verdict.ESTABLISHED


class VerificationReport(BaseModel):
    schema_version: int = SCHEMA_VERSION
    kind: str = "verification"
    lemma: str
    claim: str
    verdict: Verdict
    params: Dict[str, Any] = {}
    details: Dict[str, Any] = {}
    witness: Optional[Dict[str, Any]] = None
    certificate: Optional[IsometryCertificate] = None
    evidence: Optional[ProbeReport] = None
    run: Optional[Dict[str, Any]] = None
    timing: Dict[str, float] = {}

    class Config:
        use_enum_values = True

    @property
    def established(self) -> bool:
        return self.verdict == Verdict.ESTABLISHED

    def payload(self) -> dict:
        out = self.dict(exclude={"timing", "evidence"})
        if self.evidence is not None:
            out["evidence"] = self.evidence.payload()
        return out


# -----------------------------
# HTTP request bodies
# -----------------------------
class BuildRequest(BaseModel):
    params: Dict[str, Any] = {}


class VerifyRequest(BaseModel):
    params: Dict[str, Any] = {}
    seed: Optional[int] = None


class ProbeRequest(BaseModel):
    system: str = "cat-map"
    system_params: Dict[str, Any] = {}
    params: Dict[str, Any] = {}
    seed: Optional[int] = None
