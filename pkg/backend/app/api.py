import inspect
import logging
from typing import Any, Dict

from fastapi import APIRouter
from fastapi.responses import ORJSONResponse

from .cli import PROBES, run_probe
from .config import settings
from .exceptions import BadParams
from .schemas import BuildRequest, ProbeRequest, RunConfig, VerifyRequest
from .systems import SYSTEM_NAMES, build_system
from .utils.serialization import loads, dumps
from .verification import LEMMAS, verify

logger = logging.getLogger(__name__)

router = APIRouter()

LIST_PARAMS = ("radius", "rho")


def _json(payload: Any) -> ORJSONResponse:
    # round-trip through our encoder so Fractions and Quads come out as strings
    return ORJSONResponse(content=loads(dumps(payload)))


def _probe_values(req: ProbeRequest) -> Dict[str, Any]:
    values: Dict[str, Any] = {k.replace("-", "_"): v for k, v in req.params.items()}
    for key in LIST_PARAMS:
        if isinstance(values.get(key), str):
            values[key] = [part for part in values[key].split(",") if part.strip()]
    values["seed"] = req.seed if req.seed is not None else settings.seed
    return values


@router.get("/systems")
def list_systems():
    """Names of the buildable systems, the lemma checks and the probes."""
    return {"systems": list(SYSTEM_NAMES), "lemmas": list(LEMMAS), "probes": list(PROBES)}


@router.post("/systems/{name}")
def build(name: str, req: BuildRequest = BuildRequest()):
    system = build_system(name, **{k.replace("-", "_"): v for k, v in req.params.items()})
    return _json(system.manifest())


@router.post("/verify/{lemma}")
def verify_lemma(lemma: str, req: VerifyRequest = VerifyRequest()):
    """Runs one exact check; a verdict other than Established is answered with 409."""
    if lemma not in LEMMAS:
        raise BadParams(f"unknown lemma {lemma!r}")
    params = dict(req.params)
    if req.seed is not None and "seed" in inspect.signature(LEMMAS[lemma]).parameters:
        params["seed"] = req.seed
    report = verify(lemma, **params)
    report.run = RunConfig(command="verify", target=lemma, params=params,
                           seed=params.get("seed", settings.seed)).dict()
    return _json(report.payload())


@router.post("/probe/{probe}")
def probe(probe: str, req: ProbeRequest = ProbeRequest()):
    if probe not in PROBES:
        raise BadParams(f"unknown probe {probe!r}; expected one of {', '.join(PROBES)}")
    system = build_system(req.system, **req.system_params)
    values = _probe_values(req)
    report = run_probe(probe, system, values)
    mode = values.get("mode") or ("float" if probe == "sensitivity" else "exact")
    report.run = RunConfig(command="probe", system=req.system, system_params=req.system_params, target=probe,
                           params=req.params, seed=values["seed"], mode=mode).dict()
    logger.info("probe %s on %s: %s", probe, req.system, report.verdict)
    return _json(report.payload())
