import logging
import traceback

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .api import router
from .config import configure_logging
from .exceptions import PseudodynError, VerificationFailed
from .utils.serialization import dumps, loads

configure_logging()
logger = logging.getLogger(__name__)

app = FastAPI(title="Pseudogroup Dynamics API")

app.add_middleware(
    CORSMiddleware,
    allow_origins=["http://localhost:3000"],
    allow_credentials=True,
    allow_methods=["POST", "GET", "OPTIONS"],
    allow_headers=["*"],
)


@app.exception_handler(VerificationFailed)
async def verification_failed_handler(request: Request, exc: VerificationFailed):
    report = exc.report.payload() if exc.report is not None else None
    return JSONResponse(status_code=exc.status_code,
                        content={"detail": str(exc), "report": loads(dumps(report))})


@app.exception_handler(PseudodynError)
async def pseudodyn_error_handler(request: Request, exc: PseudodynError):
    return JSONResponse(status_code=exc.status_code, content={"detail": str(exc), "error": type(exc).__name__})


# Anything else is a bug; answer with JSON all the same
@app.exception_handler(Exception)
async def global_exception_handler(request: Request, exc: Exception):
    logger.error("unhandled error on %s: %s", request.url.path, exc)
    return JSONResponse(
        status_code=500,
        content={
            "detail": "Internal server error.",
            "error": str(exc),
            "trace": traceback.format_exc(),
        },
    )


app.include_router(router, prefix="/api", tags=["Pseudogroups"])


@app.get("/")
def root():
    return {"name": "pseudodyn", "docs": "/docs"}
