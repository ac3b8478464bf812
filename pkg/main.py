# main.py
import logging
from contextlib import asynccontextmanager
from pathlib import Path

from dotenv import load_dotenv
from fastapi import Depends, FastAPI
from fastapi.middleware.cors import CORSMiddleware
from sqlalchemy import text
from sqlalchemy.orm import Session

from compiler_driver import SolcDriver
from config import COMPILER_DIR, LLM_CONFIG, TOOL_NAME, TOOL_VERSION
from database import get_db

load_dotenv()

# Logging
logging.basicConfig(
    level=logging.INFO,
    format="%(asctime)s [%(levelname)s] %(message)s"
)
logger = logging.getLogger(__name__)


# ---------------------------
# FastAPI Lifespan
# ---------------------------
@asynccontextmanager
async def lifespan(app: FastAPI):
    try:
        from database import engine
        from models import Base

        logger.info("Creating database tables...")
        Base.metadata.create_all(bind=engine)
        logger.info("✅ Database setup completed")
    except Exception as e:
        logger.error(f"Database setup error: {e}")
        # Continue without database setup - will fail on first request
    yield
    logger.info("Shutting down...")

app = FastAPI(title="acscan - Access Control Vulnerability Scanner", version=TOOL_VERSION, lifespan=lifespan)

# ---------------------------
# Middleware
# ---------------------------
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"]
)

# ---------------------------
# Include Routers
# ---------------------------
from routes import scans
app.include_router(scans.router)


# ---------------------------
# Health Check
# ---------------------------
@app.get("/health")
def health_check(db: Session = Depends(get_db)):
    health_status = {
        "status": "healthy",
        "tool": TOOL_NAME,
        "version": TOOL_VERSION,
        "database": "unknown",
        "compilers": [],
        "llm_configured": bool(LLM_CONFIG["model"] and LLM_CONFIG["api_key"]),
        "endpoints": {
            "scans": "/scans/*"
        }
    }

    # Test database connection
    try:
        db.execute(text("SELECT 1"))
        health_status["database"] = "connected"
    except Exception as e:
        health_status["database"] = f"failed: {str(e)}"
        health_status["status"] = "unhealthy"

    # Installed solc binaries; without any, only parse-only scans can run
    versions = sorted(SolcDriver(Path(COMPILER_DIR)).installed())
    health_status["compilers"] = [str(v) for v in versions]
    if not versions:
        health_status["status"] = "degraded" if health_status["status"] == "healthy" else health_status["status"]

    return health_status
