import json
import logging
from datetime import datetime
from pathlib import Path
from typing import List, Optional

from fastapi import APIRouter, BackgroundTasks, Depends, HTTPException, Query
from fastapi.responses import PlainTextResponse
from pydantic import BaseModel
from sqlalchemy.orm import Session, sessionmaker

from config import build_config
from database import get_db
from errors import ConfigError, ScanError
from models import FindingRecord, ScanRun
from pipeline import run_pipeline
from report import OutputFormat, canonical_json, exit_status, findings_table, load_report, render

logger = logging.getLogger(__name__)

router = APIRouter(prefix="/scans", tags=["Scans"])


class ScanRequest(BaseModel):
    root: str
    mode: Optional[str] = None
    exclude_dirs: Optional[List[str]] = None
    max_depth: Optional[int] = None
    time_limit: Optional[str] = None
    max_reflections: Optional[int] = None
    llm: Optional[str] = None
    compiler: Optional[str] = None
    include_internal: Optional[bool] = None
    transfer_patterns: Optional[List[str]] = None
    use_heuristic: Optional[bool] = None


def _scan_summary(scan: ScanRun) -> dict:
    return {
        "scan_id": scan.scan_id,
        "root": scan.root,
        "mode": scan.mode,
        "llm": scan.llm,
        "status": scan.status,
        "exit_status": scan.exit_status,
        "error": scan.error,
        "summary": json.loads(scan.summary_json) if scan.summary_json else None,
        "created_at": scan.created_at,
        "finished_at": scan.finished_at,
    }


def _get_scan(db: Session, scan_id: int) -> ScanRun:
    scan = db.query(ScanRun).filter(ScanRun.scan_id == scan_id).first()
    if not scan:
        raise HTTPException(status_code=404, detail="Scan not found")
    return scan


# ---------------------------
# Background job
# ---------------------------
def execute_scan(scan_id: int, config, session_factory) -> None:
    """Runs one scan outside the request and stores the report and its findings."""
    db = session_factory()
    try:
        scan = db.query(ScanRun).filter(ScanRun.scan_id == scan_id).first()
        if not scan:
            logger.error(f"❌ Scan {scan_id} disappeared before it started")
            return
        scan.status = "running"
        db.commit()

        try:
            report = run_pipeline(config)
        except ScanError as e:
            logger.error(f"❌ Scan {scan_id} failed: {e}")
            scan.status = "failed"
            scan.exit_status = 2
            scan.error = str(e)
            scan.finished_at = datetime.utcnow()
            db.commit()
            return

        scan.report_json = canonical_json(report)
        scan.summary_json = report.summary.model_dump_json()
        scan.exit_status = exit_status(report)
        scan.status = "done"
        scan.finished_at = datetime.utcnow()
        for row in findings_table(report):
            db.add(FindingRecord(scan_id=scan_id, **row))
        db.commit()
        logger.info(f"✅ Scan {scan_id} done: {report.summary.findings} findings")
    except Exception as e:
        db.rollback()
        logger.exception(f"❌ Scan {scan_id} crashed")
        scan = db.query(ScanRun).filter(ScanRun.scan_id == scan_id).first()
        if scan:
            scan.status = "failed"
            scan.exit_status = 2
            scan.error = f"{type(e).__name__}: {e}"
            db.commit()
    finally:
        db.close()


# ---------------------------
# Endpoints
# ---------------------------
@router.post("/")
def create_scan(request: ScanRequest, background_tasks: BackgroundTasks, db: Session = Depends(get_db)):
    if not Path(request.root).is_dir():
        raise HTTPException(status_code=400, detail=f"Repository root not found: {request.root}")
    try:
        config = build_config(
            request.root,
            mode=request.mode,
            excluded_dirs=request.exclude_dirs,
            max_call_depth=request.max_depth,
            time_limit=request.time_limit,
            reflection_max_iters=request.max_reflections,
            llm=request.llm,
            compiler=request.compiler,
            include_internal_reachable=request.include_internal,
            transfer_patterns=request.transfer_patterns,
            use_heuristic=request.use_heuristic,
        )
    except ConfigError as e:
        raise HTTPException(status_code=400, detail=str(e))

    scan = ScanRun(root=request.root, mode=config.mode.value, llm=config.llm.mode.value, status="queued")
    db.add(scan)
    db.commit()
    db.refresh(scan)

    # the request session closes with the response; the job opens its own on the same engine
    session_factory = sessionmaker(autocommit=False, autoflush=False, bind=db.get_bind())
    background_tasks.add_task(execute_scan, scan.scan_id, config, session_factory)
    logger.info(f"Queued scan {scan.scan_id} of {request.root}")
    return {"message": "Scan queued", "scan_id": scan.scan_id, "status": scan.status}


@router.get("/")
def list_scans(db: Session = Depends(get_db)):
    scans = db.query(ScanRun).order_by(ScanRun.scan_id.desc()).all()
    return [_scan_summary(s) for s in scans]


@router.get("/{scan_id}")
def get_scan(scan_id: int, db: Session = Depends(get_db)):
    return _scan_summary(_get_scan(db, scan_id))


@router.get("/{scan_id}/findings")
def get_findings(scan_id: int, risky_action: Optional[str] = None, db: Session = Depends(get_db)):
    _get_scan(db, scan_id)
    query = db.query(FindingRecord).filter(FindingRecord.scan_id == scan_id)
    if risky_action:
        query = query.filter(FindingRecord.risky_action == risky_action)
    rows = query.order_by(FindingRecord.path, FindingRecord.line, FindingRecord.finding_id).all()
    return [
        {
            "path": r.path,
            "contract": r.contract,
            "function": r.function,
            "risky_action": r.risky_action,
            "ac_status": r.ac_status,
            "line": r.line,
        }
        for r in rows
    ]


@router.get("/{scan_id}/report")
def get_report(scan_id: int, format: OutputFormat = Query(OutputFormat.JSON), db: Session = Depends(get_db)):
    scan = _get_scan(db, scan_id)
    if not scan.report_json:
        raise HTTPException(status_code=409, detail=f"Report not available (scan is {scan.status})")
    report = load_report(scan.report_json)
    media_type = "text/plain" if format == OutputFormat.TEXT else "application/json"
    return PlainTextResponse(render(report, format), media_type=media_type)


@router.delete("/{scan_id}")
def delete_scan(scan_id: int, db: Session = Depends(get_db)):
    scan = _get_scan(db, scan_id)
    db.delete(scan)
    db.commit()
    return {"message": "Scan deleted", "scan_id": scan_id}
