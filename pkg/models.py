from sqlalchemy import Column, Integer, String, Text, ForeignKey, TIMESTAMP
from sqlalchemy.sql import func
from sqlalchemy.orm import relationship
from database import Base

# 1️⃣ Scan Runs Table
class ScanRun(Base):
    __tablename__ = "scan_runs"

    scan_id = Column(Integer, primary_key=True, index=True)
    root = Column(Text, nullable=False)
    mode = Column(String(20), default="repo")
    llm = Column(String(200), default="off")
    status = Column(String(20), default="queued")  # queued, running, done, failed
    exit_status = Column(Integer)  # 0 clean, 1 findings, 2 error
    error = Column(Text)
    summary_json = Column(Text)
    report_json = Column(Text)  # canonical JSON report
    created_at = Column(TIMESTAMP, server_default=func.now())
    finished_at = Column(TIMESTAMP)

    findings = relationship("FindingRecord", back_populates="scan", cascade="all, delete-orphan")


# 2️⃣ Findings Table
class FindingRecord(Base):
    __tablename__ = "findings"

    finding_id = Column(Integer, primary_key=True, index=True)
    scan_id = Column(Integer, ForeignKey("scan_runs.scan_id", ondelete="CASCADE"))
    path = Column(Text, nullable=False)
    contract = Column(String(200), nullable=False)
    function = Column(Text, nullable=False)
    risky_action = Column(String(40), nullable=False)  # RiskyTransfer, RiskyStateWrite, LowLevelExternalCall, Selfdestruct
    ac_status = Column(String(40), nullable=False)  # NoCheck, CheckAfterAction
    line = Column(Integer)

    scan = relationship("ScanRun", back_populates="findings")
