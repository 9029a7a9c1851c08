from sqlalchemy import Column, DateTime, Float, ForeignKey, Integer, String
from sqlalchemy.orm import relationship
from sqlalchemy.sql import func

from db import Base


class Run(Base):
    __tablename__ = "runs"

    id = Column(Integer, primary_key=True, index=True)

    run_id = Column(String, nullable=False, index=True)
    seed = Column(Integer, nullable=False)

    env = Column(String(16), nullable=False)
    loss = Column(String(8), nullable=False)
    strategy = Column(String(32), nullable=False)
    mode = Column(String(16), nullable=False, default="train")

    # RUNNING → FINISHED / FAILED
    status = Column(String(16), nullable=False, default="RUNNING")
    final_l1 = Column(Float, nullable=True)
    out_dir = Column(String, nullable=True)

    created_at = Column(DateTime(timezone=True), server_default=func.now(), nullable=False)

    # 관계
    metrics = relationship(
        "MetricPoint",
        back_populates="run",
        cascade="all, delete-orphan",
        passive_deletes=True,
        order_by="MetricPoint.episode",
    )


class MetricPoint(Base):
    __tablename__ = "metric_points"

    id = Column(Integer, primary_key=True, index=True)

    run_pk = Column(
        Integer,
        ForeignKey("runs.id", ondelete="CASCADE"),
        nullable=False,
        index=True,
    )

    episode = Column(Integer, nullable=False)
    loss_mean = Column(Float, nullable=False)
    l1_error = Column(Float, nullable=False)
    wall_ms = Column(Float, nullable=False)
    strategy_branch = Column(String(16), nullable=False)

    # 관계
    run = relationship("Run", back_populates="metrics")
