"""create runs and metric_points tables

Revision ID: 5b1e7c04d2a9
Revises:
Create Date: 2026-10-19 10:12:03.118204

"""
from typing import Sequence, Union

from alembic import op
import sqlalchemy as sa


# revision identifiers, used by Alembic.
revision: str = '5b1e7c04d2a9'
down_revision: Union[str, Sequence[str], None] = None
branch_labels: Union[str, Sequence[str], None] = None
depends_on: Union[str, Sequence[str], None] = None


def upgrade() -> None:
    op.create_table(
        "runs",
        sa.Column("id", sa.Integer(), primary_key=True),
        sa.Column("run_id", sa.String(), nullable=False),
        sa.Column("seed", sa.Integer(), nullable=False),
        sa.Column("env", sa.String(length=16), nullable=False),
        sa.Column("loss", sa.String(length=8), nullable=False),
        sa.Column("strategy", sa.String(length=32), nullable=False),
        sa.Column("mode", sa.String(length=16), nullable=False),
        sa.Column("status", sa.String(length=16), nullable=False),
        sa.Column("final_l1", sa.Float(), nullable=True),
        sa.Column("out_dir", sa.String(), nullable=True),
        sa.Column("created_at", sa.DateTime(timezone=True), server_default=sa.text("CURRENT_TIMESTAMP"), nullable=False),
    )
    op.create_index("ix_runs_id", "runs", ["id"])
    op.create_index("ix_runs_run_id", "runs", ["run_id"])

    op.create_table(
        "metric_points",
        sa.Column("id", sa.Integer(), primary_key=True),
        sa.Column("run_pk", sa.Integer(), sa.ForeignKey("runs.id", ondelete="CASCADE"), nullable=False),
        sa.Column("episode", sa.Integer(), nullable=False),
        sa.Column("loss_mean", sa.Float(), nullable=False),
        sa.Column("l1_error", sa.Float(), nullable=False),
        sa.Column("wall_ms", sa.Float(), nullable=False),
        sa.Column("strategy_branch", sa.String(length=16), nullable=False),
    )
    op.create_index("ix_metric_points_id", "metric_points", ["id"])
    op.create_index("ix_metric_points_run_pk", "metric_points", ["run_pk"])


def downgrade() -> None:
    op.drop_index("ix_metric_points_run_pk", table_name="metric_points")
    op.drop_index("ix_metric_points_id", table_name="metric_points")
    op.drop_table("metric_points")
    op.drop_index("ix_runs_run_id", table_name="runs")
    op.drop_index("ix_runs_id", table_name="runs")
    op.drop_table("runs")
