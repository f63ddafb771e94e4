"""Create run_record table

Revision ID: 4f1c2a9e7b30
Revises:
Create Date: 2026-10-19 10:12:41.305118

"""
from alembic import op
import sqlalchemy as sa


# revision identifiers, used by Alembic.
revision = '4f1c2a9e7b30'
down_revision = None
branch_labels = None
depends_on = None


def upgrade():
    op.create_table(
        'run_record',
        sa.Column('rr_id', sa.Integer(), nullable=False),
        sa.Column('rr_unique_id', sa.String(length=36), nullable=False),
        sa.Column('rr_kind', sa.String(length=20), nullable=False),
        sa.Column('rr_scenario_name', sa.String(length=120), nullable=False),
        sa.Column('rr_seed', sa.Integer(), nullable=False),
        sa.Column('rr_scenario_json', sa.Text(), nullable=False),
        sa.Column('rr_report_json', sa.Text(), nullable=False),
        sa.Column('rr_digest', sa.String(length=64), nullable=True),
        sa.Column('rr_created_at', sa.DateTime(), server_default=sa.text('(CURRENT_TIMESTAMP)'), nullable=True),
        sa.PrimaryKeyConstraint('rr_id'),
        sa.UniqueConstraint('rr_unique_id'),
    )


def downgrade():
    op.drop_table('run_record')
