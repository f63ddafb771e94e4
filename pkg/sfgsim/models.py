import json
import uuid

from . import db


class RunRecord(db.Model):
    rr_id = db.Column(db.Integer, primary_key=True)
    rr_unique_id = db.Column(db.String(36), unique=True, nullable=False, default=lambda: str(uuid.uuid4()))
    rr_kind = db.Column(db.String(20), nullable=False)  # 'feasibility' or 'patches'
    rr_scenario_name = db.Column(db.String(120), nullable=False)
    rr_seed = db.Column(db.Integer, nullable=False)
    rr_scenario_json = db.Column(db.Text, nullable=False)
    rr_report_json = db.Column(db.Text, nullable=False)
    rr_digest = db.Column(db.String(64), nullable=True)  # empty for patch runs
    rr_created_at = db.Column(db.DateTime, default=db.func.now())

    def to_summary(self):
        return {
            "unique_id": self.rr_unique_id,
            "kind": self.rr_kind,
            "scenario": self.rr_scenario_name,
            "seed": self.rr_seed,
            "digest": self.rr_digest,
            "created_at": self.rr_created_at.isoformat() if self.rr_created_at else None,
        }

    def to_dict(self):
        out = self.to_summary()
        out["scenario_json"] = json.loads(self.rr_scenario_json)
        out["report"] = json.loads(self.rr_report_json)
        return out


def record_run(kind, scenario, seed, report_dict, digest=None):
    """Store one run and return the saved RunRecord."""
    record = RunRecord(
        rr_kind=kind,
        rr_scenario_name=scenario.name,
        rr_seed=int(seed),
        rr_scenario_json=json.dumps(scenario.to_dict(), sort_keys=True),
        rr_report_json=json.dumps(report_dict, sort_keys=True),
        rr_digest=digest,
    )
    db.session.add(record)
    db.session.commit()
    return record
