from .runner import ScenarioError, bench, rows_to_csv, run, run_election
from .scenario import ATTACK_TYPES, AttackSpec, RunResult, ScenarioConfig

__all__ = ["ATTACK_TYPES", "AttackSpec", "RunResult", "ScenarioConfig", "ScenarioError", "bench", "rows_to_csv", "run", "run_election"]
