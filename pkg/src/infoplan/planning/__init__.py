from .dag import (
    DagNode,
    InfoPlan,
    SpecScorer,
    get_successors,
    longest_weighted_path_dag,
    make_node,
    marginal_table,
)
from .planner import (
    Determinization,
    EpisodeTrace,
    JointPlan,
    PlanningFailure,
    PlanStep,
    Problem,
    StepRecord,
    Trajectory,
    belief_trajectory,
    determinize,
    execute_with_replanning,
    ml_value,
    plan,
    solve_acting,
)

__all__ = [
    "DagNode",
    "Determinization",
    "EpisodeTrace",
    "InfoPlan",
    "JointPlan",
    "PlanStep",
    "PlanningFailure",
    "Problem",
    "SpecScorer",
    "StepRecord",
    "Trajectory",
    "belief_trajectory",
    "determinize",
    "execute_with_replanning",
    "get_successors",
    "longest_weighted_path_dag",
    "make_node",
    "marginal_table",
    "ml_value",
    "plan",
    "solve_acting",
]
