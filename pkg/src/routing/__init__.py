from src.routing.demos import DemoSet, collect_demos, demo_prior, rule_based_weights
from src.routing.oracle import PhaseSchedule, SemanticOracle, load_oracle, write_default_oracle
from src.routing.router import (
    RoutedController,
    Router,
    compose_action,
    demo_loss,
    route,
    task_loss,
    unified_loss,
)
from src.routing.training import train_router

__all__ = [
    "DemoSet",
    "PhaseSchedule",
    "RoutedController",
    "Router",
    "SemanticOracle",
    "collect_demos",
    "compose_action",
    "demo_loss",
    "demo_prior",
    "load_oracle",
    "route",
    "rule_based_weights",
    "task_loss",
    "train_router",
    "unified_loss",
    "write_default_oracle",
]
