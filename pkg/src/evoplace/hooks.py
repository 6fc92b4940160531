"""Strategy hook points: initialization, preconditioner, optimizer policy.

Clamping happens here at the hook boundary, not inside programs, so a
malformed strategy degrades to a clamped value or a StrategyRuntimeError
instead of corrupting the engine.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import dsl
from .dsl import KIND_INIT, KIND_OPTPOLICY, KIND_PRECOND, StrategyProgram, run_program
from .features import FeatureTable
from .netlist import BenchmarkCase
from .objectives import default_precondition
from .states import GradStats, PlacementState, RunStats

PRECOND_SCALE_MIN = 1e-8
PRECOND_SCALE_MAX = 1e12
STEP_SCALE_RANGE = (0.01, 100.0)
MOMENTUM_SCALE_RANGE = (0.0, 2.0)
NOISE_FRAC_MAX = 0.05  # of region span


@dataclass
class StrategyBundle:
    init: Optional[StrategyProgram] = None
    precond: Optional[StrategyProgram] = None
    opt_policy: Optional[StrategyProgram] = None

    def __post_init__(self):
        for program, kind in ((self.init, KIND_INIT), (self.precond, KIND_PRECOND),
                              (self.opt_policy, KIND_OPTPOLICY)):
            if program is not None and program.kind != kind:
                raise ValueError(f"program of kind {program.kind} in {kind} slot")

    def programs(self) -> dict[str, Optional[StrategyProgram]]:
        return {KIND_INIT: self.init, KIND_PRECOND: self.precond,
                KIND_OPTPOLICY: self.opt_policy}


@dataclass
class PolicyOutput:
    step_scale: float = 1.0
    noise_level: float = 0.0
    momentum_scale: float = 1.0


def _feature_env(features: FeatureTable) -> dict:
    env: dict = {}
    env.update({k: v.copy() for k, v in features.vectors.items()})
    env.update(features.scalars)
    return env


def eval_init(program: StrategyProgram, case: BenchmarkCase,
              features: FeatureTable, seed: int) -> PlacementState:
    """Run an Init program: movable coordinates from the program, clamped to
    the region; fixed cells pinned at their .pl coordinates."""
    if program.kind != KIND_INIT:
        raise ValueError("eval_init requires an Init program")
    outputs = run_program(program, case.n_cells, _feature_env(features), seed)
    r = case.region
    x = np.clip(outputs["x_init"], r.xmin, r.xmax)
    y = np.clip(outputs["y_init"], r.ymin, r.ymax)
    movable = case.arrays.movable
    x = np.where(movable, x, case.hint_x)
    y = np.where(movable, y, case.hint_y)
    return PlacementState(x=x, y=y)


def eval_precond(program: StrategyProgram, case: BenchmarkCase,
                 features: FeatureTable, grad_stats: GradStats,
                 seed: int = 0) -> np.ndarray:
    """Run a Precond program: elementwise scale on the default
    preconditioner, clamped to [eps, 1e12]."""
    if program.kind != KIND_PRECOND:
        raise ValueError("eval_precond requires a Precond program")
    env = _feature_env(features)
    env.update({
        "lambda_density": grad_stats.lambda_density,
        "wl_grad_norm": grad_stats.wl_grad_norm,
        "density_grad_norm": grad_stats.density_grad_norm,
        "iteration": float(grad_stats.iteration),
    })
    outputs = run_program(program, case.n_cells, env, seed)
    scale = outputs["diag_scale"]
    if not isinstance(scale, np.ndarray):
        scale = np.full(case.n_cells, scale)
    diag = scale * default_precondition(case, grad_stats.lambda_density)
    return np.clip(diag, PRECOND_SCALE_MIN, PRECOND_SCALE_MAX)


def eval_opt_policy(program: StrategyProgram, case: BenchmarkCase,
                    features: FeatureTable, run_stats: RunStats,
                    seed: int = 0) -> PolicyOutput:
    """Run an OptPolicy program; outputs are clamped to safe engine ranges."""
    if program.kind != KIND_OPTPOLICY:
        raise ValueError("eval_opt_policy requires an OptPolicy program")
    env = _feature_env(features)
    env.update({
        "iteration": float(run_stats.iteration),
        "overflow": run_stats.overflow,
        "wl_trend": run_stats.wl_trend,
        "overflow_delta": run_stats.overflow_delta,
        "default_noise": run_stats.default_noise,
    })
    outputs = run_program(program, case.n_cells, env, seed)
    return PolicyOutput(
        step_scale=float(np.clip(outputs["step_scale"], *STEP_SCALE_RANGE)),
        noise_level=float(np.clip(outputs["noise_level"], 0.0,
                                  NOISE_FRAC_MAX * run_stats.span)),
        momentum_scale=float(np.clip(outputs["momentum_scale"], *MOMENTUM_SCALE_RANGE)),
    )
