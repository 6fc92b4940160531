"""Engine state containers, run configuration, and evaluation results."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np


@dataclass
class PlacementState:
    """Cell-center coordinates plus per-iteration traces."""

    x: np.ndarray
    y: np.ndarray
    iteration: int = 0
    overflow_history: list[float] = field(default_factory=list)
    wl_history: list[float] = field(default_factory=list)

    def copy(self) -> "PlacementState":
        return PlacementState(self.x.copy(), self.y.copy(), self.iteration,
                              list(self.overflow_history), list(self.wl_history))


@dataclass
class OptimizerState:
    """Nesterov + Barzilai-Borwein bookkeeping.

    ``pos`` is the lookahead point where gradients are evaluated; ``ref`` is
    the last non-extrapolated iterate.  Velocity is their difference from the
    previous step.
    """

    pos_x: np.ndarray
    pos_y: np.ndarray
    ref_x: np.ndarray
    ref_y: np.ndarray
    vel_x: np.ndarray
    vel_y: np.ndarray
    prev_grad_x: np.ndarray
    prev_grad_y: np.ndarray
    prev_pos_x: np.ndarray
    prev_pos_y: np.ndarray
    bb_step: float
    nesterov_a: float = 1.0
    noise_level: float = 0.0
    first: bool = True

    @staticmethod
    def fresh(x: np.ndarray, y: np.ndarray, initial_step: float) -> "OptimizerState":
        z = np.zeros_like(x)
        return OptimizerState(
            pos_x=x.copy(), pos_y=y.copy(),
            ref_x=x.copy(), ref_y=y.copy(),
            vel_x=z.copy(), vel_y=z.copy(),
            prev_grad_x=z.copy(), prev_grad_y=z.copy(),
            prev_pos_x=x.copy(), prev_pos_y=y.copy(),
            bb_step=initial_step,
        )


@dataclass
class EngineConfig:
    max_iters: int = 1000
    stop_overflow: float = 0.10
    divergence_factor: float = 10.0
    gamma_start_frac: float = 0.05   # of region span
    gamma_end_frac: float = 0.005
    warmup_iters: int = 10
    lambda_growth: float = 1.05
    target_density: float = 1.0
    filler_density: float = 1.0  # fill free area with pseudo-cells up to this density; 0 disables
    initial_step_frac: float = 0.01  # of region span
    plateau_window: int = 20
    plateau_tol: float = 1e-3
    plateau_noise_frac: float = 0.005  # of region span
    seed: int = 0

    @staticmethod
    def from_mapping(kv: dict) -> "EngineConfig":
        cfg = EngineConfig()
        for f in fields(EngineConfig):
            if f.name in kv:
                cast = type(getattr(cfg, f.name))
                setattr(cfg, f.name, cast(kv[f.name]))
        return cfg


@dataclass
class GradStats:
    """Context handed to preconditioner strategies."""

    lambda_density: float
    wl_grad_norm: float
    density_grad_norm: float
    iteration: int


@dataclass
class RunStats:
    """Context handed to optimizer-policy strategies."""

    iteration: int
    overflow: float
    wl_trend: float          # relative HPWL change over the last step
    overflow_delta: float    # overflow change over the plateau window
    default_noise: float     # noise sigma the default policy would inject
    span: float


STATUS_SUCCESS = "success"
STATUS_DIVERGENCE = "divergence"
STATUS_ERROR = "error"


@dataclass
class EvalResult:
    """Outcome of one engine run.

    ``runtime`` is wall-clock and deliberately excluded from equality and
    from canonical serialization so that seeded reruns compare bit-identical.
    """

    status: str
    hpwl: float
    iterations: int
    overflow_final: float
    message: str = ""
    runtime: float = field(default=0.0, compare=False)

    @property
    def success(self) -> bool:
        return self.status == STATUS_SUCCESS

    def to_record(self) -> dict:
        return {
            "status": self.status,
            "hpwl": None if not math.isfinite(self.hpwl) else self.hpwl,
            "iterations": self.iterations,
            "overflow_final": self.overflow_final,
            "message": self.message,
        }

    @staticmethod
    def from_record(rec: dict) -> "EvalResult":
        hpwl = rec["hpwl"]
        return EvalResult(
            status=rec["status"],
            hpwl=math.nan if hpwl is None else float(hpwl),
            iterations=int(rec["iterations"]),
            overflow_final=float(rec["overflow_final"]),
            message=rec.get("message", ""),
        )
