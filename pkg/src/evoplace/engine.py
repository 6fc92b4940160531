"""Analytical global placement engine.

The loop minimizes smoothed wirelength plus a growing density penalty with a
Barzilai-Borwein-stepped Nesterov update.  Gamma anneals geometrically, the
penalty multiplier lambda starts when warmup ends (scaled so both gradient
terms have equal L1 norm) and grows multiplicatively, and seeded Gaussian
noise is injected when the overflow trace plateaus above the stop threshold.
Termination: overflow below the stop threshold, the iteration budget, or a
divergence check against the iteration-10 wirelength.
"""

from __future__ import annotations

import math
import time
from typing import Optional

import numpy as np

from .dsl import StrategyRuntimeError
from .features import extract_features
from .hooks import PolicyOutput, StrategyBundle, eval_init, eval_opt_policy, eval_precond
from .netlist import BenchmarkCase
from .objectives import (
    BinGrid,
    bin_occupancy,
    default_precondition,
    density_penalty,
    hpwl,
    overflow,
    smooth_wl,
)
from .seeding import rng_for
from .states import (
    STATUS_DIVERGENCE,
    STATUS_ERROR,
    STATUS_SUCCESS,
    EngineConfig,
    EvalResult,
    GradStats,
    OptimizerState,
    PlacementState,
    RunStats,
)

BB_DENOM_FLOOR = 1e-20
INIT_NOISE_FRAC = 0.001  # of min region dimension
MAX_FILLERS = 20000
KICK_COOLDOWN_WINDOWS = 3  # plateau windows between noise kicks

# Overflow-delta sentinel handed to policies before a full plateau window exists.
OVERFLOW_DELTA_UNSET = 1.0


def make_filler_case(case: BenchmarkCase, filler_density: float,
                     seed: int) -> tuple[BenchmarkCase, int]:
    """Append movable filler cells occupying the free area of the region.

    The overlap-area density model exerts no outward pressure inside an
    underfull bin, so sparsely used regions let cells pile up; fillers keep
    every bin contested (the same device DREAMPlace employs).  Fillers carry
    no pins.  Returns (augmented case, real cell count).
    """
    from .netlist import Cell, CellKind  # local import keeps module load light

    arr = case.arrays
    r = case.region
    n = case.n_cells
    movable_areas = arr.areas[arr.movable]
    side = math.sqrt(float(np.median(movable_areas)))
    free = filler_density * r.width * r.height - float(arr.areas.sum())
    n_fill = int(min(MAX_FILLERS, max(0.0, free) // (side * side)))
    if n_fill == 0:
        return case, n
    rng = rng_for(seed, "fillers")
    fx = rng.uniform(r.xmin + side * 0.5, r.xmax - side * 0.5, size=n_fill)
    fy = rng.uniform(r.ymin + side * 0.5, r.ymax - side * 0.5, size=n_fill)
    cells = list(case.cells)
    for j in range(n_fill):
        cells.append(Cell(id=n + j, name=f"__filler{j}", width=side, height=side,
                          kind=CellKind.MOVABLE))
    aug = BenchmarkCase(
        name=case.name + "+fill",
        cells=cells,
        nets=case.nets,
        region=case.region,
        hint_x=np.concatenate([case.hint_x, fx]),
        hint_y=np.concatenate([case.hint_y, fy]),
    )
    return aug, n


def default_init(case: BenchmarkCase, seed: int) -> PlacementState:
    """Move all movable cells to the region center plus a small seeded
    Gaussian spread; fixed cells keep their .pl coordinates.

    Draws from the same stream as the strategy-language rand_n() so that the
    shipped identity Init program reproduces this placement bit-exactly.
    """
    r = case.region
    n = case.n_cells
    rng = rng_for(seed, "dsl-randn")
    sigma = INIT_NOISE_FRAC * min(r.width, r.height)
    cx, cy = r.center
    x = cx + sigma * rng.standard_normal(n)
    y = cy + sigma * rng.standard_normal(n)
    x = np.clip(x, r.xmin, r.xmax)
    y = np.clip(y, r.ymin, r.ymax)
    movable = case.arrays.movable
    x = np.where(movable, x, case.hint_x)
    y = np.where(movable, y, case.hint_y)
    return PlacementState(x=x, y=y)


def nesterov_bb_step(opt: OptimizerState, grad_x: np.ndarray, grad_y: np.ndarray,
                     precond_diag: np.ndarray,
                     movable: Optional[np.ndarray] = None,
                     step_scale: float = 1.0,
                     momentum_scale: float = 1.0) -> OptimizerState:
    """One Barzilai-Borwein Nesterov update, in place.

    The BB step is |dx . dg| / (dg . dg) on preconditioned gradients between
    consecutive lookahead points, falling back to the previous step when the
    denominator underflows.  Fixed cells never move.
    """
    if movable is None:
        movable = np.ones_like(grad_x, dtype=bool)
    gx = np.where(movable, grad_x / precond_diag, 0.0)
    gy = np.where(movable, grad_y / precond_diag, 0.0)

    if opt.first:
        alpha = opt.bb_step
        opt.first = False
    else:
        dx = np.concatenate([opt.pos_x - opt.prev_pos_x, opt.pos_y - opt.prev_pos_y])
        dg = np.concatenate([gx - opt.prev_grad_x, gy - opt.prev_grad_y])
        denom = float(dg @ dg)
        alpha = abs(float(dx @ dg)) / denom if denom >= BB_DENOM_FLOOR else opt.bb_step

    a = opt.nesterov_a
    a_next = 0.5 * (1.0 + math.sqrt(4.0 * a * a + 1.0))
    mu = ((a - 1.0) / a_next) * momentum_scale

    step = alpha * step_scale
    ux = np.where(movable, opt.pos_x - step * gx, opt.pos_x)
    uy = np.where(movable, opt.pos_y - step * gy, opt.pos_y)
    new_x = np.where(movable, ux + mu * (ux - opt.ref_x), opt.pos_x)
    new_y = np.where(movable, uy + mu * (uy - opt.ref_y), opt.pos_y)

    opt.prev_pos_x, opt.prev_pos_y = opt.pos_x, opt.pos_y
    opt.prev_grad_x, opt.prev_grad_y = gx, gy
    opt.vel_x, opt.vel_y = ux - opt.ref_x, uy - opt.ref_y
    opt.ref_x, opt.ref_y = ux, uy
    opt.pos_x, opt.pos_y = new_x, new_y
    opt.bb_step = alpha
    opt.nesterov_a = a_next
    return opt


def _gamma(cfg: EngineConfig, span: float, t: int) -> float:
    denom = max(1, cfg.max_iters - 1)
    ratio = cfg.gamma_end_frac / cfg.gamma_start_frac
    return span * cfg.gamma_start_frac * ratio ** (t / denom)


def run_global_place(case: BenchmarkCase, strategies: StrategyBundle,
                     config: EngineConfig, seed: int,
                     capture: Optional[dict] = None) -> EvalResult:
    """Run the engine with the given strategy bundle (missing slots use
    defaults).  Never raises on strategy faults; they become status=error.

    ``capture``, when given, receives the final PlacementState under key
    "state" (used by the CLI to write .pl files and by tests).
    """
    t_start = time.perf_counter()
    span = case.region.span
    features = extract_features(case)

    def error(msg: str) -> EvalResult:
        return EvalResult(status=STATUS_ERROR, hpwl=math.nan, iterations=0,
                          overflow_final=math.nan, message=msg,
                          runtime=time.perf_counter() - t_start)

    try:
        if strategies.init is not None:
            real_state = eval_init(strategies.init, case, features, seed)
        else:
            real_state = default_init(case, seed)
    except StrategyRuntimeError as exc:
        tag = "NonFiniteInit" if "finite" in str(exc) else "InitError"
        return error(f"{tag}: {exc}")

    if config.filler_density > 0:
        aug, n_real = make_filler_case(case, config.filler_density, seed)
    else:
        aug, n_real = case, case.n_cells
    movable = aug.arrays.movable
    state = PlacementState(
        x=np.concatenate([real_state.x, aug.hint_x[n_real:]]),
        y=np.concatenate([real_state.y, aug.hint_y[n_real:]]),
    )

    grid = BinGrid.for_case(aug, config.target_density)
    rng = rng_for(seed, "engine-noise")
    opt = OptimizerState.fresh(state.x, state.y, config.initial_step_frac * span)
    lam = 0.0

    occ = bin_occupancy(aug, state.x, state.y, grid)
    state.wl_history.append(hpwl(aug, state.x, state.y))
    state.overflow_history.append(overflow(aug, state.x, state.y, grid, occ=occ))
    prev_wl_val = prev_d_val = math.inf
    status = STATUS_SUCCESS
    message = ""
    iterations = 0
    last_kick = -(10 ** 9)

    for t in range(config.max_iters):
        iterations = t + 1
        gamma = _gamma(config, span, t)
        try:
            wl_val, gwx, gwy = smooth_wl(aug, state.x, state.y, gamma)
            d_val, gdx, gdy = density_penalty(aug, state.x, state.y, grid, occ=occ)
        except FloatingPointError:
            status, message = STATUS_DIVERGENCE, "objective overflow"
            break
        if t == config.warmup_iters:
            wl_norm = float(np.abs(gwx).sum() + np.abs(gwy).sum())
            d_norm = float(np.abs(gdx).sum() + np.abs(gdy).sum())
            lam = wl_norm / d_norm if d_norm > 1e-12 else 1.0
        objective = wl_val + lam * d_val
        if not math.isfinite(objective):
            status, message = STATUS_DIVERGENCE, "non-finite objective"
            break
        # Adaptive restart, comparing both iterates under the current lambda.
        if objective > prev_wl_val + lam * prev_d_val:
            opt.nesterov_a = 1.0
        prev_wl_val, prev_d_val = wl_val, d_val

        gx = gwx + lam * gdx
        gy = gwy + lam * gdy

        try:
            diag = default_precondition(aug, lam)
            if strategies.precond is not None:
                stats = GradStats(lambda_density=lam,
                                  wl_grad_norm=float(np.abs(gwx).sum() + np.abs(gwy).sum()),
                                  density_grad_norm=float(np.abs(gdx).sum() + np.abs(gdy).sum()),
                                  iteration=t)
                diag = diag.copy()
                diag[:n_real] = eval_precond(strategies.precond, case, features, stats, seed)

            of_hist = state.overflow_history
            window = config.plateau_window
            if len(of_hist) > window:
                delta = of_hist[-1] - of_hist[-1 - window]
            else:
                delta = OVERFLOW_DELTA_UNSET
            # One kick per plateau; back-to-back noise would drown the BB
            # curvature estimate.
            plateau = (len(of_hist) > window and abs(delta) < config.plateau_tol
                       and of_hist[-1] > config.stop_overflow
                       and t - last_kick >= window)
            default_noise = config.plateau_noise_frac * span if plateau else 0.0
            if strategies.opt_policy is not None:
                run_stats = RunStats(
                    iteration=t,
                    overflow=of_hist[-1],
                    wl_trend=(state.wl_history[-1] - state.wl_history[-2])
                    / max(abs(state.wl_history[-2]), 1e-12)
                    if len(state.wl_history) >= 2 else 0.0,
                    overflow_delta=delta,
                    default_noise=default_noise,
                    span=span,
                )
                policy = eval_opt_policy(strategies.opt_policy, case, features,
                                         run_stats, seed)
            else:
                policy = PolicyOutput(1.0, default_noise, 1.0)
        except StrategyRuntimeError as exc:
            return EvalResult(status=STATUS_ERROR, hpwl=math.nan, iterations=iterations,
                              overflow_final=math.nan,
                              message=f"StrategyRuntimeError: {exc}",
                              runtime=time.perf_counter() - t_start)

        nesterov_bb_step(opt, gx, gy, diag, movable=movable,
                         step_scale=policy.step_scale,
                         momentum_scale=policy.momentum_scale)
        if policy.noise_level > 0.0:
            opt.pos_x = np.where(movable,
                                 opt.pos_x + policy.noise_level * rng.standard_normal(aug.n_cells),
                                 opt.pos_x)
            opt.pos_y = np.where(movable,
                                 opt.pos_y + policy.noise_level * rng.standard_normal(aug.n_cells),
                                 opt.pos_y)
            # The jolt invalidates the BB secant pair; restart cleanly.
            opt.first = True
            opt.bb_step = config.initial_step_frac * span
            opt.nesterov_a = 1.0
            last_kick = t
        opt.pos_x = np.where(movable, np.clip(opt.pos_x, case.region.xmin, case.region.xmax),
                             opt.pos_x)
        opt.pos_y = np.where(movable, np.clip(opt.pos_y, case.region.ymin, case.region.ymax),
                             opt.pos_y)

        state.x, state.y = opt.pos_x, opt.pos_y
        state.iteration = iterations
        occ = bin_occupancy(aug, state.x, state.y, grid)
        wl_now = hpwl(aug, state.x, state.y)
        of_now = overflow(aug, state.x, state.y, grid, occ=occ)
        state.wl_history.append(wl_now)
        state.overflow_history.append(of_now)

        if not math.isfinite(wl_now):
            status, message = STATUS_DIVERGENCE, "non-finite wirelength"
            break
        if t >= 10 and len(state.wl_history) > 10:
            ref = state.wl_history[10]
            if ref > 0 and wl_now > config.divergence_factor * ref:
                status, message = STATUS_DIVERGENCE, \
                    f"wirelength exceeded {config.divergence_factor}x iteration-10 value"
                break
        if of_now <= config.stop_overflow and t >= config.warmup_iters:
            break

    finite_wl = [w for w in state.wl_history if math.isfinite(w)]
    final_hpwl = finite_wl[-1] if finite_wl else math.nan
    final_of = state.overflow_history[-1] if state.overflow_history else math.nan
    if capture is not None:
        real = PlacementState(x=state.x[:n_real].copy(), y=state.y[:n_real].copy(),
                              iteration=state.iteration,
                              overflow_history=state.overflow_history,
                              wl_history=state.wl_history)
        capture["state"] = real
    return EvalResult(
        status=status,
        hpwl=final_hpwl,
        iterations=iterations,
        overflow_final=final_of,
        message=message,
        runtime=time.perf_counter() - t_start,
    )
