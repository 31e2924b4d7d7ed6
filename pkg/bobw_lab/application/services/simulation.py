"""One replication of an experiment: build the learner and environment, play T rounds, keep the trace."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from functools import partial
from pathlib import Path

import numpy as np

from bobw_lab import audit
from bobw_lab.domain.entities import ReplicationJob, ReplicationResult
from bobw_lab.domain.environments import (
    CorruptedRegime,
    PMEnv,
    Regime,
    ScheduleRegime,
    SemiBanditEnv,
    StochasticRegime,
    best_fixed_action,
)
from bobw_lab.domain.partial_monitoring.analysis import GameAnalysis, analyze_game
from bobw_lab.domain.partial_monitoring.game import PMGame
from bobw_lab.domain.partial_monitoring.global_observable import GlobalPMLearner
from bobw_lab.domain.partial_monitoring.local_observable import LocalPMLearner
from bobw_lab.domain.regret import RegretTrace
from bobw_lab.domain.semibandit import ActionSet, ExplicitVertices, MSet, Predictor, SemiBanditLearner
from bobw_lab.domain.status import Algorithm
from bobw_lab.infrastructure.games.loader import JsonGameLoader, game_from_spec
from bobw_lab.schemas import ActionSetKind, AdversarialEnvSpec, CorruptedEnvSpec, ExperimentConfig, GameSpec
from bobw_lab.settings import SolverSettings, get_settings

logger = logging.getLogger(__name__)

Z_BOUND_TOL = 1e-12


@dataclass(slots=True)
class PreparedExperiment:
    config: ExperimentConfig
    game: PMGame | None = None
    analysis: GameAnalysis | None = None
    action_set: ActionSet | None = None


def learner_and_env_streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    """Counter-based generators for the learner and the environment, split from one seed."""
    learner_seq, env_seq = np.random.SeedSequence(seed).spawn(2)
    return np.random.Generator(np.random.Philox(learner_seq)), np.random.Generator(np.random.Philox(env_seq))


def load_game(config: ExperimentConfig, config_dir: str | None) -> PMGame:
    if isinstance(config.game, GameSpec):
        return game_from_spec(config.game, name=config.name)
    path = Path(config.game)
    if not path.is_absolute() and config_dir:
        path = Path(config_dir) / path
    return JsonGameLoader().load(path)


def build_action_set(config: ExperimentConfig) -> ActionSet:
    spec = config.semibandit
    if spec.kind is ActionSetKind.MSET:
        return MSet(spec.m)
    return ExplicitVertices(tuple(tuple(v) for v in spec.vertices))


def prepare(config: ExperimentConfig, *, config_dir: str | None = None,
            solver: SolverSettings | None = None) -> PreparedExperiment:
    solver = solver or get_settings().solver
    if not config.algorithm.is_partial_monitoring:
        return PreparedExperiment(config=config, action_set=build_action_set(config))
    game = load_game(config, config_dir)
    analysis = analyze_game(game, delta=solver.lp_delta)
    return PreparedExperiment(config=config, game=game, analysis=analysis)


def build_regime(config: ExperimentConfig) -> Regime:
    env = config.environment
    if isinstance(env, AdversarialEnvSpec):
        return ScheduleRegime(kind=env.schedule, patterns=tuple(
            p if isinstance(p, int) else tuple(p) for p in env.patterns
        ))
    values = env.nu if config.algorithm.is_partial_monitoring else env.means
    base = StochasticRegime(parameters=tuple(values), law=env.law, spread=env.spread)
    if isinstance(env, CorruptedEnvSpec):
        return CorruptedRegime(base=base, corruption=env.corruption, budget=env.budget, target=env.target)
    return base


def _semibandit_replication(prepared: PreparedExperiment, solver: SolverSettings,
                            learner_rng: np.random.Generator, env_rng: np.random.Generator,
                            ) -> tuple[RegretTrace, float, dict[str, float]]:
    config = prepared.config
    overrides = config.overrides
    d = config.semibandit.d
    env = SemiBanditEnv(d=d, action_set=prepared.action_set, regime=build_regime(config))
    learner = SemiBanditLearner(
        d=d,
        action_set=prepared.action_set,
        horizon=config.horizon,
        epsilon=overrides.epsilon or 0.5,
        predictor=Predictor.GD if config.algorithm is Algorithm.LBINFV_GD else Predictor.LS,
        eta=overrides.eta or 0.25,
        dual_tol=solver.root_tol,
        max_doublings=solver.dual_doublings,
    )
    adversarial = isinstance(env.regime, ScheduleRegime)
    trace = RegretTrace(config.horizon, adversarial=adversarial)
    gaps = env.gaps
    for t in range(1, config.horizon + 1):
        losses = env.emit(t, env_rng).value
        outcome = learner.step(lambda _action: losses, learner_rng)
        if adversarial:
            trace.record_losses(learner_loss=float(losses @ outcome.action), expected_loss=float(losses @ outcome.x),
                                losses=losses)
        else:
            trace.record(regret=gaps.regret(outcome.action), expected=gaps.regret(outcome.x))
    trace.finalize(partial(best_fixed_action, prepared.action_set))
    return trace, env.spent, {}


def build_pm_learner(prepared: PreparedExperiment, solver: SolverSettings) -> LocalPMLearner | GlobalPMLearner:
    config = prepared.config
    overrides = config.overrides
    if config.algorithm is Algorithm.PM_LOCAL:
        return LocalPMLearner(
            prepared.game,
            prepared.analysis,
            horizon=config.horizon,
            epsilon=overrides.epsilon or 1e-3,
            exo_max_iterations=overrides.exo_max_iterations or solver.exo_max_iterations,
            exo_tolerance=overrides.exo_tolerance or solver.exo_tolerance,
            exo_patience=overrides.exo_patience or solver.exo_patience,
            dual_tol=solver.root_tol,
            max_doublings=solver.dual_doublings,
        )
    return GlobalPMLearner(
        prepared.game,
        prepared.analysis,
        horizon=config.horizon,
        c1=overrides.c1,
        dual_tol=solver.root_tol,
        max_doublings=solver.dual_doublings,
    )


def _pm_replication(prepared: PreparedExperiment, solver: SolverSettings,
                    learner_rng: np.random.Generator, env_rng: np.random.Generator,
                    ) -> tuple[RegretTrace, float, dict[str, float]]:
    config = prepared.config
    game = prepared.game
    env = PMEnv(game=game, regime=build_regime(config))
    learner = build_pm_learner(prepared, solver)
    adversarial = isinstance(env.regime, ScheduleRegime)
    trace = RegretTrace(config.horizon, adversarial=adversarial)
    gaps = env.gaps
    z_violations = 0

    for t in range(1, config.horizon + 1):
        outcome = int(env.emit(t, env_rng).value)
        record = learner.play_round(lambda action: int(game.feedback[action, outcome]), learner_rng)
        if adversarial:
            column = game.loss[:, outcome]
            trace.record_losses(learner_loss=float(column[record.action]), expected_loss=float(record.p @ column),
                                losses=column)
        else:
            trace.record(regret=float(gaps[record.action]), expected=float(gaps @ record.p))

        if record.exo is not None and record.exo.fallback:
            audit.log_solver_event("exo_fallback", round=t, iterations=record.exo.iterations)
        if record.bound_exceeded:
            audit.log_solver_event("exo_bound_exceeded", round=t, value=record.exo.value, bound=record.exo_bound)
        if record.z is not None:
            # sum_a min{q_a, 1 - q_a} <= 2 (1 - q_b) for every b
            limit = 2.0 * float(np.min(1.0 - record.q))
            if record.z > limit + Z_BOUND_TOL:
                z_violations += 1

    trace.finalize()
    diagnostics: dict[str, float] = {}
    if isinstance(learner, LocalPMLearner):
        diagnostics.update(
            exo_fallbacks=float(learner.exo_fallbacks),
            exo_unconverged=float(learner.exo_unconverged),
            exo_bound_excesses=float(learner.bound_excesses),
        )
        if learner.exo_unconverged:
            audit.log_solver_event("exo_unconverged", count=learner.exo_unconverged)
    else:
        diagnostics.update(gamma_clamps=float(learner.clamps), z_bound_violations=float(z_violations))
        if learner.clamps:
            audit.log_solver_event("mixing_rate_clamped", count=learner.clamps, c1=learner.c1)
    return trace, env.spent, diagnostics


def run_replication(job: ReplicationJob) -> ReplicationResult:
    """Module-level entry point so worker processes can import it."""
    token = audit.bind_replication(job.label)
    started = time.perf_counter()
    try:
        solver = get_settings().solver
        prepared = prepare(job.config, config_dir=job.config_dir, solver=solver)
        learner_rng, env_rng = learner_and_env_streams(job.seed)
        if job.config.algorithm.is_partial_monitoring:
            trace, spent, diagnostics = _pm_replication(prepared, solver, learner_rng, env_rng)
        else:
            trace, spent, diagnostics = _semibandit_replication(prepared, solver, learner_rng, env_rng)
        elapsed = time.perf_counter() - started
        logger.info("replication %s finished: final regret %.4f in %.2fs", job.label, trace.cumulative()[-1], elapsed)
        return ReplicationResult(
            replication=job.replication,
            seed=job.seed,
            checkpoints=list(trace.checkpoints),
            regret=[float(v) for v in trace.cumulative()],
            expected_regret=[float(v) for v in trace.expected()],
            corruption_spent=float(spent),
            diagnostics=diagnostics,
            wall_clock=elapsed,
        )
    finally:
        audit.reset_replication(token)
