from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple
import logging
import math

import numpy as np
from scipy import stats

from app.ReqResModels.abcmodels import AbcMcmcConfig
from app.ReqResModels.experimentmodels import (
    BOOM_BUST_INIT,
    BOOM_BUST_TRUTH,
    ExperimentConfig,
    ExperimentName,
    ExperimentReport,
)
from app.ReqResModels.optimizermodels import IfConfig, IfTrace
from app.ReqResModels.parammodels import ParamVector
from app.ReqResModels.simulatormodels import ShiftedExpParams
from app.ReqResModels.synthlikmodels import EstimatorKind
from app.database import storage
from app.logic.exceptions import (
    EstimateError,
    ExperimentError,
    NumericalError,
    ValidationError,
)
from app.services.abc_service import AbcService
from app.services.ees_service import EesService
from app.services.kde_service import KernelDensityService
from app.services.optimizer_service import OptimizerService
from app.services.seeding import derive_seed, make_rng, parallel_map
from app.services.simulator_service import (
    BoomBustSimulator,
    ShiftedExpSimulator,
    Simulator,
    SimulatorService,
)
from app.services.synthlik_service import SynthLikService
from app.services.tuning_service import TuningService

logger = logging.getLogger(__name__)

# an experiment with a larger share of failed replicates is aborted
MAX_FAILURE_FRACTION = 0.25


class ExperimentService:
    """Replicated studies: simulate pseudo-data, tune, estimate with each method, aggregate"""

    @staticmethod
    def summarize(estimates, truth) -> Tuple[np.ndarray, np.ndarray]:
        """Per-parameter mean and RMSE of replicate estimates (n x p) against the truth"""
        E = np.atleast_2d(np.asarray(estimates, dtype=float))
        truth = np.asarray(truth, dtype=float).reshape(-1)
        if E.shape[1] != truth.size:
            raise ValidationError(f"Estimates have {E.shape[1]} parameters, truth has {truth.size}")
        return E.mean(axis=0), np.sqrt(np.mean((E - truth) ** 2, axis=0))

    @staticmethod
    def run_replicates(fn: Callable[[int], Any], config: ExperimentConfig) -> Tuple[List[Any], List[dict]]:
        """Run fn(r) for every replicate, recording failures; too many failures abort the experiment"""
        def guarded(r: int):
            try:
                result = fn(r)
                logger.info(f"{config.experiment.value}: replicate {r + 1}/{config.replicates} done")
                return result, None
            except (NumericalError, ValidationError) as e:
                logger.warning(f"{config.experiment.value}: replicate {r + 1} failed: {e.message}")
                return None, {"replicate": r + 1, "error_code": e.error_code, "message": e.message}

        outcomes = parallel_map(guarded, list(range(config.replicates)), config.workers)
        results = [res for res, err in outcomes if err is None]
        failures = [err for _, err in outcomes if err is not None]
        if len(failures) > MAX_FAILURE_FRACTION * config.replicates:
            raise ExperimentError(f"{len(failures)} of {config.replicates} replicates failed")
        return results, failures

    @staticmethod
    def replicate_seed(config: ExperimentConfig, r: int) -> int:
        return derive_seed(config.seed, r + 1)

    @staticmethod
    def _gamma(config: ExperimentConfig, samples: np.ndarray, seed: int, out: Optional[Path]):
        if not config.uses_cv:
            return float(config.gamma), None
        cv = TuningService.cross_validate_gamma(samples, config.gamma_grid, config.k, config.l, seed)
        if out is not None:
            storage.save_cv_curve(out / "cv_curve.csv", cv, root_seed=config.seed)
        return cv.selected_gamma, cv

    @staticmethod
    def _maximize(kind: str, s0, sim: Simulator, theta0: ParamVector, config: ExperimentConfig,
                  gamma: Optional[float], seed: int) -> Tuple[np.ndarray, IfTrace]:
        objective = SynthLikService.make_objective(
            EstimatorKind(kind), s0, sim, config.m,
            gamma=math.inf if gamma is None else gamma, l=config.sl_l,
        )
        trace = OptimizerService.maximize_sl(objective, IfConfig(
            n_particles=config.particles, iterations=config.iterations,
            theta0=theta0, seed=seed, workers=1,
        ))
        return trace.tail_average(config.tail_average), trace

    @staticmethod
    def _abc_map(sim: Simulator, config: ExperimentConfig, s0, seed: int) -> np.ndarray:
        lower, upper = sim.bounds()
        result = AbcService.mcmc_abc(sim, AbcMcmcConfig(
            lower=lower, upper=upper,
            target_acceptance=config.abc_target_acceptance,
            calibration_sims=config.abc_calibration_sims,
            chain_length=config.abc_chain_length,
            seed=seed, workers=1,
        ), s0)
        if result.samples.shape[0] == 0:
            raise EstimateError("ABC chain kept no samples")
        mode = AbcService.mean_shift_map(result.samples, config.mean_shift_starts, seed, names=result.names, workers=1)
        return mode.as_array()

    # parameter estimation studies

    @staticmethod
    def _boom_bust(config: ExperimentConfig, out: Path) -> Dict[str, Any]:
        sim = BoomBustSimulator(T=config.T, N0=config.N0, burn_in=config.burn_in)
        truth = np.asarray(config.true_theta or BOOM_BUST_TRUTH, dtype=float)
        init = config.init or BOOM_BUST_INIT
        if truth.size != 4 or len(init) != 4:
            raise ValidationError("boom-bust needs four parameters (r, kappa, alpha, beta)")
        theta0 = sim.param_vector(init)
        names = sim.param_names

        gamma = None
        if "ees" in config.estimators:
            S = sim.simulate_many(init, config.m, derive_seed(config.seed, 0), config.workers)
            gamma, _ = ExperimentService._gamma(config, S, derive_seed(config.seed, 0, 1), out)

        def replicate(r: int) -> dict:
            seed_r = ExperimentService.replicate_seed(config, r)
            s0 = sim.simulate(truth, derive_seed(seed_r, 0))
            row = {"replicate": r + 1, "seed": seed_r}
            for j, est in enumerate(config.estimators):
                if est == "abc":
                    values = ExperimentService._abc_map(sim, config, s0, derive_seed(seed_r, j + 1))
                else:
                    values, trace = ExperimentService._maximize(est, s0, sim, theta0, config, gamma, derive_seed(seed_r, j + 1))
                    storage.save_trace(out / "traces" / f"replicate_{r + 1}_{est}.csv", trace, root_seed=config.seed)
                row.update({f"{est}_{name}": float(v) for name, v in zip(names, values)})
            return row

        rows, failures = ExperimentService.run_replicates(replicate, config)
        summary = []
        for est in config.estimators:
            if not rows:
                break
            E = np.array([[row[f"{est}_{name}"] for name in names] for row in rows])
            mean, rmse = ExperimentService.summarize(E, truth)
            summary += [
                {"estimator": est, "parameter": name, "truth": float(t), "mean": float(mu), "rmse": float(e)}
                for name, t, mu, e in zip(names, truth, mean, rmse)
            ]
        budgets = {"sl_simulations_per_estimate": config.iterations * config.particles * config.m}
        if "abc" in config.estimators:
            budgets.update({"abc_calibration_simulations": config.abc_calibration_sims,
                            "abc_chain_simulations": config.abc_chain_length})
        return {"rows": rows, "summary": summary, "failures": failures, "gamma": gamma, "budgets": budgets}

    @staticmethod
    def _shifted_exp(config: ExperimentConfig, out: Path) -> Dict[str, Any]:
        d = config.d
        correlation = SimulatorService.random_correlation(d, derive_seed(config.seed, 0, 2)) if config.correlated else None
        sim = ShiftedExpSimulator(d, config.beta, correlation)
        truth = np.asarray(config.true_theta if config.true_theta is not None else [0.0] * d, dtype=float)
        if truth.size != d or (config.init is not None and len(config.init) != d):
            raise ValidationError(f"shifted-exp parameters must have length d={d}")

        gamma = None
        if "ees" in config.estimators:
            S = sim.simulate_many(truth, config.m, derive_seed(config.seed, 0), config.workers)
            gamma, _ = ExperimentService._gamma(config, S, derive_seed(config.seed, 0, 1), out)

        def replicate(r: int) -> dict:
            seed_r = ExperimentService.replicate_seed(config, r)
            s0 = sim.simulate(truth, derive_seed(seed_r, 0))
            # independent margins: the full MLE is s0 itself
            reference = truth if config.correlated else s0
            init = np.asarray(config.init, dtype=float) if config.init is not None else s0 - 1.0 / config.beta
            theta0 = sim.param_vector(init)
            row = {"replicate": r + 1, "seed": seed_r}
            for j, est in enumerate(config.estimators):
                values, trace = ExperimentService._maximize(est, s0, sim, theta0, config, gamma, derive_seed(seed_r, j + 1))
                storage.save_trace(out / "traces" / f"replicate_{r + 1}_{est}.csv", trace, root_seed=config.seed)
                row[f"{est}_mse"] = float(np.mean((values - reference) ** 2))
                row.update({f"{est}_{name}": float(v) for name, v in zip(sim.param_names, values)})
            return row

        rows, failures = ExperimentService.run_replicates(replicate, config)
        summary = []
        for est in config.estimators:
            mse = np.array([row[f"{est}_mse"] for row in rows])
            if mse.size:
                summary.append({"estimator": est, "mean_mse": float(mse.mean()), "median_mse": float(np.median(mse))})
        if {"gauss", "ees"} <= set(config.estimators) and rows:
            ratio = np.array([row["ees_mse"] / row["gauss_mse"] for row in rows if row["gauss_mse"] > 0])
            if ratio.size:
                summary.append({"estimator": "ees/gauss", "mean_mse": float(ratio.mean()), "median_mse": float(np.median(ratio))})
        return {
            "rows": rows, "summary": summary, "failures": failures, "gamma": gamma,
            "budgets": {"sl_simulations_per_estimate": config.iterations * config.particles * config.m},
        }

    # density studies

    @staticmethod
    def _copula(config: ExperimentConfig, out: Path) -> Dict[str, Any]:
        def replicate(r: int) -> List[dict]:
            seed_r = ExperimentService.replicate_seed(config, r)
            rows = []
            for d in config.dims:
                params = ShiftedExpParams(
                    theta=[0.0] * d, beta=config.beta,
                    correlation=SimulatorService.random_correlation(d, derive_seed(seed_r, d)).tolist(),
                )
                sim = ShiftedExpSimulator(d, config.beta, params.correlation_array())
                train = sim.simulate_many(params.theta, config.m, derive_seed(seed_r, d, 1), workers=1)
                test = sim.simulate_many(params.theta, config.test_size, derive_seed(seed_r, d, 2), workers=1)
                true_log_p = SimulatorService.shifted_exp_log_density(test, params)
                row = {"replicate": r + 1, "seed": seed_r, "d": d}
                base = EesService.fit(train, math.inf, seed=derive_seed(seed_r, d, 3))

                if "gauss" in config.estimators:
                    log_p = stats.multivariate_normal(base.mu_hat, base.sigma_hat).logpdf(test)
                    row["gauss_kl"] = float(np.mean(true_log_p - np.atleast_1d(log_p)))
                if "ees" in config.estimators:
                    gamma, _ = ExperimentService._gamma(config, train, derive_seed(seed_r, d, 4), None)
                    model = EesService.normalize(base.model_copy(update={"gamma": gamma}), config.l,
                                                 rng_seed=derive_seed(seed_r, d, 5), workers=1)
                    log_p, failed = EesService.batch_log_density(model, test, gaussian_fallback=True, workers=1)
                    row.update({"ees_kl": float(np.mean(true_log_p - log_p)), "ees_gamma": gamma,
                                "ees_fallbacks": int(failed.sum())})
                if "kde" in config.estimators:
                    kde_cv = TuningService.cross_validate_kde_scale(train, config.kde_scales, config.k, derive_seed(seed_r, d, 6))
                    kde = KernelDensityService.fit(train, scale=kde_cv.selected_scale)
                    log_p = KernelDensityService.log_density(test, kde)
                    row.update({"kde_kl": float(np.mean(true_log_p - log_p)), "kde_scale": kde_cv.selected_scale})
                rows.append(row)
            return rows

        results, failures = ExperimentService.run_replicates(replicate, config)
        rows = [row for block in results for row in block]
        summary = []
        for d in config.dims:
            for est in config.estimators:
                kl = np.array([row[f"{est}_kl"] for row in rows if row["d"] == d])
                if kl.size:
                    summary.append({"d": d, "estimator": est, "mean_kl": float(kl.mean()),
                                    "sd_kl": float(kl.std(ddof=1)) if kl.size > 1 else 0.0})
        return {
            "rows": rows, "summary": summary, "failures": failures, "gamma": None,
            "budgets": {"training_size": config.m, "test_size": config.test_size, "importance_samples": config.l},
        }

    @staticmethod
    def _cv_demo(config: ExperimentConfig, out: Path) -> Dict[str, Any]:
        grid = np.asarray(config.gamma_grid, dtype=float)

        def replicate(r: int) -> dict:
            seed_r = ExperimentService.replicate_seed(config, r)
            if config.cv_data == "gaussian":
                S = make_rng(seed_r, 0).standard_normal((config.m, config.d))
            else:
                S = ShiftedExpSimulator(config.d, config.beta).simulate_many(
                    [0.0] * config.d, config.m, derive_seed(seed_r, 0), workers=1
                )
            cv = TuningService.cross_validate_gamma(S, grid, config.k, config.l, derive_seed(seed_r, 1), workers=1)
            storage.save_cv_curve(out / "cv_curves" / f"replicate_{r + 1}.csv", cv, root_seed=config.seed)
            return {"replicate": r + 1, "seed": seed_r, "selected_gamma": cv.selected_gamma,
                    "fallbacks": int(cv.failure_counts.sum())}

        rows, failures = ExperimentService.run_replicates(replicate, config)
        selected = np.array([row["selected_gamma"] for row in rows])
        summary = [{"gamma": float(g), "times_selected": int(np.sum(selected == g))} for g in grid]
        return {
            "rows": rows, "summary": summary, "failures": failures, "gamma": None,
            "budgets": {"m": config.m, "importance_samples": config.l, "folds": config.k, "grid_size": int(grid.size)},
        }

    @staticmethod
    def run_experiment(config: ExperimentConfig) -> ExperimentReport:
        out = Path(config.output_dir) / f"{config.experiment.value}_seed{config.seed}"
        logger.info(f"Running {config.experiment.value} with {config.replicates} replicates, seed {config.seed}, into {out}")
        runners = {
            ExperimentName.BOOM_BUST: ExperimentService._boom_bust,
            ExperimentName.SHIFTED_EXP: ExperimentService._shifted_exp,
            ExperimentName.COPULA: ExperimentService._copula,
            ExperimentName.CV_DEMO: ExperimentService._cv_demo,
        }
        outcome = runners[config.experiment](config, out)

        results_path = storage.write_table(out / "results.csv", outcome["rows"], root_seed=config.seed)
        summary_path = storage.write_table(out / "summary.csv", outcome["summary"], root_seed=config.seed)
        manifest_path = storage.write_json(out / "manifest.json", {
            "experiment": config.experiment.value,
            "seed": config.seed,
            "replicate_seeds": [ExperimentService.replicate_seed(config, r) for r in range(config.replicates)],
            "config": config.model_dump(mode="json"),
            "gamma": outcome["gamma"],
            "budgets": outcome["budgets"],
            "n_failed": len(outcome["failures"]),
            "failures": outcome["failures"],
            "versions": storage.versions(),
        })
        return ExperimentReport(
            experiment=config.experiment,
            seed=config.seed,
            directory=str(out),
            results_path=str(results_path),
            summary_path=str(summary_path),
            manifest_path=str(manifest_path),
            n_replicates=config.replicates,
            n_failed=len(outcome["failures"]),
            gamma=outcome["gamma"],
            summary=outcome["summary"],
        )
