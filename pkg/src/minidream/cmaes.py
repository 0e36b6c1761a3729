"""Covariance Matrix Adaptation Evolution Strategy (full covariance).

Canonical (mu/mu_w, lambda) rank-based update: log-rank recombination
weights over the best mu = lambda/2 candidates, cumulative step-size
adaptation, rank-one plus rank-mu covariance update. The public convention
is maximization; fitnesses are never sign-flipped in anything logged.
"""
from __future__ import annotations

import csv
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from minidream.rng import RngStream

log = logging.getLogger(__name__)

EIGEN_FLOOR = 1e-12


@dataclass
class CandidateSolution:
    params: np.ndarray
    fitness: float
    rollout_returns: List[float] = field(default_factory=list)


class CmaState:
    def __init__(self, n: int, mean: Optional[np.ndarray] = None,
                 sigma: float = 0.1, lam: Optional[int] = None):
        self.n = n
        self.mean = np.zeros(n) if mean is None else np.asarray(mean, dtype=np.float64).copy()
        self.sigma = float(sigma)
        self.lam = lam if lam is not None else 4 + int(3 * np.log(n))
        if self.lam < 2:
            raise ValueError(f"population size must be >= 2, got {self.lam}")
        mu = self.lam // 2
        w = np.log(mu + 0.5) - np.log(np.arange(1, mu + 1))
        self.weights = w / w.sum()
        self.mu = mu
        self.mueff = 1.0 / np.sum(self.weights ** 2)
        self.c_sigma = (self.mueff + 2) / (n + self.mueff + 5)
        self.d_sigma = (1 + 2 * max(0.0, np.sqrt((self.mueff - 1) / (n + 1)) - 1)
                        + self.c_sigma)
        self.c_c = (4 + self.mueff / n) / (n + 4 + 2 * self.mueff / n)
        self.c1 = 2 / ((n + 1.3) ** 2 + self.mueff)
        self.c_mu = min(1 - self.c1,
                        2 * (self.mueff - 2 + 1 / self.mueff) / ((n + 2) ** 2 + self.mueff))
        self.chi_n = np.sqrt(n) * (1 - 1 / (4 * n) + 1 / (21 * n * n))
        self.C = np.eye(n)
        self.p_sigma = np.zeros(n)
        self.p_c = np.zeros(n)
        self.generation = 0
        self._eigen_stale = True
        self._B = np.eye(n)
        self._D = np.ones(n)
        self._last_eigen_gen = 0
        self.repair_count = 0

    # -- eigendecomposition, refreshed on a standard lazy schedule -----------
    def _refresh_eigen(self):
        gap = max(1, int(1.0 / ((self.c1 + self.c_mu) * self.n * 10.0)))
        if not self._eigen_stale and self.generation - self._last_eigen_gen < gap:
            return
        self.C = (self.C + self.C.T) / 2.0
        vals, vecs = np.linalg.eigh(self.C)
        if vals.min() <= 0:
            self.repair_count += 1
            log.warning("covariance lost positive definiteness (min eig %.3e); "
                        "clamping", vals.min())
            vals = np.maximum(vals, EIGEN_FLOOR)
            self.C = (vecs * vals) @ vecs.T
        self._B = vecs
        self._D = np.sqrt(vals)
        self._eigen_stale = False
        self._last_eigen_gen = self.generation

    def ask(self, rng: RngStream, lam: Optional[int] = None) -> np.ndarray:
        lam = lam if lam is not None else self.lam
        if lam < 2:
            raise ValueError(f"ask needs lambda >= 2, got {lam}")
        self._refresh_eigen()
        eps = rng.normal((lam, self.n))
        return self.mean[None, :] + self.sigma * (eps * self._D[None, :]) @ self._B.T

    def tell(self, candidates: np.ndarray, fitnesses) -> None:
        """Rank-based update; maximization. NaN fitness ranks worst."""
        candidates = np.asarray(candidates, dtype=np.float64)
        fitnesses = np.asarray(fitnesses, dtype=np.float64)
        if len(candidates) != len(fitnesses):
            raise ValueError(f"{len(candidates)} candidates but {len(fitnesses)} fitnesses")
        n_nan = int(np.isnan(fitnesses).sum())
        if n_nan:
            log.warning("%d NaN fitness value(s) assigned worst rank", n_nan)
            fitnesses = np.where(np.isnan(fitnesses), -np.inf, fitnesses)
        order = np.argsort(-fitnesses, kind="stable")
        sel = candidates[order[:self.mu]]
        y = (sel - self.mean[None, :]) / self.sigma
        y_w = self.weights @ y
        self.mean = self.mean + self.sigma * y_w

        self._refresh_eigen()
        c_invsqrt_yw = self._B @ ((self._B.T @ y_w) / self._D)
        cs, ds = self.c_sigma, self.d_sigma
        self.p_sigma = (1 - cs) * self.p_sigma \
            + np.sqrt(cs * (2 - cs) * self.mueff) * c_invsqrt_yw
        g = self.generation + 1
        ps_norm = np.linalg.norm(self.p_sigma)
        hsig = ps_norm / np.sqrt(1 - (1 - cs) ** (2 * g)) / self.chi_n \
            < 1.4 + 2 / (self.n + 1)
        cc = self.c_c
        self.p_c = (1 - cc) * self.p_c \
            + hsig * np.sqrt(cc * (2 - cc) * self.mueff) * y_w
        rank_mu = (y * self.weights[:, None]).T @ y
        self.C = (1 - self.c1 - self.c_mu) * self.C \
            + self.c1 * (np.outer(self.p_c, self.p_c)
                         + (not hsig) * cc * (2 - cc) * self.C) \
            + self.c_mu * rank_mu
        self.C = (self.C + self.C.T) / 2.0
        self.sigma *= np.exp((cs / ds) * (ps_norm / self.chi_n - 1))
        self.generation = g
        self._eigen_stale = True


def _n_workers() -> int:
    return max(1, int(os.environ.get("MINIDREAM_WORKERS", "1")))


def evolve(rollout_fn: Callable[[np.ndarray, int], float],
           n_params: int,
           generations: int,
           lam: int = 64,
           n_rollouts: int = 16,
           seed: int = 0,
           sigma0: float = 0.1,
           mean0: Optional[np.ndarray] = None,
           eval_every: int = 25,
           eval_rollouts: int = 1024,
           metrics_path=None,
           config_hash: str = "",
           progress: Optional[Callable[[Dict], None]] = None,
           ) -> Tuple[CandidateSolution, List[Dict]]:
    """Maximize mean rollout return with CMA-ES.

    Fitness of a candidate is the mean of `n_rollouts` rollouts, each on a
    substream derived from (seed, generation, candidate, rollout), so the
    result is reproducible and independent of the worker count. Every
    `eval_every` generations the best-so-far candidate is re-scored over
    `eval_rollouts` rollouts.
    """
    state = CmaState(n_params, mean=mean0, sigma=sigma0, lam=lam)
    root = RngStream(seed, "cmaes")
    ask_rng = root.substream("ask")
    best = CandidateSolution(params=state.mean.copy(), fitness=-np.inf)
    history: List[Dict] = []
    if generations == 0:
        best.fitness = np.nan
        return best, history

    def rollout_seed(g: int, i: int, r: int) -> int:
        return int(root.substream(f"rollout-{g}-{i}-{r}").integers(0, 2 ** 63))

    pool = ThreadPoolExecutor(max_workers=_n_workers())
    try:
        for g in range(generations):
            cands = state.ask(ask_rng, lam)
            jobs = [(i, r) for i in range(lam) for r in range(n_rollouts)]
            futures = [pool.submit(_safe_rollout, rollout_fn, cands[i],
                                   rollout_seed(g, i, r)) for i, r in jobs]
            returns = np.full((lam, n_rollouts), np.nan)
            for (i, r), fut in zip(jobs, futures):
                returns[i, r] = fut.result()
            fitnesses = returns.mean(axis=1)
            gen_best = int(np.nanargmax(fitnesses))
            if fitnesses[gen_best] > best.fitness:
                best = CandidateSolution(params=cands[gen_best].copy(),
                                         fitness=float(fitnesses[gen_best]),
                                         rollout_returns=list(returns[gen_best]))
            state.tell(cands, fitnesses)
            eval_score = ""
            if eval_every and (g + 1) % eval_every == 0:
                seeds = [rollout_seed(-1, g, r) for r in range(eval_rollouts)]
                futs = [pool.submit(_safe_rollout, rollout_fn, best.params, s)
                        for s in seeds]
                eval_score = float(np.mean([f.result() for f in futs]))
            row = {"generation": g,
                   "best": float(np.nanmax(fitnesses)),
                   "worst": float(np.nanmin(fitnesses)),
                   "mean": float(np.nanmean(fitnesses)),
                   "sigma_es": float(state.sigma),
                   "eval_score": eval_score}
            history.append(row)
            if progress is not None:
                progress(row)
    finally:
        pool.shutdown(wait=False)

    if metrics_path is not None:
        with open(metrics_path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["config_hash", "generation", "best", "worst", "mean",
                        "sigma_es", "eval_score"])
            for r in history:
                w.writerow([config_hash, r["generation"], f"{r['best']:.6f}",
                            f"{r['worst']:.6f}", f"{r['mean']:.6f}",
                            f"{r['sigma_es']:.8f}",
                            "" if r["eval_score"] == "" else f"{r['eval_score']:.6f}"])
    return best, history


def _safe_rollout(rollout_fn, params, seed) -> float:
    try:
        return float(rollout_fn(params, seed))
    except Exception:
        log.exception("rollout crashed; scoring candidate at -inf")
        return -np.inf
