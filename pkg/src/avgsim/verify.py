"""Desk-scale acceptance suite shared by the test-suite and ``avgsim verify``.

Each check returns a :class:`CriterionResult` with the measured values; the
pass/fail decision uses the tolerances stated next to each function.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .dynamics import (
    ActivationSchedule,
    decompose,
    init_random_state,
    run,
    run_batch,
)
from .graphgen import generate_clustered_regular, verify_clustered_invariants
from .metrics import csl_evaluate, stopping_time_coverage, uniformity_report, weak_reconstruction_error
from .oracle import (
    concentration_window,
    expected_states,
    mom_bound_rhs,
    mom_window,
    mu_expected,
    one_step_bounds,
    recursion_envelope,
)
from .protocols import boosted_jump_run, jump_default_parameters, jump_labeling_run, sign_default_parameters, sign_labeling_run
from .seeding import generator, trial_seed
from .spectral import compute_spectrum, normalized_laplacian
from .workers import map_ordered

log = logging.getLogger(__name__)

MASTER_SEED = 20240917
GRAPH_SEED = 11
PROJECTION_C = 1.0  # frozen after pilot: the observed rate is about 0.8/sqrt(beta)


@dataclass
class CriterionResult:
    key: str
    title: str
    passed: bool
    runtime: float
    budget: float
    measured: dict = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        vals = ", ".join(f"{k}={_fmt(v)}" for k, v in self.measured.items())
        return f"[{tag}] {self.key} {self.title}: {vals} ({self.runtime:.1f}s/{self.budget:.0f}s)"


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.4g}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    return str(v)


def _timed(key: str, title: str, budget: float, body: Callable[[dict, list], bool]) -> CriterionResult:
    measured: dict = {}
    notes: list[str] = []
    t0 = time.perf_counter()
    ok = bool(body(measured, notes))
    dt = time.perf_counter() - t0
    if dt > budget:
        notes.append(f"runtime {dt:.1f}s over budget {budget:.0f}s")
        ok = False
    return CriterionResult(key, title, ok, dt, budget, measured, notes)


def _chunks(total: int, size: int) -> list[tuple[int, int]]:
    return [(s, min(size, total - s)) for s in range(0, total, size)]


def _fixed_state(n: int, chi: np.ndarray, seed: int) -> np.ndarray:
    """First random +-1 state (scanning seeds) whose chi component is non-zero."""
    s = seed
    while True:
        x = init_random_state(n, s)
        if abs(float(chi @ x)) > 0:
            return x
        s += 1


# ------------------------------------------------------------------ C1

STRUCT_GRID = [
    (16, 5, 1), (16, 5, 2), (32, 6, 1), (32, 8, 3), (64, 8, 1),
    (64, 12, 5), (128, 16, 1), (128, 20, 4), (256, 32, 1), (500, 50, 5),
]


def c1_structural(quick: bool = False) -> CriterionResult:
    def body(m: dict, notes: list) -> bool:
        seeds = range(2 if quick else 5)
        bad = 0
        worst = 0.0
        count = 0
        for n, d, b in STRUCT_GRID:
            for s in seeds:
                g = generate_clustered_regular(n, d, b, seed=1000 + s)
                rep = verify_clustered_invariants(g)
                bad += len(rep.violations)
                f = g.chi / math.sqrt(n)
                res = float(np.linalg.norm(normalized_laplacian(g) @ f - (2 * b / d) * f))
                worst = max(worst, res)
                count += 1
        m.update(graphs=count, violations=bad, max_eig_residual=worst)
        return bad == 0 and worst < 1e-9 and count == (20 if quick else 50)
    return _timed("C1", "structural invariants", 30, body)


# ------------------------------------------------------------------ C2

def c2_conservation(quick: bool = False) -> CriterionResult:
    def body(m: dict, notes: list) -> bool:
        g = generate_clustered_regular(256, 16, 1, GRAPH_SEED)
        rounds = 10**5 if quick else 10**6
        r1 = run(g, 0.3, rounds, MASTER_SEED, observe_every=rounds // 10)
        r2 = run(g, 0.3, rounds, MASTER_SEED, observe_every=rounds // 10)
        drift = float(np.max(np.abs(r1.series["a_par"] - r1.series["a_par"][0])))
        same = r1.x_final.tobytes() == r2.x_final.tobytes() and all(
            r1.series[k].tobytes() == r2.series[k].tobytes() for k in r1.series
        )
        m.update(rounds=rounds, a_par_drift=drift, identical=same)
        return drift < 1e-9 and same
    return _timed("C2", "conservation and determinism", 10, body)


# ------------------------------------------------------------------ C3

def c3_first_moment(quick: bool = False) -> CriterionResult:
    def body(m: dict, notes: list) -> bool:
        g = generate_clustered_regular(16, 5, 1, GRAPH_SEED)
        x0 = _fixed_state(16, g.chi.astype(float), MASTER_SEED)
        trials = 20_000 if quick else 200_000
        ts = [10, 100]
        pred = expected_states(g, x0, ts, 0.5)
        blocks = map_ordered(
            lambda c: _moments(run_batch(g, 0.5, x0, ts, c[1], MASTER_SEED, first_trial=c[0])),
            _chunks(trials, 10_000),
        )
        s1 = sum(b[0] for b in blocks)
        s2 = sum(b[1] for b in blocks)
        mean = s1 / trials
        se = np.sqrt(np.maximum(s2 / trials - mean**2, 0) / (trials - 1))
        z = np.stack([np.abs(mean[i] - pred[t]) / se[i] for i, t in enumerate(ts)])
        m.update(trials=trials, max_z=float(z.max()))
        return bool(np.all(z <= 4))
    return _timed("C3", "first-moment oracle", 300, body)


def _moments(states: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return states.sum(axis=1), (states**2).sum(axis=1)


# ------------------------------------------------------------------ C4

def c4_expected_ay(quick: bool = False) -> CriterionResult:
    def body(m: dict, notes: list) -> bool:
        g = generate_clustered_regular(32, 6, 1, GRAPH_SEED)
        chi = g.chi.astype(float)
        x0 = _fixed_state(32, chi, MASTER_SEED)
        a0 = float(chi @ x0) / math.sqrt(32)
        trials = 20_000 if quick else 200_000
        ts = [50, 500]
        zs = []
        for delta in (0.25, 0.5):
            def block(c, delta=delta):
                st = run_batch(g, delta, x0, ts, c[1], MASTER_SEED, first_trial=c[0])
                ay = st @ chi / math.sqrt(32)
                return ay.sum(axis=1), (ay**2).sum(axis=1)
            parts = map_ordered(block, _chunks(trials, 10_000))
            s1 = sum(p[0] for p in parts)
            s2 = sum(p[1] for p in parts)
            mean = s1 / trials
            se = np.sqrt((s2 / trials - mean**2) / (trials - 1))
            for i, t in enumerate(ts):
                mu = mu_expected(a0, t, delta, g.b, g.d, g.n)
                zs.append(abs(mean[i] - mu) / se[i])
        m.update(trials=trials, a_y0=a0, z_scores=[float(z) for z in zs])
        return all(z <= 4 for z in zs)
    return _timed("C4", "expected a_y(t)", 300, body)


# ------------------------------------------------------------------ C5

def c5_one_step(quick: bool = False) -> CriterionResult:
    def body(m: dict, notes: list) -> bool:
        g = generate_clustered_regular(64, 8, 1, GRAPH_SEED)
        spec = compute_spectrum(g)
        lam3 = spec.lambda3_complement
        rng = generator(MASTER_SEED)
        worst: dict[str, float] = {}
        states = 100
        for i in range(states):
            x = rng.choice([-1.0, 1.0], size=64) if i % 2 == 0 else rng.uniform(-1, 1, size=64)
            for delta in (0.5, 0.1, 0.3, 0.7):
                for k, v in one_step_bounds(g, x, delta, lam3).items():
                    worst[k] = min(worst.get(k, math.inf), v)
        m.update(states=states, inequalities=len(worst), min_slack=min(worst.values()))
        notes.extend(f"{k}: {v:.3e}" for k, v in sorted(worst.items()))
        return len(worst) == 7 and min(worst.values()) >= -1e-12
    return _timed("C5", "one-step inequalities", 60, body)


# ------------------------------------------------------------------ C6

def c6_second_moment(quick: bool = False) -> CriterionResult:
    def body(m: dict, notes: list) -> bool:
        g = generate_clustered_regular(256, 32, 1, GRAPH_SEED)
        spec = compute_spectrum(g)
        lam2, lam3 = 2 * g.b / g.d, spec.lambda3_complement
        n = g.n
        chi = g.chi.astype(float)
        x0 = _fixed_state(n, chi, MASTER_SEED)
        d0 = decompose(x0, chi)
        base = d0.a_par / math.sqrt(n) + d0.a_y * chi / math.sqrt(n)
        t = math.ceil(3 * n * math.log(n) / lam3)
        trials = 200 if quick else 1000
        parts = map_ordered(
            lambda c: run_batch(g, 0.5, x0, [t], c[1], MASTER_SEED, first_trial=c[0])[0],
            _chunks(trials, 250),
        )
        dev = np.concatenate(parts) - base
        vals = np.einsum("ij,ij->i", dev, dev)
        emp = float(vals.mean())
        bound = mom_bound_rhs(lam2, t, n)
        lo, hi = mom_window(n, lam2, lam3)
        m.update(t=t, empirical=emp, bound=bound, std_error=float(vals.std(ddof=1) / math.sqrt(trials)))
        notes.append(f"second-moment window [{lo:.0f}, {hi:.0f}] is {'empty' if lo > hi else 'non-empty'} here")
        return emp <= bound
    return _timed("C6", "second-moment bound", 300, body)


# ------------------------------------------------------------------ C7

def c7_envelope(quick: bool = False) -> CriterionResult:
    def body(m: dict, notes: list) -> bool:
        g = generate_clustered_regular(64, 8, 1, GRAPH_SEED)
        spec = compute_spectrum(g)
        lam3 = spec.lambda3_complement
        lam2 = 2 * g.b / g.d
        n, delta = g.n, 0.3
        chi = g.chi.astype(float)
        x0 = _fixed_state(n, chi, MASTER_SEED)
        d0 = decompose(x0, chi)
        ts = [100, 1000, 10_000]
        trials = 2000 if quick else 10_000
        env = recursion_envelope(d0.y_norm_sq, d0.z_norm_sq, delta, g.b, g.d, lam3, n, ts[-1])

        def block(c):
            st = run_batch(g, delta, x0, ts, c[1], MASTER_SEED, first_trial=c[0])
            ay = st @ chi / math.sqrt(n)
            ap = st.sum(axis=2) / math.sqrt(n)
            y2 = ay**2
            z2 = np.einsum("tij,tij->ti", st, st) - ap**2 - y2
            return y2.sum(1), (y2**2).sum(1), z2.sum(1), (z2**2).sum(1)

        parts = map_ordered(block, _chunks(trials, 1000))
        agg = [sum(p[k] for p in parts) for k in range(4)]
        ok_dom = True
        over = []
        for i, t in enumerate(ts):
            for lbl, s1, s2, hat in (("y", agg[0][i], agg[1][i], env.y_hat[t]), ("z", agg[2][i], agg[3][i], env.z_hat[t])):
                mean = s1 / trials
                se = math.sqrt(max(s2 / trials - mean**2, 0.0) / (trials - 1))
                excess = (mean - hat) / se if se > 0 else (0.0 if mean <= hat else math.inf)
                over.append(excess)
                ok_dom &= excess <= 4
        thr = math.sqrt(delta * g.b / (g.d * (lam3 - lam2)))
        beta = max(1.0, env.beta)
        lo, hi = concentration_window(n, g.d, g.b, delta, lam2, lam3, beta)
        ratio_end = float(env.z_hat[-1] / env.y_hat[-1])
        if lo <= hi:
            t_hi = min(int(hi), 10**7)
            ext = recursion_envelope(d0.y_norm_sq, d0.z_norm_sq, delta, g.b, g.d, lam3, n, t_hi)
            r = ext.z_hat[math.ceil(lo):t_hi + 1] / ext.y_hat[math.ceil(lo):t_hi + 1]
            ok_ratio = bool(r.size and r.min() < thr)
        else:
            ok_ratio = False
            notes.append(f"concentration window [{lo:.0f}, {hi:.0f}] is empty for this instance")
        notes.append(f"delta < 0.8 (lambda3 - lambda2) holds: {delta < 0.8 * (lam3 - lam2)}")
        notes.append(f"limiting envelope ratio 2 delta b/d / ((1-delta) lambda3 - 2b/d) = {limiting_ratio(delta, g.b, g.d, lam3):.4g}")
        ref = reference_ratio_check()
        notes.append("reference (n=20000, d=50, b=5, lambda3=0.72, delta=0.3): window [{:.3g}, {:.3g}], "
                     "min ratio {:.4g} vs threshold {:.4g}".format(*ref))
        m.update(trials=trials, max_excess_se=float(max(over)), dominance=ok_dom,
                 ratio_threshold=thr, ratio_at_1e4=ratio_end, window=(lo, hi), ratio_ok=ok_ratio)
        return ok_dom and ok_ratio
    return _timed("C7", "second-moment envelope", 600, body)


def limiting_ratio(delta: float, b: float, d: float, lambda3: float) -> float:
    """Stationary z/y ratio of the envelope recursion (leading order in 1/n)."""
    return 2 * delta * b / d / ((1 - delta) * lambda3 - 2 * b / d)


def reference_ratio_check(n: int = 20_000, d: int = 50, b: int = 5, lambda3: float = 0.72,
                          delta: float = 0.3) -> tuple[float, float, float, float]:
    """Envelope ratio inside the concentration window for a scalar instance large enough for it to open.

    Returns (window start, window end, min ratio on 9 points of the window, threshold).
    """
    lam2 = 2 * b / d
    lo, hi = concentration_window(n, d, b, delta, lam2, lambda3, 1.0)
    a11 = 1 - 8 * delta * b / (d * n) + 16 * delta**2 * b / (d * n**2)
    a12 = 16 * delta**2 * b / (d * n**2)
    a21 = 8 * delta**2 * b / (d * n)
    a22 = 1 - 4 * delta * (1 - delta) * lambda3 / n
    A = np.array([[a11, a12], [a21, a22]])
    v = np.array([1.0, n - 2.0])
    ratios = []
    if lo <= hi:
        for t in np.linspace(math.ceil(lo), math.floor(hi), 9).astype(int):
            w = np.linalg.matrix_power(A, int(t)) @ v
            ratios.append(w[1] / w[0])
    thr = math.sqrt(delta * b / (d * (lambda3 - lam2)))
    return lo, hi, float(min(ratios)) if ratios else math.inf, thr


# ------------------------------------------------------------------ C8

def c8_jump(quick: bool = False) -> CriterionResult:
    def body(m: dict, notes: list) -> bool:
        g = generate_clustered_regular(500, 50, 5, GRAPH_SEED)
        spec = compute_spectrum(g)
        cfg = jump_default_parameters(g, 0.3, spec)
        trials = 10 if quick else 50
        paired = 4 if quick else 30
        single = map_ordered(
            lambda i: weak_reconstruction_error(jump_labeling_run(g, cfg, trial_seed(MASTER_SEED, i)).labels, g.chi).error_fraction,
            range(trials),
        )
        boosted = map_ordered(
            lambda i: weak_reconstruction_error(boosted_jump_run(g, cfg, 11, trial_seed(MASTER_SEED, i)).labels, g.chi).error_fraction,
            range(paired),
        )
        frac = float(np.mean(np.asarray(single) <= 0.15))
        med_single = float(np.median(single[:paired]))
        med_boost = float(np.median(boosted))
        m.update(taus=(cfg.tau_s, cfg.tau_s_tilde, cfg.tau_e, cfg.tau_e_tilde), trials=trials,
                 frac_err_le_0_15=frac, max_error=float(max(single)),
                 median_single=med_single, median_boosted=med_boost)
        return frac >= 0.9 and med_boost <= med_single
    return _timed("C8", "Jump-Labeling reconstruction", 900, body)


# ------------------------------------------------------------------ C9

def c9_sign(quick: bool = False) -> CriterionResult:
    def body(m: dict, notes: list) -> bool:
        eps = 0.2
        g = generate_clustered_regular(512, 32, 1, GRAPH_SEED)
        spec = compute_spectrum(g)
        T, ell = sign_default_parameters(spec, eps)
        n = g.n
        trials = 4 if quick else 20

        def one(i):
            r = sign_labeling_run(g, T, ell, trial_seed(MASTER_SEED, i))
            s = csl_evaluate(r.labels, g.chi, eps)
            cov = stopping_time_coverage(r.freeze_local, T, n)
            lo, hi = 0.375 * T * n, 0.75 * T * n
            cov_alt = float(np.mean((r.freeze_local >= lo) & (r.freeze_local <= hi)))
            return s, cov, cov_alt

        res = map_ordered(one, range(trials))
        ok_csl = [s.c1_observed <= 4 * eps and s.c2_observed >= 1 / 6 and s.gamma <= 0.2 for s, _, _ in res]
        covs = [c for _, c, _ in res]
        frac = float(np.mean(ok_csl))
        cov_ok = all(c >= 1 - 1 / n for c in covs)
        m.update(T=T, ell=ell, csl_pass_fraction=frac,
                 max_c1=max(s.c1_observed for s, _, _ in res),
                 min_c2=min(s.c2_observed for s, _, _ in res),
                 max_gamma=max(s.gamma for s, _, _ in res),
                 mean_ref_distance=float(np.mean([s.reference_distance for s, _, _ in res])),
                 min_coverage=min(covs))
        notes.append(f"coverage of [3Tn/8, 3Tn/4] (informational): min {min(c for _, _, c in res):.4f}")
        return frac >= 0.8 and cov_ok
    return _timed("C9", "Sign-Labeling CSL", 900, body)


# ------------------------------------------------------------------ C10

def c10_schedules(quick: bool = False) -> CriterionResult:
    def body(m: dict, notes: list) -> bool:
        g = generate_clustered_regular(200, 10, 1, GRAPH_SEED)
        n = g.n
        need = math.ceil(0.6 * 4 * n * math.log(n))
        reps = [uniformity_report(ActivationSchedule.generate(g, need, trial_seed(MASTER_SEED, i)), 2, 4, 0.05)
                for i in range(20)]
        fr = [r.fraction for r in reps]
        g2 = generate_clustered_regular(100, 10, 1, GRAPH_SEED)
        tau = 100
        trials = 1000 if quick else 10_000

        def block(c):
            tot = 0.0
            for i in range(c[0], c[0] + c[1]):
                rounds = 12_000
                while True:
                    sc = ActivationSchedule.generate(g2, rounds, trial_seed(MASTER_SEED + 1, i))
                    times = sc.activation_times(tau)[:, tau - 1]
                    if np.all(times > 0):
                        break
                    rounds *= 2
                tot += float(times.mean())
            return tot

        total = sum(map_ordered(block, _chunks(trials, 500)))
        mean_T = total / trials
        rel = abs(mean_T - 0.5 * 100 * tau) / (0.5 * 100 * tau)
        m.update(mean_uniform_fraction=float(np.mean(fr)), min_uniform_fraction=float(min(fr)),
                 first_cond=float(np.mean([r.first_ok for r in reps])),
                 second_cond=float(np.mean([r.second_ok for r in reps])),
                 mean_T_u_100=mean_T, rel_dev=rel)
        return float(np.mean(fr)) >= 0.95 and rel <= 0.05
    return _timed("C10", "schedule statistics", 120, body)


# ------------------------------------------------------------------ C11

def c11_projection(quick: bool = False) -> CriterionResult:
    def body(m: dict, notes: list) -> bool:
        n = 1000
        chi = np.ones(n)
        chi[n // 2:] = -1
        total = 10_000 if quick else 100_000
        betas = (4.0, 16.0, 64.0)

        def block(c):
            rng = generator(trial_seed(MASTER_SEED, c[0]))
            x = (2 * rng.integers(0, 2, size=(c[1], n), dtype=np.int8) - 1).astype(np.float64)
            ap2 = x.sum(axis=1) ** 2 / n
            ay2 = (x @ chi) ** 2 / n
            z2 = n - ap2 - ay2
            return np.array([np.count_nonzero(z2 > n * b * ay2) for b in betas])

        hits = sum(map_ordered(block, _chunks(total, 5000)))
        probs = hits / total
        bounds = [PROJECTION_C * (1 / math.sqrt(b) + 1 / math.sqrt(n)) for b in betas]
        m.update(samples=total, C=PROJECTION_C, probs=[float(p) for p in probs], bounds=bounds)
        return all(p <= b for p, b in zip(probs, bounds))
    return _timed("C11", "initial projection", 120, body)


ALL = [c1_structural, c2_conservation, c3_first_moment, c4_expected_ay, c5_one_step, c6_second_moment,
       c7_envelope, c8_jump, c9_sign, c10_schedules, c11_projection]
QUICK = [c1_structural, c2_conservation, c3_first_moment, c4_expected_ay, c5_one_step, c6_second_moment, c11_projection]


def run_suite(quick: bool = False, emit: Callable[[str], None] = print) -> list[CriterionResult]:
    out = []
    for fn in (QUICK if quick else ALL):
        r = fn(quick=quick)
        emit(r.line())
        for note in r.notes:
            emit(f"       {note}")
        out.append(r)
    return out
