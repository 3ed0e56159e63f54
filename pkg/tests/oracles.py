"""Reference implementations written independently of the package code.

Each one takes a different route to the same number: moments instead of
rates, per-request recursions instead of event queues, exhaustive search
instead of greedy scoring.
"""
from __future__ import annotations

import copy
import math

import numpy as np


def pk_wait_ms(lam: float, s_ms: float, es2_ms2: float) -> float:
    """P-K mean wait from the first two service moments (ms, ms^2)."""
    rho = lam * s_ms / 1000.0
    if rho >= 1:
        return math.inf
    return (lam / 1000.0) * es2_ms2 / (2.0 * (1.0 - rho))


def ps_response_ms(lam: float, s_ms: float) -> float:
    rho = lam * s_ms / 1000.0
    return math.inf if rho >= 1 else s_ms / (1.0 - rho)


def mgc_ps_response_ms(lam: float, s_ms: float, c: float) -> float:
    load = lam * s_ms / 1000.0
    return math.inf if load >= c else c * s_ms / (c - load)


def tpu_moments(lams, execs, switches) -> tuple[float, float, list[float]]:
    """(mean, second moment, per-class means) of service when a switch is paid w.p. 1 - p_i."""
    total = float(sum(lams))
    p = [l / total for l in lams]
    per = [pi * e + (1 - pi) * (e + o) for pi, e, o in zip(p, execs, switches)]
    m1 = sum(pi * s for pi, s in zip(p, per))
    m2 = sum(pi * (pi * e * e + (1 - pi) * (e + o) ** 2) for pi, e, o in zip(p, execs, switches))
    return m1, m2, per


def lindley_fcfs(arrivals: np.ndarray, services: np.ndarray) -> np.ndarray:
    """Completion times of a single FCFS server (per-request recursion)."""
    done = np.empty_like(arrivals)
    free = 0.0
    for i, (a, s) in enumerate(zip(arrivals, services)):
        start = a if a > free else free
        free = start + s
        done[i] = free
    return done


def token_bucket_releases(arrivals, rate: float, burst: float) -> list[float]:
    """Greedy shaper by counting: releases j..k (k - j + 1 of them) need k - j + 1 - burst tokens of refill.

    The bucket starts full at time 0, which acts as one more release at t = 0.
    """
    out: list[float] = []
    for k, a in enumerate(arrivals):
        t = max(a, out[-1] if out else -math.inf, (k + 1 - burst) / rate)
        for j in range(k):
            t = max(t, out[j] + (k - j + 1 - burst) / rate)
        out.append(t)
    return out


def brute_force_place(app, cluster, policy, heuristic_key):
    """Try every (node, device) by committing on a copy and re-predicting from scratch."""
    from edgesim.placement import PlacementDecision, commit, current_predictions

    best = None
    for ni, node in enumerate(cluster.nodes):
        for di, dev in enumerate(node.devices):
            dnn = cluster.profiles[app.dnn]
            if not dnn.supports(dev.model.kind):
                continue
            trial = copy.deepcopy(cluster)
            tnode = trial.nodes[ni]
            tdev = tnode.devices[di]
            commit(trial, app, PlacementDecision(app.app_id, True, tnode.node_id, tdev.device_id))
            if tnode.mem_free < 0 or tdev.mem_free < 0 or tnode.cpu_free < -1e-9:
                continue
            pred = current_predictions(trial, policy.gpu_policy)
            if any(not pred[a.app_id] <= a.tau_ms for _, a in tdev.apps()):
                continue
            util = tdev.utilization()
            if not util < policy.max_rho:
                continue
            key = (heuristic_key(util), ni, di)
            if best is None or key < best[0]:
                best = (key, node.node_id, dev.device_id)
    return None if best is None else (best[1], best[2])
