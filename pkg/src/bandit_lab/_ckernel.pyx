# cython: language_level=3
"""Compiled episode loop for the built-in policies against table sources.

Mirrors the pure-Python classes operation for operation, in the same
floating-point order, so that both paths yield identical records.
Python's ``max(a, b)`` keeps ``a`` unless ``b > a``; the helpers below do
the same so signed zeros and ties resolve identically.
"""

import numpy as np

from libc.math cimport ceil, exp, log, sqrt, INFINITY, NAN, fabs, nextafter

cdef enum:
    SAPO = 0
    EXP3P = 1
    UCB1 = 2
    EPSG = 3

_VIOLATION_NAMES = (
    "prob_sum", "prob_positive", "bad_prob_formula", "lcb_monotone", "blcb_monotone",
    "bucb_monotone", "lcb_star_monotone", "hmu_range", "phase_count_bound",
    "detections_bound", "phase_length_power_of_two", "phase_mass_identity",
    "threshold_identity", "eviction_margin", "prefix_min_nonpositive",
)
cdef enum:
    V_PSUM = 0
    V_PPOS = 1
    V_BADP = 2
    V_LCB = 3
    V_BLCB = 4
    V_BUCB = 5
    V_STAR = 6
    V_HMU = 7
    V_PHASES = 8
    V_DETECT = 9
    V_POW2 = 10
    V_MASS = 11
    V_THR = 12
    V_EVICT = 13
    V_PMIN = 14
    N_VIOL = 15

cdef double IDENTITY_RTOL = 1e-12


cdef inline double pymax(double a, double b) nogil:
    return b if b > a else a


cdef inline double pymin(double a, double b) nogil:
    return b if b < a else a


cdef inline long long sample(double[:] p, int K, double u) nogil:
    cdef double c = 0.0
    cdef long long last = 0
    cdef int i
    for i in range(K):
        if p[i] > 0.0:
            last = i
        c += p[i]
        if u < c:
            return i
    return last


cdef class _Exp3:
    cdef int K
    cdef double beta, eta, gamma
    cdef double[::1] w
    cdef double[::1] e

    def __init__(self, int K, double beta, double eta, double gamma):
        self.K = K
        self.beta = beta
        self.eta = eta
        self.gamma = gamma
        self.w = np.zeros(K)
        self.e = np.zeros(K)

    cdef void probs(self, double[:] p):
        cdef int i, K = self.K
        cdef double top = self.w[0], z = 0.0, g = self.gamma
        for i in range(1, K):
            if self.w[i] > top:
                top = self.w[i]
        for i in range(K):
            self.e[i] = exp(self.w[i] - top)
        for i in range(K):
            z += self.e[i]
        for i in range(K):
            p[i] = (1.0 - g) * (self.e[i] / z) + g / K

    cdef void update(self, int arm, double reward, double[:] p):
        cdef int i
        cdef double gain
        for i in range(self.K):
            gain = reward if i == arm else 0.0
            self.w[i] += self.eta * ((gain + self.beta) / p[i])


cdef _Exp3 make_exp3(int K, long long horizon, double delta):
    cdef double beta = sqrt(log(K / delta) / (horizon * K))
    cdef double eta = 0.95 * sqrt(log(K) / (horizon * K))
    cdef double gamma = pymin(0.5, 1.05 * sqrt(K * log(K) / horizon))
    return _Exp3(K, beta, eta, gamma)


def run(int code, params, long long n, int K,
        const double[:, ::1] means, bern_in, const double[:, ::1] uenv, const double[::1] upol,
        long long rv_arm, long long rv_lo, long long rv_hi, double rv_thr, double rv_mean,
        bint check, bint trace):
    """Run one episode; see ``bandit_lab.kernels.run_compiled``."""
    cdef double[::1] prm = np.asarray(params, dtype=np.float64)
    cdef unsigned char[::1] bern = np.asarray(bern_in, dtype=np.uint8)

    arms_np = np.zeros(n, dtype=np.int64)
    probs_np = np.zeros((n, K))
    rewards_np = np.zeros(n)
    cf_np = np.zeros((n, K))
    trace_np = np.full((n, K), np.nan) if trace else np.zeros((0, K))
    cdef long long[::1] arms_out = arms_np
    cdef double[:, ::1] probs_out = probs_np
    cdef double[::1] rewards_out = rewards_np
    cdef double[:, ::1] cf_out = cf_np
    cdef double[:, ::1] trace_out = trace_np
    cdef long long[::1] viol = np.zeros(N_VIOL, dtype=np.int64)

    events = []
    cdef double[::1] p = np.zeros(K)
    cdef double[::1] x = np.zeros(K)

    # table environment state
    cdef long long revert_after = -1
    cdef long long window_plays = 0

    # generic per-arm counters (UCB1, eps-greedy)
    cdef long long[::1] plays = np.zeros(K, dtype=np.int64)
    cdef double[::1] sums = np.zeros(K)
    cdef double[::1] means_hat = np.zeros(K)

    # SAPO state
    cdef double log_term = 0.0, wid = 0.0, deficit_thr = 0.0, min_plays = 0.0
    cdef double gap = 0.0, pp = 0.0, c4a = 0.0, ho_delta = 0.0, bucb0 = 1.0
    cdef long long E0 = 0, M = 0
    if code == SAPO:
        log_term = prm[0]; wid = prm[1]; deficit_thr = prm[2]; min_plays = prm[3]
        gap = prm[4]; pp = prm[5]; c4a = prm[6]; E0 = <long long>prm[7]; M = <long long>prm[8]
        ho_delta = prm[9]; bucb0 = prm[10]
    cdef long long[::1] T = np.zeros(K, dtype=np.int64)
    cdef double[::1] sum_r = np.zeros(K)
    cdef double[::1] hmu = np.zeros(K)
    cdef double[::1] bnum = np.zeros(K)
    cdef double[::1] bmu = np.zeros(K)
    cdef double[::1] lcb = np.zeros(K)
    cdef double[::1] blcb = np.zeros(K)
    cdef double[::1] bucb = np.full(K, bucb0)
    cdef double[::1] width = np.full(K, np.inf)
    cdef unsigned char[::1] active = np.ones(K, dtype=np.uint8)
    cdef unsigned char[::1] cand = np.zeros(K, dtype=np.uint8)
    cdef double[::1] emu = np.zeros(K)
    cdef double[::1] egp = np.zeros(K)
    cdef long long[::1] L0 = np.zeros(K, dtype=np.int64)
    cdef long long[::1] Lc = np.zeros(K, dtype=np.int64)
    cdef long long[::1] pstart = np.zeros(K, dtype=np.int64)
    cdef long long[::1] Ecnt = np.zeros(K, dtype=np.int64)
    cdef long long[::1] pcount = np.zeros(K, dtype=np.int64)
    cdef double[::1] prefix = np.zeros(K)
    cdef double[::1] pmin = np.zeros(K)
    cdef double[::1] s_lcb = np.zeros(K)
    cdef double[::1] s_blcb = np.zeros(K)
    cdef double[::1] s_bucb = np.zeros(K)
    cdef double lcb_star = 0.0, deficit = 0.0, s_star = 0.0
    cdef bint switched = False
    cdef long long switch_round = -1
    switch_reason = None
    cdef _Exp3 ex = None

    if code == EXP3P:
        ex = _Exp3(K, prm[0], prm[1], prm[2])

    cdef long long t, i, j, arm, n_active, n_cand, spare, ratio
    cdef double u, m, reward, bad_mass, share, bwidth, star, total, stat, thr, p_i, best_val, v, eps, base_p, target, ref
    cdef bint do_switch
    cdef long long sw_arm
    cdef int sw_kind

    for t in range(1, n + 1):
        # counterfactual rewards given the history so far
        for i in range(K):
            m = means[t - 1, i]
            if i == rv_arm and revert_after >= 0 and t > revert_after:
                m = rv_mean
            if bern[i]:
                x[i] = 1.0 if uenv[t - 1, i] < m else 0.0
            else:
                x[i] = m
        u = upol[t - 1]

        # ---- selection ----
        if code == SAPO:
            if not switched:
                do_switch = False
                for i in range(K):
                    if active[i] and (bmu[i] < blcb[i] or bmu[i] > bucb[i]):
                        do_switch = True
                        sw_kind = 0
                        sw_arm = i
                        break
                if not do_switch and deficit > deficit_thr:
                    do_switch = True
                    sw_kind = 1
                    sw_arm = -1
                if do_switch:
                    switched = True
                    switch_reason = ("unbiased_interval", "reward_deficit")[sw_kind]
                    events.append((t, "switch", None if sw_arm < 0 else int(sw_arm), {"reason": switch_reason}))
                    switch_round = t
                    ex = make_exp3(K, n - t + 1, ho_delta)
                else:
                    n_cand = 0
                    n_active = 0
                    for i in range(K):
                        cand[i] = 0
                        if active[i]:
                            n_active += 1
                            if T[i] >= 1 and T[i] >= min_plays and hmu[i] + gap * width[i] < lcb_star:
                                cand[i] = 1
                                n_cand += 1
                    if n_cand > 0:
                        if n_cand == n_active:
                            spare = -1
                            best_val = -INFINITY
                            for i in range(K):
                                if cand[i]:
                                    v = pymax(lcb[i], blcb[i])
                                    if v > best_val:
                                        spare = i
                                        best_val = v
                            if spare < 0:
                                for i in range(K):
                                    if cand[i]:
                                        spare = i
                                        break
                            cand[spare] = 0
                            events.append((t, "guard", int(spare), {}))
                        for i in range(K):
                            if cand[i]:
                                emu[i] = hmu[i]
                                egp[i] = gap * width[i]
                                L0[i] = <long long>ceil(pp * K / (egp[i] * egp[i]))
                                if check and not (egp[i] > 0.0 and emu[i] + egp[i] < lcb_star):
                                    viol[V_EVICT] += 1
                                active[i] = 0
                                pstart[i] = t
                                Lc[i] = L0[i]
                                Ecnt[i] = 0
                                pcount[i] = 1
                                prefix[i] = 0.0
                                pmin[i] = 0.0
                                events.append((t, "evicted", int(i), {"emu": emu[i], "egp": egp[i], "L0": int(L0[i])}))
            if switched:
                ex.probs(p)
                arm = sample(p, K, u)
            else:
                bad_mass = 0.0
                n_active = 0
                for i in range(K):
                    if active[i]:
                        n_active += 1
                    else:
                        p[i] = (<double>L0[i]) / ((<double>K) * (<double>Lc[i]))
                        bad_mass += p[i]
                share = (1.0 - bad_mass) / n_active
                for i in range(K):
                    if active[i]:
                        p[i] = share
                if check:
                    total = 0.0
                    for i in range(K):
                        total += p[i]
                        if not p[i] > 0.0:
                            viol[V_PPOS] += 1
                        if not active[i]:
                            if p[i] != (<double>L0[i]) / ((<double>K) * (<double>Lc[i])) or p[i] > 1.0 / K:
                                viol[V_BADP] += 1
                    if fabs(total - 1.0) > 1e-12:
                        viol[V_PSUM] += 1
                arm = sample(p, K, u)
        elif code == EXP3P:
            ex.probs(p)
            arm = sample(p, K, u)
        elif code == UCB1:
            if t <= K:
                arm = t - 1
            else:
                arm = 0
                best_val = -INFINITY
                for i in range(K):
                    v = means_hat[i] + sqrt(2.0 * log(<double>t) / plays[i])
                    if v > best_val:
                        arm = i
                        best_val = v
            for i in range(K):
                p[i] = 0.0
            p[arm] = 1.0
        else:
            eps = prm[0] / t
            if eps > 1.0:
                eps = 1.0
            arm = -1
            best_val = -INFINITY
            for i in range(K):
                if plays[i] == 0:
                    arm = i
                    break
                v = sums[i] / plays[i]
                if v > best_val:
                    arm = i
                    best_val = v
            base_p = eps / K
            for i in range(K):
                p[i] = base_p
            p[arm] = base_p + (1.0 - eps)
            arm = sample(p, K, u)

        # ---- environment observes the choice ----
        if rv_arm >= 0 and revert_after < 0 and arm == rv_arm and rv_lo <= t <= rv_hi:
            window_plays += 1
            if window_plays > rv_thr:
                revert_after = t

        reward = x[arm]
        arms_out[t - 1] = arm
        rewards_out[t - 1] = reward
        for i in range(K):
            probs_out[t - 1, i] = p[i]
            cf_out[t - 1, i] = x[i]

        # ---- feedback ----
        if code == SAPO:
            if switched:
                ex.update(arm, reward, p)
                continue
            if check:
                for i in range(K):
                    s_lcb[i] = lcb[i]
                    s_blcb[i] = blcb[i]
                    s_bucb[i] = bucb[i]
                s_star = lcb_star
            T[arm] += 1
            sum_r[arm] += reward
            bnum[arm] += reward / p[arm]
            bwidth = sqrt(wid * K * log_term / t)
            for i in range(K):
                bmu[i] = bnum[i] / t
                blcb[i] = pymax(blcb[i], bmu[i] - bwidth)
                bucb[i] = pymin(bucb[i], bmu[i] + bwidth)
            hmu[arm] = sum_r[arm] / T[arm]
            width[arm] = sqrt(wid * log_term / T[arm])
            lcb[arm] = pymax(lcb[arm], hmu[arm] - width[arm])
            star = lcb_star
            for i in range(K):
                star = pymax(star, lcb[i])
                star = pymax(star, blcb[i])
            lcb_star = star
            deficit += star - reward
            for i in range(K):
                if not active[i]:
                    pmin[i] = pymin(pmin[i], prefix[i])
                    if i == arm:
                        prefix[i] += reward - emu[i]
            if check:
                for i in range(K):
                    if lcb[i] < s_lcb[i]:
                        viol[V_LCB] += 1
                    if blcb[i] < s_blcb[i]:
                        viol[V_BLCB] += 1
                    if bucb[i] > s_bucb[i]:
                        viol[V_BUCB] += 1
                    if T[i] >= 1 and not (0.0 <= hmu[i] <= 1.0):
                        viol[V_HMU] += 1
                if lcb_star < s_star:
                    viol[V_STAR] += 1

            # testing of evicted arms
            for i in range(K):
                if active[i]:
                    continue
                p_i = (<double>L0[i]) / ((<double>K) * (<double>Lc[i]))
                stat = prefix[i] - pmin[i]
                thr = c4a * egp[i] * Lc[i] * p_i
                if trace:
                    trace_out[t - 1, i] = stat
                if check:
                    ratio = Lc[i] // L0[i]
                    if Lc[i] < L0[i] or Lc[i] % L0[i] != 0 or (ratio & (ratio - 1)) != 0:
                        viol[V_POW2] += 1
                    if Ecnt[i] > E0:
                        viol[V_DETECT] += 1
                    if pcount[i] > M:
                        viol[V_PHASES] += 1
                    if pmin[i] > 0.0:
                        viol[V_PMIN] += 1
                    target = (<double>L0[i]) / K
                    if fabs(Lc[i] * p_i - target) > IDENTITY_RTOL * target:
                        viol[V_MASS] += 1
                    ref = c4a * egp[i] * target
                    if fabs(thr - ref) > IDENTITY_RTOL * ref:
                        viol[V_THR] += 1
                if stat >= thr:
                    if Lc[i] > L0[i]:
                        Lc[i] = Lc[i] // 2
                    else:
                        Lc[i] = L0[i]
                    Ecnt[i] += 1
                    pstart[i] = t + 1
                    pcount[i] += 1
                    prefix[i] = 0.0
                    pmin[i] = 0.0
                    events.append((t, "detection", int(i), {"stat": stat, "threshold": thr, "E": int(Ecnt[i]), "L": int(Lc[i])}))
                    if Ecnt[i] >= E0:
                        switched = True
                        switch_reason = "detections"
                        events.append((t, "switch", int(i), {"reason": switch_reason}))
                        if t + 1 <= n:
                            switch_round = t + 1
                            ex = make_exp3(K, n - t, ho_delta)
                        break
                elif t == pstart[i] + Lc[i] - 1:
                    Lc[i] = Lc[i] * 2
                    pstart[i] = t + 1
                    pcount[i] += 1
                    prefix[i] = 0.0
                    pmin[i] = 0.0
                    events.append((t, "phase_end", int(i), {"L": int(Lc[i])}))
        elif code == EXP3P:
            ex.update(arm, reward, p)
        else:
            plays[arm] += 1
            sums[arm] += reward
            means_hat[arm] = sums[arm] / plays[arm]

    return {
        "arms": arms_np,
        "probs": probs_np,
        "rewards": rewards_np,
        "cf": cf_np,
        "events": events,
        "switch_round": None if switch_round < 0 else int(switch_round),
        "switch_reason": switch_reason,
        "violations": {name: int(viol[k]) for k, name in enumerate(_VIOLATION_NAMES)},
        "trace": trace_np if trace else None,
    }
