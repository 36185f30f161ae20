# cython: boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""Compiled Gibbs sweep kernels.

Mirrors pykernel.py statement for statement; both consume the same
uniform stream and must produce bit-identical assignments.
"""

import numpy as np

cimport numpy as cnp

ctypedef cnp.int64_t i64


def sweep_b(i64[::1] z, i64[::1] users, i64[::1] spots, i64[::1] slots,
            i64[::1] tok_words, i64[::1] tok_off,
            i64[::1] n_g, i64[:, ::1] n_gu, i64[:, ::1] n_gl, i64[:, ::1] n_gt,
            i64[::1] n_gtok, i64[:, ::1] n_gw,
            double alpha, double beta, double gamma, double delta, double kappa,
            double[::1] uniforms):
    cdef Py_ssize_t num_records = z.shape[0]
    cdef Py_ssize_t num_groups = n_g.shape[0]
    cdef Py_ssize_t num_users = n_gu.shape[1]
    cdef Py_ssize_t num_spots = n_gl.shape[1]
    cdef Py_ssize_t num_slots = n_gt.shape[1]
    cdef Py_ssize_t num_words = n_gw.shape[1]
    probs_arr = np.empty(num_groups)
    cdef double[::1] probs = probs_arr
    cdef Py_ssize_t d, g, i
    cdef i64 u, l, t, w, old, new, ng
    cdef double p, total, target, acc, sig_denom
    for d in range(num_records):
        u = users[d]
        l = spots[d]
        t = slots[d]
        old = z[d]
        n_g[old] -= 1
        n_gu[old, u] -= 1
        n_gl[old, l] -= 1
        n_gt[old, t] -= 1
        for i in range(tok_off[d], tok_off[d + 1]):
            w = tok_words[i]
            n_gw[old, w] -= 1
            n_gtok[old] -= 1
        total = 0.0
        for g in range(num_groups):
            ng = n_g[g]
            p = ng + alpha
            p *= (n_gu[g, u] + gamma) / (ng + gamma * num_users)
            p *= (n_gl[g, l] + beta) / (ng + beta * num_spots)
            p *= (n_gt[g, t] + kappa) / (ng + kappa * num_slots)
            sig_denom = n_gtok[g] + delta * num_words
            for i in range(tok_off[d], tok_off[d + 1]):
                p *= (n_gw[g, tok_words[i]] + delta) / sig_denom
            probs[g] = p
            total += p
        target = uniforms[d] * total
        acc = 0.0
        new = num_groups - 1
        for g in range(num_groups):
            acc += probs[g]
            if target < acc:
                new = g
                break
        z[d] = new
        n_g[new] += 1
        n_gu[new, u] += 1
        n_gl[new, l] += 1
        n_gt[new, t] += 1
        for i in range(tok_off[d], tok_off[d + 1]):
            w = tok_words[i]
            n_gw[new, w] += 1
            n_gtok[new] += 1


def sweep_mix(i64[::1] z, i64[::1] switches,
              i64[::1] users, i64[::1] spots, i64[::1] slots,
              i64[::1] tok_words, i64[::1] tok_off,
              i64[::1] n_g, i64[:, ::1] n_gu, i64[:, ::1] n_gl, i64[:, ::1] n_gt,
              i64[::1] n_gtok, i64[:, ::1] n_gw,
              i64[:, ::1] n_lw, i64[::1] n_ltok_mu,
              i64[:, ::1] n_tw, i64[::1] n_ttok_rho,
              i64[:, ::1] n_sw, i64[::1] n_ltok,
              double alpha, double beta, double gamma, double delta, double kappa,
              double epsilon, double iota, double eta_c,
              bint has_mu, bint has_rho, bint use_tau,
              double[::1] uniforms):
    cdef Py_ssize_t num_records = z.shape[0]
    cdef Py_ssize_t num_groups = n_g.shape[0]
    cdef Py_ssize_t num_users = n_gu.shape[1]
    cdef Py_ssize_t num_spots = n_gl.shape[1]
    cdef Py_ssize_t num_slots = n_gt.shape[1]
    cdef Py_ssize_t num_words = n_gw.shape[1]
    cdef Py_ssize_t arity = n_sw.shape[1]
    cdef Py_ssize_t sig_col = arity - 1
    cdef Py_ssize_t rho_col = 1 if has_mu else 0
    cdef Py_ssize_t max_m = 0
    cdef Py_ssize_t d, g, i, j, m, s
    for d in range(num_records):
        m = tok_off[d + 1] - tok_off[d]
        if m > max_m:
            max_m = m
    probs_arr = np.empty(num_groups)
    tok_base_arr = np.empty(max(max_m, 1))
    qs_arr = np.empty(3)
    cdef double[::1] probs = probs_arr
    cdef double[::1] tok_base = tok_base_arr
    cdef double[::1] qs = qs_arr
    cdef Py_ssize_t pos = 0
    cdef i64 u, l, t, w, old, new, ng, s_old, s_new
    cdef double p, b, total, target, acc, sig_denom, sw_denom, wsig, q_total
    for d in range(num_records):
        u = users[d]
        l = spots[d]
        t = slots[d]
        old = z[d]
        m = tok_off[d + 1] - tok_off[d]
        n_g[old] -= 1
        n_gu[old, u] -= 1
        n_gl[old, l] -= 1
        n_gt[old, t] -= 1
        for i in range(tok_off[d], tok_off[d + 1]):
            w = tok_words[i]
            s_old = switches[i]
            n_sw[l, s_old] -= 1
            n_ltok[l] -= 1
            if has_mu and s_old == 0:
                n_lw[l, w] -= 1
                n_ltok_mu[l] -= 1
            elif has_rho and s_old == rho_col:
                n_tw[t, w] -= 1
                n_ttok_rho[t] -= 1
            else:
                n_gw[old, w] -= 1
                n_gtok[old] -= 1
        # group-independent parts of each token's mixture predictive
        sw_denom = n_ltok[l] + eta_c * arity
        wsig = (n_sw[l, sig_col] + eta_c) / sw_denom
        for j in range(m):
            w = tok_words[tok_off[d] + j]
            b = 0.0
            if has_mu:
                b += (n_sw[l, 0] + eta_c) / sw_denom * (
                    (n_lw[l, w] + epsilon) / (n_ltok_mu[l] + epsilon * num_words)
                )
            if has_rho:
                b += (n_sw[l, rho_col] + eta_c) / sw_denom * (
                    (n_tw[t, w] + iota) / (n_ttok_rho[t] + iota * num_words)
                )
            tok_base[j] = b
        total = 0.0
        for g in range(num_groups):
            ng = n_g[g]
            p = ng + alpha
            p *= (n_gu[g, u] + gamma) / (ng + gamma * num_users)
            p *= (n_gl[g, l] + beta) / (ng + beta * num_spots)
            if use_tau:
                p *= (n_gt[g, t] + kappa) / (ng + kappa * num_slots)
            sig_denom = n_gtok[g] + delta * num_words
            for j in range(m):
                w = tok_words[tok_off[d] + j]
                p *= tok_base[j] + wsig * ((n_gw[g, w] + delta) / sig_denom)
            probs[g] = p
            total += p
        target = uniforms[pos] * total
        pos += 1
        acc = 0.0
        new = num_groups - 1
        for g in range(num_groups):
            acc += probs[g]
            if target < acc:
                new = g
                break
        z[d] = new
        n_g[new] += 1
        n_gu[new, u] += 1
        n_gl[new, l] += 1
        n_gt[new, t] += 1
        # resample each token's switch given the new group, urn-style
        for i in range(tok_off[d], tok_off[d + 1]):
            w = tok_words[i]
            q_total = 0.0
            if has_mu:
                qs[0] = (n_sw[l, 0] + eta_c) * (
                    (n_lw[l, w] + epsilon) / (n_ltok_mu[l] + epsilon * num_words)
                )
                q_total += qs[0]
            if has_rho:
                qs[rho_col] = (n_sw[l, rho_col] + eta_c) * (
                    (n_tw[t, w] + iota) / (n_ttok_rho[t] + iota * num_words)
                )
                q_total += qs[rho_col]
            qs[sig_col] = (n_sw[l, sig_col] + eta_c) * (
                (n_gw[new, w] + delta) / (n_gtok[new] + delta * num_words)
            )
            q_total += qs[sig_col]
            target = uniforms[pos] * q_total
            pos += 1
            acc = 0.0
            s_new = sig_col
            for s in range(arity):
                acc += qs[s]
                if target < acc:
                    s_new = s
                    break
            switches[i] = s_new
            n_sw[l, s_new] += 1
            n_ltok[l] += 1
            if has_mu and s_new == 0:
                n_lw[l, w] += 1
                n_ltok_mu[l] += 1
            elif has_rho and s_new == rho_col:
                n_tw[t, w] += 1
                n_ttok_rho[t] += 1
            else:
                n_gw[new, w] += 1
                n_gtok[new] += 1
