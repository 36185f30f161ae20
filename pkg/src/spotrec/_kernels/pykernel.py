"""Pure-Python Gibbs sweep kernels.

Fallback for environments where the compiled extension is unavailable.
Every arithmetic expression here must stay in lockstep with _gibbs.pyx,
statement for statement: both backends consume one shared uniform
stream and are required to produce bit-identical assignments.
"""

import numpy as np


def sweep_b(z, users, spots, slots, tok_words, tok_off,
            n_g, n_gu, n_gl, n_gt, n_gtok, n_gw,
            alpha, beta, gamma, delta, kappa, uniforms):
    num_records = z.shape[0]
    num_groups = n_g.shape[0]
    num_users = n_gu.shape[1]
    num_spots = n_gl.shape[1]
    num_slots = n_gt.shape[1]
    num_words = n_gw.shape[1]
    probs = np.empty(num_groups)
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


def sweep_mix(z, switches, users, spots, slots, tok_words, tok_off,
              n_g, n_gu, n_gl, n_gt, n_gtok, n_gw,
              n_lw, n_ltok_mu, n_tw, n_ttok_rho, n_sw, n_ltok,
              alpha, beta, gamma, delta, kappa, epsilon, iota, eta_c,
              has_mu, has_rho, use_tau, uniforms):
    num_records = z.shape[0]
    num_groups = n_g.shape[0]
    num_users = n_gu.shape[1]
    num_spots = n_gl.shape[1]
    num_slots = n_gt.shape[1]
    num_words = n_gw.shape[1]
    arity = n_sw.shape[1]
    sig_col = arity - 1
    rho_col = 1 if has_mu else 0
    max_m = 0
    for d in range(num_records):
        m = tok_off[d + 1] - tok_off[d]
        if m > max_m:
            max_m = m
    probs = np.empty(num_groups)
    tok_base = np.empty(max(max_m, 1))
    qs = np.empty(3)
    pos = 0
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
            s = switches[i]
            n_sw[l, s] -= 1
            n_ltok[l] -= 1
            if has_mu and s == 0:
                n_lw[l, w] -= 1
                n_ltok_mu[l] -= 1
            elif has_rho and s == rho_col:
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
