"""Compiled inner loops.

They live in one module so that numba's on-disk cache is invalidated as a
whole whenever any of them changes (cached callers do not notice edits to
callees in other files).
"""

import math

import numba
import numpy as np


@numba.njit(cache=True)
def nhc_half_kernel(p, eta, p_eta, mu_prime, Q, T, dt, weights, n_respa):
    """In-place numba version of ``nhc_half_step``.

    Every (j, k) chain receives exactly the same sequence of floating-point
    operations as in a per-dof loop; the dofs are merely interleaved in the
    innermost loop so that independent exponentials can overlap.  The scale
    factor for link g is identical on the way down and back up the chain
    (p_eta[g+1] is untouched in between), so it is computed once.
    """
    N, P = p.shape
    M = p_eta.shape[2]
    D = N * P
    pf = p.reshape(D)
    ef = eta.reshape(D, M)
    pe = p_eta.reshape(D, M)
    q_inv = np.empty(D)
    m_inv = np.empty(D)
    for d in range(D):
        q_inv[d] = 1.0 / Q[d % P]
        m_inv[d] = 1.0 / mu_prime[d % P]
    sc = np.empty((M, D))
    for a in range(weights.shape[0]):
        h = weights[a] * dt / (2.0 * n_respa)
        for r in range(n_respa):
            for d in range(D):
                pe[d, M - 1] += 0.5 * h * (pe[d, M - 2] * pe[d, M - 2] * q_inv[d] - T)
            for g in range(M - 2, 0, -1):
                for d in range(D):
                    s = np.exp(-0.25 * h * pe[d, g + 1] * q_inv[d])
                    sc[g, d] = s
                    G = pe[d, g - 1] * pe[d, g - 1] * q_inv[d] - T
                    pe[d, g] = (pe[d, g] * s + 0.5 * h * G) * s
            for d in range(D):
                s = np.exp(-0.25 * h * pe[d, 1] * q_inv[d])
                sc[0, d] = s
                G = pf[d] * pf[d] * m_inv[d] - T
                pe[d, 0] = (pe[d, 0] * s + 0.5 * h * G) * s
            for d in range(D):
                pf[d] *= np.exp(-h * pe[d, 0] * q_inv[d])
                for g in range(M):
                    ef[d, g] += h * pe[d, g] * q_inv[d]
            for d in range(D):
                s = sc[0, d]
                G = pf[d] * pf[d] * m_inv[d] - T
                pe[d, 0] = (pe[d, 0] * s + 0.5 * h * G) * s
            for g in range(1, M - 1):
                for d in range(D):
                    s = sc[g, d]
                    G = pe[d, g - 1] * pe[d, g - 1] * q_inv[d] - T
                    pe[d, g] = (pe[d, g] * s + 0.5 * h * G) * s
            for d in range(D):
                pe[d, M - 1] += 0.5 * h * (pe[d, M - 2] * pe[d, M - 2] * q_inv[d] - T)


@numba.njit(cache=True)
def unstage_into(u, q):
    N, P = u.shape
    for j in range(N):
        u1 = u[j, 0]
        q[j, 0] = u1
        if P > 1:
            q[j, P - 1] = u[j, P - 1] + u1
            for k in range(P - 2, 0, -1):
                # zero-based k is bead k+1
                q[j, k] = u[j, k] + k / (k + 1.0) * q[j, k + 1] + u1 / (k + 1.0)


@numba.njit(cache=True)
def staging_force_into(q, alpha, beta, F):
    N, P = q.shape
    for k in range(P):
        vl = 0.0
        for j in range(N):
            right = (q[j + 1, k] if j + 1 < N else 0.0) - q[j, k]
            vr = right + alpha * right * right + beta * right * right * right
            if j == 0:
                r0 = q[0, k]
                vl = r0 + alpha * r0 * r0 + beta * r0 * r0 * r0
            F[j, k] = vr - vl
            vl = vr
    for j in range(N):
        s = 0.0
        for k in range(P):
            s += F[j, k]
        f_prev = F[j, 1] / P if P > 1 else 0.0
        for k in range(2, P):
            f_prev = (k - 1.0) / k * f_prev + F[j, k] / P
            F[j, k] = f_prev
        if P > 1:
            F[j, 1] = F[j, 1] / P
        F[j, 0] = s / P


@numba.njit(cache=True)
def pimd_advance(u, p, eta, p_eta, mu, mu_prime, Q, T, alpha, beta, dt, weights, n_respa, n_steps, thermo):
    N, P = u.shape
    q = np.empty((N, P))
    F = np.empty((N, P))
    kspring = P * T * T
    unstage_into(u, q)
    staging_force_into(q, alpha, beta, F)
    for _ in range(n_steps):
        if thermo:
            nhc_half_kernel(p, eta, p_eta, mu_prime, Q, T, dt, weights, n_respa)
        for j in range(N):
            for k in range(P):
                p[j, k] += 0.5 * dt * (F[j, k] - mu[k] * kspring * u[j, k])
                u[j, k] += dt * p[j, k] / mu_prime[k]
        unstage_into(u, q)
        staging_force_into(q, alpha, beta, F)
        for j in range(N):
            for k in range(P):
                p[j, k] += 0.5 * dt * (F[j, k] - mu[k] * kspring * u[j, k])
        if thermo:
            nhc_half_kernel(p, eta, p_eta, mu_prime, Q, T, dt, weights, n_respa)
    for j in range(N):
        for k in range(P):
            if not (math.isfinite(u[j, k]) and math.isfinite(p[j, k])):
                return False
    return True


@numba.njit(cache=True)
def rp_accel_into(q, PT2, alpha, beta, a):
    """Primitive ring-polymer acceleration: springs P^2 T^2 plus chain forces at every bead."""
    N, P = q.shape
    for j in range(N):
        for k in range(P):
            km = k - 1 if k > 0 else P - 1
            kp = k + 1 if k < P - 1 else 0
            a[j, k] = -PT2 * (2.0 * q[j, k] - q[j, km] - q[j, kp])
    for k in range(P):
        vl = 0.0
        for j in range(N):
            right = (q[j + 1, k] if j + 1 < N else 0.0) - q[j, k]
            vr = right + alpha * right * right + beta * right * right * right
            if j == 0:
                r0 = q[0, k]
                vl = r0 + alpha * r0 * r0 + beta * r0 * r0 * r0
            a[j, k] += vr - vl
            vl = vr


@numba.njit(cache=True)
def rpmd_propagate(q, p, T, alpha, beta, dt, n_steps, every, out):
    """Velocity Verlet on the primitive ring polymer; stores q every ``every`` steps.

    ``out`` has shape (n_steps // every + 1, N, P); slot 0 receives the
    initial positions.  Returns False on a non-finite coordinate.
    """
    N, P = q.shape
    PT2 = (P * T) ** 2
    a = np.empty((N, P))
    rp_accel_into(q, PT2, alpha, beta, a)
    out[0] = q
    for n in range(1, n_steps + 1):
        for j in range(N):
            for k in range(P):
                p[j, k] += 0.5 * dt * a[j, k]
                q[j, k] += dt * p[j, k]
        rp_accel_into(q, PT2, alpha, beta, a)
        for j in range(N):
            for k in range(P):
                p[j, k] += 0.5 * dt * a[j, k]
        if n % every == 0:
            out[n // every] = q
            for j in range(N):
                for k in range(P):
                    if not math.isfinite(q[j, k]):
                        return False
    return True


@numba.njit(cache=True)
def rpmd_observe(q, p, A, T, alpha, beta, dt, n_sub, n_t, out):
    """Propagate one initial condition and record the bead-averaged observables A q_P.

    ``out`` has shape (n_t, L) and receives A q_P(t_i) at t_i = i n_sub dt.
    """
    N, P = q.shape
    L = A.shape[0]
    PT2 = (P * T) ** 2
    a = np.empty((N, P))
    qc = np.empty(N)
    rp_accel_into(q, PT2, alpha, beta, a)
    for i in range(n_t):
        if i > 0:
            for _ in range(n_sub):
                for j in range(N):
                    for k in range(P):
                        p[j, k] += 0.5 * dt * a[j, k]
                        q[j, k] += dt * p[j, k]
                rp_accel_into(q, PT2, alpha, beta, a)
                for j in range(N):
                    for k in range(P):
                        p[j, k] += 0.5 * dt * a[j, k]
        for j in range(N):
            s = 0.0
            for k in range(P):
                s += q[j, k]
            qc[j] = s / P
            if not math.isfinite(qc[j]):
                return False
        for l in range(L):
            s = 0.0
            for j in range(N):
                s += A[l, j] * qc[j]
            out[i, l] = s
    return True
