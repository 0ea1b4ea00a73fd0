#!/usr/bin/env python3
"""Recomputes the hand-derived reference values asserted by the unit and
acceptance tests, using exact rationals and mpmath at 50 digits.

Usage: python3 reference_values.py [--emit-grid special_grid.inc]

Without arguments prints every worked example. With --emit-grid it also
regenerates the log-gamma/digamma table that the C++ tests include.
"""
import argparse
from fractions import Fraction as F

import mpmath as mp

mp.mp.dps = 50


def opinion(e):
    k = len(e)
    alpha = [x + 1 for x in e]
    s = sum(alpha)
    return alpha, s, [x / s for x in e], F(k) / s


def mse_term(y, alpha):
    s = sum(alpha)
    p = [a / s for a in alpha]
    err = sum((yi - pi) ** 2 for yi, pi in zip(y, p))
    var = sum(pi * (1 - pi) / (s + 1) for pi in p)
    return err + var


def kl_to_uniform(alpha_hat):
    a = [mp.mpf(x) for x in alpha_hat]
    k = len(a)
    s = mp.fsum(a)
    out = mp.loggamma(s) - mp.loggamma(k) - mp.fsum(mp.loggamma(x) for x in a)
    out += mp.fsum((x - 1) * (mp.digamma(x) - mp.digamma(s)) for x in a)
    return out


def dempster(b1, u1, b2, u2):
    k = len(b1)
    c = sum(b1[i] * b2[j] for i in range(k) for j in range(k) if i != j)
    scale = 1 / (1 - c)
    b = [scale * (b1[i] * b2[i] + b1[i] * u2 + b2[i] * u1) for i in range(k)]
    u = scale * u1 * u2
    return c, b, u


def to_dirichlet(b, u):
    k = len(b)
    s = F(k) / u
    e = [bi * s for bi in b]
    alpha = [x + 1 for x in e]
    return e, s, alpha, [a / s for a in alpha]


def grid():
    # 100 points: 50 log-spaced in [0.01, 1], 50 log-spaced in (1, 100].
    xs = []
    for i in range(50):
        xs.append(mp.mpf(10) ** (-2 + 2 * mp.mpf(i) / 49))
    for i in range(50):
        xs.append(mp.power(100, mp.mpf(i + 1) / 50))
    return xs


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--emit-grid")
    args = ap.parse_args()

    alpha, s, b, u = opinion([F(3), F(0), F(0), F(0)])
    print("evidence [3,0,0,0]: alpha", alpha, "S", s, "b", b, "u", u,
          "p", [a / s for a in alpha])
    alpha, s, b, u = opinion([F(1)] * 4)
    print("evidence [1,1,1,1]: b", b, "u", u)
    alpha, s, _, _ = opinion([F(8), F(0)])
    print("evidence [8,0]: p", [a / s for a in alpha])
    print("softplus(0) = ln 2 =", mp.nstr(mp.log(2), 20))

    print("mse example (y=(1,0), e=(1,0)):", mse_term([1, 0], [F(2), F(1)]))
    kl = kl_to_uniform([1, 3])
    print("kl example alpha_hat=(1,3):", mp.nstr(kl, 20),
          " closed form ln3 - 2/3:", mp.nstr(mp.log(3) - mp.mpf(2) / 3, 20))

    c, bf, uf = dempster([F(6, 10), F(0)], F(4, 10), [F(0), F(6, 10)], F(4, 10))
    print("fusion example: C", c, "b", bf, "u", uf)
    e, s, alpha, p = to_dirichlet(bf, uf)
    print("to dirichlet: e", e, "S", s, "alpha", alpha, "p", p)

    print("digamma(1) =", mp.nstr(mp.digamma(1), 20))
    print("zero head: e = ln2, u = 1/(1+ln2) =", mp.nstr(1 / (1 + mp.log(2)), 20))

    if args.emit_grid:
        with open(args.emit_grid, "w") as f:
            f.write("// Generated by reference_values.py (mpmath, 50 digits).\n")
            f.write("// {x, log_gamma(x), digamma(x)}\n")
            for x in grid():
                xd = float(x)
                xm = mp.mpf(xd)
                f.write("{%s, %s, %s},\n" % (
                    repr(xd), mp.nstr(mp.loggamma(xm), 20, min_fixed=-mp.inf, max_fixed=mp.inf),
                    mp.nstr(mp.digamma(xm), 20, min_fixed=-mp.inf, max_fixed=mp.inf)))
        print("wrote", args.emit_grid)


if __name__ == "__main__":
    main()
