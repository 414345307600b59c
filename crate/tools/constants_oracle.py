#!/usr/bin/env python3
"""Reference values of the closed-form constants at 50 significant digits.

Writes crates/core/tests/fixtures/constants.json. Values are stored as
decimal strings so nothing is lost before the test parses them.

    python3 tools/constants_oracle.py [--out PATH] [--nmin 4] [--nmax 20]
"""
import argparse
import json
from fractions import Fraction
from pathlib import Path

import mpmath as mp

mp.mp.dps = 60
DIGITS = 50


def s(x):
    return mp.nstr(x, DIGITS, strip_zeros=False, min_fixed=-5, max_fixed=5)


def frac(q):
    return f"{q.numerator}/{q.denominator}"


def constants(n):
    gamma = Fraction(1, 2 * n + 1)
    eps = Fraction(1, n - 1)
    alpha = Fraction(1, 2) - gamma
    delta = Fraction(n + 2, n - 1)

    d = mp.mpf(delta.numerator) / delta.denominator
    e = mp.mpf(eps.numerator) / eps.denominator
    kappa = 1 / mp.sqrt(mp.pi)
    kappa3 = -kappa / 12
    dd1 = d * (d + 1)

    lam = mp.power(dd1 / mp.power(2 * kappa, n), e)
    root = mp.sqrt(1 + 4 * n * dd1)
    p_plus = (1 + root) / 2
    p_minus = (1 - root) / 2
    delta_prime = (root - 1) / 2 if n <= 5 else 2 * d + 1
    lam0 = (lam / kappa) / 2 * (-2 * n * kappa3 * dd1 - kappa * (d - 2 * e)) / (
        (n - 1) * dd1 + 2 * (2 * d - 1)
    )
    xi0 = mp.sqrt(dd1 / (n * e / 2))
    return {
        "n": n,
        "gamma": frac(gamma),
        "epsilon": frac(eps),
        "alpha": frac(alpha),
        "delta": frac(delta),
        "kappa": s(kappa),
        "kappa3": s(kappa3),
        "lambda": s(lam),
        "lambda0": s(lam0),
        "delta_prime": s(delta_prime),
        "p_plus": s(p_plus),
        "p_minus": s(p_minus),
        "p_sing": s(p_plus + d),
        "xi0": s(xi0),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    root = Path(__file__).resolve().parent.parent
    ap.add_argument("--out", type=Path, default=root / "crates/core/tests/fixtures/constants.json")
    ap.add_argument("--nmin", type=int, default=4)
    ap.add_argument("--nmax", type=int, default=20)
    a = ap.parse_args()
    data = {
        "digits": DIGITS,
        "entries": [constants(n) for n in range(a.nmin, a.nmax + 1)],
    }
    a.out.parent.mkdir(parents=True, exist_ok=True)
    a.out.write_text(json.dumps(data, indent=2) + "\n")


if __name__ == "__main__":
    main()
