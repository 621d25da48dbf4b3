"""Independent re-evaluations used as test oracles."""
import mpmath

mpmath.mp.dps = 50


def mm1b_printed(lam, mu, b):
    lam, mu = mpmath.mpf(lam), mpmath.mpf(mu)
    first = lam / (mu - lam)
    if b is None:
        return first
    return first + b * lam ** (b + 1) / (mu * (mu ** b - lam ** b))


def mm1_sojourn(lam, mu):
    return 1 / (mpmath.mpf(mu) - mpmath.mpf(lam))


def simulate_mm1(lam, mu, n, seed):
    """Plain M/M/1 FIFO by Lindley recursion; mean sojourn over n customers."""
    import random

    rng = random.Random(seed)
    t = dep = 0.0
    total = 0.0
    for _ in range(n):
        t += rng.expovariate(lam)
        dep = max(t, dep) + rng.expovariate(mu)
        total += dep - t
    return total / n
