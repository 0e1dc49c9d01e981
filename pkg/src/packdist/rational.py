"""Exact rational helpers: parsing, formatting, q-adic valuations, signed digits."""

from __future__ import annotations

from fractions import Fraction
from typing import Callable, Iterable, Sequence


def parse_fraction(value) -> Fraction:
    """Parse ``"p/q"``, an integer, a Fraction or a decimal string exactly."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("booleans are not rationals")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        # floats are binary rationals; take the exact value
        return Fraction(value)
    text = str(value).strip()
    if not text:
        raise ValueError("empty rational literal")
    return Fraction(text)


def format_fraction(value: Fraction) -> str:
    """Serialize as ``"p/q"`` (always with a slash)."""
    value = Fraction(value)
    return f"{value.numerator}/{value.denominator}"


def is_rational_vector(x) -> bool:
    return all(isinstance(c, (int, Fraction)) and not isinstance(c, bool) for c in x)


def ceil_log(n: int, q: int) -> int:
    """Smallest c >= 0 with q**c >= n."""
    if n < 1:
        raise ValueError("n must be positive")
    c, p = 0, 1
    while p < n:
        p *= q
        c += 1
    return c


def power_exponent(den: int, q: int, max_t: int | None = None) -> int | None:
    """Smallest t >= 0 with ``den | q**t`` (None if none exists within max_t)."""
    t, p = 0, 1
    limit = max_t if max_t is not None else 64
    while t <= limit:
        if p % den == 0:
            return t
        p *= q
        t += 1
    return None


def exact_power(n: int, q: int) -> int | None:
    """Return k if n == q**k, else None."""
    if n < 1:
        return None
    k = 0
    while n % q == 0:
        n //= q
        k += 1
    return k if n == 1 else None


def q_adic_split(value: Fraction, q: int) -> tuple[int, int]:
    """Write value = T / q**L with L >= 0 minimal. Raises if the denominator is not a q-power."""
    value = Fraction(value)
    L = power_exponent(value.denominator, q, max_t=10_000)
    if L is None:
        raise ValueError(f"{format_fraction(value)} does not have a {q}-power denominator")
    return value.numerator * (q**L // value.denominator), L


def digits(value: Fraction, q: int, depth: int) -> list[int]:
    """Standard base-q fractional digits x_1..x_depth of value in [0, 1) (floor truncation)."""
    value = Fraction(value)
    frac = value - (value.numerator // value.denominator)
    out = []
    for _ in range(depth):
        frac *= q
        d = frac.numerator // frac.denominator
        out.append(d)
        frac -= d
    return out


def signed_digit_support(
    numerator: int,
    exponent: int,
    q: int,
    allowed: Callable[[int], bool],
) -> list[int] | None:
    """Find signed digits s_1..s_L in [-(q-1), q-1], zero wherever ``allowed(m)`` is False,
    with numerator / q**exponent - sum_m s_m q**-m an integer.

    Returns the digit list (index 0 is position 1) or None if no such representation
    exists. Positions <= 0 (the integer part) are unconstrained. Digits beyond the
    exponent are never needed: a finite tail summing to a multiple of q**-L vanishes.
    """
    # reachable residual -> digits chosen so far (least significant first)
    states: dict[int, list[int]] = {numerator: []}
    for pos in range(exponent, 0, -1):
        nxt: dict[int, list[int]] = {}
        ok = allowed(pos)
        for r, path in states.items():
            rem = r % q
            if ok:
                choices = (rem,) if rem == 0 else (rem, rem - q)
            else:
                choices = (0,) if rem == 0 else ()
            for s in choices:
                r2 = (r - s) // q
                if r2 not in nxt:
                    nxt[r2] = path + [s]
        if not nxt:
            return None
        states = nxt
    path = next(iter(states.values()))
    return list(reversed(path))


def rational_rank(rows: Sequence[Sequence[Fraction]]) -> int:
    """Rank of a rational matrix by exact Gaussian elimination."""
    m = [list(map(Fraction, r)) for r in rows]
    if not m:
        return 0
    ncols = len(m[0])
    rank = 0
    for col in range(ncols):
        pivot = next((i for i in range(rank, len(m)) if m[i][col] != 0), None)
        if pivot is None:
            continue
        m[rank], m[pivot] = m[pivot], m[rank]
        for i in range(len(m)):
            if i != rank and m[i][col] != 0:
                f = m[i][col] / m[rank][col]
                m[i] = [a - f * b for a, b in zip(m[i], m[rank])]
        rank += 1
    return rank


def solve_rational(a: Sequence[Sequence[Fraction]], b: Sequence[Fraction]) -> list[Fraction]:
    """Solve the square nonsingular system a x = b exactly."""
    n = len(a)
    m = [list(map(Fraction, row)) + [Fraction(bi)] for row, bi in zip(a, b)]
    for col in range(n):
        pivot = next((i for i in range(col, n) if m[i][col] != 0), None)
        if pivot is None:
            raise ValueError("singular system")
        m[col], m[pivot] = m[pivot], m[col]
        pv = m[col][col]
        m[col] = [v / pv for v in m[col]]
        for i in range(n):
            if i != col and m[i][col] != 0:
                f = m[i][col]
                m[i] = [u - f * v for u, v in zip(m[i], m[col])]
    return [row[n] for row in m]


def dot(u: Iterable, v: Iterable):
    return sum((a * b for a, b in zip(u, v)), start=0)
