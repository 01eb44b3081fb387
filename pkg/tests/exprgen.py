"""Random expression strings whose domain covers the unit box."""

import random


def random_expression(rnd: random.Random, n: int, depth: int = 3) -> str:
    if depth == 0 or rnd.random() < 0.2:
        if rnd.random() < 0.7:
            return f"q{rnd.randint(1, n)}"
        return repr(round(rnd.uniform(-2, 2), 3))
    a = random_expression(rnd, n, depth - 1)
    b = random_expression(rnd, n, depth - 1)
    kind = rnd.randrange(9)
    if kind == 0:
        return f"({a} + {b})"
    if kind == 1:
        return f"({a} - {b})"
    if kind == 2:
        return f"({a} * {b})"
    if kind == 3:
        return f"({a} / (1.5 + sin({b})))"
    if kind == 4:
        return f"({a})^{rnd.choice([2, 3])}"
    if kind == 5:
        return f"sqrt(1 + ({a})^2)"
    if kind == 6:
        return f"exp(sin({a}))"
    if kind == 7:
        return f"cos({a})"
    return f"-{a}"
