"""Independent oracle computations for values frozen into the unit tests.

Run directly to print every value. Nothing here imports the package: each
quantity is recomputed from its definition with ``decimal`` at 40 digits or
with plain Python loops.
"""

from decimal import Decimal, getcontext
from itertools import product

getcontext().prec = 40


def exp_half():
    return Decimal(-0.5).exp()


def tiny_net():
    # 1-2-1 net: hidden = relu(w1 * x + b1), out = w2 . hidden + b2, x = 1
    w1, b1 = [Decimal("0.5"), Decimal("-1.5")], [Decimal("0.25"), Decimal("0.5")]
    w2, b2 = [Decimal("2"), Decimal("3")], Decimal("-0.125")
    x = Decimal(1)
    hidden = [max(Decimal(0), w * x + b) for w, b in zip(w1, b1)]
    return sum(w * h for w, h in zip(w2, hidden)) + b2


def tiny_net_tanh():
    out = tiny_net()
    e2 = (2 * out).exp()
    return (e2 - 1) / (e2 + 1)


def adam_first_step(theta=Decimal(1), lr=Decimal("0.1")):
    b1, b2, eps = Decimal("0.9"), Decimal("0.999"), Decimal("1e-8")
    g = 2 * theta
    m = (1 - b1) * g
    v = (1 - b2) * g * g
    mhat = m / (1 - b1)
    vhat = v / (1 - b2)
    return theta - lr * mhat / (vhat.sqrt() + eps)


def integrate_from_rest(f=Decimal("0.7"), mass=Decimal(1), dt=Decimal("0.1")):
    v = f / mass * dt
    return v, v * dt


def product_form(levels):
    keep = Decimal(1)
    for t in levels:
        keep *= 1 - Decimal(t)
    return 1 - keep


def riemann(values, dt):
    return sum(Decimal(str(v)) for v in values) * Decimal(str(dt))


def observation_length(nb, nby, nlm, vocab):
    # VIP offset + VIP velocity, other bodyguards and bystanders (pos + vel),
    # landmarks (pos), own pos + vel, utterances of every bodyguard
    return 2 + 2 + 4 * (nb - 1) + 4 * nby + 2 * nlm + 4 + nb * vocab


def soft_gap(tau, k):
    return (1 - Decimal(str(tau))) ** k


def sign_game_equilibria():
    """Pure joint sign profiles where neither agent gains by deviating."""
    pay = {(a, b): 1 if a == b else 0 for a, b in product((-1, 1), repeat=2)}
    out = []
    for a, b in pay:
        if all(pay[(a, b)] >= pay[(x, b)] for x in (-1, 1)) and all(
                pay[(a, b)] >= pay[(a, y)] for y in (-1, 1)):
            out.append((a, b))
    return out


def chi_square_3sigma(n_draws=100_000, k=10):
    p = Decimal(1) / k
    sigma = (Decimal(n_draws) * p * (1 - p)).sqrt()
    return Decimal(n_draws) * p, 3 * sigma


if __name__ == "__main__":
    print("exp(-0.5)", exp_half())
    print("tiny net", tiny_net(), "tanh", tiny_net_tanh())
    print("adam step", adam_first_step())
    print("integrate", integrate_from_rest())
    print("two halves", product_form([0.5, 0.5]))
    print("riemann 25x0.5", riemann([0.5] * 25, 1), "three", riemann([0.2, 0.4, 0.1], 1))
    print("obs length (4,10,3,10)", observation_length(4, 10, 3, 10))
    print("soft gap tau=0.01 k=100", soft_gap(0.01, 100))
    print("sign equilibria", sign_game_equilibria())
    print("uniform counts", chi_square_3sigma())
