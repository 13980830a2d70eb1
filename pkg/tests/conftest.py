"""テスト共通のフィクスチャと総当たりオラクル"""
import itertools
import math
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from utils.dyadic_core import DyadicInterval, StepFunction2D, haar_wavelet  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def box_inner_product_oracle(F1, F2, F3, F4, Q):
    """四重ループによるボックス内積 O(m⁴)"""
    blocks = [F.block(Q) for F in (F1, F2, F3, F4)]
    m = blocks[0].shape[0]
    total = 0.0
    for u, x, v, y in itertools.product(range(m), repeat=4):
        total += blocks[0][u, v] * blocks[1][x, v] * blocks[2][u, y] * blocks[3][x, y]
    return total / m ** 4


def twisted_paraproduct_oracle(F, G):
    """ハール展開による T_d(F,G) = Σ_k (E_k^(1)F)(Σ_{|J|=2^-k} ⟨G,ψ_J⟩_y ψ_J)"""
    N = F.N
    n = 2 ** N
    h = 1.0 / n
    result = np.zeros((n, n))
    for k in range(N):
        width = 2 ** (N - k)
        averaged = np.zeros((n, n))
        for start in range(0, n, width):
            averaged[start:start + width, :] = F.values[start:start + width, :].mean(axis=0)
        difference = np.zeros((n, n))
        for index in range(2 ** k):
            psi = haar_wavelet(DyadicInterval(k, index), N).values
            coefficients = G.values @ psi * h
            difference += np.outer(coefficients, psi)
        result += averaged * difference
    return StepFunction2D(result)


def box3_inner_product_oracle(functions, Q):
    """六重ループによる三次元ボックス内積 O(m⁶)"""
    blocks = [F.block(Q) for F in functions]
    m = blocks[0].shape[0]
    total = 0.0
    for point in itertools.product(range(m), repeat=6):
        x1, x2, x3 = point[0:2], point[2:4], point[4:6]
        term = 1.0
        for j, block in enumerate(blocks):
            term *= block[x1[j & 1], x2[(j >> 1) & 1], x3[(j >> 2) & 1]]
        total += term
    return total / m ** 6


def unit_square_theta_oracle(F1, F2, F3, F4, kernel):
    """
    N=1 の単位正方形における Θ^(1), Θ^(2) の四重ループ

    ハール関数の値を直接書き下す（|I|=1 なので φ=1, ψ=±1, 半分の φ=√2）。
    """
    phi = (1.0, 1.0)
    psi = (1.0, -1.0)
    left = (math.sqrt(2.0), 0.0)
    right = (0.0, math.sqrt(2.0))
    terms = {
        "theta1": ((psi, left), (psi, right)),
        "theta2": ((phi, psi),),
    }[kernel]
    B1, B2, B3, B4 = (F.values for F in (F1, F2, F3, F4))
    total = 0.0
    for a, b in terms:
        for u, x, v, y in itertools.product(range(2), repeat=4):
            total += B1[u, v] * B2[x, v] * B3[u, y] * B4[x, y] * a[u] * a[x] * b[v] * b[y]
    return total * 0.5 ** 4
